import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pribp.metrics import psnr
from pribp.transform import (
    check_qp,
    dct2,
    dequantize,
    idct2,
    qstep,
    quantize,
    reconstruct,
    reconstruct_from_levels,
)
from oracles import round_half_away_exact

SIZES = [4, 8, 16, 32]


def idct_scalar(coeffs):
    """Textbook orthonormal 2-D inverse DCT-II by direct summation."""
    n = len(coeffs)

    def a(k):
        return math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)

    return [[sum(a(k) * a(l) * coeffs[k][l]
                  * math.cos(math.pi * (2 * i + 1) * k / (2 * n))
                  * math.cos(math.pi * (2 * j + 1) * l / (2 * n))
                  for k in range(n) for l in range(n))
             for j in range(n)] for i in range(n)]


@pytest.mark.parametrize("n", SIZES)
def test_constant_block_has_only_dc(n):
    c = 37.0
    coeffs = dct2(np.full((n, n), c))
    assert coeffs[0, 0] == pytest.approx(n * c, rel=1e-12)
    rest = coeffs.copy()
    rest[0, 0] = 0
    assert np.abs(rest).max() < 1e-9


@pytest.mark.parametrize("n", SIZES)
def test_zero_block(n):
    assert not dct2(np.zeros((n, n))).any()


def test_quantize_examples():
    assert qstep(4) == 1.0
    assert quantize(np.array([[10.7]]), 4).item() == 11
    assert qstep(10) == 2.0
    level = quantize(np.array([[3.0]]), 10)
    assert level.item() == 2
    assert dequantize(level, 10).item() == 4.0
    # 2 ** ((16 - 4) / 6) = 2 ** 2
    assert qstep(16) == 4.0
    assert quantize(np.array([[-3.0]]), 10).item() == -2


@pytest.mark.parametrize("qp", [-1, 52, 4.5, True, "4"])
def test_qp_range(qp):
    with pytest.raises((ValueError, TypeError)):
        check_qp(qp)


def test_qstep_doubles_every_six():
    for qp in range(0, 46):
        assert qstep(qp + 6) == pytest.approx(2 * qstep(qp), rel=1e-12)


def test_reconstruct_examples():
    pred = np.array([[10, 20], [30, 40]])
    assert reconstruct(pred, np.zeros((2, 2)), 8).tolist() == pred.tolist()
    assert reconstruct(np.array([[65530]]), np.array([[100.0]]), 16).item() == 65535
    assert reconstruct(np.array([[3]]), np.array([[-10.0]]), 8).item() == 0
    zero = np.zeros((4, 4), dtype=np.int64)
    assert (reconstruct_from_levels(np.full((4, 4), 9), zero, 30, 8) == 9).all()


@pytest.mark.parametrize("seed", range(20))
def test_reconstruction_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.choice([4, 8]))
    qp = int(rng.integers(0, 52))
    depth = int(rng.choice([8, 12, 16]))
    top = (1 << depth) - 1
    pred = rng.integers(0, top + 1, (n, n))
    levels = rng.integers(-6, 7, (n, n)) * (rng.random((n, n)) < 0.3)
    step = 2 ** ((qp - 4) / 6)
    residual = idct_scalar((levels * step).tolist())
    expected = [[min(max(int(pred[i, j]) + round_half_away_exact(residual[i][j]), 0), top)
                 for j in range(n)] for i in range(n)]
    assert reconstruct_from_levels(pred, levels, qp, depth).tolist() == expected


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(SIZES).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(-70000, 70000))))
def test_parseval_and_inversion(block):
    coeffs = dct2(block)
    scale = max(1.0, float(np.abs(block).max()))
    assert np.sum(coeffs**2) == pytest.approx(np.sum(block**2), rel=1e-9, abs=1e-9 * scale**2)
    np.testing.assert_allclose(idct2(coeffs), block, rtol=0, atol=1e-9 * scale)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (8, 8), elements=st.floats(-1e5, 1e5)), st.integers(0, 51))
def test_dequantization_error_bounded(coeffs, qp):
    error = np.abs(dequantize(quantize(coeffs, qp), qp) - coeffs)
    assert error.max() <= qstep(qp) / 2 * (1 + 1e-12)


def _unit_step_psnr(n, seed=0, count=200):
    rng = np.random.default_rng(seed)
    orig = rng.integers(0, 256, (count, n, n))
    pred = rng.integers(0, 256, (count, n, n))
    rec = np.stack([reconstruct_from_levels(pred[i], quantize(dct2(orig[i] - pred[i]), 4), 4, 8)
                    for i in range(count)])
    return psnr(orig, rec, 8)


# uniform rounding of orthonormal coefficients leaves MSE ~ 1/12 per sample
UNIT_STEP_BOUND_DB = 10 * math.log10(12 * 255**2)  # 58.93 dB


@pytest.mark.parametrize("n", SIZES)
def test_unit_step_fidelity_near_quantization_bound(n):
    assert _unit_step_psnr(n) > UNIT_STEP_BOUND_DB - 0.5


@pytest.mark.xfail(strict=True, reason="60 dB exceeds the ~58.9 dB limit of a unit-step uniform quantizer")
def test_unit_step_fidelity_above_60db():
    assert _unit_step_psnr(8) > 60.0
