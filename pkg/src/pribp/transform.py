"""Orthonormal block DCT, uniform scalar quantization and reconstruction.

Quantization follows the HEVC step convention, Qstep = 2 ** ((qp - 4) / 6),
so the step doubles every 6 QP and qp=4 is a unit step. All rounding is
half-away-from-zero.

Encoder and decoder both reconstruct through :func:`reconstruct_from_levels`,
which only depends on the integer levels, so their outputs are bit-identical.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numba import njit

from .regress import round_half_away as _round_scalar

QP_RANGE = range(0, 52)


@lru_cache(maxsize=None)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows are frequencies."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    basis = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    basis[0] /= np.sqrt(2.0)
    basis.setflags(write=False)
    return basis


@njit(cache=True)
def _forward(block, c):
    n = block.shape[0]
    tmp = np.zeros((n, n))
    for k in range(n):
        for j in range(n):
            acc = 0.0
            for i in range(n):
                acc += c[k, i] * block[i, j]
            tmp[k, j] = acc
    out = np.zeros((n, n))
    for k in range(n):
        for l in range(n):
            acc = 0.0
            for j in range(n):
                acc += tmp[k, j] * c[l, j]
            out[k, l] = acc
    return out


@njit(cache=True)
def _inverse(coeffs, c):
    n = coeffs.shape[0]
    tmp = np.zeros((n, n))
    for i in range(n):
        for l in range(n):
            acc = 0.0
            for k in range(n):
                acc += c[k, i] * coeffs[k, l]
            tmp[i, l] = acc
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for l in range(n):
                acc += tmp[i, l] * c[l, j]
            out[i, j] = acc
    return out


@njit(cache=True)
def _quantize_kernel(coeffs, step):
    n = coeffs.shape[0]
    levels = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            levels[i, j] = int(_round_scalar(coeffs[i, j] / step))
    return levels


@njit(cache=True)
def _reconstruct_kernel(pred, levels, c, step, max_value):
    n = pred.shape[0]
    rec = np.empty((n, n), dtype=np.int64)
    nonzero = False
    for i in range(n):
        for j in range(n):
            if levels[i, j] != 0:
                nonzero = True
    if not nonzero:
        for i in range(n):
            for j in range(n):
                rec[i, j] = pred[i, j]
        return rec
    deq = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            deq[i, j] = levels[i, j] * step
    res = _inverse(deq, c)
    for i in range(n):
        for j in range(n):
            v = pred[i, j] + int(_round_scalar(res[i, j]))
            if v < 0:
                v = 0
            elif v > max_value:
                v = max_value
            rec[i, j] = v
    return rec


def dct2(block) -> np.ndarray:
    block = np.ascontiguousarray(block, dtype=np.float64)
    return _forward(block, dct_matrix(block.shape[0]))


def idct2(coeffs) -> np.ndarray:
    coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
    return _inverse(coeffs, dct_matrix(coeffs.shape[0]))


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def check_qp(qp: int) -> int:
    if isinstance(qp, bool) or int(qp) != qp or qp not in QP_RANGE:
        raise ValueError(f"qp must be an integer in [0, 51], got {qp}")
    return int(qp)


def qstep(qp: int) -> float:
    return 2.0 ** ((check_qp(qp) - 4) / 6.0)


def quantize(coeffs, qp: int) -> np.ndarray:
    coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
    return _quantize_kernel(coeffs, qstep(qp))


def dequantize(levels, qp: int) -> np.ndarray:
    return np.asarray(levels, dtype=np.float64) * qstep(qp)


def reconstruct(prediction, residual, bit_depth: int) -> np.ndarray:
    """clamp(prediction + round(residual)) in the sample range."""
    rec = np.asarray(prediction, dtype=np.int64) + round_half_away(residual).astype(np.int64)
    return np.clip(rec, 0, (1 << bit_depth) - 1)


def reconstruct_from_levels(prediction, levels, qp: int, bit_depth: int) -> np.ndarray:
    """Reconstruct one block from its prediction and quantized levels."""
    prediction = np.ascontiguousarray(prediction, dtype=np.int64)
    levels = np.ascontiguousarray(levels, dtype=np.int64)
    return _reconstruct_kernel(
        prediction, levels, dct_matrix(prediction.shape[0]), qstep(qp), (1 << bit_depth) - 1
    )
