"""Correlation and affine least-squares fitting for inter-band prediction.

The ``*_kernel`` functions are compiled with numba and are what the
predictors call in their inner loops; the public wrappers add validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

MIN_PAIRS = 2


class InsufficientSupport(ValueError):
    """Fewer than two sample pairs were supplied."""


@njit(cache=True)
def round_half_away(x):
    if x >= 0.0:
        return math.floor(x + 0.5)
    return -math.floor(-x + 0.5)


@njit(cache=True)
def pcc_kernel(r, s, n):
    """Pearson correlation of the first ``n`` entries; 0 for zero variance."""
    mr = 0.0
    ms = 0.0
    for i in range(n):
        mr += r[i]
        ms += s[i]
    mr /= n
    ms /= n
    num = 0.0
    vr = 0.0
    vs = 0.0
    for i in range(n):
        dr = r[i] - mr
        ds = s[i] - ms
        num += dr * ds
        vr += dr * dr
        vs += ds * ds
    if vr == 0.0 or vs == 0.0:
        return 0.0
    rho = num / (math.sqrt(vr) * math.sqrt(vs))
    # guard against |rho| creeping past 1 by an ulp
    if rho > 1.0:
        return 1.0
    if rho < -1.0:
        return -1.0
    return rho


@njit(cache=True)
def fit_kernel(r, s, n):
    """Least-squares ``r ~ alpha * s + beta`` over the first ``n`` entries."""
    mr = 0.0
    ms = 0.0
    for i in range(n):
        mr += r[i]
        ms += s[i]
    mr /= n
    ms /= n
    cov = 0.0
    var = 0.0
    for i in range(n):
        ds = s[i] - ms
        cov += ds * (r[i] - mr)
        var += ds * ds
    if var == 0.0:
        return 0.0, mr
    alpha = cov / var
    return alpha, mr - alpha * ms


@njit(cache=True)
def predict_kernel(alpha, beta, s_value, max_value):
    p = round_half_away(alpha * s_value + beta)
    if p < 0.0:
        return 0
    if p > max_value:
        return max_value
    return int(p)


@njit(cache=True)
def _round_ratio(num, den):
    """num / den rounded half away from zero, for den > 0."""
    if num >= 0:
        return (2 * num + den) // (2 * den)
    return -((-2 * num + den) // (2 * den))


@njit(cache=True)
def affine_predict_kernel(r, s, n, s_value, max_value):
    """Least-squares prediction at ``s_value`` from the first ``n`` pairs.

    Integer samples make the fitted value the rational
    (n*Sxy*s0 + Sr*Sxx - Sxy*Ss) / (n*Sxx), which is rounded exactly, so
    half ties are never lost to floating point. int64 holds every term for
    up to 8 pairs of 16-bit samples.
    """
    sr = 0
    ss = 0
    srs = 0
    sss = 0
    for i in range(n):
        ri = np.int64(r[i])
        si = np.int64(s[i])
        sr += ri
        ss += si
        srs += ri * si
        sss += si * si
    sxx = n * sss - ss * ss
    if sxx == 0:
        p = _round_ratio(sr, n)
    else:
        sxy = n * srs - sr * ss
        p = _round_ratio(n * sxy * np.int64(s_value) + sr * sxx - sxy * ss, n * sxx)
    if p < 0:
        return 0
    if p > max_value:
        return max_value
    return p


def affine_predict_exact(r, s, s_values, max_value: int) -> np.ndarray:
    """:func:`affine_predict_kernel` for any number of pairs, applied to
    every entry of ``s_values``, using Python integers."""
    r = [int(v) for v in np.ravel(r)]
    s = [int(v) for v in np.ravel(s)]
    n = len(r)
    sr, ss = sum(r), sum(s)
    sxx = n * sum(v * v for v in s) - ss * ss
    sxy = n * sum(a * b for a, b in zip(r, s)) - sr * ss
    values, inverse = np.unique(np.asarray(s_values, dtype=np.int64), return_inverse=True)
    out = []
    for v in values.tolist():
        if sxx == 0:
            num, den = sr, n
        else:
            num, den = n * sxy * v + sr * sxx - sxy * ss, n * sxx
        p = (2 * num + den) // (2 * den) if num >= 0 else -((-2 * num + den) // (2 * den))
        out.append(min(max(p, 0), max_value))
    return np.asarray(out, dtype=np.int64)[inverse].reshape(np.shape(s_values))


@dataclass(frozen=True)
class SamplePairSet:
    """Co-located samples: ``r_values`` from the current band's reference,
    ``s_values`` from a spectral reference band."""

    r_values: np.ndarray
    s_values: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r_values, dtype=np.float64).ravel()
        s = np.asarray(self.s_values, dtype=np.float64).ravel()
        if r.shape != s.shape:
            raise ValueError(f"length mismatch: {r.size} r values, {s.size} s values")
        object.__setattr__(self, "r_values", r)
        object.__setattr__(self, "s_values", s)

    def __len__(self):
        return self.r_values.size


@dataclass(frozen=True)
class AffineModel:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError(f"non-finite model ({self.alpha}, {self.beta})")


def _require_support(pairs: SamplePairSet) -> None:
    if len(pairs) < MIN_PAIRS:
        raise InsufficientSupport(f"need at least {MIN_PAIRS} pairs, got {len(pairs)}")


def pearson_corr(pairs: SamplePairSet) -> float:
    """Pearson correlation between the r and s vectors of ``pairs``.

    Returns 0.0 when either vector is constant.
    """
    _require_support(pairs)
    return float(pcc_kernel(pairs.r_values, pairs.s_values, len(pairs)))


def fit_affine(pairs: SamplePairSet) -> AffineModel:
    """Least-squares (alpha, beta) minimising ||alpha*s + beta - r||^2.

    A constant s vector yields alpha = 0, beta = mean(r).
    """
    _require_support(pairs)
    alpha, beta = fit_kernel(pairs.r_values, pairs.s_values, len(pairs))
    return AffineModel(float(alpha), float(beta))


def predict_value(model: AffineModel, s_value, bit_depth: int) -> int:
    return int(predict_kernel(model.alpha, model.beta, float(s_value), (1 << bit_depth) - 1))
