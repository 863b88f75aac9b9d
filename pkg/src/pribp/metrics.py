"""Quality and rate measures: PSNR, SSIM, bpppb and Bjøntegaard delta rate."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

SSIM_WINDOW = 8


def _samples(x) -> np.ndarray:
    return np.asarray(x.samples if hasattr(x, "samples") else x)


def _bit_depth(reference, bit_depth):
    if bit_depth is not None:
        return bit_depth
    if hasattr(reference, "bit_depth"):
        return reference.bit_depth
    raise ValueError("bit_depth is required for raw arrays")


def mse(reference, distorted) -> float:
    a = _samples(reference).astype(np.int64)
    b = _samples(distorted).astype(np.int64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.mean(diff * diff))


def psnr(reference, distorted, bit_depth=None) -> float:
    """10 log10(MAX^2 / MSE) over all samples; ``inf`` for identical inputs.

    For cubes the MSE is pooled over every band before taking the log.
    """
    depth = _bit_depth(reference, bit_depth)
    if hasattr(distorted, "bit_depth") and distorted.bit_depth != depth:
        raise ValueError("bit depths differ")
    err = mse(reference, distorted)
    if err == 0:
        return math.inf
    peak = (1 << depth) - 1
    return 10.0 * math.log10(peak * peak / err)


def _window_sums(x: np.ndarray, w: int) -> np.ndarray:
    """Sum over every w x w window (stride 1), exact for int64 input."""
    integral = np.zeros((x.shape[0] + 1, x.shape[1] + 1), dtype=x.dtype)
    integral[1:, 1:] = x.cumsum(0).cumsum(1)
    return integral[w:, w:] - integral[:-w, w:] - integral[w:, :-w] + integral[:-w, :-w]


def ssim_map(a, b, bit_depth=None, window: int = SSIM_WINDOW) -> np.ndarray:
    depth = _bit_depth(a, bit_depth)
    x = _samples(a).astype(np.int64)
    y = _samples(b).astype(np.int64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.ndim != 2 or min(x.shape) < window:
        raise ValueError(f"image {x.shape} smaller than the {window}x{window} window")
    n = window * window
    sx, sy = _window_sums(x, window), _window_sums(y, window)
    sxx, syy, sxy = _window_sums(x * x, window), _window_sums(y * y, window), _window_sums(x * y, window)
    # n * sum(x^2) - sum(x)^2 is exact in int64 for 16-bit data
    vx = (n * sxx - sx * sx).astype(np.float64) / (n * (n - 1))
    vy = (n * syy - sy * sy).astype(np.float64) / (n * (n - 1))
    cxy = (n * sxy - sx * sy).astype(np.float64) / (n * (n - 1))
    mx = sx / n
    my = sy / n
    peak = (1 << depth) - 1
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))


def ssim(a, b, bit_depth=None, window: int = SSIM_WINDOW) -> float:
    """Mean SSIM over all window x window windows, uniform weights.

    Variances and covariance use the unbiased 1/(n-1) normalisation.
    """
    return float(np.mean(ssim_map(a, b, bit_depth, window)))


def bpppb(total_bits: int, width: int, height: int, bands: int) -> float:
    return total_bits / (width * height * bands)


def stream_bpppb(stream: bytes, width: int, height: int, bands: int) -> float:
    return bpppb(8 * len(stream), width, height, bands)


# ---------------------------------------------------------------------------
# Rate-distortion curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RDPoint:
    rate: float
    psnr: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        if not math.isfinite(self.psnr):
            raise ValueError(f"psnr must be finite, got {self.psnr}")


class RDCurve:
    """At least four points, strictly increasing in both rate and PSNR."""

    def __init__(self, points: Sequence[RDPoint]):
        points = sorted(points, key=lambda p: p.rate)
        if len(points) < 4:
            raise ValueError(f"an RD curve needs at least 4 points, got {len(points)}")
        rates = np.array([p.rate for p in points])
        psnrs = np.array([p.psnr for p in points])
        if np.any(np.diff(rates) <= 0) or np.any(np.diff(psnrs) <= 0):
            raise ValueError("RD curve must be strictly increasing in rate and PSNR")
        self.points = tuple(points)
        self.rates = rates
        self.psnrs = psnrs

    @classmethod
    def from_arrays(cls, rates, psnrs) -> "RDCurve":
        return cls([RDPoint(float(r), float(q)) for r, q in zip(rates, psnrs)])

    def __len__(self):
        return len(self.points)


class NoOverlapError(ValueError):
    pass


def bd_rate(reference: RDCurve, test: RDCurve) -> float:
    """Average rate difference of ``test`` against ``reference`` in percent.

    log10(rate) is interpolated over PSNR with a monotone piecewise cubic
    Hermite interpolant and integrated over the common PSNR range. Negative
    values are savings.
    """
    lo = max(reference.psnrs[0], test.psnrs[0])
    hi = min(reference.psnrs[-1], test.psnrs[-1])
    if not hi > lo:
        raise NoOverlapError("RD curves do not overlap in PSNR")
    ref = PchipInterpolator(reference.psnrs, np.log10(reference.rates))
    tst = PchipInterpolator(test.psnrs, np.log10(test.rates))
    avg = (tst.integrate(lo, hi) - ref.integrate(lo, hi)) / (hi - lo)
    return float((10.0**avg - 1.0) * 100.0)


CSV_FIELDS = ("qp", "rate_bpppb", "psnr_db")


def write_rd_csv(path, rows) -> None:
    """``rows`` are (qp, rate, psnr) triples, optionally followed by extras."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for qp, rate, quality in rows:
            writer.writerow([qp, f"{rate:.9g}", f"{quality:.9g}"])


def read_rd_csv(path) -> RDCurve:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"rate_bpppb", "psnr_db"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        rows = [(float(r["rate_bpppb"]), float(r["psnr_db"])) for r in reader]
    return RDCurve([RDPoint(rate, q) for rate, q in rows if math.isfinite(q)])
