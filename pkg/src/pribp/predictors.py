"""Candidate prediction signals for one transform block.

Block-local coordinates are (m, n) = (row, column). The causal support of a
block of size N is its 2N+3 boundary samples::

    top  : row -1, columns -1 .. N      (N + 2 samples, top[0] is the corner)
    left : column -1, rows 0 .. N       (N + 1 samples)

Internally the support lives on an (N+2) x (N+2) grid with a one-sample
margin, so grid[m + 1, n + 1] holds block position (m, n).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numba import njit

from .regress import affine_predict_exact, affine_predict_kernel, fit_kernel, pcc_kernel

BLOCK_SIZES = (4, 8, 16, 32)
CORRELATION_PATCH = 5
REGRESSION_PATCH = 3
# |PCC| values closer than this count as equal, so exact ties keep the lowest band
RHO_TIE = 1e-12


class Mode(IntEnum):
    """Prediction modes. Inter-band modes get the smallest ids."""

    DIRECT_1 = 0
    DIRECT_2 = 1
    DIRECT_3 = 2
    PEL_RECURSIVE = 3
    BLOCKWISE = 4
    DC = 5
    PLANAR = 6
    HORIZONTAL = 7
    VERTICAL = 8

    @property
    def is_inter_band(self) -> bool:
        return self <= Mode.BLOCKWISE


INTER_BAND_MODES = tuple(m for m in Mode if m.is_inter_band)
INTRA_MODES = tuple(m for m in Mode if not m.is_inter_band)
DIRECT_MODES = (Mode.DIRECT_1, Mode.DIRECT_2, Mode.DIRECT_3)


class Block(NamedTuple):
    x: int
    y: int
    size: int


@dataclass(frozen=True)
class PredictionPlane:
    samples: np.ndarray
    mode: Mode


@dataclass(frozen=True)
class BoundarySamples:
    """The 2N+3 causal neighbours of a block after availability fill."""

    top: np.ndarray
    left: np.ndarray
    top_available: np.ndarray
    left_available: np.ndarray

    @property
    def size(self) -> int:
        return self.left.size - 1

    def positions(self):
        """Block-relative (m, n) coordinates, in ``values()`` order."""
        n = self.size
        return [(-1, c) for c in range(-1, n + 1)] + [(r, -1) for r in range(n + 1)]

    def values(self) -> np.ndarray:
        return np.concatenate([self.top, self.left])


@dataclass(frozen=True)
class ReferenceSet:
    """Reconstructed planes visible while coding one block.

    ``spectral`` holds three previously reconstructed bands (empty for
    intra-only coding), ``current`` the reconstruction of the band being
    coded and ``causal`` marks which of its samples are already decoded.
    """

    spectral: tuple
    current: np.ndarray
    causal: np.ndarray
    bit_depth: int

    def __post_init__(self):
        shape = self.current.shape
        if self.causal.shape != shape:
            raise ValueError("causal mask shape differs from the current plane")
        if any(s.shape != shape for s in self.spectral):
            raise ValueError("spectral planes differ in shape from the current plane")
        if len(self.spectral) not in (0, 3):
            raise ValueError("a spectral reference has exactly three planes")


def _as_array(plane) -> np.ndarray:
    return plane.samples if hasattr(plane, "samples") else np.asarray(plane)


# ---------------------------------------------------------------------------
# Boundary construction
# ---------------------------------------------------------------------------

@njit(cache=True)
def _boundary_kernel(samples, causal, x, y, n, default):
    """Values and availability of the 2N+3 samples in fill-scan order."""
    height, width = samples.shape
    total = 2 * n + 3
    values = np.empty(total, dtype=np.int64)
    avail = np.zeros(total, dtype=np.bool_)
    for i in range(total):
        if i <= n:
            row, col = y + n - i, x - 1
        else:
            row, col = y - 1, x - 1 + (i - n - 1)
        if 0 <= row < height and 0 <= col < width and causal[row, col]:
            avail[i] = True
            values[i] = samples[row, col]
    first = -1
    for i in range(total):
        if avail[i]:
            first = i
            break
    if first < 0:
        values[:] = default
        return values, avail
    for i in range(first):
        values[i] = values[first]
    for i in range(first + 1, total):
        if not avail[i]:
            values[i] = values[i - 1]
    return values, avail


def build_boundary(block, plane, causal: Optional[np.ndarray], bit_depth: int) -> BoundarySamples:
    """Collect the boundary of ``block`` from ``plane``.

    Samples outside the image or outside ``causal`` (``None`` means the
    whole image is decoded) are replaced by the nearest available sample
    preceding them in the bottom-left to top-right scan; leading gaps take
    the first available sample. With nothing available every sample is set
    to ``2**(bit_depth - 1)``.
    """
    x, y, n = block
    samples = _as_array(plane)
    if causal is None:
        causal = np.ones(samples.shape, dtype=np.bool_)
    values, avail = _boundary_kernel(samples, causal, x, y, n, 1 << (bit_depth - 1))
    # scan order is reversed-left then top; split back into the two arrays
    return BoundarySamples(
        top=values[n + 1 :],
        left=values[: n + 1][::-1].copy(),
        top_available=avail[n + 1 :],
        left_available=avail[: n + 1][::-1].copy(),
    )


# ---------------------------------------------------------------------------
# Processing order and patches
# ---------------------------------------------------------------------------

def processing_order(n: int):
    """Pixel order of pel-recursive prediction: first row, first column, then
    the remaining (N-1) x (N-1) pixels in raster order."""
    if n < 1:
        raise ValueError("block size must be positive")
    order = [(0, c) for c in range(n)]
    order += [(r, 0) for r in range(1, n)]
    order += [(r, c) for r in range(1, n) for c in range(1, n)]
    return order


_ORDER_CACHE: dict = {}


def _order_array(n: int) -> np.ndarray:
    if n not in _ORDER_CACHE:
        _ORDER_CACHE[n] = np.array(processing_order(n), dtype=np.int64)
    return _ORDER_CACHE[n]


@njit(cache=True)
def _gather(r_grid, valid, s_grid, m, n, half, r_out, s_out):
    """Collect valid (r, s) pairs of the patch centred on (m, n), centre excluded."""
    size = r_grid.shape[0]
    count = 0
    for dm in range(-half, half + 1):
        row = m + dm + 1
        if row < 0 or row >= size:
            continue
        for dn in range(-half, half + 1):
            if dm == 0 and dn == 0:
                continue
            col = n + dn + 1
            if col < 0 or col >= size:
                continue
            if valid[row, col]:
                r_out[count] = r_grid[row, col]
                s_out[count] = s_grid[row, col]
                count += 1
    return count


@njit(cache=True)
def _select_band(r_grid, valid, s_grids, m, n, half, r_buf, s_buf):
    best = 0
    best_abs = -1.0
    for k in range(s_grids.shape[0]):
        count = _gather(r_grid, valid, s_grids[k], m, n, half, r_buf, s_buf)
        if count < 2:
            return 0
        rho = abs(pcc_kernel(r_buf, s_buf, count))
        if rho > best_abs + RHO_TIE:
            best_abs = rho
            best = k
    return best


@njit(cache=True)
def _pel_recursive_kernel(r_grid, valid, s_grids, order, max_value, corr_half, reg_half):
    size = r_grid.shape[0] - 2
    out = np.empty((size, size), dtype=np.int64)
    chosen = np.empty((size, size), dtype=np.int64)
    buf_len = (2 * corr_half + 1) ** 2
    r_buf = np.empty(buf_len)
    s_buf = np.empty(buf_len)
    for i in range(order.shape[0]):
        m = order[i, 0]
        n = order[i, 1]
        band = _select_band(r_grid, valid, s_grids, m, n, corr_half, r_buf, s_buf)
        s_grid = s_grids[band]
        s_here = s_grid[m + 1, n + 1]
        count = _gather(r_grid, valid, s_grid, m, n, reg_half, r_buf, s_buf)
        if count < 2:
            p = int(s_here)
        else:
            p = affine_predict_kernel(r_buf, s_buf, count, s_here, max_value)
        out[m, n] = p
        chosen[m, n] = band
        # the prediction becomes support for later pixels
        r_grid[m + 1, n + 1] = p
        valid[m + 1, n + 1] = True
    return out, chosen


@njit(cache=True)
def _blockwise_band(r_vals, s_vals):
    count = r_vals.shape[0]
    best = 0
    best_abs = -1.0
    for k in range(s_vals.shape[0]):
        rho = abs(pcc_kernel(r_vals, s_vals[k], count))
        if rho > best_abs + RHO_TIE:
            best_abs = rho
            best = k
    return best


# ---------------------------------------------------------------------------
# Block context
# ---------------------------------------------------------------------------

class BlockContext:
    """Everything the predictors may read for one block.

    Built once per block; the current band is only consulted through its
    boundary samples. Spectral boundaries use the current band's causal
    mask so filled positions pair up consistently with the current band.
    """

    def __init__(self, block, refs: ReferenceSet):
        x, y, n = block
        self.block = Block(x, y, n)
        self.bit_depth = refs.bit_depth
        self.max_value = (1 << refs.bit_depth) - 1
        self.boundary = build_boundary(self.block, refs.current, refs.causal, refs.bit_depth)
        self.spectral_boundaries = tuple(
            build_boundary(self.block, s, refs.causal, refs.bit_depth) for s in refs.spectral
        )
        self.spectral_blocks = tuple(
            np.asarray(_as_array(s)[y : y + n, x : x + n], dtype=np.int64) for s in refs.spectral
        )

    @property
    def has_spectral(self) -> bool:
        return bool(self.spectral_blocks)

    def support_grids(self):
        """Fresh (r_grid, valid, s_grids) arrays for the pel-recursive kernel."""
        n = self.block.size
        r_grid = np.zeros((n + 2, n + 2))
        valid = np.zeros((n + 2, n + 2), dtype=np.bool_)
        _place_boundary(r_grid, self.boundary)
        valid[0, :] = True
        valid[1:, 0] = True
        s_grids = np.zeros((len(self.spectral_blocks), n + 2, n + 2))
        for k, (bnd, blk) in enumerate(zip(self.spectral_boundaries, self.spectral_blocks)):
            _place_boundary(s_grids[k], bnd)
            s_grids[k, 1 : n + 1, 1 : n + 1] = blk
        return r_grid, valid, s_grids


def _place_boundary(grid: np.ndarray, boundary: BoundarySamples) -> None:
    grid[0, :] = boundary.top
    grid[1:, 0] = boundary.left


def _require_spectral(ctx: BlockContext) -> None:
    if not ctx.has_spectral:
        raise ValueError("inter-band prediction needs a spectral reference")


# ---------------------------------------------------------------------------
# Patch-level API (used by tests and diagnostics)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PatchPair:
    positions: list
    r_values: np.ndarray
    s_values: np.ndarray

    @property
    def count(self) -> int:
        return len(self.positions)


def extract_patch(center, b: int, r_grid, valid, s_grid) -> PatchPair:
    """Valid (r, s) pairs of the b x b patch around ``center`` (excluded).

    ``r_grid``/``valid``/``s_grid`` use the margin layout of
    :meth:`BlockContext.support_grids`.
    """
    if b % 2 != 1:
        raise ValueError("patch size must be odd")
    m, n = center
    half = b // 2
    positions = []
    for dm in range(-half, half + 1):
        for dn in range(-half, half + 1):
            row, col = m + dm + 1, n + dn + 1
            if (dm or dn) and 0 <= row < valid.shape[0] and 0 <= col < valid.shape[1] and valid[row, col]:
                positions.append((m + dm, n + dn))
    r_buf = np.empty(b * b)
    s_buf = np.empty(b * b)
    count = _gather(r_grid, valid, np.asarray(s_grid, dtype=np.float64), m, n, half, r_buf, s_buf)
    assert count == len(positions)
    return PatchPair(positions, r_buf[:count].copy(), s_buf[:count].copy())


def select_reference_band(center, r_grid, valid, s_grids) -> int:
    """1-based index of the spectral band with the largest |PCC| over the
    5x5 patch; ties go to the lowest index, starved patches to band 1."""
    r_buf = np.empty(CORRELATION_PATCH**2)
    s_buf = np.empty(CORRELATION_PATCH**2)
    m, n = center
    return 1 + int(
        _select_band(r_grid, valid, np.asarray(s_grids, dtype=np.float64), m, n,
                     CORRELATION_PATCH // 2, r_buf, s_buf)
    )


# ---------------------------------------------------------------------------
# Predictors
# ---------------------------------------------------------------------------

def pel_recursive(ctx: BlockContext):
    """Per-pixel band selection and affine fit; returns (plane, band choice)."""
    _require_spectral(ctx)
    r_grid, valid, s_grids = ctx.support_grids()
    return _pel_recursive_kernel(
        r_grid, valid, s_grids, _order_array(ctx.block.size), ctx.max_value,
        CORRELATION_PATCH // 2, REGRESSION_PATCH // 2,
    )


def blockwise(ctx: BlockContext):
    """One band selection and affine fit over the whole boundary."""
    _require_spectral(ctx)
    r_vals = ctx.boundary.values().astype(np.float64)
    s_vals = np.stack([b.values() for b in ctx.spectral_boundaries]).astype(np.float64)
    best = _blockwise_band(r_vals, s_vals)
    alpha, beta = fit_kernel(r_vals, s_vals[best], r_vals.size)
    pred = affine_predict_exact(r_vals, s_vals[best], ctx.spectral_blocks[best], ctx.max_value)
    return pred, best, alpha, beta


def direct(ctx: BlockContext, channel: int) -> np.ndarray:
    _require_spectral(ctx)
    if channel not in (1, 2, 3):
        raise ValueError(f"channel must be 1, 2 or 3, got {channel}")
    return ctx.spectral_blocks[channel - 1].copy()


def intra(boundary: BoundarySamples, mode: Mode) -> np.ndarray:
    n = boundary.size
    top = boundary.top[1 : n + 1].astype(np.int64)
    left = boundary.left[:n].astype(np.int64)
    if mode == Mode.DC:
        dc = (int(top.sum()) + int(left.sum()) + n) // (2 * n)
        return np.full((n, n), dc, dtype=np.int64)
    if mode == Mode.HORIZONTAL:
        return np.repeat(left[:, None], n, axis=1)
    if mode == Mode.VERTICAL:
        return np.repeat(top[None, :], n, axis=0)
    if mode == Mode.PLANAR:
        top_right = int(boundary.top[n + 1])
        bottom_left = int(boundary.left[n])
        idx = np.arange(n)
        horiz = (n - 1 - idx)[None, :] * left[:, None] + (idx + 1)[None, :] * top_right
        vert = (n - 1 - idx)[:, None] * top[None, :] + (idx + 1)[:, None] * bottom_left
        shift = int(np.log2(n)) + 1
        return (horiz + vert + n) >> shift
    raise ValueError(f"{mode!r} is not an intra mode")


def predict_mode(ctx: BlockContext, mode: Mode) -> np.ndarray:
    """Prediction samples of ``mode`` for the block described by ``ctx``."""
    mode = Mode(mode)
    if mode == Mode.PEL_RECURSIVE:
        return pel_recursive(ctx)[0]
    if mode == Mode.BLOCKWISE:
        return blockwise(ctx)[0]
    if mode in DIRECT_MODES:
        return direct(ctx, mode - Mode.DIRECT_1 + 1)
    return intra(ctx.boundary, mode)


# Block/ReferenceSet level entry points

def predict_pel_recursive(block, refs: ReferenceSet) -> PredictionPlane:
    return PredictionPlane(pel_recursive(BlockContext(block, refs))[0], Mode.PEL_RECURSIVE)


def predict_blockwise(block, refs: ReferenceSet) -> PredictionPlane:
    return PredictionPlane(blockwise(BlockContext(block, refs))[0], Mode.BLOCKWISE)


def predict_direct(block, refs: ReferenceSet, channel: int) -> PredictionPlane:
    return PredictionPlane(direct(BlockContext(block, refs), channel), DIRECT_MODES[channel - 1])


def predict_intra(block, boundary: BoundarySamples, mode: Mode) -> PredictionPlane:
    if boundary.size != block[2]:
        raise ValueError("boundary does not match the block size")
    return PredictionPlane(intra(boundary, mode), Mode(mode))


def candidate_modes(has_spectral: bool) -> Sequence[Mode]:
    return tuple(Mode) if has_spectral else INTRA_MODES
