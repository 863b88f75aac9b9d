"""Band-sequential encoder and decoder.

Each band is tiled into 32x32 superblocks coded in raster order. Inside a
superblock a quadtree (sizes 32 down to 4, z-order) is chosen by exhaustive
rate-distortion search; every leaf picks the cheapest of the intra modes and,
once three reconstructed bands exist, the five inter-band modes.

The first three bands in coding order are intra-only. With ordering enabled
the remaining bands follow in ascending SSIM with respect to an anchor band
and, after each band, the least similar of the three references is replaced
by the band just coded. Without ordering the references are simply the three
most recently coded bands.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from . import bitstream as bs
from .cube_io import SpectralCube
from .metrics import psnr, ssim
from .predictors import (
    BlockContext,
    Mode,
    ReferenceSet,
    candidate_modes,
    predict_mode,
)
from .transform import (
    _forward,
    _quantize_kernel,
    _reconstruct_kernel,
    check_qp,
    dct_matrix,
    qstep,
    reconstruct_from_levels,
)

SUPERBLOCK = 32
MIN_BLOCK = 4
DEFAULT_ANCHOR = 2
SPLIT_FLAG_BITS = 1


def lambda_of_qp(qp: int) -> float:
    return 0.85 * 2.0 ** ((check_qp(qp) - 12) / 3.0)


@dataclass(frozen=True)
class RDCost:
    distortion: float
    rate: int
    lam: float

    @property
    def cost(self) -> float:
        return self.distortion + self.lam * self.rate

    def __add__(self, other: "RDCost") -> "RDCost":
        return RDCost(self.distortion + other.distortion, self.rate + other.rate, self.lam)


@dataclass
class BlockNode:
    x: int
    y: int
    size: int
    split: bool = False
    flag_coded: bool = False
    mode: Optional[Mode] = None
    levels: Optional[np.ndarray] = None
    children: list = field(default_factory=list)
    cost: Optional[RDCost] = None
    candidates: dict = field(default_factory=dict)

    def leaves(self):
        if not self.split:
            yield self
            return
        for child in self.children:
            yield from child.leaves()


@dataclass
class BandPlan:
    """Coding order and, per coded position, the original indices of the
    three reference bands (``None`` for intra-only positions)."""

    order: tuple
    ordering: bool
    anchor: int = DEFAULT_ANCHOR
    references: list = field(default_factory=list)


@dataclass
class ModeStats:
    """Chosen modes per band (keyed by original band index)."""

    counts: dict = field(default_factory=dict)
    bits: dict = field(default_factory=dict)
    has_references: dict = field(default_factory=dict)

    @property
    def leaves(self) -> int:
        return sum(sum(c.values()) for c in self.counts.values())

    def inter_band_count(self, bands=None) -> int:
        bands = self.counts if bands is None else bands
        return sum(n for b in bands for mode, n in self.counts[b].items() if mode.is_inter_band)

    @property
    def inter_band_share(self) -> float:
        """Inter-band leaves over all leaves of bands that had references."""
        bands = [b for b, ref in self.has_references.items() if ref]
        total = sum(sum(self.counts[b].values()) for b in bands)
        return self.inter_band_count(bands) / total if total else 0.0

    @property
    def overall_inter_band_share(self) -> float:
        """Inter-band leaves over every coded leaf, intra-only bands included."""
        return self.inter_band_count() / self.leaves if self.leaves else 0.0


# ---------------------------------------------------------------------------
# Band ordering and reference management
# ---------------------------------------------------------------------------

def _ssim_window(shape) -> int:
    return min(8, *shape)


def plane_ssim(a: np.ndarray, b: np.ndarray, bit_depth: int) -> float:
    return ssim(a, b, bit_depth, window=_ssim_window(a.shape))


def order_bands(cube: SpectralCube, anchor: int = DEFAULT_ANCHOR) -> BandPlan:
    """Bands 0-2 first, the rest in ascending SSIM to ``anchor`` (ties by index)."""
    if cube.bands < 4:
        return BandPlan(order=tuple(range(cube.bands)), ordering=False, anchor=anchor)
    if not 0 <= anchor < cube.bands:
        raise ValueError(f"anchor {anchor} outside 0..{cube.bands - 1}")
    anchor_plane = cube.samples[anchor]
    scores = {
        b: plane_ssim(cube.samples[b], anchor_plane, cube.bit_depth) for b in range(3, cube.bands)
    }
    rest = sorted(scores, key=lambda b: (scores[b], b))
    return BandPlan(order=(0, 1, 2, *rest), ordering=True, anchor=anchor)


def update_references(refs: list, new_plane: np.ndarray, bit_depth: int):
    """Replace the reference least similar to ``new_plane``.

    ``refs`` is ordered oldest first; ties replace the oldest. Returns the
    new list and the position that was dropped.
    """
    if len(refs) != 3:
        raise ValueError("reference update needs exactly three references")
    scores = [plane_ssim(r, new_plane, bit_depth) for r in refs]
    drop = int(np.argmin(scores))
    return refs[:drop] + refs[drop + 1 :] + [new_plane], drop


# ---------------------------------------------------------------------------
# Per-band coding
# ---------------------------------------------------------------------------

@njit(cache=True)
def _code_candidate(orig, pred, c, step, scan, max_value):
    """Transform, quantize, price and reconstruct one candidate prediction.

    Returns (levels, coefficient bits, reconstruction, squared error).
    """
    n = orig.shape[0]
    resid = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            resid[i, j] = orig[i, j] - pred[i, j]
    levels = _quantize_kernel(_forward(resid, c), step)
    bits = bs.coefficient_bits_kernel(levels.ravel(), scan)
    rec = _reconstruct_kernel(pred, levels, c, step, max_value)
    sse = 0
    for i in range(n):
        for j in range(n):
            d = orig[i, j] - rec[i, j]
            sse += d * d
    return levels, bits, rec, sse


def select_mode(candidates: dict):
    """Cheapest candidate; ties go to the lowest mode id."""
    best = None
    for mode in sorted(candidates):
        if best is None or candidates[mode].cost < candidates[best].cost:
            best = mode
    return best


class BandCoder:
    """Quadtree coding state for one band, shared by encoder and decoder.

    ``original`` is ``None`` on the decoder side.
    """

    def __init__(self, height, width, bit_depth, qp, spectral=(), original=None):
        self.height = height
        self.width = width
        self.bit_depth = bit_depth
        self.qp = qp
        self.lam = lambda_of_qp(qp)
        self.step = qstep(qp)
        self.max_value = (1 << bit_depth) - 1
        self.spectral = tuple(spectral)
        self.inter_band = bool(self.spectral)
        self.modes = candidate_modes(self.inter_band)
        self.original = None if original is None else np.asarray(original, dtype=np.int64)
        self.recon = np.zeros((height, width), dtype=np.int64)
        self.causal = np.zeros((height, width), dtype=np.bool_)

    def _refs(self) -> ReferenceSet:
        return ReferenceSet(self.spectral, self.recon, self.causal, self.bit_depth)

    def _fits(self, x, y, n) -> bool:
        return x + n <= self.width and y + n <= self.height

    def _commit(self, x, y, n, block) -> None:
        self.recon[y : y + n, x : x + n] = block
        self.causal[y : y + n, x : x + n] = True

    def superblocks(self):
        for y in range(0, self.height, SUPERBLOCK):
            for x in range(0, self.width, SUPERBLOCK):
                yield x, y

    @staticmethod
    def quadrants(x, y, n):
        h = n // 2
        return ((x, y), (x + h, y), (x, y + h), (x + h, y + h))

    # -- encoder --------------------------------------------------------

    def evaluate_leaf(self, x, y, n):
        """Best mode for a leaf at the current causal state; no state change."""
        ctx = BlockContext((x, y, n), self._refs())
        orig = np.ascontiguousarray(self.original[y : y + n, x : x + n])
        c = dct_matrix(n)
        scan = bs.zigzag_order(n)
        candidates = {}
        results = {}
        for mode in self.modes:
            pred = np.ascontiguousarray(predict_mode(ctx, mode), dtype=np.int64)
            levels, bits, rec, sse = _code_candidate(orig, pred, c, self.step, scan, self.max_value)
            rate = bs.mode_bits(mode, self.inter_band) + bits
            candidates[mode] = RDCost(float(sse), rate, self.lam)
            results[mode] = (levels, rec)
        mode = select_mode(candidates)
        levels, rec = results[mode]
        node = BlockNode(x, y, n, mode=mode, levels=levels, cost=candidates[mode],
                         candidates=candidates)
        return node, rec

    def encode_block_recursive(self, x, y, n) -> Optional[BlockNode]:
        """Choose leaf or split for the block at (x, y) and commit its
        reconstruction; returns ``None`` for blocks outside the image."""
        if x >= self.width or y >= self.height:
            return None
        fits = self._fits(x, y, n)
        can_split = n > MIN_BLOCK
        flag = SPLIT_FLAG_BITS if (fits and can_split) else 0
        flag_cost = RDCost(0.0, flag, self.lam)

        leaf = leaf_rec = None
        if fits:
            leaf, leaf_rec = self.evaluate_leaf(x, y, n)
            leaf.flag_coded = bool(flag)
            leaf.cost = leaf.cost + flag_cost
        if not can_split:
            self._commit(x, y, n, leaf_rec)
            return leaf

        children = []
        split_cost = flag_cost
        for cx, cy in self.quadrants(x, y, n):
            child = self.encode_block_recursive(cx, cy, n // 2)
            if child is not None:
                children.append(child)
                split_cost = split_cost + child.cost
        split = BlockNode(x, y, n, split=True, flag_coded=bool(flag), children=children,
                          cost=split_cost)
        if leaf is not None and leaf.cost.cost <= split_cost.cost:
            self._commit(x, y, n, leaf_rec)
            return leaf
        return split

    def encode(self):
        return [self.encode_block_recursive(x, y, SUPERBLOCK) for x, y in self.superblocks()]

    def write(self, writer: bs.BitWriter, trees) -> None:
        for tree in trees:
            self._write_node(writer, tree)

    def _write_node(self, writer, node: BlockNode) -> None:
        if node.flag_coded:
            writer.write_bit(1 if node.split else 0)
        if node.split:
            for child in node.children:
                self._write_node(writer, child)
            return
        bs.code_mode(writer, node.mode, self.inter_band)
        bs.code_coefficients(writer, node.levels)

    # -- decoder --------------------------------------------------------

    def decode(self, reader: bs.BitReader):
        return [self._decode_node(reader, x, y, SUPERBLOCK) for x, y in self.superblocks()]

    def _decode_node(self, reader, x, y, n):
        if x >= self.width or y >= self.height:
            return None
        fits = self._fits(x, y, n)
        flag_coded = fits and n > MIN_BLOCK
        split = bool(reader.read_bit()) if flag_coded else not fits
        if split:
            children = [self._decode_node(reader, cx, cy, n // 2)
                        for cx, cy in self.quadrants(x, y, n)]
            return BlockNode(x, y, n, split=True, flag_coded=flag_coded,
                             children=[c for c in children if c is not None])
        mode = bs.decode_mode(reader, self.inter_band)
        levels = bs.decode_coefficients(reader, n)
        ctx = BlockContext((x, y, n), self._refs())
        pred = predict_mode(ctx, mode)
        self._commit(x, y, n, reconstruct_from_levels(pred, levels, self.qp, self.bit_depth))
        return BlockNode(x, y, n, flag_coded=flag_coded, mode=mode, levels=levels)


# ---------------------------------------------------------------------------
# Cube level
# ---------------------------------------------------------------------------

@dataclass
class EncodeResult:
    stream: bytes
    header: bs.StreamHeader
    reconstruction: SpectralCube
    stats: ModeStats
    plan: BandPlan
    trees: dict

    @property
    def total_bits(self) -> int:
        return 8 * len(self.stream)

    @property
    def bpppb(self) -> float:
        h = self.header
        return self.total_bits / (h.width * h.height * h.bands)

    def band_bpppb(self, band: int) -> float:
        return self.stats.bits[band] / (self.header.width * self.header.height)


def check_dimensions(width: int, height: int) -> None:
    if width < MIN_BLOCK or height < MIN_BLOCK or width % MIN_BLOCK or height % MIN_BLOCK:
        raise ValueError(f"image dimensions must be multiples of {MIN_BLOCK}, got {width}x{height}")


class _ReferenceWindow:
    """The three spectral references, oldest first, as (band, plane) pairs."""

    def __init__(self, ordering: bool, bit_depth: int):
        self.ordering = ordering
        self.bit_depth = bit_depth
        self.entries = []

    @property
    def ready(self) -> bool:
        return len(self.entries) == 3

    def planes(self):
        return tuple(p for _, p in self.entries)

    def bands(self):
        return tuple(b for b, _ in self.entries)

    def push(self, band: int, plane: np.ndarray) -> None:
        if not self.ready:
            self.entries.append((band, plane))
        elif self.ordering:
            _, drop = update_references(list(self.planes()), plane, self.bit_depth)
            self.entries = self.entries[:drop] + self.entries[drop + 1 :] + [(band, plane)]
        else:
            self.entries = self.entries[1:] + [(band, plane)]


def encode_cube(
    cube: SpectralCube,
    qp: int,
    inter_band: bool = True,
    ordering: bool = True,
    anchor: int = DEFAULT_ANCHOR,
) -> EncodeResult:
    qp = check_qp(qp)
    check_dimensions(cube.width, cube.height)
    plan = order_bands(cube, anchor) if ordering else BandPlan(tuple(range(cube.bands)), False, anchor)
    header = bs.StreamHeader(
        width=cube.width, height=cube.height, bands=cube.bands, bit_depth=cube.bit_depth,
        qp=qp, band_order=plan.order, inter_band=inter_band, ordering=plan.ordering,
        anchor=anchor,
    )
    writer = bs.BitWriter()
    writer.write_bytes(header.to_bytes())
    window = _ReferenceWindow(plan.ordering, cube.bit_depth)
    recon = np.zeros(cube.samples.shape, dtype=np.int64)
    stats = ModeStats()
    trees = {}
    for band in plan.order:
        use_refs = inter_band and window.ready
        plan.references.append(window.bands() if use_refs else None)
        coder = BandCoder(cube.height, cube.width, cube.bit_depth, qp,
                          spectral=window.planes() if use_refs else (),
                          original=cube.samples[band])
        band_trees = coder.encode()
        start = writer.bits_written
        coder.write(writer, band_trees)
        stats.bits[band] = writer.bits_written - start
        stats.counts[band] = Counter(
            leaf.mode for tree in band_trees for leaf in tree.leaves()
        )
        stats.has_references[band] = use_refs
        trees[band] = band_trees
        recon[band] = coder.recon
        if inter_band:
            window.push(band, coder.recon)
    return EncodeResult(
        stream=writer.getvalue(),
        header=header,
        reconstruction=SpectralCube(recon, cube.bit_depth),
        stats=stats,
        plan=plan,
        trees=trees,
    )


def decode_cube(stream: bytes) -> SpectralCube:
    reader = bs.BitReader(stream)
    header = bs.StreamHeader.from_reader(reader)
    check_dimensions(header.width, header.height)
    check_qp(header.qp)
    if header.bit_depth not in range(8, 17):
        raise bs.BitstreamError(f"unsupported bit depth {header.bit_depth}")
    window = _ReferenceWindow(header.ordering, header.bit_depth)
    recon = np.zeros((header.bands, header.height, header.width), dtype=np.int64)
    for band in header.band_order:
        use_refs = header.inter_band and window.ready
        coder = BandCoder(header.height, header.width, header.bit_depth, header.qp,
                          spectral=window.planes() if use_refs else ())
        coder.decode(reader)
        recon[band] = coder.recon
        if header.inter_band:
            window.push(band, coder.recon)
    reader.finish()
    return SpectralCube(recon, header.bit_depth)


def band_psnrs(original: SpectralCube, result: EncodeResult):
    return [
        psnr(original.samples[b], result.reconstruction.samples[b], original.bit_depth)
        for b in range(original.bands)
    ]
