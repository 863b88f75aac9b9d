"""Multispectral cube containers and file I/O.

Cubes are stored as planar raw files (band-major, row-major within a band)
next to a mandatory JSON sidecar descriptor, or as a directory of binary PGM
files with one band per file.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SUPPORTED_BIT_DEPTHS = range(8, 17)
PLANE_BIT_DEPTHS = range(1, 17)
SAMPLE_DTYPE = np.int32


class CubeFormatError(ValueError):
    """Raised for malformed, truncated or out-of-range cube data."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array, dtype=SAMPLE_DTYPE)
    array.setflags(write=False)
    return array


def _check_range(samples: np.ndarray, bit_depth: int, allowed=SUPPORTED_BIT_DEPTHS) -> None:
    if bit_depth not in allowed:
        raise CubeFormatError(f"unsupported bit depth {bit_depth}")
    if samples.size and (samples.min() < 0 or samples.max() >= 1 << bit_depth):
        raise CubeFormatError(
            f"sample out of range for bit depth {bit_depth}: "
            f"[{samples.min()}, {samples.max()}]"
        )


@dataclass(frozen=True, eq=False)
class Plane:
    """One spectral band, ``samples`` has shape (height, width)."""

    samples: np.ndarray
    bit_depth: int

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 2:
            raise CubeFormatError("plane samples must be two-dimensional")
        _check_range(samples, self.bit_depth, PLANE_BIT_DEPTHS)
        object.__setattr__(self, "samples", _frozen(samples))

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    def __eq__(self, other):
        if not isinstance(other, Plane):
            return NotImplemented
        return self.bit_depth == other.bit_depth and np.array_equal(
            self.samples, other.samples
        )


@dataclass(frozen=True, eq=False)
class SpectralCube:
    """A multispectral image, ``samples`` has shape (bands, height, width)."""

    samples: np.ndarray
    bit_depth: int

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 3:
            raise CubeFormatError("cube samples must be three-dimensional")
        bands, height, width = samples.shape
        if bands < 1:
            raise CubeFormatError("cube needs at least one band")
        if width < 1 or height < 1:
            raise CubeFormatError(f"empty cube: {width}x{height}")
        _check_range(samples, self.bit_depth)
        object.__setattr__(self, "samples", _frozen(samples))

    @property
    def bands(self) -> int:
        return self.samples.shape[0]

    @property
    def height(self) -> int:
        return self.samples.shape[1]

    @property
    def width(self) -> int:
        return self.samples.shape[2]

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    def band(self, index: int) -> Plane:
        return Plane(self.samples[index], self.bit_depth)

    @classmethod
    def from_planes(cls, planes) -> "SpectralCube":
        planes = list(planes)
        depths = {p.bit_depth for p in planes}
        if len(depths) != 1:
            raise CubeFormatError(f"planes disagree on bit depth: {sorted(depths)}")
        return cls(np.stack([p.samples for p in planes]), depths.pop())

    def __eq__(self, other):
        if not isinstance(other, SpectralCube):
            return NotImplemented
        return self.bit_depth == other.bit_depth and np.array_equal(
            self.samples, other.samples
        )


# ---------------------------------------------------------------------------
# Planar raw + descriptor
# ---------------------------------------------------------------------------

def descriptor_path(raw_path) -> Path:
    """Default sidecar location: ``<raw>.json``."""
    raw_path = Path(raw_path)
    return raw_path.with_name(raw_path.name + ".json")


def read_descriptor(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            desc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CubeFormatError(f"descriptor {path} is not valid JSON: {exc}") from exc
    return validate_descriptor(desc)


def validate_descriptor(desc: dict) -> dict:
    try:
        out = {
            "width": int(desc["width"]),
            "height": int(desc["height"]),
            "bands": int(desc["bands"]),
            "bit_depth": int(desc["bit_depth"]),
            "endianness": str(desc.get("endianness", "little")).lower(),
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise CubeFormatError(f"incomplete descriptor: {exc}") from exc
    if out["bit_depth"] not in SUPPORTED_BIT_DEPTHS:
        raise CubeFormatError(f"unsupported bit depth {out['bit_depth']}")
    if out["endianness"] not in ("little", "big"):
        raise CubeFormatError(f"unknown endianness {out['endianness']!r}")
    if min(out["width"], out["height"], out["bands"]) < 1:
        raise CubeFormatError("descriptor dimensions must be positive")
    return out


def _raw_dtype(bit_depth: int, endianness: str) -> np.dtype:
    if bit_depth <= 8:
        return np.dtype(np.uint8)
    return np.dtype(">u2" if endianness == "big" else "<u2")


def load_cube(path, descriptor=None) -> SpectralCube:
    """Load a planar raw cube.

    ``descriptor`` may be a dict or a path to the JSON sidecar; by default the
    sidecar is looked up next to the raw file.
    """
    if descriptor is None:
        descriptor = descriptor_path(path)
    if isinstance(descriptor, dict):
        desc = validate_descriptor(descriptor)
    else:
        desc = read_descriptor(descriptor)

    dtype = _raw_dtype(desc["bit_depth"], desc["endianness"])
    count = desc["width"] * desc["height"] * desc["bands"]
    expected = count * dtype.itemsize
    data = Path(path).read_bytes()
    if len(data) != expected:
        raise CubeFormatError(
            f"{path}: size mismatch, expected {expected} bytes, found {len(data)}"
        )
    samples = np.frombuffer(data, dtype=dtype).astype(SAMPLE_DTYPE)
    samples = samples.reshape(desc["bands"], desc["height"], desc["width"])
    return SpectralCube(samples, desc["bit_depth"])


def store_cube(cube: SpectralCube, path, endianness: str = "little", descriptor=None) -> Path:
    """Write ``cube`` as planar raw plus sidecar; returns the descriptor path."""
    dtype = _raw_dtype(cube.bit_depth, endianness)
    Path(path).write_bytes(cube.samples.astype(dtype).tobytes())
    desc_file = Path(descriptor) if descriptor else descriptor_path(path)
    desc = {
        "width": cube.width,
        "height": cube.height,
        "bands": cube.bands,
        "bit_depth": cube.bit_depth,
        "endianness": endianness,
    }
    desc_file.write_text(json.dumps(desc, indent=2) + "\n", encoding="utf-8")
    return desc_file


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int):
    """Return ``count`` header tokens and the offset of the raster."""
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise CubeFormatError("truncated PGM header")
        if data[pos : pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise CubeFormatError("missing whitespace after PGM header")
    return tokens, pos + 1


def bit_depth_for_maxval(maxval: int) -> int:
    return max(1, math.ceil(math.log2(maxval + 1)))


def load_pgm_band(path) -> Plane:
    """Read a binary (P5) PGM; 16-bit rasters are big-endian."""
    data = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise CubeFormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise CubeFormatError(f"{path}: malformed PGM header") from exc
    if not 0 < maxval <= 65535:
        raise CubeFormatError(f"{path}: maxval {maxval} outside 1..65535")
    if width < 1 or height < 1:
        raise CubeFormatError(f"{path}: bad dimensions {width}x{height}")
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    raster = data[offset:]
    expected = width * height * dtype.itemsize
    if len(raster) != expected:
        raise CubeFormatError(
            f"{path}: size mismatch, expected {expected} raster bytes, found {len(raster)}"
        )
    samples = np.frombuffer(raster, dtype=dtype).astype(SAMPLE_DTYPE)
    if samples.size and samples.max() > maxval:
        raise CubeFormatError(f"{path}: sample exceeds maxval {maxval}")
    return Plane(samples.reshape(height, width), bit_depth_for_maxval(maxval))


def store_pgm_band(plane: Plane, path) -> None:
    maxval = plane.max_value
    dtype = np.uint8 if maxval < 256 else ">u2"
    header = f"P5\n{plane.width} {plane.height}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + plane.samples.astype(dtype).tobytes())


def load_pgm_directory(directory) -> SpectralCube:
    """Load every ``*.pgm`` in ``directory`` (sorted by name) as one band each."""
    files = sorted(Path(directory).glob("*.pgm"))
    if not files:
        raise CubeFormatError(f"no PGM files in {directory}")
    planes = [load_pgm_band(f) for f in files]
    # bands of one cube share the widest depth, never below 8 bits
    depth = max(8, max(p.bit_depth for p in planes))
    return SpectralCube(np.stack([p.samples for p in planes]), depth)


def store_pgm_directory(cube: SpectralCube, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    digits = max(2, len(str(cube.bands - 1)))
    for index in range(cube.bands):
        store_pgm_band(cube.band(index), Path(directory) / f"band_{index:0{digits}d}.pgm")


def load_any(path, descriptor=None) -> SpectralCube:
    """Dispatch on ``path``: a directory of PGMs or a raw file with sidecar."""
    if Path(path).is_dir():
        return load_pgm_directory(path)
    return load_cube(path, descriptor)


# ---------------------------------------------------------------------------
# Synthetic fixtures
# ---------------------------------------------------------------------------

def default_gain_schedule(bands: int):
    """Gain/offset pairs (as fractions of full scale) used by the synthesizer.

    The gains follow one smooth period across the cube, like a spectral
    response curve::

        gain_i   = 0.45 + 0.4 (0.5 + 0.5 cos(2 pi i / bands + 0.6))
        offset_i = 0.9 (1 - gain_i) (0.5 + 0.5 sin(0.7 i))

    so gain_i + offset_i <= 1 and the noiseless bands never clip.
    """
    i = np.arange(bands, dtype=np.float64)
    gains = 0.45 + 0.4 * (0.5 + 0.5 * np.cos(2 * np.pi * i / bands + 0.6))
    offsets = 0.9 * (1.0 - gains) * (0.5 + 0.5 * np.sin(0.7 * i))
    return gains, offsets


def synthesize_base(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    """Shared spatial structure in [0, 1]: smooth shading, edges and texture."""
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    base = np.zeros((height, width))
    for _ in range(3):
        fy, fx = rng.uniform(0.5, 3.0, size=2) * 2 * np.pi / np.array([height, width])
        phase = rng.uniform(0, 2 * np.pi)
        base += rng.uniform(0.2, 0.5) * np.cos(fy * y + fx * x + phase)
    for _ in range(max(4, (width * height) // 256)):
        x0, x1 = np.sort(rng.integers(0, width, size=2))
        y0, y1 = np.sort(rng.integers(0, height, size=2))
        base[y0 : y1 + 1, x0 : x1 + 1] += rng.uniform(-0.8, 0.8)
    for _ in range(max(2, (width * height) // 1024)):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        radius = rng.uniform(2, max(3, min(width, height) / 4))
        base[(y - cy) ** 2 + (x - cx) ** 2 < radius**2] += rng.uniform(-0.8, 0.8)
    base += 0.1 * rng.standard_normal((height, width))
    base -= base.min()
    peak = base.max()
    return base / peak if peak > 0 else base


def synthesize_correlated_cube(
    width: int,
    height: int,
    bands: int,
    bit_depth: int,
    seed: int,
    noise_amplitude: float,
    gains=None,
    offsets=None,
) -> SpectralCube:
    """Bands that are affine transforms of one shared structure plus noise.

    band_i = clamp(round(M * (gain_i * base + offset_i) + noise_i)), with
    M = 2**bit_depth - 1 and noise_i uniform in [-A, A], A = noise_amplitude * M.
    ``gains``/``offsets`` default to :func:`default_gain_schedule`.
    """
    if bands < 4:
        raise ValueError("synthesized cubes need at least 4 bands")
    if noise_amplitude < 0:
        raise ValueError("noise_amplitude must be non-negative")
    if bit_depth not in SUPPORTED_BIT_DEPTHS:
        raise ValueError(f"unsupported bit depth {bit_depth}")
    rng = np.random.default_rng(seed)
    base = synthesize_base(width, height, rng)
    default_g, default_o = default_gain_schedule(bands)
    gains = default_g if gains is None else np.broadcast_to(np.asarray(gains, float), (bands,))
    offsets = default_o if offsets is None else np.broadcast_to(np.asarray(offsets, float), (bands,))
    top = (1 << bit_depth) - 1
    out = np.empty((bands, height, width), dtype=SAMPLE_DTYPE)
    for i in range(bands):
        band = top * (gains[i] * base + offsets[i])
        if noise_amplitude > 0:
            band = band + rng.uniform(-1.0, 1.0, size=band.shape) * noise_amplitude * top
        out[i] = np.clip(np.floor(band + 0.5), 0, top)
    return SpectralCube(out, bit_depth)
