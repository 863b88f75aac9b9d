"""``specc`` command line: encode, decode, metrics, rd-sweep, bdrate, synth.

Exit status: 0 on success, 1 for usage errors, 2 for data or format errors.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import codec
from .bitstream import BitstreamError
from .cube_io import (
    CubeFormatError,
    load_any,
    store_cube,
    synthesize_correlated_cube,
)
from .metrics import (
    NoOverlapError,
    bd_rate,
    psnr,
    read_rd_csv,
    ssim,
    write_rd_csv,
)
from .predictors import Mode

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
DEFAULT_QPS = (17, 22, 27, 32, 37)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _qp(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"qp must be an integer, got {text!r}")
    if not 0 <= value <= 51:
        raise argparse.ArgumentTypeError(f"qp must be in [0, 51], got {value}")
    return value


def _qp_list(text: str):
    return tuple(_qp(part) for part in text.split(",") if part.strip())


def _coding_flags(parser):
    parser.add_argument("--intra-only", action="store_true",
                        help="disable the inter-band prediction modes")
    parser.add_argument("--no-ordering", action="store_true",
                        help="code bands in index order with a sliding reference window")
    parser.add_argument("--anchor", type=int, default=codec.DEFAULT_ANCHOR,
                        help="anchor band for SSIM ordering (default: %(default)s)")


def _input(parser):
    parser.add_argument("input", help="planar raw file (with JSON sidecar) or PGM directory")
    parser.add_argument("--descriptor", help="sidecar path (default: <input>.json)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="specc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="encode a cube into a .prbp stream")
    _input(p)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--qp", type=_qp, required=True)
    p.add_argument("--stats-out", help="per-band rate/PSNR/mode CSV")
    _coding_flags(p)

    p = sub.add_parser("decode", help="decode a .prbp stream to planar raw")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--endianness", choices=("little", "big"), default="little")

    p = sub.add_parser("metrics", help="PSNR and SSIM between two cubes")
    p.add_argument("reference")
    p.add_argument("distorted")
    p.add_argument("--reference-descriptor")
    p.add_argument("--distorted-descriptor")

    p = sub.add_parser("rd-sweep", help="encode at several QPs and write an RD curve CSV")
    _input(p)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--qps", type=_qp_list, default=DEFAULT_QPS,
                   help="comma separated QP list (default: 17,22,27,32,37)")
    _coding_flags(p)

    p = sub.add_parser("bdrate", help="BD-rate of a test curve against a reference curve")
    p.add_argument("reference_csv")
    p.add_argument("test_csv")

    p = sub.add_parser("synth", help="write a synthetic correlated cube")
    p.add_argument("output")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--bands", type=int, default=8)
    p.add_argument("--bit-depth", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.02,
                   help="uniform noise amplitude as a fraction of full scale")
    return parser


def _check_distinct(*paths):
    resolved = [Path(p).resolve() for p in paths if p]
    if len(set(resolved)) != len(resolved):
        raise UsageError("input and output paths must differ")


def _encode_options(args):
    return dict(inter_band=not args.intra_only, ordering=not args.no_ordering, anchor=args.anchor)


def write_stats_csv(path, cube, result: codec.EncodeResult) -> None:
    stats = result.stats
    psnrs = codec.band_psnrs(cube, result)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["band", "coded_position", "bits", "bpppb", "psnr_db", "leaves",
                         "inter_band_leaves", *[m.name.lower() for m in Mode]])
        for position, band in enumerate(result.plan.order):
            counts = stats.counts[band]
            writer.writerow([
                band, position, stats.bits[band], f"{result.band_bpppb(band):.6f}",
                f"{psnrs[band]:.4f}", sum(counts.values()),
                sum(n for m, n in counts.items() if m.is_inter_band),
                *[counts.get(m, 0) for m in Mode],
            ])


def cmd_encode(args) -> int:
    _check_distinct(args.input, args.output, args.stats_out)
    cube = load_any(args.input, args.descriptor)
    result = codec.encode_cube(cube, args.qp, **_encode_options(args))
    Path(args.output).write_bytes(result.stream)
    print(f"rate_bpppb,{result.bpppb:.6f}")
    print(f"psnr_db,{psnr(cube, result.reconstruction):.4f}")
    print(f"inter_band_share,{result.stats.inter_band_share:.4f}")
    for band, value in enumerate(codec.band_psnrs(cube, result)):
        print(f"band_{band}_psnr_db,{value:.4f}")
    if args.stats_out:
        write_stats_csv(args.stats_out, cube, result)
    return EXIT_OK


def cmd_decode(args) -> int:
    _check_distinct(args.input, args.output)
    cube = codec.decode_cube(Path(args.input).read_bytes())
    store_cube(cube, args.output, endianness=args.endianness)
    return EXIT_OK


def cmd_metrics(args) -> int:
    ref = load_any(args.reference, args.reference_descriptor)
    dist = load_any(args.distorted, args.distorted_descriptor)
    if ref.samples.shape != dist.samples.shape or ref.bit_depth != dist.bit_depth:
        raise CubeFormatError("cubes differ in shape or bit depth")
    window = min(8, ref.width, ref.height)
    writer = csv.writer(sys.stdout)
    writer.writerow(["band", "psnr_db", "ssim"])
    ssims = []
    for b in range(ref.bands):
        value = ssim(ref.samples[b], dist.samples[b], ref.bit_depth, window=window)
        ssims.append(value)
        writer.writerow([b, f"{psnr(ref.samples[b], dist.samples[b], ref.bit_depth):.4f}",
                         f"{value:.6f}"])
    writer.writerow(["all", f"{psnr(ref, dist):.4f}", f"{sum(ssims) / len(ssims):.6f}"])
    return EXIT_OK


def rd_sweep(cube, qps, **options):
    """(qp, rate, psnr) rows for each QP, in the given order."""
    rows = []
    for qp in qps:
        result = codec.encode_cube(cube, qp, **options)
        rows.append((qp, result.bpppb, psnr(cube, result.reconstruction)))
    return rows


def cmd_rd_sweep(args) -> int:
    _check_distinct(args.input, args.output)
    cube = load_any(args.input, args.descriptor)
    rows = rd_sweep(cube, args.qps, **_encode_options(args))
    write_rd_csv(args.output, rows)
    for qp, rate, quality in rows:
        print(f"{qp},{rate:.6f},{quality:.4f}")
    return EXIT_OK


def cmd_bdrate(args) -> int:
    value = bd_rate(read_rd_csv(args.reference_csv), read_rd_csv(args.test_csv))
    print(f"BD-rate: {value:.2f} %")
    return EXIT_OK


def cmd_synth(args) -> int:
    cube = synthesize_correlated_cube(args.width, args.height, args.bands, args.bit_depth,
                                      args.seed, args.noise)
    store_cube(cube, args.output)
    return EXIT_OK


COMMANDS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "metrics": cmd_metrics,
    "rd-sweep": cmd_rd_sweep,
    "bdrate": cmd_bdrate,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"specc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CubeFormatError, BitstreamError, NoOverlapError, ValueError, OSError) as exc:
        print(f"specc: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
