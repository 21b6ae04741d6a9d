"""Command-line entry point: ``landpatch <verb> ...``.

Exit codes: 0 success, 2 invalid input, 3 I/O failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import format_percent
from .forecast import NumericalError, Quarter, SeriesError, acf, difference, read_series_csv, regularize
from .raster import default_palette, load_palette
from .pipeline import parse_manifest, run_change, run_diff, run_forecast, run_segment

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("landpatch")


def _quarter(text: str) -> Quarter:
    try:
        return Quarter.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _palette(args):
    return load_palette(args.palette) if args.palette else default_palette()


def cmd_segment(args) -> int:
    manifest = parse_manifest(args.manifest)
    out = run_segment(manifest, args.out, workers=args.workers)
    print(f"wrote {len(out.maps)} maps and {out.areas_csv}")
    return EXIT_OK


def cmd_change(args) -> int:
    res = run_change(args.areas, args.from_q, args.to_q, args.out, _palette(args),
                     resolution=args.resolution)
    for r in res.rows:
        print(f"{r.name:20s} {r.area_before:8.3f} {r.area_after:8.3f} {r.delta:8.3f} "
              f"{format_percent(r.percent):>10s}")
    print(f"BUI {args.from_q}={res.bui_from:.3f} {args.to_q}={res.bui_to:.3f}")
    return EXIT_OK


def cmd_diff(args) -> int:
    diff = run_diff(args.map_a, args.map_b, args.out, _palette(args))
    changed = int(np.any(diff.pixels != 0, axis=-1).sum())
    print(f"{changed} of {diff.width * diff.height} pixels changed")
    return EXIT_OK


def cmd_forecast(args) -> int:
    table = run_forecast(args.areas, args.target, args.p, args.d, args.out, _palette(args))
    print(f"forecast {len(table.quarters)} quarters to {table.target}; BUI={table.bui:.3f}")
    return EXIT_OK


def cmd_acf(args) -> int:
    palette = _palette(args)
    series = read_series_csv(args.areas, palette)
    s = series[palette.index_of(args.class_name)]
    reg = regularize(s, s.quarters[0], s.quarters[-1])
    values = difference(reg.values, args.d)
    for lag, r in enumerate(acf(values, args.max_lag)):
        print(f"{lag},{r:.6f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import make_scene, write_manifest

    scene = make_scene(quarters=args.quarters, start=args.start, seed=args.seed)
    exclude = tuple(args.exclude or ())
    path = write_manifest(scene, args.out_dir, exclude=exclude)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="landpatch", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("segment", help="segment every image in a manifest")
    s.add_argument("manifest", type=Path)
    s.add_argument("-o", "--out", type=Path, required=True)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("change", help="change table between two quarters")
    s.add_argument("areas", type=Path)
    s.add_argument("--from", dest="from_q", type=_quarter, required=True)
    s.add_argument("--to", dest="to_q", type=_quarter, required=True)
    s.add_argument("-o", "--out", type=Path)
    s.add_argument("--palette", type=Path)
    s.add_argument("--resolution", type=float, default=0.65)
    s.set_defaults(func=cmd_change)

    s = sub.add_parser("diff", help="difference map of two segmentation maps")
    s.add_argument("map_a", type=Path)
    s.add_argument("map_b", type=Path)
    s.add_argument("-o", "--out", type=Path, required=True)
    s.add_argument("--palette", type=Path)
    s.set_defaults(func=cmd_diff)

    s = sub.add_parser("forecast", help="ARIMA forecast of every class area")
    s.add_argument("areas", type=Path)
    s.add_argument("--target", type=_quarter, required=True)
    s.add_argument("--p", type=int, default=4)
    s.add_argument("--d", type=int, default=1)
    s.add_argument("-o", "--out", type=Path)
    s.add_argument("--palette", type=Path)
    s.set_defaults(func=cmd_forecast)

    s = sub.add_parser("acf", help="sample autocorrelation of one class series")
    s.add_argument("areas", type=Path)
    s.add_argument("--class", dest="class_name", required=True)
    s.add_argument("--max-lag", type=int, default=12)
    s.add_argument("--d", type=int, default=0, help="difference the series first")
    s.add_argument("--palette", type=Path)
    s.set_defaults(func=cmd_acf)

    s = sub.add_parser("synth", help="write a seeded synthetic manifest for demos")
    s.add_argument("out_dir", type=Path)
    s.add_argument("--quarters", type=int, default=12)
    s.add_argument("--start", type=_quarter, default=Quarter(2016, 1))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--exclude", type=int, action="append", help="quarter index to mark as clouded")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
