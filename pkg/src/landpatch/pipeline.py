"""Manifest-driven batch runs: segmentation, change tables, differencing and
forecasting, writing files the same way the CLI does."""

from __future__ import annotations

import logging
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analytics import (AreaReport, DEFAULT_RESOLUTION, built_up_index, change_table,
                        change_table_csv, difference_map)
from .classifier import PatchSizeError, load_model
from .forecast import (ForecastTable, Quarter, SeriesError, forecast_table, read_series_csv,
                       regularize, write_series_csv)
from .raster import (DIFF_SENTINEL, NUM_CLASSES, Palette, default_palette, load_labels_pgm,
                     load_palette, load_raster, save_labels_pgm, save_raster, Raster)
from .segmenter import (SegmentationMap, SegmenterConfig, class_pixel_counts, labels_from_colors,
                        render, segment)

log = logging.getLogger(__name__)

# advisory only: bright frames are probably cloud
CLOUD_LUMINANCE = 240.0


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    quarter: Quarter
    path: Path
    excluded: bool = False
    exclude_reason: str | None = None


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    model_path: Path
    resolution: float = DEFAULT_RESOLUTION
    palette_path: Path | None = None
    config: SegmenterConfig = field(default_factory=SegmenterConfig)

    @property
    def included(self) -> list[ManifestEntry]:
        return [e for e in self.entries if not e.excluded]

    def palette(self) -> Palette:
        return load_palette(self.palette_path) if self.palette_path else default_palette()


def parse_manifest(path) -> Manifest:
    """Read a manifest; relative paths resolve against the manifest's directory."""
    path = Path(path)
    base = path.parent
    entries: list[ManifestEntry] = []
    opts: dict[str, str] = {}
    cfg_keys = {"patch_size", "stride", "mode", "cover_edges"}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{path}:{lineno}"
        head = line.split(None, 1)
        if head[0] in cfg_keys | {"resolution", "model", "palette"}:
            if len(head) != 2:
                raise ManifestError(f"{where}: directive {head[0]!r} needs a value")
            opts[head[0]] = head[1].strip()
            continue
        parts = [p.strip() for p in line.split(",", 3)]
        try:
            q = Quarter.parse(parts[0])
        except ValueError as exc:
            raise ManifestError(f"{where}: {exc}") from None
        if len(parts) < 2 or not parts[1]:
            raise ManifestError(f"{where}: entry needs a path")
        excluded = False
        if len(parts) >= 3:
            if parts[2] != "excluded":
                raise ManifestError(f"{where}: third field must be 'excluded'")
            excluded = True
        reason = parts[3] if len(parts) == 4 else None
        entries.append(ManifestEntry(q, base / parts[1], excluded, reason))

    if "model" not in opts:
        raise ManifestError(f"{path}: missing 'model <path>' directive")
    quarters = [e.quarter for e in entries]
    if len(set(quarters)) != len(quarters):
        raise ManifestError(f"{path}: duplicate quarters")
    if not any(not e.excluded for e in entries):
        raise ManifestError(f"{path}: no non-excluded entries")
    try:
        resolution = float(opts.get("resolution", DEFAULT_RESOLUTION))
        if not resolution > 0:
            raise ValueError("resolution must be positive")
        if opts.get("cover_edges", "0") not in ("0", "1"):
            raise ValueError("cover_edges must be 0 or 1")
        config = SegmenterConfig(
            patch_size=int(opts.get("patch_size", 256)),
            stride=int(opts.get("stride", 32)),
            mode=opts.get("mode", "overwrite"),
            cover_edges=opts.get("cover_edges", "0") == "1",
        )
    except ValueError as exc:
        raise ManifestError(f"{path}: {exc}") from None
    entries.sort(key=lambda e: e.quarter)
    return Manifest(
        entries=entries,
        model_path=base / opts["model"],
        resolution=resolution,
        palette_path=base / opts["palette"] if "palette" in opts else None,
        config=config,
    )


@dataclass
class RunOutputs:
    out_dir: Path
    maps: dict[Quarter, Path]
    label_grids: dict[Quarter, Path]
    areas_csv: Path
    counts_csv: Path
    bui_csv: Path
    reports: dict[Quarter, AreaReport]


def mean_luminance(raster: Raster) -> float:
    px = raster.pixels
    return float((0.299 * px[..., 0].mean()) + (0.587 * px[..., 1].mean()) + (0.114 * px[..., 2].mean()))


class _Staging:
    """Collect outputs in a temp directory next to ``out_dir``; publish on success."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        out_dir.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}-", dir=out_dir.parent))

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            for f in sorted(self.tmp.iterdir()):
                os.replace(f, self.out_dir / f.name)
        shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def run_segment(manifest: Manifest, out_dir, workers: int = 1) -> RunOutputs:
    """Segment every non-excluded image and write maps, label grids and area tables."""
    out_dir = Path(out_dir)
    palette = manifest.palette()
    model = load_model(manifest.model_path)
    if model.patch_size != manifest.config.patch_size:
        raise PatchSizeError(
            f"model patch size {model.patch_size} != manifest patch_size {manifest.config.patch_size}"
        )
    quarters = [e.quarter for e in manifest.entries]
    counts = np.full((len(quarters), NUM_CLASSES), -1, dtype=np.int64)
    reports: dict[Quarter, AreaReport] = {}
    maps, grids = {}, {}

    with _Staging(out_dir) as stage:
        for i, entry in enumerate(manifest.entries):
            if entry.excluded:
                log.info("%s excluded (%s)", entry.quarter, entry.exclude_reason or "no reason given")
                continue
            image = load_raster(entry.path)
            lum = mean_luminance(image)
            if lum > CLOUD_LUMINANCE:
                log.warning("%s: mean luminance %.1f suggests cloud cover (%s)",
                            entry.quarter, lum, entry.path)
            seg = segment(image, model, palette, manifest.config, workers=workers)
            save_raster(render(seg, palette), stage.tmp / f"{entry.quarter}_map.png")
            save_labels_pgm(seg.labels, stage.tmp / f"{entry.quarter}_labels.pgm")
            maps[entry.quarter] = out_dir / f"{entry.quarter}_map.png"
            grids[entry.quarter] = out_dir / f"{entry.quarter}_labels.pgm"
            counts[i] = class_pixel_counts(seg).classes
            reports[entry.quarter] = AreaReport.from_counts(counts[i], manifest.resolution)

        areas = [reports[q].areas if q in reports else [None] * NUM_CLASSES for q in quarters]
        write_series_csv(stage.tmp / "areas.csv", quarters, areas, palette.names)
        write_series_csv(stage.tmp / "counts.csv", quarters,
                         [[None if v < 0 else int(v) for v in row] for row in counts],
                         palette.names, fmt=lambda v: "" if v is None else str(v))
        bui_lines = ["quarter,bui"]
        for q in quarters:
            bui = f"{built_up_index(reports[q].areas, palette):.6f}" if q in reports else ""
            bui_lines.append(f"{q},{bui}")
        (stage.tmp / "bui.csv").write_text("\n".join(bui_lines) + "\n", encoding="utf-8")

    return RunOutputs(out_dir, maps, grids, out_dir / "areas.csv", out_dir / "counts.csv",
                      out_dir / "bui.csv", reports)


def _report_at(series, quarter: Quarter, resolution: float) -> AreaReport:
    idx = [s.quarters for s in series][0]
    if quarter not in idx:
        raise SeriesError(f"quarter {quarter} not in series")
    i = idx.index(quarter)
    vals = [s.points[i][1] for s in series]
    if any(v is None for v in vals):
        raise SeriesError(f"quarter {quarter} has missing areas")
    return AreaReport(vals, resolution)


@dataclass
class ChangeResult:
    rows: list
    bui_from: float
    bui_to: float


def run_change(areas_csv, quarter_a: Quarter, quarter_b: Quarter, out_file=None,
               palette: Palette | None = None,
               resolution: float = DEFAULT_RESOLUTION) -> ChangeResult:
    palette = palette or default_palette()
    series = read_series_csv(areas_csv, palette)
    before = _report_at(series, quarter_a, resolution)
    after = _report_at(series, quarter_b, resolution)
    rows = change_table(before, after, palette)
    res = ChangeResult(rows, built_up_index(before.areas, palette), built_up_index(after.areas, palette))
    if out_file is not None:
        text = change_table_csv(rows)
        text += f"# BUI_{quarter_a}={res.bui_from:.6f}\n# BUI_{quarter_b}={res.bui_to:.6f}\n"
        _atomic_write(Path(out_file), text.encode("utf-8"))
    return res


def read_map(path, palette: Palette) -> SegmentationMap:
    """Load a label grid (.pgm sidecar) or invert a rendered colour map."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return SegmentationMap(load_labels_pgm(path))
    try:
        return labels_from_colors(load_raster(path), palette, extra_unclassified=(DIFF_SENTINEL,))
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def run_diff(map_a, map_b, out_file, palette: Palette | None = None) -> Raster:
    palette = palette or default_palette()
    diff = difference_map(read_map(map_a, palette), read_map(map_b, palette), palette)
    out_file = Path(out_file)
    tmp = out_file.with_name(f".{out_file.name}.tmp{out_file.suffix}")
    try:
        save_raster(diff, tmp)
        os.replace(tmp, out_file)
    finally:
        tmp.unlink(missing_ok=True)
    return diff


def run_forecast(areas_csv, target: Quarter, p: int = 4, d: int = 1, out_file=None,
                 palette: Palette | None = None) -> ForecastTable:
    palette = palette or default_palette()
    series = read_series_csv(areas_csv, palette)
    quarters = series[0].quarters
    if not quarters:
        raise SeriesError(f"{areas_csv}: no rows")
    start, end = quarters[0], quarters[-1]
    if target < end:
        raise SeriesError(f"target precedes series end ({target} < {end})")
    regular = [regularize(s, start, end) for s in series]
    table = forecast_table(regular, target, p, d, palette)
    if out_file is not None:
        tmp = Path(out_file).with_name(f".{Path(out_file).name}.tmp")
        try:
            write_series_csv(tmp, table.quarters, table.areas, palette.names,
                             bui=table.bui_path, fmt=lambda v: f"{v:.6f}")
            os.replace(tmp, out_file)
        finally:
            tmp.unlink(missing_ok=True)
    return table


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)
