"""Post-classification analytics: ground areas, change tables, built-up index
and difference maps."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .raster import DIFF_SENTINEL, NUM_CLASSES, UNCLASSIFIED, Palette, Raster, default_palette
from .segmenter import SegmentationMap

DEFAULT_RESOLUTION = 0.65  # metres per pixel (QuickBird)

CHANGE_HEADER = ["class", "area_before_km2", "area_after_km2", "delta_km2", "percent_change"]


def pixels_to_area(count, resolution: float = DEFAULT_RESOLUTION):
    """Convert a pixel count (or array of counts) to km^2."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if np.any(np.asarray(count) < 0):
        raise ValueError("pixel count must be non-negative")
    return count * (resolution * resolution) / 1e6


@dataclass(frozen=True)
class AreaReport:
    """Per-class areas in km^2 at a given ground resolution."""

    areas: np.ndarray
    resolution: float = DEFAULT_RESOLUTION
    counts: np.ndarray | None = None

    def __post_init__(self):
        areas = np.array(self.areas, dtype=np.float64)
        if areas.shape != (NUM_CLASSES,):
            raise ValueError(f"need {NUM_CLASSES} class areas, got shape {areas.shape}")
        if np.any(areas < 0) or not np.all(np.isfinite(areas)):
            raise ValueError("areas must be finite and non-negative")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        areas.flags.writeable = False
        object.__setattr__(self, "areas", areas)

    @classmethod
    def from_counts(cls, counts, resolution: float = DEFAULT_RESOLUTION) -> AreaReport:
        counts = np.array(counts, dtype=np.int64)
        return cls(pixels_to_area(counts, resolution), resolution, counts)

    @property
    def total(self) -> float:
        return float(self.areas.sum())


def percent_change(before: float, after: float) -> float:
    """Relative change in percent; +inf when growing from zero, 0 when both are zero."""
    if before < 0 or after < 0:
        raise ValueError("areas must be non-negative")
    if before == 0:
        return math.inf if after > 0 else 0.0
    return (after - before) / before * 100.0


def built_up_index(areas, palette: Palette | None = None) -> float:
    """Share of total area held by built-up classes."""
    palette = palette or default_palette()
    if isinstance(areas, AreaReport):
        areas = areas.areas
    a = np.asarray(areas, dtype=np.float64)
    if a.shape != (NUM_CLASSES,):
        raise ValueError(f"need {NUM_CLASSES} class areas")
    if np.any(a < 0):
        raise ValueError("areas must be non-negative")
    total = a.sum()
    if total <= 0:
        raise ValueError("built-up index undefined: all class areas are zero")
    return float(a[palette.built_up_mask].sum() / total)


@dataclass(frozen=True)
class ChangeRow:
    name: str
    area_before: float
    area_after: float
    delta: float
    percent: float

    @classmethod
    def between(cls, name: str, before: float, after: float) -> ChangeRow:
        return cls(name, before, after, after - before, percent_change(before, after))


def change_table(before: AreaReport, after: AreaReport,
                 palette: Palette | None = None) -> list[ChangeRow]:
    if before.resolution != after.resolution:
        raise ValueError(
            f"resolution mismatch: {before.resolution} vs {after.resolution} m/px"
        )
    palette = palette or default_palette()
    return [
        ChangeRow.between(palette.name_of(k), float(before.areas[k]), float(after.areas[k]))
        for k in range(NUM_CLASSES)
    ]


def format_percent(p: float) -> str:
    if math.isinf(p):
        return "inf" if p > 0 else "-inf"
    return f"{p:.3f}"


def change_table_csv(rows: list[ChangeRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CHANGE_HEADER)
    for r in rows:
        w.writerow([r.name, f"{r.area_before:.3f}", f"{r.area_after:.3f}",
                    f"{r.delta:.3f}", format_percent(r.percent)])
    return buf.getvalue()


def difference_map(a: SegmentationMap, b: SegmentationMap,
                   palette: Palette | None = None) -> Raster:
    """Black where labels agree, b's class colour where they differ, magenta
    where either map is unclassified."""
    if a.labels.shape != b.labels.shape:
        raise ValueError(
            f"dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    palette = palette or default_palette()
    out = palette.color_table()[b.labels]
    out[a.labels == b.labels] = 0
    out[(a.labels == UNCLASSIFIED) | (b.labels == UNCLASSIFIED)] = DIFF_SENTINEL
    return Raster(out)
