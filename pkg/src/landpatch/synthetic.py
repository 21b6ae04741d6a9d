"""Seeded synthetic scenes with a known land-use layout.

A scene is a grid of square blocks, each filled with one class colour plus
small integer noise. Over the quarters, a fixed sequence of open-space
blocks turns commercial and a sequence of meadow blocks turns into road
junctions, one of each per quarter, so every class area follows an exact
linear trend.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import CentroidClassifier, save_model
from .forecast import Quarter
from .raster import NUM_CLASSES, Palette, Raster, default_palette, save_raster

COMMERCIAL, DENSE, ROAD, MEADOW, OPEN = 0, 1, 6, 7, 9

# initial block counts on an 8x8 grid
_BASE = {COMMERCIAL: 4, DENSE: 4, ROAD: 2, MEADOW: 24, OPEN: 30}


@dataclass(frozen=True)
class Scene:
    block: int
    grid: int
    layouts: list[np.ndarray]        # per quarter, (grid, grid) block labels
    quarters: list[Quarter]
    seed: int

    @property
    def size(self) -> int:
        return self.block * self.grid

    def labels(self, t: int) -> np.ndarray:
        """Pixel-level ground truth for quarter index ``t``."""
        return np.kron(self.layouts[t], np.ones((self.block, self.block), dtype=np.uint8))

    def counts(self, t: int) -> np.ndarray:
        return np.bincount(self.layouts[t].ravel(), minlength=NUM_CLASSES) * self.block ** 2

    def render(self, t: int, palette: Palette, noise: int = 8) -> Raster:
        rng = np.random.default_rng([self.seed, t])
        colors = palette.color_table()[self.labels(t)].astype(np.int16)
        if noise:
            colors += rng.integers(-noise, noise + 1, size=colors.shape, dtype=np.int16)
        return Raster(np.clip(colors, 0, 255).astype(np.uint8))


def make_scene(quarters: int = 12, start: Quarter = Quarter(2016, 1), block: int = 64,
               grid: int = 8, seed: int = 0) -> Scene:
    if quarters > min(_BASE[OPEN], _BASE[MEADOW]):
        raise ValueError("too many quarters for the base layout")
    rng = np.random.default_rng(seed)
    cells = np.concatenate([np.full(n, k, dtype=np.uint8) for k, n in _BASE.items()])
    rng.shuffle(cells)
    base = cells.reshape(grid, grid)
    open_blocks = rng.permutation(np.flatnonzero(base.ravel() == OPEN))
    meadow_blocks = rng.permutation(np.flatnonzero(base.ravel() == MEADOW))
    layouts = []
    for t in range(quarters):
        lay = base.copy().ravel()
        lay[open_blocks[:t]] = COMMERCIAL
        lay[meadow_blocks[:t]] = ROAD
        layouts.append(lay.reshape(grid, grid))
    return Scene(block, grid, layouts, [start + t for t in range(quarters)], seed)


def trend_counts(scene: Scene, t: int) -> np.ndarray:
    """Extrapolated block counts (in pixels) for any quarter index, including future ones."""
    c = np.array([_BASE.get(k, 0) for k in range(NUM_CLASSES)], dtype=np.int64)
    c[COMMERCIAL] += t
    c[OPEN] -= t
    c[ROAD] += t
    c[MEADOW] -= t
    return c * scene.block ** 2


def write_manifest(scene: Scene, out_dir, palette: Palette | None = None,
                   exclude: tuple[int, ...] = (), stride: int | None = None,
                   mode: str = "overwrite") -> Path:
    """Write images, a centroid model file and a manifest; return the manifest path.

    Quarters listed in ``exclude`` get a white (cloud) image and are marked excluded.
    """
    palette = palette or default_palette()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_model(CentroidClassifier.from_palette(palette, scene.block), out / "model.txt")
    lines = [
        "resolution 0.65",
        "model model.txt",
        f"patch_size {scene.block}",
        f"stride {stride or scene.block}",
        f"mode {mode}",
        "cover_edges 0",
    ]
    for t, q in enumerate(scene.quarters):
        name = f"scene_{q}.png"
        if t in exclude:
            save_raster(Raster.filled(scene.size, scene.size, (250, 250, 250)), out / name)
            lines.append(f"{q},{name},excluded,cloud cover")
        else:
            save_raster(scene.render(t, palette), out / name)
            lines.append(f"{q},{name}")
    path = out / "manifest.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
