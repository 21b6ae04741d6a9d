"""Sliding-window patch segmentation.

A square window is moved over the raster at a fixed stride, each patch is
classified, and the winning class is painted over the patch footprint.

Assembly does not work per pixel. The patch footprints cut each axis into
intervals, and every pixel in one product cell of those intervals is covered
by exactly the same set of patches. Overwrite and vote resolution therefore
only need to run on the (small) cell grid, which is then expanded to pixels.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .classifier import PatchSizeError, features_from_sums
from .raster import NUM_CLASSES, UNCLASSIFIED, Palette, Raster

log = logging.getLogger(__name__)

MODES = ("overwrite", "vote")

# fixed-point scale for vote accumulation; int64 sums are exact and order-free
VOTE_SCALE = 1 << 32

_ROW_CHUNK = 512


@dataclass(frozen=True)
class SegmenterConfig:
    patch_size: int = 256
    stride: int = 32
    mode: str = "overwrite"
    cover_edges: bool = False

    def __post_init__(self):
        if self.patch_size < 1:
            raise ValueError("patch_size must be >= 1")
        if not 1 <= self.stride <= self.patch_size:
            raise ValueError(f"stride must be in [1, patch_size], got {self.stride}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True, eq=False)
class SegmentationMap:
    """Per-pixel class labels, shape (height, width), uint8; 255 = unclassified."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2 or lab.dtype != np.uint8:
            raise ValueError("labels must be a 2-D uint8 array")
        bad = (lab >= NUM_CLASSES) & (lab != UNCLASSIFIED)
        if bad.any():
            y, x = np.argwhere(bad)[0]
            raise ValueError(f"invalid label {lab[y, x]} at ({x}, {y})")
        if lab.flags.writeable:
            lab = lab.view()
            lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    def __eq__(self, other):
        if not isinstance(other, SegmentationMap):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)


def enumerate_patches(width: int, height: int, config: SegmenterConfig) -> list[tuple[int, int]]:
    """Patch origins in loop order: x outer, y inner.

    With ``cover_edges`` the flush right/bottom origins (and the corner) that
    are not already on the grid are appended afterwards, also sorted x-major.
    """
    size, stride = config.patch_size, config.stride
    if size > width or size > height:
        raise ValueError(
            f"patch_size {size} larger than image {width}x{height}"
        )
    xs = range(0, width - size + 1, stride)
    ys = range(0, height - size + 1, stride)
    origins = [(x, y) for x in xs for y in ys]
    if config.cover_edges:
        fx, fy = width - size, height - size
        extra = {(fx, y) for y in ys} | {(x, fy) for x in xs} | {(fx, fy)}
        extra -= set(origins)
        origins.extend(sorted(extra))
    return origins


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def _chunks(n: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, n))
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _window_sums(pixels: np.ndarray, xs: np.ndarray, ys: np.ndarray, size: int, workers: int):
    """Exact channel sums and sums of squares for every (y in ys, x in xs) window.

    Returns two int64 arrays of shape (len(ys), len(xs), 3).
    """
    h = pixels.shape[0]
    row_s = np.empty((h, len(xs), 3), dtype=np.int64)
    row_ss = np.empty((h, len(xs), 3), dtype=np.int64)

    def horizontal(lo, hi):
        for a in range(lo, hi, _ROW_CHUNK):
            b = min(hi, a + _ROW_CHUNK)
            block = pixels[a:b].astype(np.int64)
            for out, vals in ((row_s, block), (row_ss, block * block)):
                cs = np.zeros((b - a, vals.shape[1] + 1, 3), dtype=np.int64)
                np.cumsum(vals, axis=1, out=cs[:, 1:])
                out[a:b] = cs[:, xs + size] - cs[:, xs]

    spans = _chunks(h, workers)
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(lambda s: horizontal(*s), spans))
    else:
        horizontal(0, h)

    def vertical(rows):
        cs = np.zeros((h + 1,) + rows.shape[1:], dtype=np.int64)
        np.cumsum(rows, axis=0, out=cs[1:])
        return cs[ys + size] - cs[ys]

    return vertical(row_s), vertical(row_ss)


def _check_distributions(dist: np.ndarray) -> np.ndarray:
    dist = np.asarray(dist, dtype=np.float64)
    if dist.shape[-1] != NUM_CLASSES or not np.all(np.isfinite(dist)):
        raise ValueError("classifier returned an invalid class distribution")
    return dist


def classify_patches(image: Raster, model, origins, size: int, workers: int = 1) -> np.ndarray:
    """Class distributions for every origin, shape (len(origins), 10), in origin order."""
    n = len(origins)
    if n == 0:
        return np.zeros((0, NUM_CLASSES))
    org = np.asarray(origins, dtype=np.intp)
    out = np.empty((n, NUM_CLASSES), dtype=np.float64)

    if hasattr(model, "classify_features"):
        xs, xi = np.unique(org[:, 0], return_inverse=True)
        ys, yi = np.unique(org[:, 1], return_inverse=True)
        s, ss = _window_sums(image.pixels, xs, ys, size, workers)
        feats = features_from_sums(s[yi, xi], ss[yi, xi], size * size)

        def run(span):
            a, b = span
            out[a:b] = _check_distributions(model.classify_features(feats[a:b]))
    else:
        px = image.pixels

        def run(span):
            a, b = span
            for i in range(a, b):
                x, y = origins[i]
                out[i] = _check_distributions(model.classify(Raster(px[y:y + size, x:x + size])))

    spans = _chunks(n, workers * 4 if workers > 1 else 1)
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, spans))
    else:
        for span in spans:
            run(span)
    return out


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Cells:
    x_edges: np.ndarray  # cell boundaries along x, starting at 0 and ending at width
    y_edges: np.ndarray
    x0: np.ndarray       # per patch: first/last+1 cell column and row
    x1: np.ndarray
    y0: np.ndarray
    y1: np.ndarray

    @classmethod
    def build(cls, width, height, origins, size):
        org = np.asarray(origins, dtype=np.int64).reshape(-1, 2)
        xe = np.unique(np.concatenate([[0, width], org[:, 0], org[:, 0] + size]))
        ye = np.unique(np.concatenate([[0, height], org[:, 1], org[:, 1] + size]))
        return cls(
            xe, ye,
            np.searchsorted(xe, org[:, 0]), np.searchsorted(xe, org[:, 0] + size),
            np.searchsorted(ye, org[:, 1]), np.searchsorted(ye, org[:, 1] + size),
        )

    @property
    def shape(self):
        return (len(self.y_edges) - 1, len(self.x_edges) - 1)

    def expand(self, cell_values: np.ndarray) -> np.ndarray:
        grown = np.repeat(cell_values, np.diff(self.y_edges), axis=0)
        return np.repeat(grown, np.diff(self.x_edges), axis=1)


@dataclass(frozen=True)
class VoteGrid:
    """Accumulated class votes, stored per cell of constant coverage.

    ``votes`` holds fixed-point sums (scale ``VOTE_SCALE``) with shape
    (cells_y, cells_x, 10); ``coverage`` counts covering patches per cell.
    """

    x_edges: np.ndarray
    y_edges: np.ndarray
    votes: np.ndarray
    coverage: np.ndarray

    def lanes_at(self, x: int, y: int) -> np.ndarray:
        i = np.searchsorted(self.x_edges, x, side="right") - 1
        j = np.searchsorted(self.y_edges, y, side="right") - 1
        return self.votes[j, i] / VOTE_SCALE

    def coverage_at(self, x: int, y: int) -> int:
        i = np.searchsorted(self.x_edges, x, side="right") - 1
        j = np.searchsorted(self.y_edges, y, side="right") - 1
        return int(self.coverage[j, i])

    def labels(self) -> np.ndarray:
        """Per-cell argmax (lowest index on ties); uncovered cells are 255."""
        lab = np.argmax(self.votes, axis=-1).astype(np.uint8)
        lab[self.coverage == 0] = UNCLASSIFIED
        return lab


def accumulate_votes(width: int, height: int, origins, distributions, size: int) -> VoteGrid:
    """Sum each patch's distribution over its footprint.

    The result does not depend on the order of ``origins``/``distributions``.
    """
    cells = _Cells.build(width, height, origins, size)
    ny, nx = cells.shape
    q = np.rint(np.asarray(distributions, dtype=np.float64) * VOTE_SCALE).astype(np.int64)
    acc = np.zeros((ny + 1, nx + 1, NUM_CLASSES), dtype=np.int64)
    cov = np.zeros((ny + 1, nx + 1), dtype=np.int64)
    for arr, val in ((acc, q), (cov, 1)):
        np.add.at(arr, (cells.y0, cells.x0), val)
        np.add.at(arr, (cells.y0, cells.x1), -val)
        np.add.at(arr, (cells.y1, cells.x0), -val)
        np.add.at(arr, (cells.y1, cells.x1), val)
        np.cumsum(arr, axis=0, out=arr)
        np.cumsum(arr, axis=1, out=arr)
    return VoteGrid(cells.x_edges, cells.y_edges, acc[:ny, :nx], cov[:ny, :nx])


def _overwrite(width, height, origins, labels, size) -> np.ndarray:
    cells = _Cells.build(width, height, origins, size)
    grid = np.full(cells.shape, UNCLASSIFIED, dtype=np.uint8)
    # loop order decides overlaps: the last covering patch wins
    for k in range(len(labels)):
        grid[cells.y0[k]:cells.y1[k], cells.x0[k]:cells.x1[k]] = labels[k]
    return cells.expand(grid)


def segment(image: Raster, model, palette: Palette | None = None,
            config: SegmenterConfig | None = None, workers: int = 1) -> SegmentationMap:
    """Run patch-based prediction over ``image``.

    Args:
        image: Source raster, at least ``patch_size`` on each side.
        model: Classifier whose ``patch_size`` equals ``config.patch_size``.
        palette: Accepted for interface symmetry; labels are palette indices.
        config: Window geometry and overlap mode.
        workers: Threads used to classify patches. The output is identical
            for any value.
    """
    config = config or SegmenterConfig()
    size = config.patch_size
    if model.patch_size != size:
        raise PatchSizeError(
            f"classifier patch size {model.patch_size} != configured patch_size {size}"
        )
    origins = enumerate_patches(image.width, image.height, config)
    dist = classify_patches(image, model, origins, size, workers)
    log.debug("classified %d patches", len(origins))

    if config.mode == "overwrite":
        labels = np.argmax(dist, axis=1)
        out = _overwrite(image.width, image.height, origins, labels, size)
    else:
        grid = accumulate_votes(image.width, image.height, origins, dist, size)
        cells = _Cells.build(image.width, image.height, origins, size)
        out = cells.expand(grid.labels())
    return SegmentationMap(np.ascontiguousarray(out))


def render(seg: SegmentationMap, palette: Palette) -> Raster:
    """Colour each pixel by its class; unclassified pixels get the palette's unclassified colour."""
    return Raster(palette.color_table()[seg.labels])


def labels_from_colors(raster: Raster, palette: Palette, extra_unclassified=()) -> SegmentationMap:
    """Invert ``render``. Unknown colours raise ValueError naming the first bad pixel."""
    px = raster.pixels.astype(np.uint32)
    key = (px[..., 0] << 16) | (px[..., 1] << 8) | px[..., 2]
    lut_keys = [((r << 16) | (g << 8) | b) for r, g, b in (c.color for c in palette.classes)]
    labels = np.full(key.shape, UNCLASSIFIED, dtype=np.uint8)
    known = np.zeros(key.shape, dtype=bool)
    for k, ck in enumerate(lut_keys):
        hit = key == ck
        labels[hit] = k
        known |= hit
    for r, g, b in (palette.unclassified_color,) + tuple(extra_unclassified):
        known |= key == ((r << 16) | (g << 8) | b)
    if not known.all():
        y, x = np.argwhere(~known)[0]
        raise ValueError(
            f"unknown color {tuple(int(v) for v in raster.pixels[y, x])} at pixel ({x}, {y})"
        )
    return SegmentationMap(labels)


@dataclass(frozen=True)
class PixelCounts:
    classes: np.ndarray  # 10 int64 counts in palette order
    unclassified: int

    @property
    def total(self) -> int:
        return int(self.classes.sum()) + self.unclassified


def class_pixel_counts(seg: SegmentationMap) -> PixelCounts:
    hist = np.bincount(seg.labels.ravel(), minlength=256).astype(np.int64)
    return PixelCounts(hist[:NUM_CLASSES].copy(), int(hist[UNCLASSIFIED]))
