"""Raster container, lossless image I/O and the land-use palette.

Rasters are held as ``(height, width, 3)`` uint8 arrays. Only PNG and binary
PPM (P6) are supported so that every map written by the pipeline can be read
back bit-exactly.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

# Refuse anything larger than this many pixels (well above 3200x4800).
MAX_PIXELS = 1 << 28

UNCLASSIFIED = 255
DIFF_SENTINEL = (255, 0, 255)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class RasterError(ValueError):
    """Raised for unreadable, malformed or unsupported image files."""


@dataclass(frozen=True, eq=False)
class Raster:
    """An 8-bit RGB image.

    Attributes:
        pixels: Array of shape (height, width, 3), dtype uint8. Made read-only
            on construction.
    """

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = self.pixels
        if not isinstance(px, np.ndarray):
            raise TypeError("pixels must be a numpy array")
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected shape (H, W, 3), got {px.shape}")
        if px.dtype != np.uint8:
            raise ValueError(f"expected uint8 samples, got {px.dtype}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("raster must be at least 1x1")
        if px.flags.writeable:
            px = px.view()
            px.flags.writeable = False
            object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def data(self) -> bytes:
        """Row-major interleaved samples, length width*height*3."""
        return self.pixels.tobytes()

    @classmethod
    def from_bytes(cls, width: int, height: int, data: bytes) -> Raster:
        if len(data) != width * height * 3:
            raise ValueError(
                f"data length {len(data)} != {width}*{height}*3"
            )
        arr = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
        return cls(arr)

    @classmethod
    def filled(cls, width: int, height: int, color) -> Raster:
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[...] = np.asarray(color, dtype=np.uint8)
        return cls(arr)

    def crop(self, x: int, y: int, size_x: int, size_y: int) -> Raster:
        return Raster(self.pixels[y:y + size_y, x:x + size_x])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Raster):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __repr__(self) -> str:
        return f"Raster({self.width}x{self.height})"


# ---------------------------------------------------------------------------
# Palette
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LandUseClass:
    index: int
    name: str
    color: tuple[int, int, int]
    built_up: bool


_DEFAULT_CLASSES = (
    ("commercial_area", (230, 25, 75), True),
    ("dense_residential", (245, 130, 48), True),
    ("medium_residential", (255, 225, 25), True),
    ("sparse_residential", (210, 245, 60), True),
    ("parking_lot", (128, 128, 128), True),
    ("freeway", (0, 0, 128), True),
    ("road_junction", (70, 240, 240), True),
    ("meadow", (60, 180, 75), False),
    ("chaparral", (170, 110, 40), False),
    ("open_space", (255, 250, 200), False),
)

NUM_CLASSES = len(_DEFAULT_CLASSES)


@dataclass(frozen=True)
class Palette:
    """The ten land-use classes plus the colour used for unclassified pixels."""

    classes: tuple[LandUseClass, ...]
    unclassified_color: tuple[int, int, int] = (0, 0, 0)
    _by_name: dict = field(init=False, repr=False, compare=False)
    _by_color: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        classes = tuple(self.classes)
        object.__setattr__(self, "classes", classes)
        if len(classes) != NUM_CLASSES:
            raise ValueError(f"palette needs {NUM_CLASSES} classes, got {len(classes)}")
        if [c.index for c in classes] != list(range(NUM_CLASSES)):
            raise ValueError("class indices must be 0..9 in order")
        names = {c.name for c in classes}
        colors = {tuple(c.color) for c in classes}
        if len(names) != NUM_CLASSES:
            raise ValueError("class names must be distinct")
        if len(colors) != NUM_CLASSES:
            raise ValueError("class colors must be distinct")
        if tuple(self.unclassified_color) in colors:
            raise ValueError("unclassified color collides with a class color")
        object.__setattr__(self, "_by_name", {c.name: c.index for c in classes})
        object.__setattr__(self, "_by_color", {tuple(c.color): c.index for c in classes})

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.classes]

    @property
    def built_up_mask(self) -> np.ndarray:
        return np.array([c.built_up for c in self.classes], dtype=bool)

    def color_of(self, index: int) -> tuple[int, int, int]:
        return self.classes[index].color

    def name_of(self, index: int) -> str:
        return self.classes[index].name

    def index_of(self, key) -> int:
        """Look up a class index by name or by RGB colour."""
        if isinstance(key, str):
            try:
                return self._by_name[key]
            except KeyError:
                raise KeyError(f"unknown class name {key!r}") from None
        try:
            return self._by_color[tuple(int(v) for v in key)]
        except KeyError:
            raise KeyError(f"color {tuple(key)} is not in the palette") from None

    def color_table(self) -> np.ndarray:
        """(256, 3) uint8 lookup from label byte to colour."""
        table = np.empty((256, 3), dtype=np.uint8)
        table[:] = self.unclassified_color
        for c in self.classes:
            table[c.index] = c.color
        return table


def default_palette() -> Palette:
    return Palette(tuple(
        LandUseClass(i, name, color, built_up)
        for i, (name, color, built_up) in enumerate(_DEFAULT_CLASSES)
    ))


def load_palette(path) -> Palette:
    """Read a palette config: ``<index>,<name>,<r>,<g>,<b>,<built_up:0|1>`` per line."""
    classes = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 6 or parts[5] not in ("0", "1"):
            raise ValueError(f"{path}:{lineno}: malformed palette line {raw!r}")
        try:
            index, r, g, b = int(parts[0]), int(parts[2]), int(parts[3]), int(parts[4])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed palette line {raw!r}") from None
        if not all(0 <= v <= 255 for v in (r, g, b)):
            raise ValueError(f"{path}:{lineno}: color component out of range")
        classes.append(LandUseClass(index, parts[1], (r, g, b), parts[5] == "1"))
    classes.sort(key=lambda c: c.index)
    return Palette(tuple(classes))


def save_palette(palette: Palette, path) -> None:
    lines = ["# index,name,r,g,b,built_up"]
    for c in palette.classes:
        lines.append(f"{c.index},{c.name},{c.color[0]},{c.color[1]},{c.color[2]},{int(c.built_up)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Image I/O
# ---------------------------------------------------------------------------

_PNM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _read_pnm_header(buf: bytes, magic: bytes, path) -> tuple[int, int, int]:
    if buf[:2] != magic:
        raise RasterError(f"{path}: not a {magic.decode()} file")
    pos = 2
    values = []
    for _ in range(3):
        m = _PNM_TOKEN.match(buf, pos)
        if m is None:
            raise RasterError(f"{path}: truncated header")
        try:
            values.append(int(m.group(1)))
        except ValueError:
            raise RasterError(f"{path}: malformed header") from None
        pos = m.end()
    # exactly one whitespace byte separates the header from the samples
    if pos >= len(buf) or buf[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise RasterError(f"{path}: malformed header")
    width, height, maxval = values
    if width < 1 or height < 1:
        raise RasterError(f"{path}: invalid dimensions {width}x{height}")
    if width * height > MAX_PIXELS:
        raise RasterError(f"{path}: dimensions {width}x{height} overflow the pixel limit")
    if maxval != 255:
        raise RasterError(f"{path}: unsupported maxval {maxval} (need 255)")
    return width, height, pos + 1


def _load_ppm(buf: bytes, path) -> Raster:
    width, height, offset = _read_pnm_header(buf, b"P6", path)
    need = width * height * 3
    body = buf[offset:offset + need]
    if len(body) != need:
        raise RasterError(f"{path}: truncated pixel data")
    return Raster(np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3).copy())


def _check_png_header(buf: bytes, path) -> None:
    if len(buf) < 33 or buf[12:16] != b"IHDR":
        raise RasterError(f"{path}: truncated PNG header")
    width, height, depth, ctype = struct.unpack(">IIBB", buf[16:26])
    if width < 1 or height < 1 or width * height > MAX_PIXELS:
        raise RasterError(f"{path}: dimensions {width}x{height} overflow the pixel limit")
    if depth != 8:
        raise RasterError(f"{path}: unsupported bit depth {depth}")
    if ctype not in (2, 6):
        raise RasterError(f"{path}: unsupported color model (PNG color type {ctype})")


def load_raster(path) -> Raster:
    """Load an 8-bit RGB PNG or a P6 PPM with exact pixel values.

    An alpha channel, if present, is dropped.
    """
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"{path}: cannot read ({exc.strerror or exc})") from exc
    if buf[:2] == b"P6":
        return _load_ppm(buf, path)
    if buf[:8] != PNG_SIGNATURE:
        raise RasterError(f"{path}: unsupported image format (need PNG or P6 PPM)")
    _check_png_header(buf, path)
    try:
        with Image.open(path) as im:
            im.load()
            arr = np.asarray(im)
    except (OSError, SyntaxError) as exc:
        raise RasterError(f"{path}: corrupt PNG ({exc})") from exc
    if arr.ndim != 3 or arr.shape[2] not in (3, 4):
        raise RasterError(f"{path}: unexpected PNG layout {arr.shape}")
    return Raster(np.ascontiguousarray(arr[:, :, :3], dtype=np.uint8))


def save_raster(raster: Raster, path) -> None:
    """Write ``raster`` losslessly; ``.ppm`` selects P6, anything else PNG."""
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        header = f"P6\n{raster.width} {raster.height}\n255\n".encode("ascii")
        path.write_bytes(header + raster.data)
    else:
        Image.fromarray(np.ascontiguousarray(raster.pixels)).save(path, format="PNG")


def save_labels_pgm(labels: np.ndarray, path) -> None:
    """Write a 2-D uint8 label grid as binary PGM (P5)."""
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    h, w = labels.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + labels.tobytes())


def load_labels_pgm(path) -> np.ndarray:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"{path}: cannot read ({exc.strerror or exc})") from exc
    width, height, offset = _read_pnm_header(buf, b"P5", path)
    body = buf[offset:offset + width * height]
    if len(body) != width * height:
        raise RasterError(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width).copy()
