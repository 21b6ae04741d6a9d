import zlib

import numpy as np
import pytest

from landpatch.classifier import LinearSoftmaxClassifier, LinearSoftmaxModel
from landpatch.raster import NUM_CLASSES, UNCLASSIFIED, Raster, default_palette


class HashClassifier:
    """Deterministic classifier without a feature fast path.

    Logits come from a seeded generator keyed on the patch bytes, so the
    segmenter has to go through ``classify`` patch by patch.
    """

    def __init__(self, patch_size, salt=0):
        self.patch_size = patch_size
        self.salt = salt

    def classify(self, patch):
        key = zlib.crc32(patch.pixels.tobytes()) ^ self.salt
        logits = np.random.default_rng(key).normal(size=NUM_CLASSES)
        e = np.exp(logits - logits.max())
        return e / e.sum()


def random_linear(rng, patch_size):
    model = LinearSoftmaxModel(
        rng.normal(scale=3.0, size=(NUM_CLASSES, 6)),
        rng.normal(size=NUM_CLASSES),
        [255.0, 255.0, 255.0, 127.5, 127.5, 127.5],
    )
    return LinearSoftmaxClassifier(model, patch_size)


def naive_sliding_window(image, model, size, stride):
    """Sequential double loop, x outer and y inner, each patch repainting its footprint."""
    h, w = image.height, image.width
    out = np.full((h, w), UNCLASSIFIED, dtype=np.uint8)
    for x in range(0, w - size + 1, stride):
        for y in range(0, h - size + 1, stride):
            patch = Raster(image.pixels[y:y + size, x:x + size].copy())
            p = model.classify(patch)
            best = 0
            for k in range(1, NUM_CLASSES):
                if p[k] > p[best]:
                    best = k
            out[y:y + size, x:x + size] = best
    return out


def random_image(rng, w, h, levels=256):
    return Raster(rng.integers(0, levels, size=(h, w, 3), dtype=np.uint8))


@pytest.fixture(scope="session")
def palette():
    return default_palette()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)



def pytest_terminal_summary(terminalreporter):
    # acceptance tests attach one "acceptance" line each via record_property
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            lines += [v for k, v in getattr(rep, "user_properties", ()) if k == "acceptance"]
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
