import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from landpatch.classifier import CentroidClassifier, ConstantClassifier, PatchSizeError
from landpatch.raster import UNCLASSIFIED, Raster
from landpatch.segmenter import (SegmentationMap, SegmenterConfig, accumulate_votes,
                                 class_pixel_counts, classify_patches, enumerate_patches,
                                 labels_from_colors, render, segment)

from conftest import HashClassifier, naive_sliding_window, random_image, random_linear


def cfg(size, stride, mode="overwrite", cover=False):
    return SegmenterConfig(patch_size=size, stride=stride, mode=mode, cover_edges=cover)


class TopRowRed:
    """Class 1 if the patch's first row is pure red, else class 2."""

    patch_size = 256

    def classify(self, patch):
        p = np.zeros(10)
        p[1 if np.all(patch.pixels[0] == (255, 0, 0)) else 2] = 1.0
        return p


def quadrants(palette, classes=(0, 3, 6, 9), half=256):
    px = np.zeros((2 * half, 2 * half, 3), dtype=np.uint8)
    for k, (qy, qx) in zip(classes, [(0, 0), (0, 1), (1, 0), (1, 1)]):
        px[qy * half:(qy + 1) * half, qx * half:(qx + 1) * half] = palette.color_of(k)
    return Raster(px)


def test_enumerate_single():
    assert enumerate_patches(256, 256, cfg(256, 32)) == [(0, 0)]


def test_enumerate_loop_order():
    assert enumerate_patches(512, 512, cfg(256, 256)) == [(0, 0), (0, 256), (256, 0), (256, 256)]


def test_enumerate_full_scene():
    assert len(enumerate_patches(3200, 4800, cfg(256, 32))) == 93 * 143 == 13_299


def test_enumerate_cover_edges():
    # grid xs = ys = {0, 32}; flush origin 44
    got = enumerate_patches(300, 300, cfg(256, 32, cover=True))
    assert got == [(0, 0), (0, 32), (32, 0), (32, 32),
                   (0, 44), (32, 44), (44, 0), (44, 32), (44, 44)]


def test_enumerate_cover_edges_no_duplicates():
    got = enumerate_patches(512, 512, cfg(256, 128, cover=True))
    assert got == enumerate_patches(512, 512, cfg(256, 128))


def test_enumerate_patch_too_large():
    with pytest.raises(ValueError, match="larger than image"):
        enumerate_patches(100, 300, cfg(128, 32))


def test_config_invariants():
    with pytest.raises(ValueError):
        SegmenterConfig(patch_size=16, stride=17)
    with pytest.raises(ValueError):
        SegmenterConfig(stride=0)
    with pytest.raises(ValueError):
        SegmenterConfig(mode="blend")


def test_constant_segment(palette):
    seg = segment(Raster.filled(256, 256, (9, 9, 9)), ConstantClassifier(2), palette, cfg(256, 32))
    assert np.all(seg.labels == 2)


def test_four_quadrants(palette):
    m = CentroidClassifier.from_palette(palette)
    seg = segment(quadrants(palette), m, palette, cfg(256, 256))
    assert np.all(seg.labels[:256, :256] == 0)
    assert np.all(seg.labels[:256, 256:] == 3)
    assert np.all(seg.labels[256:, :256] == 6)
    assert np.all(seg.labels[256:, 256:] == 9)
    c = class_pixel_counts(seg)
    assert [c.classes[k] for k in (0, 3, 6, 9)] == [65536] * 4
    assert c.unclassified == 0


def test_overwrite_later_patch_wins(palette):
    # 256 wide, 320 tall, stride 64: patches (0,0) then (0,64)
    px = np.zeros((320, 256, 3), dtype=np.uint8)
    px[0] = (255, 0, 0)
    seg = segment(Raster(px), TopRowRed(), palette, cfg(256, 64))
    assert np.all(seg.labels[:64] == 1)
    assert np.all(seg.labels[64:] == 2)


def test_patch_size_mismatch(palette):
    with pytest.raises(PatchSizeError):
        segment(Raster.filled(256, 256, (0, 0, 0)), ConstantClassifier(0, 128), palette, cfg(256, 32))


@pytest.mark.parametrize("mode", ["overwrite", "vote"])
def test_uncovered_margin(palette, mode):
    seg = segment(Raster.filled(70, 45, (0, 0, 0)), ConstantClassifier(4, 16), palette,
                  cfg(16, 12, mode))
    # last origins: x=48, y=24 -> covered up to x<64, y<40
    assert np.all(seg.labels[:40, :64] == 4)
    assert np.all(seg.labels[40:, :] == UNCLASSIFIED)
    assert np.all(seg.labels[:, 64:] == UNCLASSIFIED)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), w=st.integers(4, 48), h=st.integers(4, 48),
       size=st.integers(1, 16), data=st.data())
def test_matches_naive_loop(palette, seed, w, h, size, data):
    size = min(size, w, h)
    stride = data.draw(st.integers(1, size))
    rng = np.random.default_rng(seed)
    image = random_image(rng, w, h, levels=4)
    model = data.draw(st.sampled_from(["hash", "linear"]))
    model = HashClassifier(size, seed) if model == "hash" else random_linear(rng, size)
    seg = segment(image, model, palette, cfg(size, stride))
    assert np.array_equal(seg.labels, naive_sliding_window(image, model, size, stride))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), w=st.integers(4, 40), h=st.integers(4, 40),
       size=st.integers(1, 12), data=st.data())
def test_coverage_law(palette, seed, w, h, size, data):
    size = min(size, w, h)
    stride = data.draw(st.integers(1, size))
    model = ConstantClassifier(1, size)
    image = Raster.filled(w, h, (0, 0, 0))
    covered = segment(image, model, palette, cfg(size, stride, cover=True))
    assert not np.any(covered.labels == UNCLASSIFIED)
    seg = segment(image, model, palette, cfg(size, stride))
    last_x = (w - size) // stride * stride
    last_y = (h - size) // stride * stride
    yy, xx = np.mgrid[:h, :w]
    expect = (xx >= last_x + size) | (yy >= last_y + size)
    assert np.array_equal(seg.labels == UNCLASSIFIED, expect)


@pytest.mark.parametrize("mode", ["overwrite", "vote"])
@pytest.mark.parametrize("kind", ["hash", "linear"])
def test_worker_count_does_not_matter(palette, rng, mode, kind):
    image = random_image(rng, 61, 47, levels=8)
    model = HashClassifier(9, 3) if kind == "hash" else random_linear(rng, 9)
    base = segment(image, model, palette, cfg(9, 2, mode), workers=1)
    for workers in (2, 3, 7):
        assert segment(image, model, palette, cfg(9, 2, mode), workers=workers) == base


def test_vote_order_invariance(rng):
    image = random_image(rng, 40, 33, levels=8)
    model = random_linear(rng, 8)
    origins = enumerate_patches(40, 33, cfg(8, 3, "vote", cover=True))
    dist = classify_patches(image, model, origins, 8)
    ref = accumulate_votes(40, 33, origins, dist, 8)
    for _ in range(5):
        perm = rng.permutation(len(origins))
        g = accumulate_votes(40, 33, [origins[i] for i in perm], dist[perm], 8)
        assert np.array_equal(g.votes, ref.votes)
        assert np.array_equal(g.coverage, ref.coverage)


def test_vote_lane_sum_equals_coverage(rng):
    image = random_image(rng, 30, 30)
    model = random_linear(rng, 7)
    origins = enumerate_patches(30, 30, cfg(7, 3))
    grid = accumulate_votes(30, 30, origins, classify_patches(image, model, origins, 7), 7)
    for x in range(30):
        for y in range(30):
            n = sum(ox <= x < ox + 7 and oy <= y < oy + 7 for ox, oy in origins)
            assert grid.coverage_at(x, y) == n
            assert abs(grid.lanes_at(x, y).sum() - n) <= 1e-6


def test_vote_matches_bruteforce_argmax(rng):
    image = random_image(rng, 24, 20, levels=8)
    model = random_linear(rng, 6)
    c = cfg(6, 4, "vote")
    seg = segment(image, model, None, c)
    origins = enumerate_patches(24, 20, c)
    dist = classify_patches(image, model, origins, 6)
    acc = np.zeros((20, 24, 10))
    cov = np.zeros((20, 24), dtype=int)
    for (x, y), p in zip(origins, dist):
        acc[y:y + 6, x:x + 6] += p
        cov[y:y + 6, x:x + 6] += 1
    expect = np.where(cov > 0, np.argmax(acc, axis=-1), UNCLASSIFIED)
    assert np.array_equal(seg.labels, expect)


def test_stride_equals_patch_modes_agree(palette, rng):
    image = random_image(rng, 64, 48, levels=16)
    model = random_linear(rng, 16)
    a = segment(image, model, palette, cfg(16, 16, "overwrite"))
    b = segment(image, model, palette, cfg(16, 16, "vote"))
    assert a == b


def test_render_and_invert(palette, rng):
    lab = rng.integers(0, 10, size=(13, 17)).astype(np.uint8)
    lab[0, :3] = UNCLASSIFIED
    seg = SegmentationMap(lab)
    r = render(seg, palette)
    assert tuple(r.pixels[0, 0]) == (0, 0, 0)
    assert labels_from_colors(r, palette) == seg


def test_render_uniform(palette):
    for k in range(10):
        r = render(SegmentationMap(np.full((3, 4), k, dtype=np.uint8)), palette)
        assert r == Raster.filled(4, 3, palette.color_of(k))
    r = render(SegmentationMap(np.full((3, 4), UNCLASSIFIED, dtype=np.uint8)), palette)
    assert r == Raster.filled(4, 3, (0, 0, 0))


def test_invert_unknown_color(palette):
    px = np.zeros((3, 3, 3), dtype=np.uint8)
    px[2, 1] = (1, 2, 3)
    with pytest.raises(ValueError, match=r"\(1, 2\)"):
        labels_from_colors(Raster(px), palette)


def test_counts():
    seg = SegmentationMap(np.zeros((256, 256), dtype=np.uint8))
    c = class_pixel_counts(seg)
    assert c.classes[0] == 65536 and c.classes[1:].sum() == 0
    c = class_pixel_counts(SegmentationMap(np.full((5, 7), UNCLASSIFIED, dtype=np.uint8)))
    assert c.unclassified == 35 and c.total == 35


def test_segment_does_not_mutate_input(palette, rng):
    image = random_image(rng, 20, 20)
    before = image.pixels.copy()
    segment(image, random_linear(rng, 5), palette, cfg(5, 2, "vote"))
    assert np.array_equal(image.pixels, before)
