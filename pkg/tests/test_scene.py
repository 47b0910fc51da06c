import numpy as np
import pytest

from spatialvqa.scene import (COLORS, RGB, SHAPES, Entity, PlacementError, Scene, SceneConfig, bounding_box,
                              coordinate_map, entity_mask, inside_canvas, local_contains, overlaps, render,
                              sample_scene, save_png, visible_mask)


def test_sample_is_deterministic():
    for seed in (0, 1, 12345):
        a = sample_scene(seed)
        b = sample_scene(seed)
        assert a == b
        assert np.array_equal(render(a), render(b))


def test_seed_zero_invariants():
    scene = sample_scene(0)
    assert 4 <= len(scene.entities) <= 10
    assert all(inside_canvas(e) for e in scene.entities)
    zs = [e.z for e in scene.entities]
    assert len(set(zs)) == len(zs)


@pytest.mark.parametrize("seed", range(40))
def test_scene_invariants(seed):
    config = SceneConfig(allow_overlap=seed % 2 == 0)
    scene = sample_scene(seed, config)
    image = render(scene)
    for e in scene.entities:
        assert config.min_size <= e.size[0] <= config.max_size
        assert config.min_size <= e.size[1] <= config.max_size
        assert 0 <= e.rotation < 1
        if e.shape in ("square", "circle"):
            assert e.rotation == 0
        x0, y0, x1, y1 = bounding_box(e)
        assert 0 <= x0 and x1 <= 1 and 0 <= y0 and y1 <= 1
        # every entity stays visible, and hidden area respects the threshold
        full = entity_mask(e, scene.canvas).sum()
        visible = visible_mask(scene, e).sum()
        assert visible >= 1
        assert full - visible <= config.overlap_threshold * full
    pairs = [(a, b) for i, a in enumerate(scene.entities) for b in scene.entities[i + 1:]]
    if not config.allow_overlap:
        assert not any(overlaps(a, b, scene.canvas) for a, b in pairs)
    # background exactly black: any pixel outside every mask
    covered = np.zeros((scene.canvas, scene.canvas), dtype=bool)
    for e in scene.entities:
        covered |= entity_mask(e, scene.canvas)
    assert not image[~covered].any()


def test_count_distribution_is_uniform():
    # seven possible counts, so each is expected 1/7 of the time
    config = SceneConfig(canvas=16, min_size=0.1, max_size=0.12)
    counts = np.array([len(sample_scene(seed, config).entities) for seed in range(10_000)])
    for k in range(4, 11):
        assert abs(np.mean(counts == k) - 1 / 7) < 0.02


def test_empty_scene_is_black():
    assert not render(Scene((), 64)).any()


def test_white_square_center_and_corner():
    # a white entity is not in the palette, so check membership through the mask
    e = Entity("square", "red", (0.5, 0.5), (0.5, 0.5))
    mask = entity_mask(e, 64)
    assert mask[32, 32] and mask[31, 31]
    assert not mask[1, 1]
    image = render(Scene((e,), 64))
    assert tuple(image[32, 32]) == RGB["red"]
    assert tuple(image[1, 1]) == (0, 0, 0)


def test_painter_order():
    red = Entity("circle", "red", (0.45, 0.5), (0.3, 0.3), 0.0, 0)
    blue = Entity("square", "blue", (0.55, 0.5), (0.3, 0.3), 0.0, 1)
    for order in ((red, blue), (blue, red)):
        image = render(Scene(order, 64))
        both = entity_mask(red, 64) & entity_mask(blue, 64)
        assert both.any()
        assert (image[both] == RGB["blue"]).all()


def test_centroid_matches_center():
    rng = np.random.default_rng(4)
    for shape in SHAPES:
        for _ in range(5):
            e = Entity(shape, "green", (float(rng.uniform(0.3, 0.7)), float(rng.uniform(0.3, 0.7))),
                       (float(rng.uniform(0.1, 0.25)), float(rng.uniform(0.1, 0.25))), float(rng.uniform()))
            rows, cols = np.nonzero(entity_mask(e, 64))
            assert abs(cols.mean() + 0.5 - e.center[0] * 64) <= 1.5, shape
            assert abs(rows.mean() + 0.5 - e.center[1] * 64) <= 1.5, shape


def test_local_shape_membership():
    # local frames are in half-extent units: the circle has radius 1
    u = np.array([0.0, 0.9, 0.8, 1.1])
    v = np.array([0.0, 0.0, 0.8, 0.0])
    assert local_contains("circle", u, v).tolist() == [True, True, False, False]
    assert local_contains("square", u, v).tolist() == [True, True, True, False]
    # the cross is empty near its corners
    assert not local_contains("cross", np.array([0.9]), np.array([0.9]))[0]


def test_coordinate_map():
    grid = coordinate_map(8, 8)
    assert grid.shape == (8, 8, 2)
    assert tuple(grid[0, 0]) == (-1, -1) and tuple(grid[7, 7]) == (1, 1)
    assert np.allclose(grid[::-1, ::-1], -grid)
    assert tuple(coordinate_map(3, 3)[1, 1]) == (0, 0)
    assert tuple(coordinate_map(1, 1)[0, 0]) == (0, 0)
    for h, w in ((1, 5), (4, 7), (8, 8), (13, 2)):
        g = coordinate_map(h, w)
        assert g.min() >= -1 and g.max() <= 1
        assert np.allclose(g.mean(axis=(0, 1)), 0)
    # channel 0 varies along x (columns), channel 1 along y (rows)
    g = coordinate_map(4, 6)
    assert np.all(np.diff(g[..., 0], axis=1) > 0) and np.all(np.diff(g[..., 1], axis=0) > 0)
    with pytest.raises(ValueError):
        coordinate_map(0, 3)


def test_placement_failure():
    crowded = SceneConfig(min_entities=10, max_entities=10, min_size=0.24, max_size=0.25,
                          entity_attempts=5, scene_attempts=2)
    with pytest.raises(PlacementError):
        sample_scene(0, crowded)


def test_invalid_config():
    with pytest.raises(ValueError):
        sample_scene(0, SceneConfig(min_entities=0))
    with pytest.raises(ValueError):
        sample_scene(0, SceneConfig(min_size=0.3, max_size=0.2))


def test_palette_is_complete():
    assert set(RGB) == set(COLORS) and len(SHAPES) == 8 and len(COLORS) == 7
    assert all(any(c) for c in RGB.values())


def test_png_export(tmp_path):
    from PIL import Image

    image = render(sample_scene(3))
    save_png(image, tmp_path / "x.png")
    assert np.array_equal(np.asarray(Image.open(tmp_path / "x.png")), image)
