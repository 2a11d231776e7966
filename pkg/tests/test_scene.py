from __future__ import annotations

import numpy as np
import pytest

from splatfill import (Gaussian3D, GaussianScene, ImageBuffer, MaskBuffer,
                       merge_scenes, validate_scene)
from conftest import random_scene


def test_gaussian_normalizes_quaternion():
    g = Gaussian3D(mean=[0, 0, 1], rotation=[2, 0, 0, 0], scale=[0.1, 0.1, 0.1],
                   opacity=0.5, color=[1, 0, 0])
    assert abs(np.linalg.norm(g.rotation) - 1.0) < 1e-12


def test_scene_arrays_are_readonly(rng):
    scene = random_scene(rng, 4)
    with pytest.raises(ValueError):
        scene.means[0, 0] = 99.0
    with pytest.raises(ValueError):
        scene.opacities[0] = 2.0


def test_from_gaussians_round_trip(rng):
    scene = random_scene(rng, 5)
    rebuilt = GaussianScene.from_gaussians([scene.gaussian(i) for i in range(5)],
                                           provenance=scene.provenance)
    np.testing.assert_allclose(rebuilt.means, scene.means)
    np.testing.assert_allclose(rebuilt.colors, scene.colors)
    np.testing.assert_allclose(rebuilt.opacities, scene.opacities)


def test_merge_cardinality(rng):
    a = random_scene(rng, 5)
    b = random_scene(rng, 3)
    out = merge_scenes(a, b, step=1)
    assert len(out) == 8
    np.testing.assert_array_equal(out.means[:5], a.means)
    np.testing.assert_array_equal(out.means[5:], b.means)


def test_merge_with_empty_is_identity(rng):
    s = random_scene(rng, 4)
    empty = GaussianScene.empty()
    out = merge_scenes(s, empty, step=2)
    assert len(out) == 4
    np.testing.assert_array_equal(out.means, s.means)
    np.testing.assert_array_equal(out.provenance, s.provenance)

    out2 = merge_scenes(empty, s, step=2)
    assert len(out2) == 4
    np.testing.assert_array_equal(out2.means, s.means)
    assert np.all(out2.provenance == 2)


def test_merge_does_not_mutate_inputs(rng):
    a = random_scene(rng, 3)
    b = random_scene(rng, 2)
    a_means = a.means.copy()
    b_prov = b.provenance.copy()
    merge_scenes(a, b, step=7)
    np.testing.assert_array_equal(a.means, a_means)
    np.testing.assert_array_equal(b.provenance, b_prov)


def test_merge_associative_on_contents(rng):
    a, b, c = (random_scene(rng, k) for k in (3, 4, 2))
    left = merge_scenes(merge_scenes(a, b, 1), c, 2)
    right = merge_scenes(a, merge_scenes(b, c, 2), 2)
    np.testing.assert_array_equal(left.means, right.means)
    np.testing.assert_array_equal(left.colors, right.colors)
    np.testing.assert_array_equal(left.scales, right.scales)


def test_merge_never_shrinks(rng):
    for seed in range(10):
        r = np.random.default_rng(seed)
        a = random_scene(r, int(r.integers(0, 6)))
        b = random_scene(r, int(r.integers(0, 6)))
        assert len(merge_scenes(a, b, 1)) >= max(len(a), len(b))


def test_validate_empty_scene():
    assert validate_scene(GaussianScene.empty()) == []


def test_validate_reports_opacity_violation(rng):
    scene = random_scene(rng, 4)
    opac = scene.opacities.copy()
    opac[2] = 1.5
    bad = scene.replace(opacities=opac)
    violations = validate_scene(bad)
    assert len(violations) == 1
    assert "2" in violations[0] and "opacity" in violations[0]


def test_validate_reports_nan_mean(rng):
    scene = random_scene(rng, 3)
    means = scene.means.copy()
    means[1, 0] = np.nan
    violations = validate_scene(scene.replace(means=means))
    assert any("mean" in v and "1" in v for v in violations)


def test_validate_reports_bad_scale_and_color(rng):
    scene = random_scene(rng, 3)
    scales = scene.scales.copy()
    scales[0, 1] = -0.1
    colors = scene.colors.copy()
    colors[2, 0] = 1.7
    violations = validate_scene(scene.replace(scales=scales, colors=colors))
    assert any("scale" in v for v in violations)
    assert any("color" in v for v in violations)


def test_validate_reports_provenance_order(rng):
    scene = random_scene(rng, 3)
    bad = scene.replace(provenance=np.array([2, 1, 3]))
    assert any("provenance" in v for v in validate_scene(bad))


def test_merge_of_valid_scenes_is_valid(rng):
    for seed in range(10):
        r = np.random.default_rng(seed)
        a = random_scene(r, 4)
        b = random_scene(r, 3)
        assert validate_scene(a) == [] and validate_scene(b) == []
        assert validate_scene(merge_scenes(a, b, step=0)) == []


def test_image_buffer_validation():
    with pytest.raises(ValueError):
        ImageBuffer(np.full((4, 4, 3), 1.5))
    with pytest.raises(ValueError):
        ImageBuffer(np.full((4, 4, 3), np.nan))
    with pytest.raises(ValueError):
        ImageBuffer(np.zeros((4, 4)))
    img = ImageBuffer.constant(3, 5, (0.2, 0.4, 0.6))
    assert (img.height, img.width) == (3, 5)
    np.testing.assert_allclose(img.pixels[1, 2], [0.2, 0.4, 0.6])


def test_mask_buffer_validation():
    with pytest.raises(ValueError):
        MaskBuffer(np.full((4, 4), 2))
    mask = MaskBuffer.full(2, 3, 1)
    assert mask.bits.dtype == np.uint8
    assert mask.as_bool().all()
