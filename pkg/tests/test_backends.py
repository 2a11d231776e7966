from __future__ import annotations

import numpy as np
import pytest

from splatfill import (BackendUnavailableError, Camera, GaussianScene,
                       ImageBuffer, Intrinsics, MaskBuffer, OracleMissError,
                       Pose, render)
from splatfill.backends import (DepthMap, FixedPrompter, FlatFillInpainter,
                                GUIDING_INSTRUCTION, OracleDirectoryInpainter,
                                RemoteInpainter, RemotePrompter,
                                RemoteReconstructor, RgbdLifter, describe,
                                inpaint, lift_rgbd, reconstruct)
from splatfill import io as sfio
from conftest import identity_camera, random_image, random_mask
from stubserver import StubServer


def smooth_image(height: int, width: int) -> ImageBuffer:
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    px = np.stack([0.2 + 0.6 * u / (width - 1),
                   0.3 + 0.5 * v / (height - 1),
                   0.5 + 0.3 * np.sin(u / width * 3.0) * np.cos(v / height * 3.0)],
                  axis=-1)
    return ImageBuffer(np.clip(px, 0, 1))


def test_depth_map_validity():
    d = DepthMap(np.array([[1.0, 0.0], [-2.0, np.nan]]))
    np.testing.assert_array_equal(d.valid(), [[True, False], [False, False]])
    assert (d.height, d.width) == (2, 2)


# --- lift_rgbd ---

def test_lift_one_gaussian_per_valid_pixel(rng):
    cam = identity_camera(width=10, height=8)
    img = random_image(rng, 8, 10)
    depth = DepthMap(np.full((8, 10), 2.0))
    scene = lift_rgbd(img, depth, cam)
    assert len(scene) == 80
    d2 = np.full((8, 10), 2.0)
    d2[3, 4] = -1.0  # invalid pixel drops out
    assert len(lift_rgbd(img, DepthMap(d2), cam)) == 79


def test_lift_principal_point_unprojects_on_axis():
    cam = Camera(Intrinsics(fx=30, fy=30, cx=4, cy=3, width=9, height=7),
                 Pose.identity())
    img = ImageBuffer.constant(7, 9, (0.5, 0.5, 0.5))
    depth = DepthMap(np.full((7, 9), 2.5))
    scene = lift_rgbd(img, depth, cam)
    i = 3 * 9 + 4  # row-major index of pixel (v=3, u=4)
    np.testing.assert_allclose(scene.means[i], [0.0, 0.0, 2.5], atol=1e-12)


def test_lift_copies_color_and_sets_defaults(rng):
    cam = identity_camera(6, 6)
    img = random_image(rng, 6, 6)
    scene = lift_rgbd(img, DepthMap(np.full((6, 6), 3.0)), cam,
                      opacity_init=0.9, pixel_scale_factor=0.5)
    np.testing.assert_array_equal(scene.colors, img.pixels.reshape(-1, 3))
    assert np.all(scene.opacities == 0.9)
    expected_scale = 0.5 * 3.0 / cam.intrinsics.fx
    np.testing.assert_allclose(scene.scales, expected_scale)
    np.testing.assert_array_equal(scene.rotations[:, 0], 1.0)


def test_lift_render_back(rng):
    # rendering the lifted scene from the source camera reproduces the image
    cam = identity_camera(32, 32, focal=36.0)
    img = smooth_image(32, 32)
    v, u = np.mgrid[0:32, 0:32].astype(np.float64)
    depth = DepthMap(2.0 + 0.5 * u / 31.0 + 0.3 * v / 31.0)
    scene = lift_rgbd(img, depth, cam)
    out = render(scene, cam)
    mae = float(np.mean(np.abs(out.color.pixels - img.pixels)))
    assert mae <= 0.05


def test_lift_dimension_mismatch(rng):
    cam = identity_camera(8, 8)
    with pytest.raises(ValueError):
        lift_rgbd(random_image(rng, 8, 9), DepthMap(np.ones((8, 9))), cam)
    with pytest.raises(ValueError):
        lift_rgbd(random_image(rng, 8, 8), DepthMap(np.ones((7, 8))), cam)


def test_lift_respects_camera_pose(rng):
    intr = Intrinsics(fx=20, fy=20, cx=3.5, cy=3.5, width=8, height=8)
    pose = Pose(rotation=[0.9238795325112867, 0.0, 0.3826834323650898, 0.0],
                translation=[1.0, -2.0, 0.5])
    cam = Camera(intr, pose)
    img = random_image(rng, 8, 8)
    depth = DepthMap(np.full((8, 8), 2.0))
    scene = lift_rgbd(img, depth, cam)
    # moving the lifted scene back into the camera frame must give z = depth
    back = (scene.means - pose.translation) @ pose.rotation_matrix()
    np.testing.assert_allclose(back[:, 2], 2.0, atol=1e-12)


# --- reconstruct dispatch ---

def test_reconstruct_lifter_delegates_byte_for_byte(rng):
    cam = identity_camera(8, 8)
    img = random_image(rng, 8, 8)
    depth = DepthMap(np.full((8, 8), 2.0))
    backend = RgbdLifter(opacity_init=0.8, pixel_scale_factor=0.6)
    direct = lift_rgbd(img, depth, cam, opacity_init=0.8, pixel_scale_factor=0.6)
    via = reconstruct(backend, img, depth=depth, camera=cam)
    np.testing.assert_array_equal(via.means, direct.means)
    np.testing.assert_array_equal(via.colors, direct.colors)
    np.testing.assert_array_equal(via.scales, direct.scales)


def test_reconstruct_lifter_uses_step_depths(rng):
    cam = identity_camera(4, 4)
    img = random_image(rng, 4, 4)
    backend = RgbdLifter(step_depths={2: DepthMap(np.full((4, 4), 1.5))})
    scene = reconstruct(backend, img, camera=cam, step=2)
    assert len(scene) == 16
    with pytest.raises(ValueError):
        reconstruct(backend, img, camera=cam, step=3)  # no depth for step 3


def test_reconstruct_lifter_is_deterministic(rng):
    cam = identity_camera(8, 8)
    img = random_image(rng, 8, 8)
    depth = DepthMap(np.full((8, 8), 2.0))
    a = reconstruct(RgbdLifter(), img, depth=depth, camera=cam)
    b = reconstruct(RgbdLifter(), img, depth=depth, camera=cam)
    assert np.array_equal(a.means, b.means)
    assert np.array_equal(a.colors, b.colors)


def test_reconstruct_remote_round_trip(rng):
    cam = identity_camera(4, 4)
    payload_scene = GaussianScene(
        means=rng.normal(0, 1, (5, 3)) + [0, 0, 3],
        rotations=np.tile([1.0, 0, 0, 0], (5, 1)),
        scales=rng.uniform(0.05, 0.2, (5, 3)),
        opacities=rng.uniform(0.3, 0.9, 5),
        colors=rng.uniform(0.1, 0.9, (5, 3)))
    with StubServer() as server:
        server.ply_payload = sfio.scene_to_ply_bytes(payload_scene)
        backend = RemoteReconstructor(endpoint=server.endpoint, timeout=5)
        scene = reconstruct(backend, random_image(rng, 4, 4), camera=cam)
    # identity pose + unit rescale: scene should equal the PLY content
    np.testing.assert_allclose(scene.means, payload_scene.means, atol=1e-5)
    np.testing.assert_allclose(scene.colors, payload_scene.colors, atol=1e-5)


def test_reconstruct_remote_applies_rescale_and_pose(rng):
    pose = Pose(rotation=[0.7071067811865476, 0.0, 0.7071067811865476, 0.0],
                translation=[2.0, 0.0, -1.0])
    cam = Camera(identity_camera(4, 4).intrinsics, pose)
    payload_scene = GaussianScene(
        means=[[0.0, 0.0, 1.0]], rotations=[[1, 0, 0, 0]],
        scales=[[0.1, 0.1, 0.1]], opacities=[0.5], colors=[[0.5, 0.5, 0.5]])
    with StubServer() as server:
        server.ply_payload = sfio.scene_to_ply_bytes(payload_scene)
        backend = RemoteReconstructor(endpoint=server.endpoint, timeout=5)
        scene = reconstruct(backend, random_image(rng, 4, 4), camera=cam,
                            rescale_factor=2.0)
    expected = pose.rotation_matrix() @ np.array([0.0, 0.0, 2.0]) + pose.translation
    np.testing.assert_allclose(scene.means[0], expected, atol=1e-5)
    np.testing.assert_allclose(scene.scales[0], 0.2, atol=1e-6)


def test_reconstruct_remote_unreachable():
    backend = RemoteReconstructor(endpoint="http://127.0.0.1:1", timeout=2)
    with pytest.raises(BackendUnavailableError):
        reconstruct(backend, ImageBuffer.constant(4, 4), camera=identity_camera(4, 4))


def test_reconstruct_remote_http_error(rng):
    with StubServer() as server:
        server.fail_paths.add("/v1/reconstruct")
        backend = RemoteReconstructor(endpoint=server.endpoint, timeout=5)
        with pytest.raises(BackendUnavailableError) as err:
            reconstruct(backend, random_image(rng, 4, 4),
                        camera=identity_camera(4, 4))
        assert "500" in err.value.transcript


# --- inpaint ---

def test_inpaint_all_ones_mask_is_identity(rng, tmp_path):
    img = random_image(rng, 6, 6)
    mask = MaskBuffer.full(6, 6, 1)
    sfio.save_png(random_image(rng, 6, 6), tmp_path / "gt_1.png")
    backends = [OracleDirectoryInpainter(tmp_path), FlatFillInpainter()]
    for backend in backends:
        out = inpaint(backend, img, mask, "prompt", step=1)
        assert np.array_equal(out.pixels, img.pixels)


def test_inpaint_flat_fill_all_zeros(rng):
    img = random_image(rng, 5, 5)
    out = inpaint(FlatFillInpainter(), img, MaskBuffer.full(5, 5, 0), "p")
    assert np.all(out.pixels == 0.5)


def test_inpaint_flat_fill_mean_observed_color():
    px = np.zeros((4, 8, 3))
    px[:, :4] = [0.8, 0.1, 0.1]  # observed half is uniform red
    px[:, 4:] = [0.0, 0.9, 0.0]  # unobserved garbage to be replaced
    img = ImageBuffer(px)
    bits = np.zeros((4, 8), dtype=np.uint8)
    bits[:, :4] = 1
    out = inpaint(FlatFillInpainter(), img, MaskBuffer(bits), "p")
    np.testing.assert_allclose(out.pixels[:, 4:], np.broadcast_to([0.8, 0.1, 0.1], (4, 4, 3)))
    np.testing.assert_array_equal(out.pixels[:, :4], px[:, :4])


def test_inpaint_oracle_fills_from_ground_truth(rng, tmp_path):
    img = random_image(rng, 6, 6)
    gt = random_image(rng, 6, 6)
    sfio.save_png(gt, tmp_path / "gt_3.png")
    gt_quantized = sfio.load_png(tmp_path / "gt_3.png")
    mask = random_mask(rng, 6, 6)
    out = inpaint(OracleDirectoryInpainter(tmp_path), img, mask, "p", step=3)
    sel = mask.as_bool()
    assert np.array_equal(out.pixels[sel], img.pixels[sel])
    assert np.array_equal(out.pixels[~sel], gt_quantized.pixels[~sel])


def test_inpaint_oracle_miss(rng, tmp_path):
    backend = OracleDirectoryInpainter(tmp_path)
    with pytest.raises(OracleMissError):
        inpaint(backend, random_image(rng, 4, 4), MaskBuffer.full(4, 4, 0),
                "p", step=9)


def test_inpaint_oracle_requires_existing_directory(tmp_path):
    with pytest.raises(ValueError):
        OracleDirectoryInpainter(tmp_path / "missing")


def test_inpaint_remote_preserves_observed_bits(rng):
    img = random_image(rng, 8, 8)
    mask = random_mask(rng, 8, 8)
    # the stub returns a completely different image; observed pixels must
    # still come back bit-exact from the input
    other = random_image(rng, 8, 8)
    with StubServer() as server:
        server.inpaint_response_png = sfio.encode_png_bytes(other)
        backend = RemoteInpainter(endpoint=server.endpoint, timeout=5)
        out = inpaint(backend, img, mask, "the prompt")
        assert server.last_inpaint_request["prompt"] == "the prompt"
    sel = mask.as_bool()
    assert np.array_equal(out.pixels[sel], img.pixels[sel])
    quantized = sfio.decode_png_bytes(sfio.encode_png_bytes(other))
    assert np.array_equal(out.pixels[~sel], quantized.pixels[~sel])


def test_inpaint_remote_failure(rng):
    with StubServer() as server:
        server.fail_paths.add("/v1/inpaint")
        backend = RemoteInpainter(endpoint=server.endpoint, timeout=5)
        with pytest.raises(BackendUnavailableError):
            inpaint(backend, random_image(rng, 4, 4),
                    MaskBuffer.full(4, 4, 0), "p")


def test_inpaint_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        inpaint(FlatFillInpainter(), random_image(rng, 4, 4),
                MaskBuffer.full(4, 5, 1), "p")


def test_inpaint_observed_bitwise_for_all_backends(rng, tmp_path):
    sfio.save_png(random_image(rng, 8, 8), tmp_path / "gt_1.png")
    with StubServer() as server:
        server.inpaint_response_png = sfio.encode_png_bytes(random_image(rng, 8, 8))
        backends = [OracleDirectoryInpainter(tmp_path), FlatFillInpainter(),
                    RemoteInpainter(endpoint=server.endpoint, timeout=5)]
        for seed in range(6):
            r = np.random.default_rng(seed)
            img = random_image(r, 8, 8)
            mask = random_mask(r, 8, 8)
            sel = mask.as_bool()
            for backend in backends:
                out = inpaint(backend, img, mask, "p", step=1)
                assert np.array_equal(out.pixels[sel], img.pixels[sel])


# --- describe ---

def test_fixed_prompter_returns_configured_string(rng):
    backend = FixedPrompter("An indoor scene, a window, two sofas.")
    out = describe(backend, random_image(rng, 4, 4))
    assert out == "An indoor scene, a window, two sofas."


def test_fixed_prompter_image_independent(rng):
    backend = FixedPrompter("fixed")
    a = describe(backend, random_image(rng, 4, 4))
    b = describe(backend, random_image(rng, 6, 6))
    assert a == b == "fixed"


def test_fixed_prompter_rejects_empty():
    with pytest.raises(ValueError):
        FixedPrompter("")


def test_remote_prompter_round_trip(rng):
    with StubServer() as server:
        server.caption = "a tidy office with two desks"
        backend = RemotePrompter(endpoint=server.endpoint, timeout=5)
        out = describe(backend, random_image(rng, 4, 4))
        assert out == "a tidy office with two desks"
        assert server.requests == ["/v1/describe"]


def test_remote_prompter_failure(rng):
    with StubServer() as server:
        server.fail_paths.add("/v1/describe")
        backend = RemotePrompter(endpoint=server.endpoint, timeout=5)
        with pytest.raises(BackendUnavailableError):
            describe(backend, random_image(rng, 4, 4))


def test_guiding_instruction_constant():
    assert GUIDING_INSTRUCTION == "Please briefly describe the scene"
