import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from stereossc.geometry import (
    CameraRig,
    VoxelGridSpec,
    project_voxels,
    sample_bilinear,
)
from stereossc.gradcheck import check_fuse_stereo, check_lift_and_fuse
from stereossc.lifting import (
    SCALES,
    FeaturePyramid,
    FeatureVolume,
    fuse_stereo,
    lift_and_fuse,
    lift_single,
)

from conftest import simple_camera


def make_volume(values, origin=(0, 0, 0), voxel_size=0.5):
    values = torch.as_tensor(np.asarray(values, dtype=np.float64))
    grid = VoxelGridSpec(origin=origin, dims=tuple(values.shape[:3]), voxel_size=voxel_size)
    return FeatureVolume(values=values, grid=grid)


def constant_pyramid(value, h=32, w=32, c=3):
    return FeaturePyramid(
        {s: torch.full((h // s, w // s, c), float(value), dtype=torch.float64) for s in SCALES}
    )


class TestLiftSingle:
    def test_all_voxels_behind_camera_zero_volume(self):
        cam = simple_camera(width=32, height=32, cx=16, cy=16)
        grid = VoxelGridSpec(origin=(-0.5, -0.5, -5.0), dims=(2, 2, 2), voxel_size=0.5)
        fm = torch.ones((32, 32, 3), dtype=torch.float64)
        vol = lift_single(fm, 1, grid, cam)
        assert torch.count_nonzero(vol.values) == 0

    def test_constant_map_visible_voxels_get_constant(self):
        cam = simple_camera(width=32, height=32, cx=16, cy=16, fx=24, fy=24)
        grid = VoxelGridSpec(origin=(-0.3, -0.3, 3.0), dims=(3, 3, 3), voxel_size=0.2)
        fm = torch.full((32, 32, 4), 2.5, dtype=torch.float64)
        vol = lift_single(fm, 1, grid, cam)
        assert torch.allclose(vol.values, torch.full_like(vol.values, 2.5))

    def test_matches_project_plus_sample_oracle(self):
        cam = simple_camera(width=16, height=16, cx=8, cy=8, fx=10, fy=10)
        grid = VoxelGridSpec(origin=(-0.5, -0.1, 2.0), dims=(2, 1, 1), voxel_size=0.4)
        rng = np.random.default_rng(5)
        fm = torch.as_tensor(rng.normal(size=(4, 4, 2)))
        vol = lift_single(fm, 4, grid, cam)
        proj = project_voxels(grid, cam)
        for i in range(2):
            expected = sample_bilinear(
                fm, proj.u[i, 0, 0] / 4, proj.v[i, 0, 0] / 4, proj.valid[i, 0, 0]
            )
            assert torch.allclose(vol.values[i, 0, 0], expected)

    def test_scale_map_shape_mismatch_rejected(self):
        cam = simple_camera(width=32, height=32)
        grid = VoxelGridSpec(origin=(0, 0, 1), dims=(1, 1, 1), voxel_size=0.2)
        with pytest.raises(ValueError):
            lift_single(torch.ones((15, 16, 3), dtype=torch.float64), 2, grid, cam)


class TestFuseStereo:
    def test_right_zero_passes_left(self):
        left = make_volume(np.full((1, 1, 1, 3), 2.0))
        right = make_volume(np.zeros((1, 1, 1, 3)))
        out = fuse_stereo(left, right)
        assert torch.equal(out.values, left.values)

    def test_left_zero_passes_right(self):
        left = make_volume(np.zeros((1, 1, 1, 3)))
        right = make_volume(np.full((1, 1, 1, 3), -1.5))
        out = fuse_stereo(left, right)
        assert torch.equal(out.values, right.values)

    def test_identical_nonzero_gives_weight_one(self):
        v = np.array([[[[1.0, 2.0, -3.0]]]])
        out = fuse_stereo(make_volume(v), make_volume(v))
        np.testing.assert_allclose(out.values.numpy(), v, atol=1e-12)

    def test_orthogonal_vectors_give_zero(self):
        left = make_volume(np.array([[[[1.0, 0.0]]]]))
        right = make_volume(np.array([[[[0.0, 1.0]]]]))
        out = fuse_stereo(left, right)
        np.testing.assert_allclose(out.values.numpy(), np.zeros((1, 1, 1, 2)), atol=1e-15)

    def test_negative_cosine_clamps_to_zero(self):
        left = make_volume(np.array([[[[1.0, 0.5]]]]))
        right = make_volume(np.array([[[[-2.0, -1.0]]]]))
        out = fuse_stereo(left, right)
        np.testing.assert_allclose(out.values.numpy(), np.zeros((1, 1, 1, 2)), atol=1e-15)
        unclamped = fuse_stereo(left, right, clamp_negative=False)
        # cosine is exactly -1; unclamped weight recovers -(L+R)/2
        np.testing.assert_allclose(unclamped.values.numpy(), [[[[0.5, 0.25]]]], atol=1e-12)

    def test_mean_weighting_variant(self):
        left = make_volume(np.array([[[[1.0, 0.0]]]]))
        right = make_volume(np.array([[[[0.0, 1.0]]]]))
        out = fuse_stereo(left, right, weighting="mean")
        np.testing.assert_allclose(out.values.numpy(), [[[[0.5, 0.5]]]], atol=1e-15)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_symmetry_exact(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(2, 2, 2, 3))
        b = rng.normal(size=(2, 2, 2, 3))
        a[rng.random(size=(2, 2, 2)) < 0.3] = 0.0
        b[rng.random(size=(2, 2, 2)) < 0.3] = 0.0
        ab = fuse_stereo(make_volume(a), make_volume(b)).values
        ba = fuse_stereo(make_volume(b), make_volume(a)).values
        assert torch.equal(ab, ba)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_self_fusion_identity(self, seed):
        v = np.random.default_rng(seed).normal(size=(2, 1, 2, 4)) + 0.1
        out = fuse_stereo(make_volume(v), make_volume(v))
        np.testing.assert_allclose(out.values.numpy(), v, atol=1e-9)

    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
    @settings(max_examples=40, deadline=None)
    def test_positive_scaling_invariance(self, seed, alpha):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(2, 2, 1, 3))
        b = rng.normal(size=(2, 2, 1, 3))
        base = fuse_stereo(make_volume(a), make_volume(b)).values.numpy()
        scaled = fuse_stereo(make_volume(alpha * a), make_volume(alpha * b)).values.numpy()
        np.testing.assert_allclose(scaled, alpha * base, rtol=1e-9, atol=1e-12)

    def test_cosine_weight_within_unit_interval(self):
        rng = np.random.default_rng(123)
        a = rng.normal(size=(4, 4, 4, 5))
        b = rng.normal(size=(4, 4, 4, 5))
        fused = fuse_stereo(make_volume(a), make_volume(b)).values.numpy()
        mean = (a + b) / 2
        # |fused| = w |mean| with w in [0, 1]
        ratio = np.linalg.norm(fused, axis=-1) / np.maximum(
            np.linalg.norm(mean, axis=-1), 1e-300
        )
        assert np.all(ratio <= 1 + 1e-9)


class TestLiftAndFuse:
    def _setup(self):
        left = simple_camera(width=32, height=32, cx=16, cy=16, fx=24, fy=24)
        right = simple_camera(
            width=32, height=32, cx=16, cy=16, fx=24, fy=24,
            position=(-0.1, 0.0, 0.0), target=(-0.1, 0.0, 1.0),
        )
        rig = CameraRig(left=left, right=right)
        grid = VoxelGridSpec(origin=(-0.25, -0.25, 3.0), dims=(3, 3, 3), voxel_size=0.15)
        return rig, grid

    def test_single_populated_scale_equals_that_scale(self):
        rig, grid = self._setup()
        rng = np.random.default_rng(2)
        maps_l = {
            s: torch.zeros((32 // s, 32 // s, 3), dtype=torch.float64) for s in SCALES
        }
        maps_r = {s: m.clone() for s, m in maps_l.items()}
        maps_l[2] = torch.as_tensor(rng.uniform(0.5, 1.5, size=(16, 16, 3)))
        maps_r[2] = torch.as_tensor(rng.uniform(0.5, 1.5, size=(16, 16, 3)))
        total = lift_and_fuse(FeaturePyramid(maps_l), FeaturePyramid(maps_r), grid, rig)
        single = fuse_stereo(
            lift_single(maps_l[2], 2, grid, rig.left),
            lift_single(maps_r[2], 2, grid, rig.right),
        )
        assert torch.allclose(total.values, single.values)

    def test_constant_maps_sum_to_four_c(self):
        rig, grid = self._setup()
        c = 2.0
        total = lift_and_fuse(
            constant_pyramid(c), constant_pyramid(c), grid, rig
        )
        np.testing.assert_allclose(total.values.numpy(), 4 * c, atol=1e-9)

    def test_doubling_maps_doubles_volume(self):
        rig, grid = self._setup()
        rng = np.random.default_rng(3)
        maps_l = {
            s: torch.as_tensor(rng.uniform(0.5, 1.5, size=(32 // s, 32 // s, 3)))
            for s in SCALES
        }
        maps_r = {
            s: torch.as_tensor(rng.uniform(0.5, 1.5, size=(32 // s, 32 // s, 3)))
            for s in SCALES
        }
        one = lift_and_fuse(FeaturePyramid(maps_l), FeaturePyramid(maps_r), grid, rig)
        two = lift_and_fuse(
            FeaturePyramid({s: 2 * m for s, m in maps_l.items()}),
            FeaturePyramid({s: 2 * m for s, m in maps_r.items()}),
            grid,
            rig,
        )
        np.testing.assert_allclose(two.values.numpy(), 2 * one.values.numpy(), rtol=1e-9)

    def test_pyramid_validation(self):
        with pytest.raises(ValueError):
            FeaturePyramid({1: torch.zeros((8, 8, 3))})
        with pytest.raises(ValueError):
            FeaturePyramid(
                {
                    1: torch.zeros((8, 8, 3)),
                    2: torch.zeros((4, 4, 2)),
                    4: torch.zeros((2, 2, 3)),
                    8: torch.zeros((1, 1, 3)),
                }
            )


class TestGradients:
    def test_fuse_stereo_gradient_matches_finite_differences(self):
        result = check_fuse_stereo()
        assert result.passed, f"max rel err {result.max_rel_error}"

    def test_lift_and_fuse_gradient_matches_finite_differences(self):
        result = check_lift_and_fuse()
        assert result.passed, f"max rel err {result.max_rel_error}"
