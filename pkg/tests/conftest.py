import numpy as np
import pytest

from stereossc.geometry import (
    CameraModel,
    CameraRig,
    VoxelGridSpec,
    intrinsics_matrix,
    look_at_extrinsics,
)


def simple_camera(fx=42.0, fy=42.0, cx=32.0, cy=32.0, width=64, height=64,
                  position=(0.0, 0.0, 0.0), target=(0.0, 0.0, 1.0)):
    return CameraModel(
        intrinsics=intrinsics_matrix(fx, fy, cx, cy),
        cam_from_world=look_at_extrinsics(position, target),
        image_width=width,
        image_height=height,
    )


def random_camera(rng: np.random.Generator, width=64, height=64):
    position = rng.uniform(-2.0, 2.0, size=3)
    target = position + rng.uniform(-1.0, 1.0, size=3) + np.array([0.0, 0.0, 2.0])
    fx = rng.uniform(20.0, 80.0)
    fy = rng.uniform(20.0, 80.0)
    cx = rng.uniform(0.3, 0.7) * width
    cy = rng.uniform(0.3, 0.7) * height
    return CameraModel(
        intrinsics=intrinsics_matrix(fx, fy, cx, cy),
        cam_from_world=look_at_extrinsics(position, target),
        image_width=width,
        image_height=height,
    )


@pytest.fixture
def axis_camera():
    """Camera at the world origin looking down +Z, principal point (32, 32)."""
    return simple_camera()


@pytest.fixture
def axis_rig(axis_camera):
    right = simple_camera(position=(-0.13, 0.0, 0.0), target=(-0.13, 0.0, 1.0))
    return CameraRig(left=axis_camera, right=right)


def small_grid(dims=(2, 2, 2), origin=(-0.5, -0.5, 4.0), voxel_size=0.5):
    return VoxelGridSpec(origin=origin, dims=dims, voxel_size=voxel_size)
