"""Finite-difference verification of the pipeline's analytic gradients.

Each named check builds a small float64 instance, computes the autograd
gradient of a scalar functional, and compares it against central finite
differences evaluated by re-running the forward pass with perturbed
inputs. Check inputs are constructed away from the documented
discontinuities (cosine clamp, zero-vector visibility cases, log clamps).

Relative error metric: max|g_a - g_fd| / max(max|g_a|, max|g_fd|, 1e-12).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

TOLERANCE = 1e-4


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def central_difference(f, x: np.ndarray, h_scale: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar f at x, perturbing in place."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        h = h_scale * max(1.0, abs(orig))
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_gradient_error(analytic: np.ndarray, fd: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    fd = np.asarray(fd, dtype=np.float64)
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(fd)), 1e-12)
    return float(np.max(np.abs(analytic - fd)) / scale)


def autograd_gradient(forward, x: np.ndarray) -> np.ndarray:
    """Autograd gradient of scalar forward(tensor) at x (float64)."""
    t = torch.tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
    out = forward(t)
    out.backward()
    return t.grad.detach().numpy().copy()


def compare_gradients(forward, x: np.ndarray, h_scale: float = 1e-6) -> float:
    """Max relative error between autograd and central differences for the
    scalar torch function `forward` at the float64 point x."""
    analytic = autograd_gradient(forward, x)
    fd = central_difference(
        lambda a: float(forward(torch.tensor(a, dtype=torch.float64)).item()), x, h_scale
    )
    return relative_gradient_error(analytic, fd)


# ---------------------------------------------------------------------------
# named checks


def _functional(shape, seed):
    """Fixed random linear functional used to reduce outputs to a scalar."""
    rng = np.random.default_rng(seed)
    return torch.tensor(rng.normal(size=shape), dtype=torch.float64)


def check_fuse_stereo() -> GradCheckResult:
    from .geometry import VoxelGridSpec
    from .lifting import FeatureVolume, fuse_stereo

    grid = VoxelGridSpec(origin=(0, 0, 0), dims=(2, 2, 2), voxel_size=0.5)
    rng = np.random.default_rng(101)
    c = 4
    left = rng.uniform(0.2, 2.0, size=(2, 2, 2, c))
    right = rng.uniform(0.2, 2.0, size=(2, 2, 2, c))
    # keep the check away from the w-clamp: all-positive vectors have
    # cosine strictly inside (0, 1)
    cos = (left * right).sum(-1) / (
        np.linalg.norm(left, axis=-1) * np.linalg.norm(right, axis=-1)
    )
    assert np.all(cos > 1e-3) and np.all(cos < 1 - 1e-3), "bad check construction"
    reducer = _functional((2, 2, 2, c), 5)

    x = np.concatenate([left.ravel(), right.ravel()])

    def forward(t):
        lv = t[: left.size].reshape(left.shape)
        rv = t[left.size :].reshape(right.shape)
        fused = fuse_stereo(
            FeatureVolume(values=lv, grid=grid), FeatureVolume(values=rv, grid=grid)
        )
        return (fused.values * reducer).sum()

    return GradCheckResult("fuse_stereo", compare_gradients(forward, x))


def check_lift_and_fuse() -> GradCheckResult:
    from .geometry import (
        CameraModel,
        CameraRig,
        VoxelGridSpec,
        intrinsics_matrix,
        look_at_extrinsics,
        project_voxels,
    )
    from .lifting import SCALES, FeaturePyramid, lift_and_fuse

    w = h = 16
    left_cam = CameraModel(
        intrinsics_matrix(12.0, 12.0, 8.0, 8.0),
        look_at_extrinsics((0.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
        w,
        h,
    )
    right_cam = CameraModel(
        intrinsics_matrix(12.0, 12.0, 8.0, 8.0),
        look_at_extrinsics((-0.1, 0.0, 0.0), (-0.1, 0.0, 1.0)),
        w,
        h,
    )
    rig = CameraRig(left=left_cam, right=right_cam)
    grid = VoxelGridSpec(origin=(-0.45, -0.45, 2.0), dims=(3, 3, 3), voxel_size=0.3)
    rng = np.random.default_rng(77)
    c = 3
    sizes = {s: (h // s, w // s, c) for s in SCALES}
    flats = {s: rng.uniform(0.2, 2.0, size=sizes[s]) for s in SCALES}
    n_left = sum(v.size for v in flats.values())
    maps_r = {s: rng.uniform(0.2, 2.0, size=sizes[s]) for s in SCALES}
    reducer = _functional((3, 3, 3, c), 9)
    projections = (project_voxels(grid, rig.left), project_voxels(grid, rig.right))

    x = np.concatenate(
        [flats[s].ravel() for s in SCALES] + [maps_r[s].ravel() for s in SCALES]
    )

    def forward(t):
        offset = 0
        maps = {}
        for s in SCALES:
            n = int(np.prod(sizes[s]))
            maps[s] = t[offset : offset + n].reshape(sizes[s])
            offset += n
        maps_right = {}
        for s in SCALES:
            n = int(np.prod(sizes[s]))
            maps_right[s] = t[offset : offset + n].reshape(sizes[s])
            offset += n
        vol = lift_and_fuse(
            FeaturePyramid(maps),
            FeaturePyramid(maps_right),
            grid,
            rig,
            projections=projections,
        )
        return (vol.values * reducer).sum()

    assert x.size == n_left * 2
    return GradCheckResult("lift_and_fuse", compare_gradients(forward, x))


def check_depth_pipeline() -> GradCheckResult:
    """depth_softmax -> frustum_to_voxel (both cameras) -> occupancy_weight."""
    from .geometry import (
        CameraModel,
        CameraRig,
        DepthBinSpec,
        VoxelGridSpec,
        intrinsics_matrix,
        look_at_extrinsics,
    )
    from .depth_prior import (
        DepthLogits,
        depth_softmax,
        frustum_to_voxel,
        occupancy_weight,
        overlap_mask,
    )
    from .lifting import FeatureVolume

    w = h = 24
    scale = 8
    n_bins = 5
    spec = DepthBinSpec(d_min=0.5, d_max=6.0, n_bins=n_bins, mode="lid")
    left_cam = CameraModel(
        intrinsics_matrix(16.0, 16.0, 12.0, 12.0),
        look_at_extrinsics((0.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
        w,
        h,
    )
    right_cam = CameraModel(
        intrinsics_matrix(16.0, 16.0, 12.0, 12.0),
        look_at_extrinsics((-0.15, 0.0, 0.0), (-0.15, 0.0, 1.0)),
        w,
        h,
    )
    rig = CameraRig(left=left_cam, right=right_cam)
    grid = VoxelGridSpec(origin=(-0.6, -0.6, 1.2), dims=(3, 3, 3), voxel_size=0.4)
    mask = overlap_mask(grid, rig)
    rng = np.random.default_rng(55)
    feats = FeatureVolume(
        values=torch.tensor(rng.normal(size=(3, 3, 3, 2)), dtype=torch.float64), grid=grid
    )
    reducer = _functional((3, 3, 3, 2), 13)
    shape = (h // scale, w // scale, n_bins)
    x = rng.normal(size=(2,) + shape)

    def forward(t):
        dist_l = depth_softmax(DepthLogits(logits=t[0]))
        dist_r = depth_softmax(DepthLogits(logits=t[1]))
        prior_l = frustum_to_voxel(dist_l, grid, rig.left, spec)
        prior_r = frustum_to_voxel(dist_r, grid, rig.right, spec)
        weighted = occupancy_weight([prior_l, prior_r], mask, feats)
        return (weighted.values * reducer).sum()

    return GradCheckResult("depth_softmax-frustum_to_voxel-occupancy_weight", compare_gradients(forward, x))


def check_loss_occ() -> GradCheckResult:
    from .losses import VoxelLabels, loss_occ

    rng = np.random.default_rng(21)
    labels = VoxelLabels(
        semantic=rng.integers(0, 4, size=(2, 2, 2)).astype(np.int64), n_classes=3
    )
    labels.semantic[0, 0, 0] = 255
    x = rng.normal(size=(2, 2, 2, 2))
    return GradCheckResult("loss_occ", compare_gradients(lambda t: loss_occ(t, labels), x))


def check_loss_sem() -> GradCheckResult:
    from .losses import VoxelLabels, loss_sem

    rng = np.random.default_rng(22)
    labels = VoxelLabels(
        semantic=rng.integers(0, 4, size=(2, 2, 2)).astype(np.int64), n_classes=3
    )
    labels.semantic[1, 1, 1] = 255
    x = rng.normal(size=(2, 2, 2, 4))
    return GradCheckResult("loss_sem", compare_gradients(lambda t: loss_sem(t, labels), x))


def check_loss_depth() -> GradCheckResult:
    from .geometry import DepthBinSpec, bin_centers
    from .depth_prior import build_depth_target
    from .losses import loss_depth

    rng = np.random.default_rng(23)
    spec = DepthBinSpec(d_min=0.5, d_max=8.0, n_bins=4, mode="lid")
    centers = bin_centers(spec)
    gt = rng.choice(centers, size=(8, 16))
    gt[0:8, 0:8][rng.random(size=(8, 8)) < 0.2] = 0.0  # holes
    target = build_depth_target(gt, spec, scale=8)
    x = rng.normal(size=(1, 2, 4))
    return GradCheckResult(
        "loss_depth", compare_gradients(lambda t: loss_depth(t, target), x)
    )


def check_loss_scal(mode: str) -> GradCheckResult:
    from .losses import VoxelLabels, loss_scal

    rng = np.random.default_rng(24 if mode == "sem" else 25)
    n_classes = 3
    labels = VoxelLabels(
        semantic=rng.integers(0, n_classes + 1, size=(2, 2, 2)).astype(np.int64),
        n_classes=n_classes,
    )
    labels.semantic[0, 1, 0] = 255
    k = n_classes + 1 if mode == "sem" else 2
    x = rng.normal(size=(2, 2, 2, k))

    def forward(t):
        probs = torch.softmax(t, dim=-1)
        return loss_scal(probs, labels, mode=mode)

    return GradCheckResult(f"loss_scal_{mode}", compare_gradients(forward, x))


MODULE_CHECKS = {
    "lifting": [check_fuse_stereo, check_lift_and_fuse],
    "oad": [check_depth_pipeline],
    "losses": [
        check_loss_occ,
        check_loss_sem,
        check_loss_depth,
        lambda: check_loss_scal("sem"),
        lambda: check_loss_scal("geo"),
    ],
}


def run_checks(module: str = "all") -> "list[GradCheckResult]":
    if module == "all":
        names = list(MODULE_CHECKS)
    elif module in MODULE_CHECKS:
        names = [module]
    else:
        raise ValueError(f"unknown gradcheck module {module!r}; use all|lifting|oad|losses")
    results = []
    for name in names:
        for check in MODULE_CHECKS[name]:
            results.append(check())
    return results
