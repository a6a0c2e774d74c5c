"""Lift multi-scale stereo 2D features into a fused 3D feature volume.

Per voxel and scale: project the centroid with full-resolution intrinsics,
divide the pixel coordinates by the scale, and bilinearly sample that
scale's feature map (out-of-view voxels get the zero vector). The two
views are fused per voxel: a voxel seen by only one camera keeps that
camera's feature; a voxel seen by both gets the mean weighted by the
(clamped) cosine correlation of the two sampled vectors. The fused
volumes of all scales are summed.

Everything here is differentiable with respect to the 2D feature maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .geometry import CameraModel, CameraRig, VoxelGridSpec, VoxelProjection, project_voxels, sample_bilinear

SCALES = (1, 2, 4, 8)

# norm floor for the cosine; in-view features with norms at this scale sit on
# a documented discontinuity of the weighting
COSINE_NORM_EPS = 1e-8


@dataclass
class FeaturePyramid:
    """Feature maps at downsampling scales {1, 2, 4, 8}, each (H/s, W/s, C)."""

    maps: dict

    def __post_init__(self):
        if sorted(self.maps) != sorted(SCALES):
            raise ValueError(f"pyramid must carry scales {SCALES}, got {sorted(self.maps)}")
        base = self.maps[1]
        h, w, c = base.shape
        for s in SCALES:
            m = self.maps[s]
            if m.ndim != 3 or m.shape[2] != c:
                raise ValueError("pyramid maps must be (H/s, W/s, C) with one shared C")
            if m.shape[0] * s != h or m.shape[1] * s != w:
                raise ValueError(
                    f"scale {s} map {tuple(m.shape[:2])} inconsistent with base {(h, w)}"
                )

    @property
    def channels(self) -> int:
        return int(self.maps[1].shape[2])

    @property
    def image_height(self) -> int:
        return int(self.maps[1].shape[0])

    @property
    def image_width(self) -> int:
        return int(self.maps[1].shape[1])


@dataclass
class FeatureVolume:
    """Per-voxel feature vectors on a grid: values (X, Y, Z, C)."""

    values: torch.Tensor
    grid: VoxelGridSpec

    def __post_init__(self):
        if not isinstance(self.values, torch.Tensor):
            self.values = torch.as_tensor(np.asarray(self.values))
        if tuple(self.values.shape[:3]) != self.grid.dims:
            raise ValueError(
                f"volume shape {tuple(self.values.shape)} does not match grid {self.grid.dims}"
            )
        if self.values.ndim != 4:
            raise ValueError("volume values must be (X, Y, Z, C)")
        if not bool(torch.isfinite(self.values.detach()).all()):
            raise ValueError("volume values must be finite")

    @property
    def channels(self) -> int:
        return int(self.values.shape[3])


def lift_single(
    feature_map,
    scale: int,
    grid: VoxelGridSpec,
    cam: CameraModel,
    projection: VoxelProjection | None = None,
) -> FeatureVolume:
    """Sample one scale's feature map at every voxel's projected location."""
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}")
    h, w = int(feature_map.shape[0]), int(feature_map.shape[1])
    if h * scale != cam.image_height or w * scale != cam.image_width:
        raise ValueError(
            f"map {(h, w)} at scale {scale} inconsistent with image "
            f"{(cam.image_height, cam.image_width)}"
        )
    proj = projection if projection is not None else project_voxels(grid, cam)
    sampled = sample_bilinear(feature_map, proj.u / scale, proj.v / scale, proj.valid)
    if not isinstance(sampled, torch.Tensor):
        sampled = torch.as_tensor(sampled)
    return FeatureVolume(values=sampled, grid=grid)


def fuse_stereo(
    left: FeatureVolume,
    right: FeatureVolume,
    weighting: str = "cosine",
    clamp_negative: bool = True,
) -> FeatureVolume:
    """Per-voxel fusion of two sampled volumes.

    A voxel whose sampled vector is exactly zero in one view (out of view by
    construction) passes the other view through; elsewhere the output is
    w * (left + right) / 2 with w the clamped cosine correlation, or the
    plain mean when weighting="mean" (the naive-average ablation).
    """
    if left.grid != right.grid:
        raise ValueError("fuse_stereo requires matching grids")
    if left.values.shape != right.values.shape:
        raise ValueError("fuse_stereo requires matching channel counts")
    if weighting not in ("cosine", "mean"):
        raise ValueError(f"unknown weighting {weighting!r}")

    lv, rv = left.values, right.values
    zero_l = (lv == 0).all(dim=-1, keepdim=True)
    zero_r = (rv == 0).all(dim=-1, keepdim=True)
    both = ~(zero_l | zero_r)

    if weighting == "cosine":
        # compute the cosine on inputs replaced by ones outside the
        # both-visible region so no NaN can leak through torch.where
        ones = torch.ones_like(lv)
        ls = torch.where(both, lv, ones)
        rs = torch.where(both, rv, ones)
        dot = (ls * rs).sum(dim=-1, keepdim=True)
        nl = torch.linalg.vector_norm(ls, dim=-1, keepdim=True).clamp_min(COSINE_NORM_EPS)
        nr = torch.linalg.vector_norm(rs, dim=-1, keepdim=True).clamp_min(COSINE_NORM_EPS)
        w = dot / (nl * nr)
        w = w.clamp(min=0.0 if clamp_negative else None, max=1.0)
        fused = w * (lv + rv) / 2
    else:
        fused = (lv + rv) / 2

    out = torch.where(zero_r, lv, torch.where(zero_l, rv, fused))
    return FeatureVolume(values=out, grid=left.grid)


def lift_and_fuse(
    left_pyr: FeaturePyramid,
    right_pyr: FeaturePyramid,
    grid: VoxelGridSpec,
    rig: CameraRig,
    projections: "tuple[VoxelProjection, VoxelProjection] | None" = None,
    weighting: str = "cosine",
) -> FeatureVolume:
    """Sum over scales of the fused left/right lifted volumes."""
    if left_pyr.channels != right_pyr.channels:
        raise ValueError("pyramids must share the channel count")
    if (left_pyr.image_height, left_pyr.image_width) != (rig.image_height, rig.image_width):
        raise ValueError("pyramid resolution does not match the rig")
    if (right_pyr.image_height, right_pyr.image_width) != (rig.image_height, rig.image_width):
        raise ValueError("pyramid resolution does not match the rig")
    proj_l, proj_r = projections if projections is not None else (
        project_voxels(grid, rig.left),
        project_voxels(grid, rig.right),
    )
    total = None
    for s in SCALES:
        vol_l = lift_single(left_pyr.maps[s], s, grid, rig.left, projection=proj_l)
        vol_r = lift_single(right_pyr.maps[s], s, grid, rig.right, projection=proj_r)
        fused = fuse_stereo(vol_l, vol_r, weighting=weighting)
        total = fused.values if total is None else total + fused.values
    return FeatureVolume(values=total, grid=grid)
