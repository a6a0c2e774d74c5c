"""Pinhole cameras, voxel grids, depth-bin discretizations, and sampling.

Conventions (used consistently everywhere in the package):

* Pixel-center coordinates: pixel (0, 0) spans [0, 1) x [0, 1) and has its
  center at (0.5, 0.5). Projection emits continuous (u, v) in this frame;
  u runs along image width (columns), v along height (rows).
* Voxel (i, j, k) of a grid has its centroid at
  origin + (i + 0.5, j + 0.5, k + 0.5) * voxel_size.
* Depth bin k of a discretization has its center at continuous bin
  coordinate k + 0.5; `bin_coordinate` maps metric depth to that frame.
* All geometry is computed in float64.

`sample_bilinear` accepts either a numpy array or a torch tensor as the
feature map; with a torch map the result is differentiable with respect
to the map values (sample coordinates are treated as constants).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_MODES = ("ud", "lid", "sid")


def intrinsics_matrix(fx: float, fy: float, cx: float, cy: float) -> np.ndarray:
    k = np.eye(3, dtype=np.float64)
    k[0, 0] = fx
    k[1, 1] = fy
    k[0, 2] = cx
    k[1, 2] = cy
    return k


def look_at_extrinsics(position, target, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """4x4 world->camera transform for a camera at `position` looking at
    `target`. Camera frame: x right, y down, z forward (optical axis)."""
    position = np.asarray(position, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - position
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        raise ValueError("look_at: target coincides with position")
    z = z / nz
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise ValueError("look_at: viewing direction parallel to up vector")
    x = x / nx
    y = np.cross(z, x)
    r = np.stack([x, y, z], axis=0)  # rows are camera axes in world coords
    t = np.eye(4, dtype=np.float64)
    t[:3, :3] = r
    t[:3, 3] = -r @ position
    return t


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: 3x3 intrinsics (zero skew), rigid world->camera
    transform, and integer image dimensions in pixels."""

    intrinsics: np.ndarray
    cam_from_world: np.ndarray
    image_width: int
    image_height: int

    def __post_init__(self):
        k = np.array(self.intrinsics, dtype=np.float64)
        t = np.array(self.cam_from_world, dtype=np.float64)
        if k.shape != (3, 3):
            raise ValueError(f"intrinsics must be 3x3, got {k.shape}")
        if t.shape != (4, 4):
            raise ValueError(f"cam_from_world must be 4x4, got {t.shape}")
        if not (k[0, 0] > 0 and k[1, 1] > 0):
            raise ValueError("focal lengths must be positive")
        if k[0, 1] != 0.0 or np.any(k[2] != np.array([0.0, 0.0, 1.0])) or k[1, 0] != 0.0:
            raise ValueError("intrinsics must have zero skew and last row [0,0,1]")
        r = t[:3, :3]
        if np.max(np.abs(r @ r.T - np.eye(3))) > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("cam_from_world rotation block is not orthonormal")
        if np.any(t[3] != np.array([0.0, 0.0, 0.0, 1.0])):
            raise ValueError("cam_from_world last row must be [0,0,0,1]")
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError("image dimensions must be positive")
        k.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "intrinsics", k)
        object.__setattr__(self, "cam_from_world", t)

    @property
    def fx(self) -> float:
        return float(self.intrinsics[0, 0])

    @property
    def fy(self) -> float:
        return float(self.intrinsics[1, 1])

    @property
    def cx(self) -> float:
        return float(self.intrinsics[0, 2])

    @property
    def cy(self) -> float:
        return float(self.intrinsics[1, 2])

    def center_in_world(self) -> np.ndarray:
        r = self.cam_from_world[:3, :3]
        return -r.T @ self.cam_from_world[:3, 3]


@dataclass(frozen=True)
class CameraRig:
    left: CameraModel
    right: CameraModel

    def __post_init__(self):
        if (self.left.image_width, self.left.image_height) != (
            self.right.image_width,
            self.right.image_height,
        ):
            raise ValueError("stereo cameras must share image dimensions")

    @property
    def image_width(self) -> int:
        return self.left.image_width

    @property
    def image_height(self) -> int:
        return self.left.image_height


@dataclass(frozen=True)
class VoxelGridSpec:
    """Axis-aligned voxel lattice: origin corner (meters), (X, Y, Z) voxel
    counts, and cubic voxel edge length."""

    origin: tuple
    dims: tuple
    voxel_size: float

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        dims = tuple(int(v) for v in self.dims)
        if len(origin) != 3 or len(dims) != 3:
            raise ValueError("origin and dims must have 3 components")
        if any(d < 1 for d in dims):
            raise ValueError("grid dims must all be >= 1")
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be positive")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "voxel_size", float(self.voxel_size))

    @property
    def shape(self) -> tuple:
        return self.dims

    def n_voxels(self) -> int:
        x, y, z = self.dims
        return x * y * z

    def centroids(self) -> np.ndarray:
        """(X, Y, Z, 3) world-frame voxel centroids."""
        x, y, z = self.dims
        ii, jj, kk = np.meshgrid(
            np.arange(x), np.arange(y), np.arange(z), indexing="ij"
        )
        idx = np.stack([ii, jj, kk], axis=-1).astype(np.float64)
        return np.asarray(self.origin) + (idx + 0.5) * self.voxel_size


@dataclass(frozen=True)
class DepthBinSpec:
    """Discretization of [d_min, d_max] into D bins.

    mode 'ud': uniform widths; 'lid': widths growing linearly with index;
    'sid': log-spaced (geometric) centers.
    """

    d_min: float
    d_max: float
    n_bins: int
    mode: str = "lid"

    def __post_init__(self):
        mode = str(self.mode).lower()
        if mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if not (0 <= self.d_min < self.d_max):
            raise ValueError("need 0 <= d_min < d_max")
        if mode == "sid" and self.d_min <= 0:
            raise ValueError("sid needs d_min > 0")
        if self.n_bins < 2:
            raise ValueError("need at least 2 depth bins")
        object.__setattr__(self, "d_min", float(self.d_min))
        object.__setattr__(self, "d_max", float(self.d_max))
        object.__setattr__(self, "n_bins", int(self.n_bins))
        object.__setattr__(self, "mode", mode)


@dataclass
class VoxelProjection:
    """Per-voxel projection of grid centroids into one camera.

    u, v are continuous pixel-center coordinates, depth is the camera-frame
    z in meters. valid is true iff depth > 0 and (u, v) falls inside
    [0, W) x [0, H). Invalid voxels carry sentinel coordinates (-1, -1).
    """

    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray
    valid: np.ndarray


def project_points(cam: CameraModel, points: np.ndarray):
    """Project (..., 3) world points; returns (u, v, depth) float64 arrays.

    No validity handling: u, v are meaningful only where depth > 0."""
    pts = np.asarray(points, dtype=np.float64)
    r = cam.cam_from_world[:3, :3]
    t = cam.cam_from_world[:3, 3]
    pc = pts @ r.T + t
    depth = pc[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cam.fx * pc[..., 0] / depth + cam.cx
        v = cam.fy * pc[..., 1] / depth + cam.cy
    return u, v, depth


def project_voxels(grid: VoxelGridSpec, cam: CameraModel) -> VoxelProjection:
    """Project every voxel centroid of `grid` into `cam`."""
    u, v, depth = project_points(cam, grid.centroids())
    in_front = depth > 0
    with np.errstate(invalid="ignore"):
        in_image = (u >= 0) & (u < cam.image_width) & (v >= 0) & (v < cam.image_height)
    valid = in_front & in_image
    u = np.where(in_front, u, -1.0)
    v = np.where(in_front, v, -1.0)
    return VoxelProjection(u=u, v=v, depth=depth, valid=valid)


def sample_bilinear(feature_map, u, v, valid=None):
    """Bilinearly sample an (H, W, C) map at pixel-center coordinates.

    Returns the zero vector where `valid` is false or where the 2x2 sample
    footprint is not contained in the image (sample points outside the
    convex hull of pixel centers, u outside [0.5, W-0.5] or v outside
    [0.5, H-0.5]). The map may be a numpy array or a torch tensor; sampling
    a torch map is differentiable in the map values.
    """
    h, w = int(feature_map.shape[0]), int(feature_map.shape[1])
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    px = u - 0.5
    py = v - 0.5
    inside = (px >= 0.0) & (px <= w - 1) & (py >= 0.0) & (py <= h - 1)
    if valid is not None:
        inside = inside & np.asarray(valid, dtype=bool)

    px = np.where(inside, px, 0.0)
    py = np.where(inside, py, 0.0)
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    # keep the +1 taps in range; their weight is 0 exactly when clipped away
    x0 = np.minimum(x0, w - 2) if w > 1 else np.zeros_like(x0)
    y0 = np.minimum(y0, h - 2) if h > 1 else np.zeros_like(y0)
    fx = px - x0
    fy = py - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)

    gate = inside.astype(np.float64)
    w00 = (1 - fx) * (1 - fy) * gate
    w01 = fx * (1 - fy) * gate
    w10 = (1 - fx) * fy * gate
    w11 = fx * fy * gate

    if isinstance(feature_map, np.ndarray):
        cast = lambda a: a[..., None]
    else:  # torch tensor: move weights to the map's dtype to avoid promotion
        import torch

        cast = lambda a: torch.from_numpy(np.ascontiguousarray(a)).to(feature_map.dtype)[..., None]

    return (
        feature_map[y0, x0] * cast(w00)
        + feature_map[y0, x1] * cast(w01)
        + feature_map[y1, x0] * cast(w10)
        + feature_map[y1, x1] * cast(w11)
    )


def lid_center(spec: DepthBinSpec, d_i):
    """Depth at continuous linear-increasing bin coordinate d_i:
    d_min + (d_max - d_min) / (D (D + 1)) * d_i (d_i + 1)."""
    if spec.mode != "lid":
        raise ValueError("lid_center requires a LID spec")
    d_i = np.asarray(d_i, dtype=np.float64)
    scale = (spec.d_max - spec.d_min) / (spec.n_bins * (spec.n_bins + 1))
    out = spec.d_min + scale * d_i * (d_i + 1.0)
    return float(out) if out.ndim == 0 else out


def lid_inverse(spec: DepthBinSpec, d_c):
    """Unique nonnegative bin coordinate with lid_center(coord) == d_c."""
    if spec.mode != "lid":
        raise ValueError("lid_inverse requires a LID spec")
    d_c = np.asarray(d_c, dtype=np.float64)
    tol = 1e-9 * max(1.0, abs(spec.d_max))
    if np.any(d_c < spec.d_min - tol) or np.any(d_c > spec.d_max + tol):
        raise ValueError(
            f"depth outside [{spec.d_min}, {spec.d_max}]: {d_c}"
        )
    d_c = np.clip(d_c, spec.d_min, spec.d_max)
    t = (d_c - spec.d_min) * spec.n_bins * (spec.n_bins + 1) / (spec.d_max - spec.d_min)
    out = 0.5 * (-1.0 + np.sqrt(1.0 + 4.0 * t))
    return float(out) if out.ndim == 0 else out


def bin_coordinate(spec: DepthBinSpec, depth):
    """Continuous bin coordinate of metric depth, in [0, D] on
    [d_min, d_max]; bin k's center sits at coordinate k + 0.5.

    Vectorized and non-raising: entries where the coordinate is undefined
    (depth <= 0 under SID, or below the LID parabola vertex) come back NaN.
    """
    depth = np.asarray(depth, dtype=np.float64)
    d = spec.n_bins
    if spec.mode == "ud":
        out = (depth - spec.d_min) / (spec.d_max - spec.d_min) * d
    elif spec.mode == "lid":
        t = (depth - spec.d_min) * d * (d + 1) / (spec.d_max - spec.d_min)
        with np.errstate(invalid="ignore"):
            out = 0.5 * (-1.0 + np.sqrt(1.0 + 4.0 * t))
    else:  # sid
        with np.errstate(divide="ignore", invalid="ignore"):
            out = d * np.log(depth / spec.d_min) / math.log(spec.d_max / spec.d_min)
        out = np.where(depth > 0, out, np.nan)
    return float(out) if out.ndim == 0 else out


def bin_centers(spec: DepthBinSpec) -> np.ndarray:
    """(D,) strictly increasing bin-center depths."""
    mid = np.arange(spec.n_bins, dtype=np.float64) + 0.5
    if spec.mode == "ud":
        return spec.d_min + mid * (spec.d_max - spec.d_min) / spec.n_bins
    if spec.mode == "lid":
        return lid_center(spec, mid)
    log_ratio = math.log(spec.d_max / spec.d_min)
    return spec.d_min * np.exp(mid / spec.n_bins * log_ratio)


def depth_to_bin(spec: DepthBinSpec, depth):
    """Index of the nearest bin center; clamps outside [d_min, d_max] and
    breaks exact ties toward the lower index. depth must be positive."""
    d = np.asarray(depth, dtype=np.float64)
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise ValueError("depth_to_bin requires finite positive depths")
    centers = bin_centers(spec)
    mids = 0.5 * (centers[:-1] + centers[1:])
    # first midpoint >= d; a depth exactly at a midpoint goes to the lower bin
    idx = np.searchsorted(mids, d, side="left")
    return int(idx) if idx.ndim == 0 else idx.astype(np.int64)
