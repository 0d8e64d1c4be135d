"""Camera model, projections, differentiable depth crops and collision counts.

All 3D quantities live in the camera frame: x right, y down, z forward
(metres).  Pixel coordinates follow u = fx * x / z + cx, v = fy * y / z + cy.
Depth maps store z values, not ray lengths, so backprojection is
x = (u - cx) * d / fx, y = (v - cy) * d / fy, z = d.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .errors import BehindCameraError, ValidationError
from .motion import Motion
from .skeleton import SkeletonGraph


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("focal lengths must be positive")
        if not (0 < self.cx < self.width) or not (0 < self.cy < self.height):
            raise ValidationError("principal point must fall inside the image")

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.fx, self.fy, self.cx, self.cy, self.width, self.height], dtype=np.float64
        )

    @classmethod
    def from_array(cls, values) -> "CameraIntrinsics":
        fx, fy, cx, cy, w, h = (float(v) for v in np.asarray(values).ravel())
        return cls(fx=fx, fy=fy, cx=cx, cy=cy, width=int(round(w)), height=int(round(h)))


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel z values (metres) with a validity mask."""

    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValidationError(f"depth values must be (H, W), got {values.shape}")
        mask = self.mask
        if mask is None:
            mask = np.isfinite(values) & (values > 0)
        else:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != values.shape:
                raise ValidationError("mask shape must match depth values")
        if np.any(values[mask] <= 0) or not np.isfinite(values[mask]).all():
            raise ValidationError("valid depth entries must be positive and finite")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(pts).all():
            raise ValidationError("point cloud contains non-finite points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class Motion2D:
    """Projected joint pixels, (2, J, T)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[0] != 2:
            raise ValidationError(f"projected motion must be (2, J, T), got {px.shape}")
        if not np.isfinite(px).all():
            raise ValidationError("projected motion contains non-finite values")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)


def project_points(cam: CameraIntrinsics, points) -> np.ndarray:
    """Pinhole projection of (..., 3) points to (..., 2) pixels."""
    p = np.asarray(points, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise BehindCameraError(f"points must have positive depth, min z = {z.min():.6g}")
    u = cam.fx * p[..., 0] / z + cam.cx
    v = cam.fy * p[..., 1] / z + cam.cy
    return np.stack([u, v], axis=-1)


def project_point(cam: CameraIntrinsics, point) -> np.ndarray:
    return project_points(cam, np.asarray(point, dtype=np.float64).reshape(3))


def project_motion(cam: CameraIntrinsics, motion) -> Motion2D:
    """Project a (3, J, T) motion; rejects any joint at or behind the camera."""
    x = motion.joints if isinstance(motion, Motion) else np.asarray(motion, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != 3:
        raise ValidationError(f"motion must be (3, J, T), got {x.shape}")
    z = x[2]
    if np.any(z <= 0):
        bad = np.argwhere(z <= 0)
        listed = ", ".join(f"(j={j}, t={t})" for j, t in bad[:8])
        more = "" if bad.shape[0] <= 8 else f" and {bad.shape[0] - 8} more"
        raise BehindCameraError(f"non-positive depth at {listed}{more}")
    u = cam.fx * x[0] / z + cam.cx
    v = cam.fy * x[1] / z + cam.cy
    return Motion2D(pixels=np.stack([u, v]))


def backproject_depth(cam: CameraIntrinsics, depth: DepthMap, stride: int = 1) -> PointCloud:
    """Lift valid depth pixels on a stride grid into camera-frame points."""
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    h, w = depth.shape
    vv, uu = np.meshgrid(
        np.arange(0, h, stride, dtype=np.float64),
        np.arange(0, w, stride, dtype=np.float64),
        indexing="ij",
    )
    d = depth.values[::stride, ::stride]
    m = depth.mask[::stride, ::stride]
    x = (uu - cam.cx) * d / cam.fx
    y = (vv - cam.cy) * d / cam.fy
    pts = np.stack([x[m], y[m], d[m]], axis=-1)
    return PointCloud(points=pts)


def normalize_pixels(pixels, cam: CameraIntrinsics):
    """Map pixel coordinates into [-1, 1] along each image axis."""
    scale_u = 2.0 / (cam.width - 1)
    scale_v = 2.0 / (cam.height - 1)
    if isinstance(pixels, torch.Tensor):
        u = pixels[:, 0] * scale_u - 1.0
        v = pixels[:, 1] * scale_v - 1.0
        return torch.stack([u, v], dim=1)
    px = np.asarray(pixels, dtype=np.float64)
    return np.stack([px[0] * scale_u - 1.0, px[1] * scale_v - 1.0])


# --------------------------------------------------------------------------
# Differentiable relative-depth crops
# --------------------------------------------------------------------------

def relative_depth_crops(
    depth: torch.Tensor,
    fx,
    fy,
    cx,
    cy,
    width: int,
    height: int,
    roots: torch.Tensor,
    crop_height: int,
    crop_width: int,
) -> torch.Tensor:
    """Depth windows around projected roots, resampled and depth-subtracted.

    `depth` is (B, H, W), `roots` is (B, K, 3); intrinsics may be scalars or
    (B,) tensors.  The source footprint spans (crop_height / z, crop_width / z)
    pixels around each projected root, is bilinearly resampled to
    (crop_height, crop_width) with edge clamping, and the root depth z is
    subtracted from every sample.  Fully differentiable in `roots`.
    """
    if depth.dim() != 3:
        raise ValidationError(f"depth must be (B, H, W), got {tuple(depth.shape)}")
    if roots.dim() != 3 or roots.shape[-1] != 3:
        raise ValidationError(f"roots must be (B, K, 3), got {tuple(roots.shape)}")
    b, k = roots.shape[0], roots.shape[1]
    z = roots[..., 2]
    if torch.any(z <= 0):
        raise ValidationError(f"crop centres must have positive depth, min z = {z.min():.6g}")

    def _expand(value):
        t = torch.as_tensor(value, dtype=depth.dtype, device=depth.device)
        return t.reshape(-1, 1) if t.dim() > 0 else t.reshape(1, 1)

    fx_t, fy_t, cx_t, cy_t = _expand(fx), _expand(fy), _expand(cx), _expand(cy)
    u0 = fx_t * roots[..., 0] / z + cx_t
    v0 = fy_t * roots[..., 1] / z + cy_t

    dj = torch.arange(crop_width, dtype=depth.dtype, device=depth.device) - (crop_width - 1) / 2.0
    di = torch.arange(crop_height, dtype=depth.dtype, device=depth.device) - (crop_height - 1) / 2.0
    su = u0[..., None, None] + dj[None, None, None, :] / z[..., None, None]
    sv = v0[..., None, None] + di[None, None, :, None] / z[..., None, None]
    gx = 2.0 * su / (width - 1) - 1.0
    gy = 2.0 * sv / (height - 1) - 1.0
    grid = torch.stack(torch.broadcast_tensors(gx, gy), dim=-1)  # (B, K, Hc, Wc, 2)

    sampled = F.grid_sample(
        depth[:, None],
        grid.reshape(b, k * crop_height, crop_width, 2),
        mode="bilinear",
        padding_mode="border",
        align_corners=True,
    )
    crops = sampled.reshape(b, k, crop_height, crop_width)
    return crops - z[..., None, None]


def relative_depth_crop(
    depth: DepthMap,
    cam: CameraIntrinsics,
    root,
    crop_height: int,
    crop_width: int,
) -> np.ndarray:
    """Single-crop convenience wrapper returning a numpy (Hc, Wc) array."""
    root_t = torch.as_tensor(np.asarray(root, dtype=np.float64).reshape(1, 1, 3))
    depth_t = torch.from_numpy(depth.values.copy())
    with torch.no_grad():
        crop = relative_depth_crops(
            depth_t[None], cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height,
            root_t, crop_height, crop_width,
        )
    return crop[0, 0].numpy()


def project_motion_torch(x: torch.Tensor, fx, fy, cx, cy) -> torch.Tensor:
    """Differentiable (N, 3, J, T) -> (N, 2, J, T) pinhole projection."""
    z = x[:, 2]
    if torch.any(z <= 0):
        raise BehindCameraError(f"non-positive depth in batch, min z = {z.min():.6g}")

    def _expand(value):
        t = torch.as_tensor(value, dtype=x.dtype, device=x.device)
        return t.reshape(-1, 1, 1) if t.dim() > 0 else t.reshape(1, 1, 1)

    u = _expand(fx) * x[:, 0] / z + _expand(cx)
    v = _expand(fy) * x[:, 1] / z + _expand(cy)
    return torch.stack([u, v], dim=1)


# --------------------------------------------------------------------------
# Cylinder collision counting
# --------------------------------------------------------------------------

def point_in_cylinder_count(a, b, radius: float, cloud: PointCloud) -> int:
    """Count cloud points inside the capped cylinder around segment a-b.

    A point p is inside when its projection parameter s = (p-a).(b-a)/|b-a|^2
    lies in [0, 1] and its perpendicular distance to the segment is <= radius.
    A degenerate segment (a == b) counts the sphere of the same radius.
    """
    if radius <= 0:
        raise ValidationError("radius must be positive")
    pts = cloud.points
    if pts.shape[0] == 0:
        return 0
    a = np.asarray(a, dtype=np.float64).reshape(3)
    b = np.asarray(b, dtype=np.float64).reshape(3)
    d = b - a
    length_sq = float(d @ d)
    rel = pts - a
    if length_sq == 0.0:
        return int(np.count_nonzero(np.einsum("ij,ij->i", rel, rel) <= radius * radius))
    s = rel @ d / length_sq
    perp = rel - s[:, None] * d
    dist_sq = np.einsum("ij,ij->i", perp, perp)
    return int(np.count_nonzero((s >= 0.0) & (s <= 1.0) & (dist_sq <= radius * radius)))


def motion_collision_count(
    motion,
    graph: SkeletonGraph,
    radius: float,
    cloud: PointCloud,
    unique_points: bool = False,
) -> int:
    """Sum cylinder hits over every bone at every frame of a motion.

    By default a cloud point inside several bone cylinders is counted once per
    (bone, frame) incidence; `unique_points` instead counts distinct points.
    """
    if radius <= 0:
        raise ValidationError("radius must be positive")
    x = motion.joints if isinstance(motion, Motion) else np.asarray(motion, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != 3:
        raise ValidationError(f"motion must be (3, J, T), got {x.shape}")
    if x.shape[1] != graph.joint_count:
        raise ValidationError("motion joint count does not match the skeleton")
    pts = cloud.points
    if pts.shape[0] == 0:
        return 0

    # Cheap prefilter: only points near the motion's bounding box can collide.
    lo = x.min(axis=(1, 2)) - radius - 1e-9
    hi = x.max(axis=(1, 2)) + radius + 1e-9
    near = np.all((pts >= lo) & (pts <= hi), axis=1)
    pts = pts[near]
    if pts.shape[0] == 0:
        return 0

    bones = np.asarray(graph.bones)
    starts = x[:, bones[:, 0], :].reshape(3, -1).T  # (bones * T, 3)
    ends = x[:, bones[:, 1], :].reshape(3, -1).T
    seg = ends - starts
    length_sq = np.einsum("ij,ij->i", seg, seg)
    r_sq = radius * radius

    total = 0
    hit_any = np.zeros(pts.shape[0], dtype=bool) if unique_points else None
    chunk = 128
    for k in range(0, starts.shape[0], chunk):
        a = starts[k : k + chunk]
        d = seg[k : k + chunk]
        lsq = length_sq[k : k + chunk]
        rel = pts[None, :, :] - a[:, None, :]  # (chunk, N, 3)
        safe = np.where(lsq > 0, lsq, 1.0)
        s = np.einsum("mnj,mj->mn", rel, d) / safe[:, None]
        perp = rel - s[..., None] * d[:, None, :]
        dist_sq = np.einsum("mnj,mnj->mn", perp, perp)
        inside = (s >= 0.0) & (s <= 1.0) & (dist_sq <= r_sq)
        degenerate = lsq == 0
        if degenerate.any():
            sphere = np.einsum("mnj,mnj->mn", rel, rel) <= r_sq
            inside[degenerate] = sphere[degenerate]
        if unique_points:
            hit_any |= inside.any(axis=0)
        else:
            total += int(inside.sum())
    return int(hit_any.sum()) if unique_points else total
