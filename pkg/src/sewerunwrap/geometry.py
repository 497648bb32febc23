"""Equidistant fisheye lens model and ray/cylinder geometry.

Conventions
-----------
* Pixel coordinates are ``(x, y)`` = ``(column, row)``.
* Camera frame: x along image columns, y along image rows, z along the optical
  axis toward the scene.
* World frame: z along the pipe axis; the pipe wall is ``x**2 + y**2 = r**2``.
* ``CameraPose.R`` maps camera-frame vectors to the world frame.

The line-of-sight vector returned by :func:`ray_direction` mixes pixel units
with ``d / tan(alpha)``; its length carries no meaning, only its direction is
used when casting rays.

All functions accept single points or stacked arrays (trailing axis holds the
coordinates) and never modify their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


_EYE = np.eye(3)


class GeometryError(ValueError):
    """Raised for inputs outside the domain of a geometric operation."""


@dataclass(frozen=True)
class FisheyeIntrinsics:
    """Circular fisheye lens: field of view, image-circle diameter and center."""

    fov_deg: float
    circle_diameter_px: float
    center_px: tuple[float, float]
    image_size_px: tuple[int, int]  # (width, height)

    def __post_init__(self):
        if not 0.0 < self.fov_deg < 360.0:
            raise GeometryError(f"fov_deg must be in (0, 360), got {self.fov_deg}")
        if not self.circle_diameter_px > 0:
            raise GeometryError(f"circle_diameter_px must be > 0, got {self.circle_diameter_px}")
        w, h = self.image_size_px
        cx, cy = self.center_px
        if not (0 <= cx <= w - 1 and 0 <= cy <= h - 1):
            raise GeometryError(f"center_px {self.center_px} outside image of size {self.image_size_px}")

    @property
    def fov_rad(self) -> float:
        return np.deg2rad(self.fov_deg)

    @property
    def max_radius_px(self) -> float:
        return 0.5 * self.circle_diameter_px

    @property
    def max_angle_rad(self) -> float:
        return 0.5 * self.fov_rad


@dataclass(frozen=True)
class PipeModel:
    """Ideal cylinder of known radius whose axis is the world z-axis."""

    radius_m: float
    length_m: float = 1.0

    def __post_init__(self):
        if not self.radius_m > 0:
            raise GeometryError(f"radius_m must be > 0, got {self.radius_m}")
        if not self.length_m > 0:
            raise GeometryError(f"length_m must be > 0, got {self.length_m}")


@dataclass(frozen=True)
class CameraPose:
    """Camera position ``t`` and camera-to-world rotation ``R``."""

    t: np.ndarray
    R: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        t = np.array(self.t, dtype=float).reshape(3)
        R = np.array(self.R, dtype=float).reshape(3, 3)
        t.flags.writeable = False
        R.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "R", R)
        if not is_rotation(R, tol=1e-9):
            raise GeometryError("R is not a proper rotation matrix (tolerance 1e-9)")

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return np.array_equal(self.t, other.t) and np.array_equal(self.R, other.R)

    __hash__ = None

    def to_world(self, v_cam: np.ndarray) -> np.ndarray:
        """Rotate camera-frame direction(s) into the world frame."""
        return np.asarray(v_cam, dtype=float) @ self.R.T

    def to_camera(self, p_world: np.ndarray) -> np.ndarray:
        """Transform world point(s) into the camera frame."""
        return (np.asarray(p_world, dtype=float) - self.t) @ self.R


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    dir: np.ndarray

    def __post_init__(self):
        o = np.array(self.origin, dtype=float).reshape(3)
        d = np.array(self.dir, dtype=float).reshape(3)
        if not np.any(d):
            raise GeometryError("ray direction must be nonzero")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "dir", d)


def is_rotation(R: np.ndarray, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    ortho = np.abs(R.T @ R - _EYE).max() <= tol
    det = R[0] @ np.cross(R[1], R[2])
    return bool(ortho and abs(det - 1.0) <= tol)


def angle_from_radius(d, intr: FisheyeIntrinsics):
    """Incidence angle (radians) of an image point ``d`` pixels from the center.

    Equidistant law: ``alpha / d = fov / diameter``.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d < 0) or np.any(d > intr.max_radius_px):
        raise GeometryError(
            f"radius outside image circle [0, {intr.max_radius_px}]: {d}"
        )
    alpha = d * (intr.fov_rad / intr.circle_diameter_px)
    return alpha if alpha.ndim else float(alpha)


def radius_from_angle(alpha, intr: FisheyeIntrinsics):
    """Inverse of :func:`angle_from_radius`."""
    alpha = np.asarray(alpha, dtype=float)
    d = alpha * (intr.circle_diameter_px / intr.fov_rad)
    return d if d.ndim else float(d)


def ray_direction(feature_px, intr: FisheyeIntrinsics) -> np.ndarray:
    """Camera-frame line-of-sight vector ``[u, v, d / tan(alpha)]``.

    ``(u, v)`` is the pixel offset from the image-circle center and
    ``d = hypot(u, v)``; ``d`` must be strictly positive.
    """
    p = np.asarray(feature_px, dtype=float)
    uv = p - np.asarray(intr.center_px, dtype=float)
    d = np.hypot(uv[..., 0], uv[..., 1])
    if np.any(d == 0):
        raise GeometryError("line of sight undefined at the optical center (d = 0)")
    alpha = angle_from_radius(d, intr)
    z = d * np.cos(alpha) / np.sin(alpha)
    return np.concatenate([uv, np.asarray(z)[..., None]], axis=-1)


def pixel_rays(pixels, intr: FisheyeIntrinsics) -> np.ndarray:
    """Like :func:`ray_direction` but tolerant of the optical center.

    Pixels at ``d = 0`` get the optical axis ``[0, 0, 1]``.  Pixels outside the
    image circle are not rejected; callers mask them with :func:`in_circle`.
    """
    p = np.asarray(pixels, dtype=float)
    uv = p - np.asarray(intr.center_px, dtype=float)
    d = np.hypot(uv[..., 0], uv[..., 1])
    alpha = d * (intr.fov_rad / intr.circle_diameter_px)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(d > 0, d * np.cos(alpha) / np.sin(alpha), 1.0)
    return np.concatenate([uv, z[..., None]], axis=-1)


def in_circle(pixels, intr: FisheyeIntrinsics) -> np.ndarray:
    p = np.asarray(pixels, dtype=float)
    uv = p - np.asarray(intr.center_px, dtype=float)
    return np.hypot(uv[..., 0], uv[..., 1]) <= intr.max_radius_px


def project_camera(p_cam, intr: FisheyeIntrinsics, check: bool = True):
    """Project camera-frame point(s) to pixels; returns ``(pixels, alpha)``."""
    p = np.asarray(p_cam, dtype=float)
    rho = np.hypot(p[..., 0], p[..., 1])
    alpha = np.arctan2(rho, p[..., 2])
    if check and np.any(alpha > intr.max_angle_rad):
        raise GeometryError("point outside the lens field of view")
    d = alpha * (intr.circle_diameter_px / intr.fov_rad)
    # azimuth preserved; rho == 0 maps to the center regardless of the ratio
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(rho > 0, d / rho, 0.0)
    uv = p[..., :2] * scale[..., None]
    return uv + np.asarray(intr.center_px, dtype=float), alpha


def project(point_world, pose: CameraPose, intr: FisheyeIntrinsics) -> np.ndarray:
    """Project world point(s) into the fisheye image of a camera at ``pose``."""
    px, _ = project_camera(pose.to_camera(point_world), intr, check=True)
    return px


def intersect_cylinder_arrays(origin, direction, radius: float):
    """Vectorised ray/cylinder intersection.

    Returns ``(lam, points, ok)``; ``ok`` is False where the ray is parallel
    to the axis or the discriminant is negative.  ``lam`` is the smallest
    non-negative root.
    """
    o = np.asarray(origin, dtype=float)
    g = np.asarray(direction, dtype=float)
    o, g = np.broadcast_arrays(o, g)
    a = g[..., 0] ** 2 + g[..., 1] ** 2
    b = 2.0 * (o[..., 0] * g[..., 0] + o[..., 1] * g[..., 1])
    c = o[..., 0] ** 2 + o[..., 1] ** 2 - radius**2
    disc = b * b - 4.0 * a * c
    ok = (a > 0) & (disc >= 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    a_safe = np.where(ok, a, 1.0)
    # numerically stable pair of roots
    q = -0.5 * (b + np.copysign(sq, b))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = q / a_safe
        r2 = np.where(q != 0, c / q, 0.0)
    lo, hi = np.minimum(r1, r2), np.maximum(r1, r2)
    lam = np.where(lo >= 0, lo, hi)
    ok &= lam >= 0
    lam = np.where(ok, lam, np.nan)
    return lam, o + lam[..., None] * g, ok


def intersect_cylinder(ray: Ray, pipe: PipeModel):
    """Intersection of a ray starting inside the pipe with the pipe wall.

    Returns ``(lam, point)`` with ``point = origin + lam * dir``.
    """
    ox, oy = ray.origin[0], ray.origin[1]
    if np.hypot(ox, oy) >= pipe.radius_m:
        raise GeometryError("ray origin must lie strictly inside the cylinder")
    if ray.dir[0] == 0 and ray.dir[1] == 0:
        raise GeometryError("ray parallel to the pipe axis never meets the wall")
    lam, point, ok = intersect_cylinder_arrays(ray.origin, ray.dir, pipe.radius_m)
    if not ok:
        raise GeometryError("ray does not intersect the cylinder")
    return float(lam), point


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Closest rotation matrix in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


def rotation_angle(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic angle (radians) between two rotations."""
    c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    # arccos is ill-conditioned near 0; use the skew part as well
    s = np.linalg.norm(np.array([
        (Ra.T @ Rb)[2, 1] - (Ra.T @ Rb)[1, 2],
        (Ra.T @ Rb)[0, 2] - (Ra.T @ Rb)[2, 0],
        (Ra.T @ Rb)[1, 0] - (Ra.T @ Rb)[0, 1],
    ])) / 2.0
    return float(np.arctan2(s, c))
