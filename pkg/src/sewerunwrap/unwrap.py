"""Cylindrical unwrapping of fisheye frames by back-projection.

An unwrap is a regular grid on the pipe wall.  Array layout is
``pixels[row, col]`` with rows running along the pipe axis (global row index
``row0 + i`` sits at ``z = (row0 + i) * axial_resolution_m``) and columns
running around the circumference (``theta = theta0 + 2 pi j / W``).  Pixels
are square on the wall, so the axial resolution is the circumferential one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .geometry import CameraPose, FisheyeIntrinsics, PipeModel, project_camera


@dataclass(frozen=True)
class UnwrapGrid:
    circumference_samples: int
    radius_m: float
    row0: int = 0
    n_rows: int = 1
    theta0: float = np.pi / 2

    def __post_init__(self):
        if self.circumference_samples < 1:
            raise ValueError("circumference_samples must be >= 1")
        if self.n_rows < 1:
            raise ValueError("n_rows must be >= 1")

    @property
    def axial_resolution_m(self) -> float:
        return 2.0 * np.pi * self.radius_m / self.circumference_samples

    @property
    def z_range(self) -> tuple[float, float]:
        """Axial extent ``[z_start, z_end)`` covered by the rows."""
        res = self.axial_resolution_m
        return (self.row0 * res, (self.row0 + self.n_rows) * res)

    @property
    def z_values(self) -> np.ndarray:
        return (self.row0 + np.arange(self.n_rows)) * self.axial_resolution_m

    @property
    def thetas(self) -> np.ndarray:
        W = self.circumference_samples
        return self.theta0 + 2.0 * np.pi * np.arange(W) / W

    @classmethod
    def covering(cls, W, radius_m, z_start, z_end, theta0=np.pi / 2):
        """Smallest grid (snapped to the global row lattice) covering ``[z_start, z_end]``."""
        res = 2.0 * np.pi * radius_m / W
        r0 = int(np.floor(z_start / res + 1e-9))
        r1 = int(np.ceil(z_end / res - 1e-9))
        return cls(W, radius_m, r0, max(r1 - r0, 1), theta0)

    def shifted(self, rows: int) -> "UnwrapGrid":
        return UnwrapGrid(self.circumference_samples, self.radius_m, self.row0 + rows,
                          self.n_rows, self.theta0)


@dataclass
class UnwrapStrip:
    pixels: np.ndarray  # (n_rows, W) or (n_rows, W, C), float
    grid: UnwrapGrid
    frame_index: int
    valid_mask: np.ndarray  # (n_rows, W) bool


def sample_points(grid: UnwrapGrid, pipe: PipeModel) -> np.ndarray:
    """Wall points of the grid, row-major, shape ``(n_rows * W, 3)``."""
    r = pipe.radius_m
    th = grid.thetas
    z = grid.z_values
    pts = np.empty((len(z), len(th), 3))
    pts[..., 0] = r * np.cos(th)[None, :]
    pts[..., 1] = r * np.sin(th)[None, :]
    pts[..., 2] = z[:, None]
    return pts.reshape(-1, 3)


def backproject(grid: UnwrapGrid, pose: CameraPose, intr: FisheyeIntrinsics, pipe: PipeModel):
    """Fisheye pixel positions of all grid samples and their validity.

    Returns ``(px, valid)`` with ``px`` of shape ``(n_rows, W, 2)``.
    """
    pts = sample_points(grid, pipe)
    px, alpha = project_camera(pose.to_camera(pts), intr, check=False)
    uv = px - np.asarray(intr.center_px)
    inside = np.hypot(uv[:, 0], uv[:, 1]) <= intr.max_radius_px
    valid = (alpha <= intr.max_angle_rad) & inside
    w, h = intr.image_size_px
    valid &= (px[:, 0] >= 0) & (px[:, 0] <= w - 1) & (px[:, 1] >= 0) & (px[:, 1] <= h - 1)
    shape = (grid.n_rows, grid.circumference_samples)
    return px.reshape(shape + (2,)), valid.reshape(shape)


def bilinear(image, px) -> np.ndarray:
    """Bilinear sampling of ``image`` (H, W[, C]) at pixel positions ``px[..., (x, y)]``."""
    img = np.asarray(image, dtype=float)
    coords = [px[..., 1].ravel(), px[..., 0].ravel()]
    if img.ndim == 2:
        out = map_coordinates(img, coords, order=1, mode="nearest")
        return out.reshape(px.shape[:-1])
    chans = [map_coordinates(img[..., c], coords, order=1, mode="nearest") for c in range(img.shape[2])]
    return np.stack(chans, axis=-1).reshape(px.shape[:-1] + (img.shape[2],))


def unwrap_frame(image, pose: CameraPose, intr: FisheyeIntrinsics, pipe: PipeModel,
                 grid: UnwrapGrid, frame_index: int = 0) -> UnwrapStrip:
    """Back-project the grid into ``image`` and interpolate colours.

    Samples falling outside the image circle or field of view are marked
    invalid and set to zero.
    """
    px, valid = backproject(grid, pose, intr, pipe)
    vals = bilinear(image, px)
    if vals.ndim == 3:
        vals = np.where(valid[..., None], vals, 0.0)
    else:
        vals = np.where(valid, vals, 0.0)
    return UnwrapStrip(vals, grid, frame_index, valid)


def axial_sampling_ratio(z_rel, pipe: PipeModel, intr: FisheyeIntrinsics, W: int) -> np.ndarray:
    """Fisheye pixels per unwrap pixel along the axis for an on-axis camera.

    ``z_rel`` is the axial distance ahead of the camera.  Resolution falls off
    with distance, so the usable strip is bounded where this ratio drops below
    a threshold.
    """
    z_rel = np.asarray(z_rel, dtype=float)
    alpha = np.arctan2(pipe.radius_m, z_rel)
    px_per_rad = intr.circle_diameter_px / intr.fov_rad
    # dz/dalpha = -r / sin(alpha)^2
    px_per_m = px_per_rad * np.sin(alpha) ** 2 / pipe.radius_m
    unwrap_px_per_m = W / (2.0 * np.pi * pipe.radius_m)
    return px_per_m / unwrap_px_per_m


def frame_grid(pose: CameraPose, pipe: PipeModel, intr: FisheyeIntrinsics, W: int,
               spacing_m: float = 0.05, overlap_m: float = 0.03, near_m: float = 0.01,
               theta0: float = np.pi / 2, min_ratio: float = 0.5) -> UnwrapGrid:
    """Unwrap grid for one frame: ``[z + near, z + near + spacing + overlap]``.

    Raises ``ValueError`` if the far end falls below ``min_ratio`` fisheye
    pixels per unwrap pixel.
    """
    far = near_m + spacing_m + overlap_m
    ratio = float(axial_sampling_ratio(far, pipe, intr, W))
    if ratio < min_ratio:
        raise ValueError(
            f"strip far end {far:.3f} m ahead has {ratio:.2f} image px per unwrap px < {min_ratio}"
        )
    z = float(pose.t[2])
    return UnwrapGrid.covering(W, pipe.radius_m, z + near_m, z + far, theta0)
