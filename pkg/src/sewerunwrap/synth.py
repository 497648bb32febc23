"""Synthetic pipe scenes with known ground truth.

Fisheye frames are rendered by casting one line of sight per pixel through
:mod:`sewerunwrap.geometry`, intersecting it with the pipe wall and sampling a
procedural wall texture.  The same texture sampled directly on an unwrap
grid gives the ideal unwrap that the pipeline output is compared against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import MatchSet
from .geometry import (
    CameraPose,
    FisheyeIntrinsics,
    GeometryError,
    PipeModel,
    intersect_cylinder_arrays,
    pixel_rays,
    project_camera,
)
from .metrics import LabelClass
from .pose import Trajectory, with_yaw
from .unwrap import UnwrapGrid, UnwrapStrip, sample_points


@dataclass(frozen=True)
class Texture:
    """Procedural wall texture, a gray level in [0, 255] at ``(theta, z)``.

    ``kind`` is ``"checker"``, ``"value-noise"`` or ``"image"``.  Value noise
    is seeded lattice noise with bilinear interpolation; ``cell_m`` is the
    lattice spacing on the wall.  Checker squares have edges softened over
    ``edge_m`` so that point sampling does not alias.
    """

    kind: str = "value-noise"
    cell_m: float = 0.006
    seed: int = 0
    low: float = 50.0
    high: float = 210.0
    checker_m: float = 0.02
    edge_m: float = 0.002
    image: np.ndarray | None = None  # (n_z, n_theta) for kind == "image"
    image_z_m: float = 1.0

    def sample(self, theta, z, radius):
        theta = np.asarray(theta, dtype=float)
        z = np.asarray(z, dtype=float)
        s = np.mod(theta, 2.0 * np.pi) * radius  # arc length
        if self.kind == "checker":
            return self._checker(s, z, radius)
        if self.kind == "value-noise":
            return self._noise(s, z, radius)
        if self.kind == "image":
            return self._image(theta, z)
        raise ValueError(f"unknown texture kind {self.kind!r}")

    def _checker(self, s, z, radius):
        circ = 2.0 * np.pi * radius
        n = max(2, 2 * int(round(circ / self.checker_m / 2)))  # even count closes the ring
        period = circ / n
        fs = np.sin(np.pi * s / period)
        fz = np.sin(np.pi * z / self.checker_m)
        ks = np.pi * self.edge_m / period
        kz = np.pi * self.edge_m / self.checker_m
        v = np.tanh(fs / ks) * np.tanh(fz / kz)
        return 0.5 * (self.low + self.high) + 0.5 * (self.high - self.low) * v

    def _noise(self, s, z, radius):
        circ = 2.0 * np.pi * radius
        n_s = max(1, int(round(circ / self.cell_m)))
        cell_s = circ / n_s  # integer number of cells around the ring
        gs = s / cell_s
        gz = z / self.cell_m
        i0 = np.floor(gs).astype(np.int64)
        j0 = np.floor(gz).astype(np.int64)
        fs, fz = gs - i0, gz - j0

        def lattice(i, j):
            return _hash_uniform(np.mod(i, n_s), j, self.seed)

        v = (
            lattice(i0, j0) * (1 - fs) * (1 - fz)
            + lattice(i0 + 1, j0) * fs * (1 - fz)
            + lattice(i0, j0 + 1) * (1 - fs) * fz
            + lattice(i0 + 1, j0 + 1) * fs * fz
        )
        return self.low + (self.high - self.low) * v

    def _image(self, theta, z):
        img = np.asarray(self.image, dtype=float)
        n_z, n_t = img.shape
        ct = np.mod(theta, 2.0 * np.pi) / (2.0 * np.pi) * n_t
        cz = z / self.image_z_m * n_z
        from scipy.ndimage import map_coordinates
        return map_coordinates(img, [cz.ravel(), ct.ravel()], order=1, mode="grid-wrap").reshape(theta.shape)


def _hash_uniform(i, j, seed):
    """Deterministic uniform [0, 1) value per integer lattice node."""
    x = (np.asarray(i, dtype=np.uint64) * np.uint64(0x9E3779B1)
         ^ (np.asarray(j, dtype=np.int64).astype(np.uint64) * np.uint64(0x85EBCA77))
         ^ np.uint64((seed * 0xC2B2AE3D + 0x27D4EB2F) & 0xFFFFFFFFFFFFFFFF))
    # splitmix64 finaliser
    x = x ^ (x >> np.uint64(30))
    x = x * np.uint64(0xBF58476D1CE4E5B9)
    x = x ^ (x >> np.uint64(27))
    x = x * np.uint64(0x94D049BB133111EB)
    x = x ^ (x >> np.uint64(31))
    return (x >> np.uint64(11)).astype(np.float64) / float(1 << 53)


@dataclass(frozen=True)
class Decal:
    """Rectangular defect patch on the wall, painted with a flat gray level."""

    theta: float  # center angle, radians
    z: float  # center axial position, m
    extent: tuple[float, float]  # (arc length, axial length), m
    label: int
    gray: float = 20.0

    def contains(self, theta, z, radius):
        dth = np.angle(np.exp(1j * (np.asarray(theta) - self.theta)))
        return (np.abs(dth * radius) <= self.extent[0] / 2) & (np.abs(np.asarray(z) - self.z) <= self.extent[1] / 2)


@dataclass(frozen=True)
class Lighting:
    """Falloff ``max(0, 1 - slope * distance)`` applied multiplicatively."""

    slope_per_m: float = 0.0

    def factor(self, distance):
        return np.maximum(0.0, 1.0 - self.slope_per_m * np.asarray(distance))


@dataclass(frozen=True)
class SyntheticScene:
    pipe: PipeModel
    texture: Texture = field(default_factory=Texture)
    lighting: Lighting = field(default_factory=Lighting)
    decals: tuple[Decal, ...] = ()
    z_start_m: float = -0.1

    def __post_init__(self):
        for d in self.decals:
            lo = d.z - d.extent[1] / 2
            hi = d.z + d.extent[1] / 2
            if lo < self.z_start_m or hi > self.z_start_m + self.pipe.length_m:
                raise ValueError(f"decal {d} extends beyond the pipe")

    def wall_gray(self, theta, z):
        g = self.texture.sample(theta, z, self.pipe.radius_m)
        for d in self.decals:
            g = np.where(d.contains(theta, z, self.pipe.radius_m), d.gray, g)
        return g

    def wall_label(self, theta, z):
        lab = np.zeros(np.broadcast(np.asarray(theta), np.asarray(z)).shape, dtype=np.uint8)
        for d in self.decals:
            lab[d.contains(theta, z, self.pipe.radius_m)] = d.label
        return lab


@dataclass
class GroundTruth:
    trajectory: Trajectory
    ideal_unwrap: UnwrapStrip
    label_mask: np.ndarray


def default_intrinsics() -> FisheyeIntrinsics:
    return FisheyeIntrinsics(185.0, 780.0, (399.5, 399.5), (800, 800))


def default_scene(seed: int = 0, radius_m: float = 0.125, length_m: float = 1.3) -> SyntheticScene:
    return SyntheticScene(PipeModel(radius_m, length_m), Texture(seed=seed))


def render_frame(scene: SyntheticScene, pose: CameraPose, intr: FisheyeIntrinsics,
                 supersample: int = 1) -> np.ndarray:
    """Render one 8-bit-range float gray frame; pixels outside the circle are 0."""
    r = scene.pipe.radius_m
    if np.hypot(pose.t[0], pose.t[1]) >= r:
        raise GeometryError("camera pose lies outside the pipe")
    w, h = intr.image_size_px
    acc = np.zeros((h, w))
    offs = (np.arange(supersample) + 0.5) / supersample - 0.5
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    for oy in offs:
        for ox in offs:
            px = np.stack([xx + ox, yy + oy], axis=-1)
            dirs = pixel_rays(px, intr) @ pose.R.T
            lam, pts, ok = intersect_cylinder_arrays(pose.t, dirs, r)
            theta = np.arctan2(pts[..., 1], pts[..., 0])
            g = scene.wall_gray(np.where(ok, theta, 0.0), np.where(ok, pts[..., 2], 0.0))
            if scene.lighting.slope_per_m:
                dist = lam * np.linalg.norm(dirs, axis=-1)
                g = g * scene.lighting.factor(np.where(ok, dist, 0.0))
            acc += np.where(ok, g, 0.0)
    acc /= supersample**2
    uv = np.stack([xx - intr.center_px[0], yy - intr.center_px[1]], axis=-1)
    acc[np.hypot(uv[..., 0], uv[..., 1]) > intr.max_radius_px] = 0.0
    return acc


def ideal_unwrap(scene: SyntheticScene, grid: UnwrapGrid) -> UnwrapStrip:
    """Texture sampled directly at the grid points (no lighting)."""
    th = grid.thetas[None, :]
    z = grid.z_values[:, None]
    th, z = np.broadcast_arrays(th, z)
    g = scene.wall_gray(th, z)
    return UnwrapStrip(g, grid, -1, np.ones(g.shape, dtype=bool))


def render_sequence(scene: SyntheticScene, trajectory: Trajectory, intr: FisheyeIntrinsics,
                    W: int = 360, theta0: float = np.pi / 2, supersample: int = 1):
    """Render all frames and the ground truth.

    The ideal unwrap and label mask cover the scene's pipe extent on the
    global unwrap lattice of ``W`` columns.
    """
    frames = [render_frame(scene, p, intr, supersample) for p in trajectory.poses]
    grid = UnwrapGrid.covering(W, scene.pipe.radius_m, scene.z_start_m,
                               scene.z_start_m + scene.pipe.length_m, theta0)
    ideal = ideal_unwrap(scene, grid)
    th, z = np.broadcast_arrays(grid.thetas[None, :], grid.z_values[:, None])
    labels = scene.wall_label(th, z)
    return frames, GroundTruth(trajectory, ideal, labels)


def perturbed_trajectory(frames: int, spacing_m: float = 0.05, jitter=(0.0, 0.0), seed: int = 0,
                         radius_m: float = 0.125, margin_m: float | None = None) -> Trajectory:
    """Nominal on-axis motion with Gaussian position and orientation jitter.

    ``jitter = (sigma_t, sigma_rot)`` in metres and radians.  The off-axis
    position (x, y) and all three rotation angles are perturbed; z stays at
    its nominal value.  Draws that put the camera within ``margin_m`` of the
    wall are resampled.  Frame 0 has zero yaw, the gauge the pose solver
    uses, so estimates can be compared without alignment.
    """
    from .geometry import rot_x, rot_y, rot_z

    sigma_t, sigma_r = jitter
    margin = 0.1 * radius_m if margin_m is None else margin_m
    rng = np.random.default_rng(seed)
    poses = []
    for k in range(frames):
        for _ in range(100):
            dt = np.zeros(3)
            if sigma_t > 0:
                dt[:2] = rng.normal(0.0, sigma_t, 2)
            if np.hypot(dt[0], dt[1]) < radius_m - margin:
                break
        else:
            raise ValueError("jitter too large to keep the camera inside the pipe")
        ang = rng.normal(0.0, sigma_r, 3) if sigma_r > 0 else np.zeros(3)
        R = rot_x(ang[0]) @ rot_y(ang[1]) @ rot_z(ang[2])
        if k == 0:
            R = with_yaw(R, 0.0)
        poses.append(CameraPose(np.array([0.0, 0.0, k * spacing_m]) + dt, R))
    return Trajectory(poses, spacing_m)


def synthetic_matches(trajectory: Trajectory, pipe: PipeModel, intr: FisheyeIntrinsics,
                      n_matches: int = 200, noise_px: float = 0.0, outlier_frac: float = 0.0,
                      seed: int = 0, alpha_range=(np.deg2rad(40.0), np.deg2rad(88.0)),
                      return_truth: bool = False):
    """Exact pixel correspondences of wall points seen by consecutive frames.

    Wall points are drawn uniformly on the segment ahead of frame ``k`` and
    kept when both frames see them at an incidence angle in ``alpha_range``.
    A fraction ``outlier_frac`` of the matches get a random position in
    frame ``k + 1``.  With ``return_truth`` the boolean inlier masks are
    returned as well.
    """
    rng = np.random.default_rng(seed)
    r = pipe.radius_m
    out, truth = [], []
    for k in range(len(trajectory) - 1):
        pa, pb = trajectory[k], trajectory[k + 1]
        pts_a, pts_b = [], []
        while sum(len(x) for x in pts_a) < n_matches:
            m = 4 * n_matches
            th = rng.uniform(0, 2 * np.pi, m)
            z = rng.uniform(pb.t[2], pb.t[2] + 0.3, m)
            P = np.stack([r * np.cos(th), r * np.sin(th), z], axis=1)
            xa, aa = project_camera(pa.to_camera(P), intr, check=False)
            xb, ab = project_camera(pb.to_camera(P), intr, check=False)
            ok = ((aa >= alpha_range[0]) & (aa <= alpha_range[1])
                  & (ab >= alpha_range[0]) & (ab <= alpha_range[1]))
            pts_a.append(xa[ok])
            pts_b.append(xb[ok])
        A = np.concatenate(pts_a)[:n_matches]
        B = np.concatenate(pts_b)[:n_matches]
        if noise_px > 0:
            A = A + rng.normal(0, noise_px, A.shape)
            B = B + rng.normal(0, noise_px, B.shape)
        inl = np.ones(n_matches, dtype=bool)
        n_out = int(round(outlier_frac * n_matches))
        if n_out:
            idx = rng.choice(n_matches, n_out, replace=False)
            px_per_rad = intr.circle_diameter_px / intr.fov_rad
            rad = rng.uniform(alpha_range[0] * px_per_rad, alpha_range[1] * px_per_rad, n_out)
            phi = rng.uniform(0, 2 * np.pi, n_out)
            B[idx] = np.asarray(intr.center_px) + np.stack([rad * np.cos(phi), rad * np.sin(phi)], 1)
            inl[idx] = False
        out.append(MatchSet.from_points(k, k + 1, A, B))
        truth.append(inl)
    return (out, truth) if return_truth else out


def decal_scene(n_decals: int = 6, seed: int = 0, radius_m: float = 0.125,
                length_m: float = 1.3, z_start_m: float = -0.1, theta0: float = np.pi / 2) -> SyntheticScene:
    """Scene with well separated decals of varying classes.

    Decals are placed on a jittered axial lattice so they never touch each
    other, and away from the unwrap cut at ``theta0``.
    """
    rng = np.random.default_rng(seed)
    slot = length_m / n_decals
    decals = []
    classes = [c for c in LabelClass if c != LabelClass.BACKGROUND]
    for i in range(n_decals):
        ext = (rng.uniform(0.01, 0.04), rng.uniform(0.01, min(0.04, slot / 3)))
        z = z_start_m + (i + 0.5) * slot + rng.uniform(-0.1, 0.1) * slot
        th = theta0 + rng.uniform(0.5, 2 * np.pi - 0.5)
        decals.append(Decal(float(th), float(z), ext, int(classes[i % len(classes)]),
                            float(rng.uniform(5, 40))))
    return SyntheticScene(PipeModel(radius_m, length_m), Texture(seed=seed), Lighting(),
                          tuple(decals), z_start_m)
