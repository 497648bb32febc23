"""Camera pose recovery inside a pipe of known radius.

Every matched feature defines two lines of sight, one per camera.  Each line
is intersected with the pipe wall; for correct poses both intersections are
the same 3D point.  The residual of a match is the 3D difference of the two
wall points, and the poses are refined by Gauss-Newton on these residuals.

Per-frame parameters are the update ``(dtx, dty, dtz, ax, ay, az)``.
Translations are updated additively and rotations by
``R <- Rx(ax) @ Ry(ay) @ Rz(az) @ R``.  The cylinder is invariant under
translation along and rotation about its axis, so the first camera of a
solve keeps ``dtz = az = 0`` (gauge fixing): 10 unknowns for a pair and
``6 K - 2`` unknowns for a trajectory of ``K`` frames.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from .geometry import (
    CameraPose,
    FisheyeIntrinsics,
    GeometryError,
    PipeModel,
    orthonormalize,
    ray_direction,
    rot_x,
    rot_y,
    rot_z,
    rotation_angle,
)

logger = logging.getLogger(__name__)

FULL = (0, 1, 2, 3, 4, 5)
GAUGE = (0, 1, 3, 4)  # no dtz, no az
MIN_MATCHES = 6


class PoseError(RuntimeError):
    pass


class InsufficientInliersError(PoseError):
    pass


class DivergenceError(PoseError):
    pass


class RankDeficiencyError(PoseError):
    pass


@dataclass
class PoseConfig:
    ransac_iters: int = 200
    ransac_threshold_m: float = 0.005
    sample_size: int = MIN_MATCHES
    sample_gn_iters: int = 10
    max_iters: int = 20
    tol: float = 1e-10
    diverge_iters: int = 3
    spacing_hint_m: float = 0.05
    cg_rtol: float = 1e-14
    cg_maxiter: int | None = None
    seed: int = 0
    # adaptive RANSAC stop once this confidence of a clean sample is reached
    ransac_confidence: float = 0.999
    # RANSAC hypotheses outside these bounds are discarded as degenerate
    max_offset_frac: float = 0.6
    max_rotation_rad: float = 0.5


@dataclass
class PairEstimate:
    pose_a: CameraPose
    pose_b: CameraPose
    inlier_mask: np.ndarray
    residual_rms: float
    iterations: int = 0
    last_update_norm: float = 0.0

    @property
    def n_inliers(self) -> int:
        return int(np.count_nonzero(self.inlier_mask))


@dataclass
class Trajectory:
    poses: list[CameraPose]
    spacing_hint_m: float = 0.05

    def __len__(self):
        return len(self.poses)

    def __getitem__(self, k):
        return self.poses[k]

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.t for p in self.poses])


@dataclass
class Observation:
    """Matched lines of sight between frames ``i`` and ``j`` (camera frames)."""

    i: int
    j: int
    dirs_i: np.ndarray
    dirs_j: np.ndarray


@dataclass
class SolveReport:
    iterations: int = 0
    last_update_norm: float = 0.0
    costs: list[float] = field(default_factory=list)


# ---------------------------------------------------------------------------
# surface point and its derivatives


def _surface_points(t, R, dirs, delta6, radius, with_jacobian=False):
    """Wall points of lines of sight under the linearised pose update.

    Returns ``(points, lam, J)`` where ``J[n]`` is the 3x6 derivative of
    point ``n`` w.r.t. ``(dtx, dty, dtz, ax, ay, az)``.
    """
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    delta6 = np.asarray(delta6, dtype=float)
    a = np.asarray(t, dtype=float) + delta6[:3]
    c = dirs @ np.asarray(R, dtype=float).T
    alpha = delta6[3:]
    b = c.copy()
    if np.any(alpha):
        b[:, 0] += alpha[1] * c[:, 2] - alpha[2] * c[:, 1]
        b[:, 1] += alpha[2] * c[:, 0] - alpha[0] * c[:, 2]
        b[:, 2] += alpha[0] * c[:, 1] - alpha[1] * c[:, 0]

    A = b[:, 0] ** 2 + b[:, 1] ** 2
    B = 2.0 * (a[0] * b[:, 0] + a[1] * b[:, 1])
    C = a[0] ** 2 + a[1] ** 2 - radius**2
    disc = B * B - 4.0 * A * C
    if np.any(A == 0) or np.any(disc < 0):
        raise GeometryError("line of sight does not intersect the pipe wall")
    sq = np.sqrt(disc)
    q = -0.5 * (B + np.copysign(sq, B))
    r1 = q / A
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(q != 0, C / q, 0.0)
    lo, hi = np.minimum(r1, r2), np.maximum(r1, r2)
    lam = np.where(lo >= 0, lo, hi)
    if np.any(lam < 0):
        raise GeometryError("intersection lies behind the camera")
    p = a + lam[:, None] * b
    if not with_jacobian:
        return p, lam, None

    n = len(dirs)
    # d p / d theta = d a / d theta + lam * d b / d theta + b (d lam / d theta)
    da = np.zeros((n, 3, 6))
    da[:, 0, 0] = da[:, 1, 1] = da[:, 2, 2] = 1.0
    db = np.zeros((n, 3, 6))
    # b = c + alpha x c  ->  d b / d alpha = -[c]_x
    db[:, 0, 4], db[:, 0, 5] = c[:, 2], -c[:, 1]
    db[:, 1, 3], db[:, 1, 5] = -c[:, 2], c[:, 0]
    db[:, 2, 3], db[:, 2, 4] = c[:, 1], -c[:, 0]
    # implicit derivative of (ax + lam bx)^2 + (ay + lam by)^2 = r^2
    denom = p[:, 0] * b[:, 0] + p[:, 1] * b[:, 1]
    num = (
        p[:, 0, None] * (da[:, 0, :] + lam[:, None] * db[:, 0, :])
        + p[:, 1, None] * (da[:, 1, :] + lam[:, None] * db[:, 1, :])
    )
    dlam = -num / denom[:, None]
    J = da + lam[:, None, None] * db + b[:, :, None] * dlam[:, None, :]
    return p, lam, J


def surface_point(pose: CameraPose, direction, delta, pipe: PipeModel, dtz: float = 0.0):
    """Wall point hit by a line of sight under a small pose perturbation.

    ``delta`` holds ``(dtx, dty, ax, ay, az)``; the linearised rotation
    ``I + [alpha]_x`` multiplies ``R @ direction``.  ``dtz`` shifts the
    point along the axis only.
    """
    dtx, dty, ax, ay, az = np.asarray(delta, dtype=float)
    delta6 = np.array([dtx, dty, dtz, ax, ay, az])
    direction = np.asarray(direction, dtype=float)
    p, _, _ = _surface_points(pose.t, pose.R, direction.reshape(-1, 3), delta6, pipe.radius_m)
    return p[0] if direction.ndim == 1 else p


def surface_point_jacobian(pose: CameraPose, direction, delta, pipe: PipeModel, dtz: float = 0.0):
    """Analytic 3x6 Jacobian of :func:`surface_point` w.r.t. ``(dtx, dty, dtz, ax, ay, az)``."""
    dtx, dty, ax, ay, az = np.asarray(delta, dtype=float)
    delta6 = np.array([dtx, dty, dtz, ax, ay, az])
    direction = np.asarray(direction, dtype=float)
    _, _, J = _surface_points(
        pose.t, pose.R, direction.reshape(-1, 3), delta6, pipe.radius_m, with_jacobian=True
    )
    return J[0] if direction.ndim == 1 else J


# ---------------------------------------------------------------------------
# pose updates


def update_rotation(R, ax: float, ay: float, az: float) -> np.ndarray:
    """``Rx(ax) @ Ry(ay) @ Rz(az) @ R`` with drift control."""
    Rn = rot_x(ax) @ rot_y(ay) @ rot_z(az) @ np.asarray(R, dtype=float)
    if np.max(np.abs(Rn.T @ Rn - np.eye(3))) > 1e-12:
        Rn = orthonormalize(Rn)
    return Rn


def apply_update(pose: CameraPose, delta6) -> CameraPose:
    d = np.asarray(delta6, dtype=float)
    return CameraPose(pose.t + d[:3], update_rotation(pose.R, d[3], d[4], d[5]))


def yaw(R) -> float:
    """Rotation about the world z-axis in ``R = Rz(yaw) @ Rx(a) @ Ry(b)``."""
    R = np.asarray(R, dtype=float)
    return float(np.arctan2(-R[0, 1], R[1, 1]))


def with_yaw(R, target: float) -> np.ndarray:
    """Left-multiply by the world z-rotation that sets :func:`yaw` to ``target``."""
    return rot_z(target - yaw(R)) @ np.asarray(R, dtype=float)


# ---------------------------------------------------------------------------
# generic least-squares machinery


def _layout(n_frames, gauge_frame=0):
    """Column offsets and free-parameter indices for every frame."""
    free, offsets, k = [], [], 0
    for f in range(n_frames):
        idx = GAUGE if f == gauge_frame else FULL
        free.append(idx)
        offsets.append(k)
        k += len(idx)
    return free, offsets, k


def _residuals(poses, observations, radius):
    res = []
    for ob in observations:
        pi, _, _ = _surface_points(poses[ob.i].t, poses[ob.i].R, ob.dirs_i, np.zeros(6), radius)
        pj, _, _ = _surface_points(poses[ob.j].t, poses[ob.j].R, ob.dirs_j, np.zeros(6), radius)
        res.append((pi - pj).ravel())
    return np.concatenate(res) if res else np.zeros(0)


def _assemble(poses, observations, radius, gauge_frame=0, dense=False):
    """Residual vector and Jacobian (sparse unless ``dense``) at the current operating point."""
    free, offsets, n_params = _layout(len(poses), gauge_frame)
    res, rows, cols, vals, blocks = [], [], [], [], []
    row0 = 0
    for ob in observations:
        pi, _, Ji = _surface_points(poses[ob.i].t, poses[ob.i].R, ob.dirs_i, np.zeros(6), radius, True)
        pj, _, Jj = _surface_points(poses[ob.j].t, poses[ob.j].R, ob.dirs_j, np.zeros(6), radius, True)
        n = len(pi)
        res.append((pi - pj).ravel())
        if dense:
            block = np.zeros((3 * n, n_params))
            for frame, J, sign in ((ob.i, Ji, 1.0), (ob.j, Jj, -1.0)):
                idx = free[frame]
                block[:, offsets[frame]:offsets[frame] + len(idx)] += sign * J[:, :, idx].reshape(3 * n, len(idx))
            blocks.append(block)
            continue
        r_idx = row0 + np.arange(3 * n)
        for frame, J, sign in ((ob.i, Ji, 1.0), (ob.j, Jj, -1.0)):
            idx = free[frame]
            block = sign * J[:, :, idx].reshape(3 * n, len(idx))
            c_idx = offsets[frame] + np.arange(len(idx))
            rows.append(np.repeat(r_idx, len(idx)))
            cols.append(np.tile(c_idx, 3 * n))
            vals.append(block.ravel())
        row0 += 3 * n
    if dense:
        return np.concatenate(res), np.vstack(blocks)
    J = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(row0, n_params),
    )
    return np.concatenate(res), J


def _step_to_updates(step, n_frames, gauge_frame=0):
    free, offsets, _ = _layout(n_frames, gauge_frame)
    ups = []
    for f in range(n_frames):
        d = np.zeros(6)
        d[list(free[f])] = step[offsets[f]:offsets[f] + len(free[f])]
        ups.append(d)
    return ups


def solve_dense(J, r):
    """Least-squares step minimising ``||J s + r||`` with a dense solver."""
    J = J.toarray() if sp.issparse(J) else np.asarray(J)
    return np.linalg.lstsq(J, -r, rcond=None)[0]


def solve_sparse_cg(J, r, rtol=1e-14, maxiter=None):
    """Jacobi-preconditioned conjugate gradients on the normal equations."""
    J = sp.csr_matrix(J)
    N = (J.T @ J).tocsr()
    g = -(J.T @ r)
    diag = N.diagonal()
    if np.any(diag <= 0):
        raise RankDeficiencyError("parameter without any constraining residual")
    inv = 1.0 / diag
    M = LinearOperator(N.shape, matvec=lambda x: inv * x, dtype=float)
    if maxiter is None:
        maxiter = 10 * N.shape[0]
    x, info = cg(N, g, rtol=rtol, atol=0.0, M=M, maxiter=maxiter)
    if info < 0:
        raise PoseError("conjugate gradient breakdown")
    return x


def _gauss_newton(poses, observations, radius, cfg: PoseConfig, solver, max_iters=None, gauge_frame=0):
    """Undamped Gauss-Newton with step halving as fallback.

    Returns ``(poses, report)``.  Costs in the report are non-increasing.
    """
    poses = list(poses)
    max_iters = cfg.max_iters if max_iters is None else max_iters
    # x/y updates compound into a second-order rotation about z; the gauge
    # frame is pulled back onto its initial yaw after every update
    gauge_yaw = yaw(poses[gauge_frame].R)
    dense = solver is solve_dense
    r, J = _assemble(poses, observations, radius, gauge_frame, dense)
    cost = float(r @ r)
    report = SolveReport(costs=[cost])
    failures = 0
    for it in range(1, max_iters + 1):
        report.iterations = it
        step = solver(J, r)
        report.last_update_norm = float(np.linalg.norm(step))
        if not np.all(np.isfinite(step)):
            raise DivergenceError("non-finite Gauss-Newton step")
        if report.last_update_norm < cfg.tol:
            break
        scale, accepted = 1.0, None
        for _ in range(12):
            ups = _step_to_updates(scale * step, len(poses), gauge_frame)
            try:
                trial = [apply_update(p, u) for p, u in zip(poses, ups)]
                g = trial[gauge_frame]
                trial[gauge_frame] = CameraPose(g.t, with_yaw(g.R, gauge_yaw))
                r_new = _residuals(trial, observations, radius)
            except GeometryError:
                scale *= 0.5
                continue
            c_new = float(r_new @ r_new)
            if c_new <= cost:
                accepted = (trial, c_new)
                break
            scale *= 0.5
        if accepted is None:
            if cost == 0.0 or report.last_update_norm * scale < 1e3 * cfg.tol:
                break  # at the noise floor; no descent direction left
            failures += 1
            if failures >= cfg.diverge_iters:
                raise DivergenceError(
                    f"residual grew for {failures} consecutive iterations"
                )
            continue
        failures = 0
        poses, cost = accepted
        report.costs.append(cost)
        r, J = _assemble(poses, observations, radius, gauge_frame, dense)
        if scale * report.last_update_norm < cfg.tol:
            break
    return poses, report


# ---------------------------------------------------------------------------
# pairwise estimation with RANSAC


def _match_dirs(matches, intr):
    pa, pb = matches.points_a(), matches.points_b()
    return ray_direction(pa, intr), ray_direction(pb, intr)


def _match_errors(pose_a, pose_b, da, db, radius):
    """Per-match 3D disagreement; ``inf`` where a line misses the wall."""
    err = np.full(len(da), np.inf)
    try:
        pa, _, _ = _surface_points(pose_a.t, pose_a.R, da, np.zeros(6), radius)
        pb, _, _ = _surface_points(pose_b.t, pose_b.R, db, np.zeros(6), radius)
        return np.linalg.norm(pa - pb, axis=1)
    except GeometryError:
        pass
    for k in range(len(da)):
        try:
            pa, _, _ = _surface_points(pose_a.t, pose_a.R, da[k:k + 1], np.zeros(6), radius)
            pb, _, _ = _surface_points(pose_b.t, pose_b.R, db[k:k + 1], np.zeros(6), radius)
            err[k] = np.linalg.norm(pa - pb)
        except GeometryError:
            continue
    return err


def _ransac_trials(inlier_ratio, sample_size, confidence):
    clean = inlier_ratio**sample_size
    if clean <= 0:
        return np.inf
    if clean >= 1 or confidence >= 1:
        return 1 if clean >= 1 else np.inf
    return int(np.ceil(np.log(1 - confidence) / np.log(1 - clean)))


def _plausible(pa, pb, init_a, init_b, da, db, radius, cfg):
    """Reject sample solutions that did not fit or left the physical range.

    A camera pushed against the wall makes every line of sight meet the wall
    close to it, so unrelated matches agree; such solutions are discarded.
    """
    for p, q in ((pa, init_a), (pb, init_b)):
        if np.hypot(p.t[0], p.t[1]) > cfg.max_offset_frac * radius:
            return False
        if rotation_angle(p.R, q.R) > cfg.max_rotation_rad:
            return False
    err = _match_errors(pa, pb, da, db, radius)
    return bool(np.all(err < cfg.ransac_threshold_m))


def _solve_pair(pose_a, pose_b, da, db, radius, cfg, max_iters=None):
    obs = [Observation(0, 1, da, db)]
    poses, report = _gauss_newton([pose_a, pose_b], obs, radius, cfg, solve_dense, max_iters)
    return poses[0], poses[1], report


def estimate_pair(matches, init_a: CameraPose, init_b: CameraPose, pipe: PipeModel,
                  intr: FisheyeIntrinsics, cfg: PoseConfig | None = None) -> PairEstimate:
    """Estimate the poses of two consecutive frames from their matches.

    RANSAC draws minimal samples of ``cfg.sample_size`` matches, solves each
    with a few Gauss-Newton iterations from the initial poses and scores the
    candidate by the number of matches whose wall points agree within
    ``cfg.ransac_threshold_m``.  The best consensus set is then refined to
    convergence.
    """
    cfg = cfg or PoseConfig()
    n = len(matches)
    if n < MIN_MATCHES:
        raise InsufficientInliersError(f"need at least {MIN_MATCHES} matches, got {n}")
    da, db = _match_dirs(matches, intr)
    radius = pipe.radius_m
    rng = np.random.default_rng(cfg.seed)

    best_mask, best_score = None, (-1, np.inf)
    needed = cfg.ransac_iters
    it = 0
    while it < min(needed, cfg.ransac_iters):
        it += 1
        sample = rng.choice(n, size=cfg.sample_size, replace=False)
        try:
            pa, pb, _ = _solve_pair(init_a, init_b, da[sample], db[sample], radius, cfg,
                                    cfg.sample_gn_iters)
        except (GeometryError, PoseError, np.linalg.LinAlgError):
            continue
        if not _plausible(pa, pb, init_a, init_b, da[sample], db[sample], radius, cfg):
            continue
        err = _match_errors(pa, pb, da, db, radius)
        mask = err < cfg.ransac_threshold_m
        score = (int(mask.sum()), float(np.sum(err[mask] ** 2)))
        if score[0] > best_score[0] or (score[0] == best_score[0] and score[1] < best_score[1]):
            best_mask, best_score = mask, score
            if score[0] == n:
                break
            needed = _ransac_trials(score[0] / n, cfg.sample_size, cfg.ransac_confidence)

    if best_mask is None or best_score[0] < MIN_MATCHES:
        raise InsufficientInliersError(
            f"only {0 if best_mask is None else best_score[0]} inliers, need {MIN_MATCHES}"
        )

    mask = best_mask
    pose_a, pose_b = init_a, init_b
    for _ in range(3):
        pose_a, pose_b, report = _solve_pair(init_a, init_b, da[mask], db[mask], radius, cfg)
        err = _match_errors(pose_a, pose_b, da, db, radius)
        new_mask = err < cfg.ransac_threshold_m
        if new_mask.sum() < MIN_MATCHES or np.array_equal(new_mask, mask):
            break
        mask = new_mask
    if mask.sum() < MIN_MATCHES:
        raise InsufficientInliersError(f"only {int(mask.sum())} inliers after refinement")
    rms = float(np.sqrt(np.mean(_match_errors(pose_a, pose_b, da[mask], db[mask], radius) ** 2)))
    return PairEstimate(pose_a, pose_b, mask, rms, report.iterations, report.last_update_norm)


def axis_pose(z: float = 0.0) -> CameraPose:
    """Camera on the pipe axis looking down the pipe."""
    return CameraPose([0.0, 0.0, z], np.eye(3))


def chain_pairs(match_sets, pipe, intr, cfg: PoseConfig | None = None,
                first: CameraPose | None = None):
    """Local stage: estimate consecutive pairs and chain them into a trajectory.

    The first pair starts with both cameras on the axis, ``spacing_hint_m``
    apart.  Each following pair starts from the previous estimate of its
    first frame, with the second frame one spacing further along the axis.
    """
    cfg = cfg or PoseConfig()
    current = first if first is not None else axis_pose(0.0)
    poses, estimates = [], []
    for k, ms in enumerate(match_sets):
        init_b = CameraPose(current.t + [0.0, 0.0, cfg.spacing_hint_m], current.R)
        try:
            est = estimate_pair(ms, current, init_b, pipe, intr, cfg)
        except PoseError as exc:
            raise type(exc)(f"frame pair ({ms.frame_a}, {ms.frame_b}): {exc}") from exc
        if k == 0:
            poses.append(est.pose_a)
        poses.append(est.pose_b)
        estimates.append(est)
        current = est.pose_b
    return Trajectory(poses, cfg.spacing_hint_m), estimates


# ---------------------------------------------------------------------------
# global refinement


def build_observations(match_sets, intr, masks=None):
    obs = []
    for k, ms in enumerate(match_sets):
        da, db = _match_dirs(ms, intr)
        if masks is not None and masks[k] is not None:
            m = np.asarray(masks[k], dtype=bool)
            da, db = da[m], db[m]
        if len(da) < MIN_MATCHES:
            raise RankDeficiencyError(
                f"frame pair ({ms.frame_a}, {ms.frame_b}) has {len(da)} inlier matches, need {MIN_MATCHES}"
            )
        obs.append(Observation(ms.frame_a, ms.frame_b, da, db))
    return obs


def total_cost(traj: Trajectory, observations, pipe: PipeModel) -> float:
    r = _residuals(traj.poses, observations, pipe.radius_m)
    return float(r @ r)


def optimize_global(pairs, init: Trajectory, pipe: PipeModel, intr: FisheyeIntrinsics,
                    cfg: PoseConfig | None = None, masks=None, solver: str = "cg",
                    return_report: bool = False):
    """Joint refinement of all poses over every consecutive frame pair.

    ``masks`` are the inlier masks of the local stage; they stay frozen.
    ``solver`` is ``"cg"`` (sparse, default) or ``"dense"``.
    """
    cfg = cfg or PoseConfig()
    if len(init) < 2:
        raise PoseError("global optimisation needs at least two frames")
    obs = build_observations(pairs, intr, masks)
    if solver == "cg":
        def lin(J, r):
            return solve_sparse_cg(J, r, cfg.cg_rtol, cfg.cg_maxiter)
    elif solver == "dense":
        lin = solve_dense
    else:
        raise ValueError(f"unknown solver {solver!r}")
    poses, report = _gauss_newton(init.poses, obs, pipe.radius_m, cfg, lin)
    out = Trajectory(poses, init.spacing_hint_m)
    return (out, report) if return_report else out


def estimate_trajectory(match_sets, pipe, intr, cfg: PoseConfig | None = None):
    """Local chaining followed by global refinement with frozen inlier masks."""
    cfg = cfg or PoseConfig()
    local, estimates = chain_pairs(match_sets, pipe, intr, cfg)
    masks = [e.inlier_mask for e in estimates]
    refined = optimize_global(match_sets, local, pipe, intr, cfg, masks=masks)
    return refined, local, estimates


# ---------------------------------------------------------------------------
# evaluation helpers


def align_to_reference(traj: Trajectory, ref: Trajectory) -> Trajectory:
    """Remove the gauge freedom (rotation about and shift along the axis).

    Finds the world z-rotation and z-shift that best map ``traj`` onto
    ``ref`` in the least-squares sense over camera centers and optical axes.
    """
    P = traj.positions
    Q = ref.positions
    # 2D Procrustes on xy of positions plus the xy of the camera axes, which
    # pins the rotation even when all centers sit near the axis
    A = np.vstack([P[:, :2], np.array([p.R[:2, 2] for p in traj.poses]) * 0.1,
                   np.array([p.R[:2, 0] for p in traj.poses]) * 0.1])
    B = np.vstack([Q[:, :2], np.array([p.R[:2, 2] for p in ref.poses]) * 0.1,
                   np.array([p.R[:2, 0] for p in ref.poses]) * 0.1])
    s = np.sum(A[:, 0] * B[:, 1] - A[:, 1] * B[:, 0])
    c = np.sum(A[:, 0] * B[:, 0] + A[:, 1] * B[:, 1])
    Rz = rot_z(np.arctan2(s, c))
    dz = float(np.mean(Q[:, 2] - P[:, 2]))
    out = [CameraPose(Rz @ p.t + [0.0, 0.0, dz], Rz @ p.R) for p in traj.poses]
    return Trajectory(out, traj.spacing_hint_m)


def trajectory_errors(traj: Trajectory, ref: Trajectory, align: bool = True):
    """Per-frame position error (m) and rotation error (rad) against ``ref``."""
    if align:
        traj = align_to_reference(traj, ref)
    pos = np.linalg.norm(traj.positions - ref.positions, axis=1)
    rot = np.array([rotation_angle(a.R, b.R) for a, b in zip(traj.poses, ref.poses)])
    return pos, rot
