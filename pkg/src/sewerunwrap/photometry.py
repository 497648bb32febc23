"""Lighting correction, seam finding and gradient-domain blending of unwraps.

Image layout follows :mod:`sewerunwrap.unwrap`: row index ``u`` runs along
the pipe axis (the direction of the light falloff), column index ``v`` runs
around the circumference.  A lighting line ``L_v(u)`` is fitted per column
and a seam picks one row ``u_v`` per column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import gaussian_filter
from scipy.sparse.linalg import factorized

from .unwrap import UnwrapStrip

_LUMA = np.array([0.299, 0.587, 0.114])


def to_gray(image) -> np.ndarray:
    img = np.asarray(image, dtype=float)
    return img @ _LUMA if img.ndim == 3 else img


@dataclass
class LightingModel:
    slope: np.ndarray  # (W,) gray levels per row
    intercept: np.ndarray  # (W,) value at row 0
    offset: np.ndarray  # (W,) median of the blurred column

    def falloff(self, n_rows: int) -> np.ndarray:
        u = np.arange(n_rows, dtype=float)[:, None]
        return self.slope[None, :] * u + self.intercept[None, :]


@dataclass
class SeamPath:
    rows: np.ndarray  # (W,) row index per column
    total_cost: float


@dataclass
class StitchConfig:
    sigma: float = 15.0
    keep_fraction: float = 0.7
    trim_iters: int = 3
    alpha: float = 1.0
    beta: float = 0.5
    band_px: int = 8
    correct_lighting: bool = True


def lowpass(gray, sigma: float, periodic: bool = True) -> np.ndarray:
    """Gaussian low-pass that maps a linear ramp along the rows onto itself.

    Rows are padded by odd reflection (linear extrapolation); columns wrap
    around when ``periodic`` since an unwrap closes on itself.
    """
    g = np.asarray(gray, dtype=float)
    if sigma <= 0:
        return g.copy()
    pad = int(np.ceil(4.0 * sigma))
    padded = np.pad(g, ((pad, pad), (0, 0)), mode="reflect", reflect_type="odd")
    out = gaussian_filter(padded, sigma, mode=("nearest", "wrap" if periodic else "reflect"), truncate=4.0)
    return out[pad:pad + g.shape[0]]


def _weighted_line(u, y, w):
    """Per-column weighted least-squares line ``y ~ slope * u + intercept``."""
    sw = w.sum(axis=0)
    su = (w * u).sum(axis=0)
    sy = (w * y).sum(axis=0)
    suu = (w * u * u).sum(axis=0)
    suy = (w * u * y).sum(axis=0)
    det = sw * suu - su * su
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(det > 0, (sw * suy - su * sy) / det, 0.0)
        intercept = np.where(sw > 0, (sy - slope * su) / sw, 0.0)
    return slope, intercept


def estimate_lighting(gray, sigma: float = 15.0, keep_fraction: float = 0.7, trim_iters: int = 3,
                      mask=None, periodic: bool = True) -> LightingModel:
    """Fit the light falloff of one unwrap.

    The image is low-passed, then a line is fitted to every column by
    iteratively trimmed least squares: after each fit the samples with the
    largest absolute residuals are dropped so that ``keep_fraction`` of them
    remain after ``trim_iters`` rounds.
    """
    g = to_gray(gray)
    H, W = g.shape
    if H < 4:
        raise ValueError("need at least 4 rows to fit a lighting line")
    valid = np.ones_like(g, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not valid.all():
        col_mean = np.nanmean(np.where(valid, g, np.nan), axis=0)
        g = np.where(valid, g, np.nan_to_num(col_mean)[None, :])
    blurred = lowpass(g, sigma, periodic)

    u = np.broadcast_to(np.arange(H, dtype=float)[:, None], (H, W))
    keep = valid.copy()
    per_iter = keep_fraction ** (1.0 / trim_iters) if trim_iters > 0 else 1.0
    slope, intercept = _weighted_line(u, blurred, keep.astype(float))
    for _ in range(trim_iters):
        res = np.abs(blurred - (slope[None, :] * u + intercept[None, :]))
        res = np.where(keep, res, np.inf)
        n_keep = np.maximum(np.ceil(per_iter * keep.sum(axis=0)).astype(int), 2)
        order = np.argsort(res, axis=0, kind="stable")
        ranks = np.empty_like(order)
        np.put_along_axis(ranks, order, np.arange(H)[:, None].repeat(W, axis=1), axis=0)
        keep = keep & (ranks < n_keep[None, :])
        slope, intercept = _weighted_line(u, blurred, keep.astype(float))

    offset = np.array([np.median(blurred[valid[:, v], v]) if valid[:, v].any() else 0.0 for v in range(W)])
    return LightingModel(slope, intercept, offset)


def correct_lighting(image, model: LightingModel, clamp: bool = True) -> np.ndarray:
    """``I - L_v(u) + O_v`` on every channel, clamped to [0, 255] at the end."""
    img = np.asarray(image, dtype=float)
    if img.shape[1] != len(model.slope):
        raise ValueError(f"image has {img.shape[1]} columns, model has {len(model.slope)}")
    shift = model.offset[None, :] - model.falloff(img.shape[0])
    out = img + (shift[..., None] if img.ndim == 3 else shift)
    return np.clip(out, 0.0, 255.0) if clamp else out


def difference_map(strip_a, strip_b, valid_a=None, valid_b=None) -> np.ndarray:
    """Normalised absolute gray difference of two aligned overlaps; invalid pixels cost 1."""
    a = to_gray(strip_a)
    b = to_gray(strip_b)
    if a.shape != b.shape:
        raise ValueError(f"overlap shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("empty overlap")
    D = np.abs(a - b) / 255.0
    for m in (valid_a, valid_b):
        if m is not None:
            D = np.where(np.asarray(m, dtype=bool), D, 1.0)
    return D


def optimal_seam(D, alpha: float = 1.0, beta: float = 0.5) -> SeamPath:
    """Minimum-cost path with one row per column through a cost grid.

    ``w[v+1](u) = alpha D(u, v+1) + min_u' (beta (u - u')^2 / h + w[v](u'))``.
    Ties go to the smallest row index.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.size == 0:
        raise ValueError("cost grid must be a nonempty 2D array")
    if alpha < 0 or beta < 0:
        raise ValueError("weights must be non-negative")
    h, W = D.shape
    rows = np.arange(h)
    trans = beta * (rows[:, None] - rows[None, :]) ** 2 / h
    w = alpha * D[:, 0]
    back = np.zeros((W, h), dtype=np.int64)
    for v in range(1, W):
        M = trans + w[None, :]
        back[v] = np.argmin(M, axis=1)
        w = alpha * D[:, v] + M[rows, back[v]]
    path = np.empty(W, dtype=np.int64)
    path[-1] = int(np.argmin(w))
    for v in range(W - 1, 0, -1):
        path[v - 1] = back[v, path[v]]
    return SeamPath(path, float(w[path[-1]]))


def _band_system(shape, seam, band_px):
    """Unknown indices and edge list of the blending band."""
    h, W = shape
    seam = np.asarray(seam, dtype=np.int64)
    top = seam - band_px // 2
    if np.any(top < 1) or np.any(top + band_px > h - 1):
        raise ValueError("blend band exceeds the overlap")
    index = -np.ones((h, W), dtype=np.int64)
    n = 0
    for v in range(W):
        index[top[v]:top[v] + band_px, v] = np.arange(n, n + band_px)
        n += band_px
    edges = []
    for v in range(W):
        for u in range(top[v] - 1, top[v] + band_px):
            edges.append((u, v, u + 1, v))
    if W > 1:
        vs = range(W) if W > 2 else range(W - 1)
        for v in vs:
            v2 = (v + 1) % W
            lo = min(top[v], top[v2])
            hi = max(top[v], top[v2]) + band_px
            for u in range(lo, hi):
                if index[u, v] >= 0 or index[u, v2] >= 0:
                    edges.append((u, v, u, v2))
    return index, n, np.array(edges, dtype=np.int64).reshape(-1, 4)


def poisson_blend(strip_a, strip_b, seam, band_px: int = 8) -> np.ndarray:
    """Composite two aligned overlaps along ``seam`` with gradient-domain blending.

    Rows above the seam come from ``strip_a``, rows from the seam down from
    ``strip_b``.  Inside a band of ``band_px`` rows centred on the seam the
    output minimises the squared deviation of its neighbour differences from
    the source differences (same-side source; the mean of both sources on
    edges crossing the seam).  Pixels outside the band are fixed to their
    owning strip and act as boundary conditions.  Columns wrap around.
    """
    a = np.asarray(strip_a, dtype=float)
    b = np.asarray(strip_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"overlap shapes differ: {a.shape} vs {b.shape}")
    rows = seam.rows if isinstance(seam, SeamPath) else np.asarray(seam)
    h, W = a.shape[:2]
    index, n, edges = _band_system((h, W), rows, band_px)
    own_b = np.arange(h)[:, None] >= rows[None, :]
    comp = np.where(own_b[..., None] if a.ndim == 3 else own_b, b, a)

    u1, v1, u2, v2 = edges.T
    i1, i2 = index[u1, v1], index[u2, v2]
    m = len(edges)
    r_idx = np.concatenate([np.flatnonzero(i2 >= 0), np.flatnonzero(i1 >= 0)])
    c_idx = np.concatenate([i2[i2 >= 0], i1[i1 >= 0]])
    vals = np.concatenate([np.ones(np.sum(i2 >= 0)), -np.ones(np.sum(i1 >= 0))])
    A = sp.csr_matrix((vals, (r_idx, c_idx)), shape=(m, n))
    solve = factorized((A.T @ A).tocsc())

    same = own_b[u1, v1] == own_b[u2, v2]
    out = comp.copy()
    chans = [None] if a.ndim == 2 else range(a.shape[2])
    for c in chans:
        sa = a if c is None else a[..., c]
        sb = b if c is None else b[..., c]
        cc = comp if c is None else comp[..., c]
        ga = sa[u2, v2] - sa[u1, v1]
        gb = sb[u2, v2] - sb[u1, v1]
        g = np.where(same, np.where(own_b[u1, v1], gb, ga), 0.5 * (ga + gb))
        # move fixed endpoints to the right-hand side
        rhs = g - np.where(i2 < 0, cc[u2, v2], 0.0) + np.where(i1 < 0, cc[u1, v1], 0.0)
        x = solve(A.T @ rhs)
        target = out if c is None else out[..., c]
        mask = index >= 0
        target[mask] = x[index[mask]]
    return out


def stitch(strips: list[UnwrapStrip], cfg: StitchConfig | None = None, return_seams: bool = False):
    """Lighting-correct, seam and blend consecutive strips into one unwrap.

    Strips must share the unwrap lattice (same ``W`` and resolution) and be
    ordered along the axis.  The first output row is the first row of
    ``strips[0]``; the output is clamped to [0, 255].
    """
    cfg = cfg or StitchConfig()
    if not strips:
        raise ValueError("nothing to stitch")
    W = strips[0].grid.circumference_samples
    for s in strips:
        if s.grid.circumference_samples != W:
            raise ValueError("strips use different circumference sampling")
    corrected = []
    for s in strips:
        px = np.asarray(s.pixels, dtype=float)
        if cfg.correct_lighting:
            model = estimate_lighting(px, cfg.sigma, cfg.keep_fraction, cfg.trim_iters, s.valid_mask)
            px = correct_lighting(px, model, clamp=False)
        corrected.append(px)

    start = strips[0].grid.row0
    end = max(s.grid.row0 + s.grid.n_rows for s in strips)
    canvas = np.zeros((end - start,) + corrected[0].shape[1:])
    filled_to = strips[0].grid.row0 + strips[0].grid.n_rows
    canvas[:strips[0].grid.n_rows] = corrected[0]
    seams = []
    for k in range(1, len(strips)):
        g = strips[k].grid
        if g.row0 < strips[k - 1].grid.row0:
            raise ValueError("strips are not ordered along the pipe axis")
        ov_lo, ov_hi = g.row0, min(filled_to, g.row0 + g.n_rows)
        h = ov_hi - ov_lo
        if h < cfg.band_px + 3:
            raise ValueError(f"strips {k - 1} and {k} overlap by {max(h, 0)} rows, "
                             f"need at least {cfg.band_px + 3}")
        A = canvas[ov_lo - start:ov_hi - start]
        B = corrected[k][:h]
        D = difference_map(A, B, None, strips[k].valid_mask[:h])
        lo = cfg.band_px // 2 + 1
        hi = h - (cfg.band_px - cfg.band_px // 2) - 1
        seam = optimal_seam(D[lo:hi + 1], cfg.alpha, cfg.beta)
        seam = SeamPath(seam.rows + lo, seam.total_cost)
        seams.append((ov_lo, seam))
        canvas[ov_lo - start:ov_hi - start] = poisson_blend(A, B, seam, cfg.band_px)
        tail_hi = g.row0 + g.n_rows
        if tail_hi > ov_hi:
            canvas[ov_hi - start:tail_hi - start] = corrected[k][h:]
        filled_to = max(filled_to, tail_hi)
    out = np.clip(canvas, 0.0, 255.0)
    return (out, seams) if return_seams else out
