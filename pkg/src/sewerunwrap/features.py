"""Feature detection and iterative, neighbourhood-constrained matching.

Detection uses OpenCV's SIFT (scale-space blob detector with a 128-D
descriptor).  Matching is implemented here:

1. Round 1 keeps mutual nearest neighbours in descriptor space that pass the
   distance-ratio test.
2. Every later round predicts, for each feature of frame ``a``, its position
   in frame ``b`` from the median displacement of its ``k`` nearest matched
   neighbours.  Candidates within ``consistency_px`` of the prediction compete
   by descriptor distance; matches whose displacement disagrees with their
   neighbours are dropped until none is left.

The reconstruction of the neighbourhood constraint is ours; the exact
formulation of the original scheme is not published in detail.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import FisheyeIntrinsics


@dataclass(frozen=True, eq=False)
class Feature:
    pos_px: tuple[float, float]
    descriptor: np.ndarray
    response: float = 0.0


@dataclass
class MatchSet:
    frame_a: int
    frame_b: int
    pairs: list[tuple[Feature, Feature, float]] = field(default_factory=list)

    def __len__(self):
        return len(self.pairs)

    def points_a(self) -> np.ndarray:
        return np.array([p[0].pos_px for p in self.pairs], dtype=float).reshape(-1, 2)

    def points_b(self) -> np.ndarray:
        return np.array([p[1].pos_px for p in self.pairs], dtype=float).reshape(-1, 2)

    def scores(self) -> np.ndarray:
        return np.array([p[2] for p in self.pairs], dtype=float)

    @classmethod
    def from_points(cls, frame_a, frame_b, pts_a, pts_b, scores=None):
        """Build a match set from bare pixel correspondences."""
        pts_a = np.asarray(pts_a, dtype=float)
        pts_b = np.asarray(pts_b, dtype=float)
        if scores is None:
            scores = np.zeros(len(pts_a))
        empty = np.zeros(0)
        pairs = [
            (Feature((float(a[0]), float(a[1])), empty), Feature((float(b[0]), float(b[1])), empty), float(s))
            for a, b, s in zip(pts_a, pts_b, scores)
        ]
        return cls(frame_a, frame_b, pairs)


@dataclass
class MatchConfig:
    ratio: float = 0.8
    k_neighbors: int = 5
    consistency_px: float = 5.0
    rounds: int = 3
    max_features: int = 4000
    annulus_inner: float = 0.35  # fraction of the image-circle radius
    annulus_outer: float = 0.98


def detect(image, intr: FisheyeIntrinsics | None = None, cfg: MatchConfig | None = None) -> list[Feature]:
    """Detect SIFT features, strongest first.

    With ``intr`` given, only features in the outer annulus of the image
    circle are kept (the inner part images the far pipe at low resolution).
    """
    import cv2

    cfg = cfg or MatchConfig()
    img = np.asarray(image)
    if img.ndim == 3:
        img = cv2.cvtColor(img.astype(np.uint8), cv2.COLOR_RGB2GRAY)
    if img.dtype != np.uint8:
        img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    if img.size == 0:
        return []
    sift = cv2.SIFT_create()
    mask = None
    if intr is not None:
        h, w = img.shape
        yy, xx = np.mgrid[0:h, 0:w]
        rr = np.hypot(xx - intr.center_px[0], yy - intr.center_px[1])
        r0 = cfg.annulus_inner * intr.max_radius_px
        r1 = cfg.annulus_outer * intr.max_radius_px
        mask = ((rr >= r0) & (rr <= r1)).astype(np.uint8) * 255
    kps, desc = sift.detectAndCompute(img, mask)
    if not kps:
        return []
    feats, seen = [], set()
    # SIFT emits one keypoint per dominant orientation; keep one per location
    order = sorted(range(len(kps)), key=lambda i: (-kps[i].response, kps[i].pt))
    for i in order:
        key = (round(kps[i].pt[0], 3), round(kps[i].pt[1], 3))
        if key in seen:
            continue
        seen.add(key)
        feats.append(Feature((float(kps[i].pt[0]), float(kps[i].pt[1])),
                             desc[i].astype(np.float32), float(kps[i].response)))
        if len(feats) >= cfg.max_features:
            break
    return feats


def _positions(feats):
    return np.array([f.pos_px for f in feats], dtype=float).reshape(-1, 2)


def _descriptors(feats):
    if not feats:
        return np.zeros((0, 0))
    return np.vstack([np.asarray(f.descriptor, dtype=float) for f in feats])


def _ratio_mutual(Da, Db, ratio):
    """Mutual nearest neighbours passing the ratio test: dict ia -> (ib, dist)."""
    out = {}
    if len(Da) < 1 or len(Db) < 1:
        return out
    tb = cKDTree(Db)
    k = 2 if len(Db) > 1 else 1
    dist_ab, idx_ab = tb.query(Da, k=k)
    ta = cKDTree(Da)
    _, idx_ba = ta.query(Db, k=1)
    dist_ab = np.atleast_2d(dist_ab.reshape(len(Da), k))
    idx_ab = np.atleast_2d(idx_ab.reshape(len(Da), k))
    for ia in range(len(Da)):
        ib = int(idx_ab[ia, 0])
        if idx_ba[ib] != ia:
            continue
        if k == 2 and not dist_ab[ia, 0] < ratio * dist_ab[ia, 1]:
            continue
        out[ia] = (ib, float(dist_ab[ia, 0]))
    return out


def _inconsistent(matches, Pa, Pb, k, thresh):
    """Indices (into ``matches``) violating the neighbourhood criterion."""
    if len(matches) <= 1:
        return []
    ia = np.array([m[0] for m in matches])
    ib = np.array([m[1] for m in matches])
    pos = Pa[ia]
    disp = Pb[ib] - Pa[ia]
    kk = min(k, len(matches) - 1)
    _, nn = cKDTree(pos).query(pos, k=kk + 1)
    nn = nn.reshape(len(matches), kk + 1)[:, 1:]
    med = np.median(disp[nn], axis=1)
    bad = np.linalg.norm(disp - med, axis=1) > thresh
    return list(np.flatnonzero(bad))


def count_inconsistent(ms: MatchSet, k: int = 5, thresh: float = 5.0) -> int:
    """Number of matches whose displacement deviates from the median of
    their ``k`` nearest matched neighbours by more than ``thresh`` pixels."""
    n = len(ms)
    if n <= 1:
        return 0
    Pa, Pb = ms.points_a(), ms.points_b()
    return len(_inconsistent([(i, i) for i in range(n)], Pa, Pb, k, thresh))


def _prune(matches, Pa, Pb, k, thresh):
    matches = list(matches)
    while True:
        bad = _inconsistent(matches, Pa, Pb, k, thresh)
        if not bad:
            return matches
        bad = set(bad)
        matches = [m for j, m in enumerate(matches) if j not in bad]


def match_iterative(a: list[Feature], b: list[Feature], rounds: int | None = None,
                    cfg: MatchConfig | None = None, frame_a: int = 0, frame_b: int = 1) -> MatchSet:
    """Match two feature lists; see the module docstring for the scheme."""
    cfg = cfg or MatchConfig()
    rounds = cfg.rounds if rounds is None else rounds
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if not a or not b:
        return MatchSet(frame_a, frame_b, [])
    Pa, Pb = _positions(a), _positions(b)
    Da, Db = _descriptors(a), _descriptors(b)

    seed = _ratio_mutual(Da, Db, cfg.ratio)
    # (ia, ib, descriptor distance), sorted by ia for determinism
    matches = sorted((ia, ib, d) for ia, (ib, d) in seed.items())

    tree_b = cKDTree(Pb)
    for _ in range(rounds - 1):
        if len(matches) < 2:
            break
        ia_m = np.array([m[0] for m in matches])
        disp_m = np.array([Pb[m[1]] - Pa[m[0]] for m in matches])
        kk = min(cfg.k_neighbors, len(matches))
        _, nn = cKDTree(Pa[ia_m]).query(Pa, k=kk)
        nn = nn.reshape(len(Pa), kk)
        predicted = Pa + np.median(disp_m[nn], axis=1)

        candidates = []
        for ia in range(len(Pa)):
            near = tree_b.query_ball_point(predicted[ia], cfg.consistency_px)
            if not near:
                continue
            near = np.array(sorted(near))
            dist = np.linalg.norm(Db[near] - Da[ia], axis=1)
            order = np.lexsort((near, dist))
            best = order[0]
            if len(near) > 1 and not dist[best] < cfg.ratio * dist[order[1]]:
                continue
            candidates.append((float(dist[best]), ia, int(near[best])))

        # greedy one-to-one assignment by descriptor distance
        candidates.sort()
        used_a, used_b, new = set(), set(), []
        for d, ia, ib in candidates:
            if ia in used_a or ib in used_b:
                continue
            used_a.add(ia)
            used_b.add(ib)
            new.append((ia, ib, d))
        new.sort()
        matches = _prune(new, Pa, Pb, cfg.k_neighbors, cfg.consistency_px)

    pairs = [(a[ia], b[ib], d) for ia, ib, d in matches]
    return MatchSet(frame_a, frame_b, pairs)


def match_frames(images, intr=None, cfg: MatchConfig | None = None):
    """Detect in every frame and match each consecutive pair."""
    cfg = cfg or MatchConfig()
    feats = [detect(img, intr, cfg) for img in images]
    return [
        match_iterative(feats[k], feats[k + 1], cfg.rounds, cfg, frame_a=k, frame_b=k + 1)
        for k in range(len(images) - 1)
    ]
