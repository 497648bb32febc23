"""Label taxonomy, dataset chunking and segmentation evaluation."""

from __future__ import annotations

import math
from enum import IntEnum

import numpy as np
from scipy import ndimage


class LabelClass(IntEnum):
    BACKGROUND = 0
    JOINT = 1
    CONNECTION = 2
    RESIDUE = 3
    CRACK = 4
    ROOT = 5
    OBSTACLE = 6
    SPALLING = 7
    SHAFT = 8


N_CLASSES = len(LabelClass)

# RGB palette for indexed mask PNGs, index = class code
PALETTE = [
    (0, 0, 0),  # background
    (255, 0, 0),  # joint
    (0, 200, 0),  # connection
    (0, 0, 255),  # residue
    (255, 0, 255),  # crack
    (255, 255, 0),  # root
    (0, 255, 255),  # obstacle
    (255, 140, 0),  # spalling
    (128, 128, 128),  # shaft
]


def class_name(code: int) -> str:
    return LabelClass(code).name.capitalize()


def validate_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.size and (m.min() < 0 or m.max() >= N_CLASSES):
        raise ValueError(f"mask holds codes outside 0..{N_CLASSES - 1}")
    return m.astype(np.int64)


def chunk(image, mask, chunk_size=(600, 1200), stride=600):
    """Split an unwrap into equally sized chunks sliding along the pipe axis.

    Axis 0 is the pipe axis.  The last chunk is aligned to the image end and
    may overlap its predecessor by more than the others.
    """
    image = np.asarray(image)
    mask = np.asarray(mask)
    if image.shape[:2] != mask.shape[:2]:
        raise ValueError(f"image {image.shape[:2]} and mask {mask.shape[:2]} differ")
    ch, cw = chunk_size
    H, W = mask.shape[:2]
    if H < ch or W < cw:
        raise ValueError(f"image {H}x{W} smaller than one chunk {ch}x{cw}")
    if not 1 <= stride <= ch:
        raise ValueError(f"stride must lie in 1..{ch} so that chunks cover every row")
    starts = list(range(0, H - ch + 1, stride))
    if starts[-1] != H - ch:
        starts.append(H - ch)
    return [(image[s:s + ch, :cw], mask[s:s + ch, :cw]) for s in starts]


def bootstrapped_ce(posteriors, p: float = 0.1) -> float:
    """Cross entropy over the ``K = ceil(N p)`` lowest target posteriors.

    Ties at the threshold are resolved by pixel index so exactly ``K``
    pixels contribute.
    """
    q = np.asarray(posteriors, dtype=float).ravel()
    if q.size == 0:
        raise ValueError("empty posterior array")
    if not 0 < p <= 1:
        raise ValueError("p must be in (0, 1]")
    if np.any(q <= 0) or np.any(q > 1):
        raise ValueError("posteriors must lie in (0, 1]")
    K = math.ceil(q.size * p - 1e-12)
    K = min(max(K, 1), q.size)
    hardest = np.argsort(q, kind="stable")[:K]
    return float(-np.mean(np.log(q[hardest])))


def confusion(pred, gt, n_classes: int = N_CLASSES) -> np.ndarray:
    """Pixel counts, rows = ground truth, columns = prediction."""
    pred = validate_mask(pred)
    gt = validate_mask(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    idx = gt.ravel() * n_classes + pred.ravel()
    return np.bincount(idx, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def iou_per_class(cm) -> np.ndarray:
    """IoU of each class from one confusion matrix; NaN where the class does not occur in the ground truth."""
    cm = np.asarray(cm, dtype=float)
    tp = np.diag(cm)
    fn = cm.sum(axis=1) - tp
    fp = cm.sum(axis=0) - tp
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = tp / (tp + fp + fn)
    iou[(tp + fn) == 0] = np.nan
    return iou


def mean_iou(per_image) -> np.ndarray:
    """Per-class IoU averaged over the images in which the class occurs.

    Classes that never occur get NaN.
    """
    mats = list(per_image)
    if not mats:
        raise ValueError("need at least one confusion matrix")
    ious = np.array([iou_per_class(m) for m in mats])
    occurs = ~np.isnan(ious)
    with np.errstate(invalid="ignore"):
        total = np.nansum(ious, axis=0)
        counts = occurs.sum(axis=0)
        return np.where(counts > 0, total / np.maximum(counts, 1), np.nan)


def confusion_percent(cm) -> np.ndarray:
    """Row-normalised confusion in percent (rows with no pixels stay 0)."""
    cm = np.asarray(cm, dtype=float)
    rows = cm.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(rows > 0, 100.0 * cm / rows, 0.0)


def class_stats(masks):
    """Object count (8-connected components), pixel count and pixel fraction per class.

    Background has no object count (``None``).
    """
    masks = [validate_mask(m) for m in masks]
    if not masks:
        raise ValueError("need at least one mask")
    pixels = np.zeros(N_CLASSES, dtype=np.int64)
    objects = np.zeros(N_CLASSES, dtype=np.int64)
    eight = np.ones((3, 3), dtype=int)
    for m in masks:
        pixels += np.bincount(m.ravel(), minlength=N_CLASSES)
        for c in range(1, N_CLASSES):
            _, n = ndimage.label(m == c, structure=eight)
            objects[c] += n
    total = pixels.sum()
    stats = {}
    for c in LabelClass:
        stats[c] = {
            "objects": None if c == LabelClass.BACKGROUND else int(objects[c]),
            "pixels": int(pixels[c]),
            "fraction": float(pixels[c] / total),
        }
    return stats


def format_class_stats(stats) -> str:
    lines = [f"{'Class':<12}| {'No. objects':>11} | {'No. pixels':>12} | {'%':>8}", "-" * 52]
    for c, s in stats.items():
        obj = "-" if s["objects"] is None else str(s["objects"])
        lines.append(f"{class_name(c):<12}| {obj:>11} | {s['pixels']:>12} | {100 * s['fraction']:>8.4f}")
    return "\n".join(lines) + "\n"


def format_report(cm_total, miou) -> str:
    """Confusion percentages (rows = ground truth) with a mean-IoU column."""
    pct = confusion_percent(cm_total)
    head = f"{'Class':<12}|" + "".join(f"{class_name(c)[:7]:>8}" for c in LabelClass) + " || mean-IoU"
    lines = [head, "-" * len(head)]
    for c in LabelClass:
        row = "".join(f"{v:8.2f}" for v in pct[c])
        m = "     n/a" if np.isnan(miou[c]) else f"{miou[c]:9.3f}"
        lines.append(f"{class_name(c):<12}|{row} ||{m}")
    return "\n".join(lines) + "\n"
