"""Score a segmentation against ground truth on a labelled synthetic unwrap.

    python demos/04_segmentation_metrics.py

A deliberately imperfect prediction is made by dilating every defect and
dropping one class; the report shows what that does to IoU and the
confusion rows.
"""
import numpy as np
from scipy import ndimage

from sewerunwrap import metrics as M
from sewerunwrap import synth

intr = synth.default_intrinsics()
scene = synth.decal_scene(9, seed=11)
_, gt = synth.render_sequence(scene, synth.perturbed_trajectory(1), intr, W=360)
truth = gt.label_mask

pred = truth.copy()
for c in M.LabelClass:
    if c:
        grown = ndimage.binary_dilation(truth == c, iterations=2)
        pred[grown & (pred == 0)] = c
pred[pred == M.LabelClass.ROOT] = M.LabelClass.BACKGROUND

print(M.format_class_stats(M.class_stats([truth])))
print()
cm = M.confusion(pred, truth)
print(M.format_report(cm, M.mean_iou([cm])))

# the bootstrapped loss only looks at the hardest fraction of pixels
rng = np.random.default_rng(0)
q = np.clip(rng.beta(8, 1, truth.size), 1e-6, 1.0)
for p in (1.0, 0.25, 0.1):
    print(f"cross entropy over the worst {p:4.0%} of pixels: {M.bootstrapped_ce(q, p):.3f}")
