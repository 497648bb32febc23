"""Recover a camera trajectory from noisy, partly wrong correspondences.

    python demos/02_pose_from_matches.py

Matches between consecutive frames are generated from a known trajectory,
corrupted with pixel noise and 20% outliers, and then fed through pairwise
RANSAC chaining and the global refinement.
"""
import numpy as np

from sewerunwrap import pose as P
from sewerunwrap import synth
from sewerunwrap.geometry import PipeModel

intr = synth.default_intrinsics()
pipe = PipeModel(0.125)
truth = synth.perturbed_trajectory(8, 0.05, (0.0125, 0.035), seed=21)

matches = synth.synthetic_matches(truth, pipe, intr, 300, noise_px=0.5,
                                  outlier_frac=0.2, seed=22)

refined, local, pairs = P.estimate_trajectory(matches, pipe, intr)
for k, e in enumerate(pairs):
    print(f"pair {k}-{k + 1}: {e.inlier_mask.sum()} of {len(e.inlier_mask)} matches kept")

# the solution is only defined up to a roll about and a shift along the axis
for name, tr in (("chained", local), ("refined", refined)):
    pos, rot = P.trajectory_errors(tr, truth)
    print(f"{name:8s} median position error {np.median(pos) * 1000:.3f} mm, "
          f"max rotation error {np.degrees(rot.max()):.3f} deg")
