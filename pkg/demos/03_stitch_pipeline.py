"""End to end: render a pipe run, estimate poses from SIFT, stitch the unwrap.

    python demos/03_stitch_pipeline.py [out_dir]

Takes a few seconds.  The same steps are available from the command line as
``sewerunwrap synth``, ``sewerunwrap pose`` and ``sewerunwrap stitch``.
"""
import sys
from pathlib import Path

import numpy as np

from sewerunwrap import features, fileio, photometry
from sewerunwrap import pose as P
from sewerunwrap import synth, unwrap
from sewerunwrap.geometry import CameraPose

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/stitch")
out.mkdir(parents=True, exist_ok=True)

intr = synth.default_intrinsics()
scene = synth.default_scene(seed=5)
truth = synth.perturbed_trajectory(8, 0.05, (0.0125, 0.035), seed=5)
frames, gt = synth.render_sequence(scene, truth, intr, W=360)

gray = [photometry.to_gray(f) for f in frames]
matches = features.match_frames(gray, intr)
est, _, _ = P.estimate_trajectory(matches, scene.pipe, intr)
est = P.align_to_reference(est, truth)
pos, _ = P.trajectory_errors(est, truth, align=False)
print(f"pose from SIFT: median position error {np.median(pos) * 1000:.2f} mm")


def stitched(traj):
    strips = [unwrap.unwrap_frame(f, p, intr, scene.pipe,
                                  unwrap.frame_grid(p, scene.pipe, intr, 360))
              for f, p in zip(frames, traj.poses)]
    # the mosaic starts on the first strip's row of the global lattice
    return photometry.stitch(strips), strips[0].grid.row0


def error(img, row0):
    lo = row0 - gt.ideal_unwrap.grid.row0
    ref = gt.ideal_unwrap.pixels[lo:lo + img.shape[0]]
    return np.abs(photometry.to_gray(img) - photometry.to_gray(ref)).mean()


# assuming the camera runs along the axis is what a naive unwrap would do
axis = P.Trajectory([CameraPose([0.0, 0.0, p.t[2]]) for p in truth.poses])
for name, traj in (("estimated poses", est), ("on-axis assumption", axis)):
    img, row0 = stitched(traj)
    print(f"{name:20s} mean abs error {error(img, row0):6.2f}")
    fileio.write_unwrap(out / f"{name.split()[0]}.png", img)
print("wrote", out)
