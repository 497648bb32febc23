"""Render one fisheye frame inside a synthetic pipe and unwrap it.

Run from the repository root:

    python demos/01_fisheye_unwrap.py [out_dir]

Writes the frame, the unwrapped strip and the ideal texture for the same
rows so the three can be compared side by side.
"""
import sys
from pathlib import Path

import numpy as np

from sewerunwrap import fileio, geometry, synth, unwrap

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/unwrap")
out.mkdir(parents=True, exist_ok=True)

intr = synth.default_intrinsics()
scene = synth.default_scene(seed=3)

# the camera sits a little off the axis and tilted, as it would on a crawler
pose = synth.perturbed_trajectory(4, 0.05, (0.0125, 0.035), seed=3)[3]
print("camera center", np.round(pose.t, 4))

# a pixel on the image circle maps to a ray; the ray hits the wall
px = np.array([intr.center_px[0] + 300.0, intr.center_px[1]])
ray = geometry.Ray(pose.t, pose.R @ geometry.ray_direction(px, intr))
_, wall = geometry.intersect_cylinder(ray, scene.pipe)
dist = np.linalg.norm(wall - pose.t)
print(f"pixel {px} sees the wall at {np.round(wall, 4)}, {dist:.4f} m from the lens")
print("and projects back to", np.round(geometry.project(wall, pose, intr), 9))

frame = synth.render_frame(scene, pose, intr)
grid = unwrap.frame_grid(pose, scene.pipe, intr, 360)
strip = unwrap.unwrap_frame(frame, pose, intr, scene.pipe, grid)
ideal = synth.ideal_unwrap(scene, grid)

err = np.abs(strip.pixels - ideal.pixels)[strip.valid_mask]
print(f"strip rows {grid.row0}..{grid.row0 + grid.n_rows - 1}, "
      f"{grid.axial_resolution_m * 1000:.2f} mm per row")
print(f"mean abs difference to the ideal texture: {err.mean():.2f} gray levels")

fileio.write_png(out / "frame.png", frame)
fileio.write_strip(out / "strip.png", strip)
fileio.write_unwrap(out / "ideal.png", ideal.pixels)
print("wrote", out)
