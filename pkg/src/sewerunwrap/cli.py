"""Command line driver: ``sewerunwrap {synth,pose,stitch,eval}``.

Exit status is 0 on success, 1 when the pipeline fails at run time and 2 for
invalid input or configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import features, fileio, metrics, photometry, pose, synth, unwrap
from .config import ConfigError, PipelineConfig, load_config
from .fileio import FileFormatError

log = logging.getLogger("sewerunwrap")

EXIT_OK, EXIT_RUNTIME, EXIT_INPUT = 0, 1, 2


class InputError(ValueError):
    """Command line arguments that cannot be acted on."""


# ---------------------------------------------------------------------------
# helpers


def _frame_paths(frames_dir) -> list[Path]:
    d = Path(frames_dir)
    if not d.is_dir():
        raise InputError(f"frames directory not found: {d}")
    return sorted(d.glob("*.png"))


def _read_frames(paths, cfg: PipelineConfig, gray: bool):
    w, h = cfg.image_size_px
    out = []
    for p in paths:
        img = fileio.read_image(p, gray=gray)
        if img.shape[:2] != (h, w):
            raise InputError(f"{p}: image is {img.shape[1]}x{img.shape[0]}, config says {w}x{h}")
        out.append(img)
    return out


def build_scene(cfg: PipelineConfig) -> synth.SyntheticScene:
    texture = synth.Texture(kind=cfg.texture, cell_m=cfg.texture_cell_m, seed=cfg.seed)
    decals = ()
    if cfg.n_decals:
        decals = synth.decal_scene(cfg.n_decals, cfg.seed, cfg.radius_m, cfg.length_m,
                                   cfg.z_start_m, cfg.theta0).decals
    return synth.SyntheticScene(cfg.pipe(), texture, synth.Lighting(cfg.lighting_slope_per_m),
                                decals, cfg.z_start_m)


def unwrap_sequence(frames, traj: pose.Trajectory, cfg: PipelineConfig) -> list[unwrap.UnwrapStrip]:
    intr, pipe = cfg.intrinsics(), cfg.pipe()
    strips = []
    for k, (img, p) in enumerate(zip(frames, traj.poses)):
        grid = unwrap.frame_grid(p, pipe, intr, cfg.circumference_samples, cfg.spacing_m,
                                 cfg.overlap_m, cfg.near_m, cfg.theta0, cfg.min_ratio)
        strips.append(unwrap.unwrap_frame(img, p, intr, pipe, grid, k))
    return strips


# ---------------------------------------------------------------------------
# commands


def cmd_synth(cfg: PipelineConfig, out: Path, jpeg_sim: bool = False) -> int:
    intr = cfg.intrinsics()
    scene = build_scene(cfg)
    traj = synth.perturbed_trajectory(cfg.frames, cfg.spacing_m,
                                      (cfg.jitter_t_m, np.deg2rad(cfg.jitter_rot_deg)),
                                      cfg.seed, cfg.radius_m)
    frames, gt = synth.render_sequence(scene, traj, intr, cfg.circumference_samples, cfg.theta0,
                                       cfg.supersample)
    if jpeg_sim:
        frames = [fileio.jpeg_roundtrip(f, cfg.jpeg_quality) for f in frames]

    (out / "frames").mkdir(parents=True, exist_ok=True)
    for k, f in enumerate(frames):
        fileio.write_png(out / "frames" / f"frame_{k:03d}.png", f)
    fileio.write_trajectory(out / "trajectory.txt", traj)
    fileio.write_strip(out / "ideal_unwrap.png", gt.ideal_unwrap)
    fileio.write_mask(out / "labels.png", np.swapaxes(gt.label_mask, 0, 1))
    if cfg.frames > 1:
        ms = synth.synthetic_matches(traj, cfg.pipe(), intr, cfg.match_count, cfg.match_noise_px,
                                     cfg.match_outlier_frac, cfg.seed)
        fileio.write_matches(out / "matches.txt", ms)
    lines = ["# theta z arc_m axial_m label gray"]
    for d in scene.decals:
        lines.append(f"{d.theta!r} {d.z!r} {d.extent[0]!r} {d.extent[1]!r} {d.label} {d.gray!r}")
    (out / "decals.txt").write_text("\n".join(lines) + "\n")
    print(f"wrote {len(frames)} frames, trajectory and ground truth to {out}")
    return EXIT_OK


def cmd_pose(cfg: PipelineConfig, frames_dir, out: Path, matches_path=None, dump_matches=False) -> int:
    paths = _frame_paths(frames_dir)
    if len(paths) < 2:
        raise InputError(f"need at least 2 frames in {frames_dir}, found {len(paths)}")
    intr, pipe = cfg.intrinsics(), cfg.pipe()
    if matches_path is not None:
        match_sets = fileio.read_matches(matches_path)
        expected = [(k, k + 1) for k in range(len(paths) - 1)]
        got = [(m.frame_a, m.frame_b) for m in match_sets]
        if got != expected:
            raise InputError(f"{matches_path}: match table covers pairs {got[:3]}..., "
                             f"expected consecutive pairs of {len(paths)} frames")
    else:
        frames = _read_frames(paths, cfg, gray=True)
        match_sets = features.match_frames(frames, intr, cfg.match_config())
    refined, local, estimates = pose.estimate_trajectory(match_sets, pipe, intr, cfg.pose_config())

    out.mkdir(parents=True, exist_ok=True)
    fileio.write_trajectory(out / "trajectory.txt", refined)
    if dump_matches:
        fileio.write_matches(out / "matches.txt", match_sets)
    for ms, est in zip(match_sets, estimates):
        print(f"pair ({ms.frame_a}, {ms.frame_b}): {len(ms)} matches, {est.n_inliers} inliers, "
              f"rms {1e3 * est.residual_rms:.4f} mm")
    print(f"wrote {len(refined)} poses to {out / 'trajectory.txt'}")
    return EXIT_OK


def cmd_stitch(cfg: PipelineConfig, frames_dir, trajectory_path, out: Path, debug_seams=False) -> int:
    traj = fileio.read_trajectory(trajectory_path, cfg.spacing_m)
    if len(traj) == 0:
        raise InputError(f"{trajectory_path}: trajectory is empty")
    paths = _frame_paths(frames_dir)
    if len(paths) != len(traj):
        raise InputError(f"{len(paths)} frames but {len(traj)} trajectory records")
    frames = _read_frames(paths, cfg, gray=False)
    strips = unwrap_sequence(frames, traj, cfg)
    image, seams = photometry.stitch(strips, cfg.stitch_config(), return_seams=True)

    out.mkdir(parents=True, exist_ok=True)
    (out / "strips").mkdir(exist_ok=True)
    for s in strips:
        fileio.write_strip(out / "strips" / f"strip_{s.frame_index:03d}.png", s)
    g0 = strips[0].grid
    grid = unwrap.UnwrapGrid(g0.circumference_samples, g0.radius_m, g0.row0, image.shape[0], g0.theta0)
    fileio.write_strip(out / "unwrap.png", unwrap.UnwrapStrip(image, grid, -1, np.ones(image.shape[:2], bool)))
    if debug_seams:
        fileio.write_unwrap(out / "seams.png", fileio.seam_overlay(image, seams, g0.row0))
    costs = ", ".join(f"{s.total_cost:.3f}" for _, s in seams)
    print(f"stitched {len(strips)} strips into {image.shape[0]}x{image.shape[1]} unwrap; seam costs [{costs}]")
    return EXIT_OK


def cmd_eval(pred_dir, gt_dir, out: Path) -> int:
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise InputError(f"mask directory not found: {d}")
    pred_names = {p.name for p in pred_dir.glob("*.png")}
    gt_names = {p.name for p in gt_dir.glob("*.png")}
    if pred_names != gt_names:
        missing = sorted(pred_names ^ gt_names)
        raise InputError(f"prediction and ground-truth file sets differ: {missing[:5]}")
    if not gt_names:
        raise InputError(f"no masks in {gt_dir}")
    per_image, gts = [], []
    for name in sorted(gt_names):
        p, g = fileio.read_mask(pred_dir / name), fileio.read_mask(gt_dir / name)
        if p.shape != g.shape:
            raise InputError(f"{name}: prediction {p.shape} and ground truth {g.shape} differ in size")
        per_image.append(metrics.confusion(p, g))
        gts.append(g)
    total = np.sum(per_image, axis=0)
    report = (metrics.format_report(total, metrics.mean_iou(per_image)) + "\n"
              + metrics.format_class_stats(metrics.class_stats(gts)))
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report)
    print(report, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="sewerunwrap", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="render a synthetic pipe sequence with ground truth")
    p.add_argument("--jpeg-sim", action="store_true", help="pass frames through lossy JPEG coding")

    p = sub.add_parser("pose", parents=[common], help="estimate camera poses from fisheye frames")
    p.add_argument("frames_dir")
    p.add_argument("--matches", type=Path, help="use this match table instead of feature matching")
    p.add_argument("--dump-matches", action="store_true", help="write the match table used")

    p = sub.add_parser("stitch", parents=[common], help="unwrap frames and stitch them into one image")
    p.add_argument("frames_dir")
    p.add_argument("trajectory")
    p.add_argument("--debug-seams", action="store_true", help="also write a seam overlay image")

    p = sub.add_parser("eval", parents=[common], help="confusion matrix and mean-IoU of label masks")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed)
        if args.command == "synth":
            return cmd_synth(cfg, args.out, args.jpeg_sim)
        if args.command == "pose":
            return cmd_pose(cfg, args.frames_dir, args.out, args.matches, args.dump_matches)
        if args.command == "stitch":
            return cmd_stitch(cfg, args.frames_dir, args.trajectory, args.out, args.debug_seams)
        return cmd_eval(args.pred_dir, args.gt_dir, args.out)
    except (ConfigError, FileFormatError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - every pipeline failure maps to one status
        log.debug("traceback", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
