"""Plain-text pipeline configuration.

The file holds one ``key = value`` pair per line; ``#`` and ``;`` start
comments and section headers are optional.  Unknown keys are rejected so that
typos do not silently fall back to defaults.  Vectors are written as numbers
separated by spaces or commas.

Keys (defaults in parentheses)::

    # lens
    fov_deg (185)  circle_diameter_px (780)
    center_px (399.5 399.5)  image_size_px (800 800)
    # pipe
    radius_m (0.125)  length_m (1.3)  z_start_m (-0.1)
    # synthetic scene and trajectory
    frames (20)  spacing_m (0.05)  jitter_t_m (0.0125)  jitter_rot_deg (2)
    texture (value-noise)  texture_cell_m (0.006)  lighting_slope_per_m (0)
    n_decals (6)  supersample (1)  jpeg_quality (40)
    match_count (200)  match_noise_px (0)  match_outlier_frac (0)
    # features
    ratio (0.8)  k_neighbors (5)  consistency_px (5)  rounds (3)  max_features (4000)
    # pose
    ransac_iters (200)  ransac_threshold_m (0.005)  max_iters (20)  tol (1e-10)
    # unwrap
    circumference_samples (360)  theta0_deg (90)  near_m (0.01)
    overlap_m (0.03, at least band_px + 4 unwrap rows)  min_ratio (0.5)
    # photometry
    sigma (15)  keep_fraction (0.7)  trim_iters (3)
    seam_alpha (1)  seam_beta (0.5)  band_px (8)  correct_lighting (true)
    # randomness
    seed (0)
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .features import MatchConfig
from .geometry import FisheyeIntrinsics, PipeModel
from .photometry import StitchConfig
from .pose import PoseConfig


class ConfigError(ValueError):
    """Invalid configuration file or value."""


@dataclass
class PipelineConfig:
    fov_deg: float = 185.0
    circle_diameter_px: float = 780.0
    center_px: tuple[float, float] = (399.5, 399.5)
    image_size_px: tuple[int, int] = (800, 800)

    radius_m: float = 0.125
    length_m: float = 1.3
    z_start_m: float = -0.1

    frames: int = 20
    spacing_m: float = 0.05
    jitter_t_m: float = 0.0125
    jitter_rot_deg: float = 2.0
    texture: str = "value-noise"
    texture_cell_m: float = 0.006
    lighting_slope_per_m: float = 0.0
    n_decals: int = 6
    supersample: int = 1
    jpeg_quality: int = 40
    match_count: int = 200
    match_noise_px: float = 0.0
    match_outlier_frac: float = 0.0

    ratio: float = 0.8
    k_neighbors: int = 5
    consistency_px: float = 5.0
    rounds: int = 3
    max_features: int = 4000

    ransac_iters: int = 200
    ransac_threshold_m: float = 0.005
    max_iters: int = 20
    tol: float = 1e-10

    circumference_samples: int = 360
    theta0_deg: float = 90.0
    near_m: float = 0.01
    overlap_m: float = 0.03
    min_ratio: float = 0.5

    sigma: float = 15.0
    keep_fraction: float = 0.7
    trim_iters: int = 3
    seam_alpha: float = 1.0
    seam_beta: float = 0.5
    band_px: int = 8
    correct_lighting: bool = True

    seed: int = 0

    def validate(self) -> "PipelineConfig":
        positive = ["fov_deg", "circle_diameter_px", "radius_m", "length_m", "spacing_m",
                    "texture_cell_m", "ransac_threshold_m", "tol", "overlap_m", "sigma"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        at_least = {"frames": 1, "supersample": 1, "match_count": 6, "k_neighbors": 1, "rounds": 1,
                    "max_features": 1, "ransac_iters": 1, "max_iters": 1, "circumference_samples": 4,
                    "trim_iters": 1, "band_px": 1}
        for name, lo in at_least.items():
            if getattr(self, name) < lo:
                raise ConfigError(f"{name} must be >= {lo}, got {getattr(self, name)}")
        nonneg = ["jitter_t_m", "jitter_rot_deg", "lighting_slope_per_m", "n_decals", "match_noise_px",
                  "near_m", "min_ratio", "seam_alpha", "seam_beta"]
        for name in nonneg:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0 <= self.match_outlier_frac < 1:
            raise ConfigError("match_outlier_frac must be in [0, 1)")
        if not 0 < self.ratio <= 1:
            raise ConfigError("ratio must be in (0, 1]")
        if not 0 < self.keep_fraction <= 1:
            raise ConfigError("keep_fraction must be in (0, 1]")
        if not 1 <= self.jpeg_quality <= 95:
            raise ConfigError("jpeg_quality must be in [1, 95]")
        if self.texture not in ("checker", "value-noise"):
            raise ConfigError(f"texture must be 'checker' or 'value-noise', got {self.texture!r}")
        if self.jitter_t_m >= 0.5 * self.radius_m:
            raise ConfigError("jitter_t_m must stay below half the pipe radius")
        # consecutive strips must share enough rows for the blend band
        res = 2.0 * np.pi * self.radius_m / self.circumference_samples
        need = self.band_px + 4
        if self.overlap_m / res < need:
            raise ConfigError(f"overlap_m = {self.overlap_m} m is {self.overlap_m / res:.1f} unwrap rows; "
                              f"band_px = {self.band_px} needs at least {need} (overlap_m >= {need * res:.4f})")
        # the domain types carry their own invariants
        try:
            self.intrinsics()
            self.pipe()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    # -- views for the individual modules -------------------------------

    def intrinsics(self) -> FisheyeIntrinsics:
        return FisheyeIntrinsics(self.fov_deg, self.circle_diameter_px, tuple(self.center_px),
                                 tuple(self.image_size_px))

    def pipe(self) -> PipeModel:
        return PipeModel(self.radius_m, self.length_m)

    def match_config(self) -> MatchConfig:
        return MatchConfig(ratio=self.ratio, k_neighbors=self.k_neighbors,
                           consistency_px=self.consistency_px, rounds=self.rounds,
                           max_features=self.max_features)

    def pose_config(self) -> PoseConfig:
        return PoseConfig(ransac_iters=self.ransac_iters, ransac_threshold_m=self.ransac_threshold_m,
                          max_iters=self.max_iters, tol=self.tol, spacing_hint_m=self.spacing_m,
                          seed=self.seed)

    def stitch_config(self) -> StitchConfig:
        return StitchConfig(sigma=self.sigma, keep_fraction=self.keep_fraction,
                            trim_iters=self.trim_iters, alpha=self.seam_alpha, beta=self.seam_beta,
                            band_px=self.band_px, correct_lighting=self.correct_lighting)

    @property
    def theta0(self) -> float:
        return float(np.deg2rad(self.theta0_deg))


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(name, kind, text):
    text = text.strip()
    try:
        if kind in (float, "float"):
            return float(text)
        if kind in (int, "int"):
            return int(text)
        if kind in (bool, "bool"):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if kind in (str, "str"):
            return text
        # 2-vectors
        parts = text.replace(",", " ").split()
        if len(parts) != 2:
            raise ValueError(text)
        conv = int if "int" in str(kind) else float
        return tuple(conv(p) for p in parts)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def parse_config(text: str, source: str = "<string>") -> PipelineConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str
    # section headers are optional; everything before the first one lands here
    try:
        parser.read_string("[pipeline]\n" + text, source=source)
    except configparser.ParsingError as exc:
        # line numbers count the injected header
        lineno, line = exc.errors[0]
        raise ConfigError(f"{source}:{lineno - 1}: cannot parse {line.strip()!r}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    kinds = {f.name: f.type for f in fields(PipelineConfig)}
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in kinds:
                raise ConfigError(f"{source}: unknown key {key!r}")
            values[key] = _convert(key, kinds[key], raw)
    return PipelineConfig(**values)


def load_config(path=None, **overrides) -> PipelineConfig:
    """Read ``path`` (defaults only if ``None``), apply overrides and validate."""
    if path is None:
        cfg = PipelineConfig()
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        cfg = parse_config(p.read_text(), str(p))
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg.validate()
