"""Pipeline configuration: every tunable constant, loaded from YAML.

Angles are given in degrees in files (``*_deg`` keys) and converted to
radians here. Unknown keys are rejected so typos do not silently fall back
to defaults.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional

import yaml

from .inference import GridSpec
from .sonar_sim import SonarConfig

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_CLASSIFIER = DATA_DIR / "classifier.json"


class ConfigError(ValueError):
    """Invalid configuration; message names the file and field."""


@dataclass
class SonarSection:
    max_range: float = 30.0
    range_resolution: float = 0.05
    horizontal_aperture_deg: float = 130.0
    horizontal_bins: int = 260
    vertical_aperture_deg: float = 20.0
    vertical_bins: int = 40
    beamwidth_deg: float = 20.0
    rays_per_bin: int = 32
    gain: float = 1.0
    noise_floor: float = 1e-3
    speckle_scale: float = 0.5
    grazing_floor: float = 0.1

    def _common(self):
        return dict(
            max_range=self.max_range,
            range_resolution=self.range_resolution,
            vertical_beamwidth=math.radians(self.beamwidth_deg),
            rays_per_bin=self.rays_per_bin,
            gain=self.gain,
            noise_floor=self.noise_floor,
            speckle_scale=self.speckle_scale,
            grazing_floor=self.grazing_floor,
        )

    def horizontal(self) -> SonarConfig:
        return SonarConfig(angular_aperture=math.radians(self.horizontal_aperture_deg),
                           angular_bin_count=self.horizontal_bins, orientation="horizontal",
                           **self._common())

    def vertical(self) -> SonarConfig:
        return SonarConfig(angular_aperture=math.radians(self.vertical_aperture_deg),
                           angular_bin_count=self.vertical_bins, orientation="vertical",
                           **self._common())


@dataclass
class CFARSection:
    train_cells: int = 10
    guard_cells: int = 2
    threshold_factor: float = 15.8


@dataclass
class ClusteringSection:
    eps: float = 0.5
    min_pts: int = 4
    min_cluster_size: int = 10
    # denoise vertical-image features with the same clustering before fusion
    cluster_vertical: bool = True


@dataclass
class ClassificationSection:
    model_path: Optional[str] = None
    m: int = 25
    accept_threshold: float = 0.8
    perturbation_scale: float = 0.5
    train_samples_per_class: int = 100


@dataclass
class FusionSection:
    min_confidence: float = 0.05
    range_tolerance: int = 1


@dataclass
class InferenceSection:
    classes: List[str] = field(default_factory=lambda: ["cylindrical_piling", "rectangular_piling"])
    sigma: float = 0.1
    likelihood_floor: float = 1e-3
    # bin probability a MAP height must exceed; null means 5 / number of z bins
    confidence_threshold: Optional[float] = None
    r_min: float = -1.0
    r_max: float = 3.0
    r_step: float = 0.1
    theta_min_deg: float = -10.0
    theta_max_deg: float = 10.0
    theta_step_deg: float = 1.0
    z_min: float = -5.0
    z_max: float = 5.0
    z_step: float = 0.05
    icp_max_iters: int = 50
    icp_tol: float = 1e-4
    icp_max_residual: float = 0.5
    max_reference_points: int = 5000
    min_fused_points: int = 1
    # drop predicted heights outside the horizontal sonar's vertical beam
    limit_to_beam: bool = True

    def grid(self) -> GridSpec:
        return GridSpec(self.r_min, self.r_max, self.r_step,
                        math.radians(self.theta_min_deg), math.radians(self.theta_max_deg),
                        math.radians(self.theta_step_deg), self.z_min, self.z_max, self.z_step)


@dataclass
class MetricsSection:
    voxel_size: float = 0.1


@dataclass
class PipelineConfig:
    mode: str = "semantic"
    seed: int = 0
    # overrides the mission's spacing when the mission is given as waypoints
    keyframe_spacing: Optional[float] = None
    sonar: SonarSection = field(default_factory=SonarSection)
    cfar: CFARSection = field(default_factory=CFARSection)
    clustering: ClusteringSection = field(default_factory=ClusteringSection)
    classification: ClassificationSection = field(default_factory=ClassificationSection)
    fusion: FusionSection = field(default_factory=FusionSection)
    inference: InferenceSection = field(default_factory=InferenceSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)

    def with_mode(self, mode: str) -> "PipelineConfig":
        return replace(self, mode=mode)

    def classifier_path(self) -> Path:
        p = self.classification.model_path
        return Path(p) if p else DEFAULT_CLASSIFIER

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self, source: str = "<config>") -> "PipelineConfig":
        def bad(fieldname, why):
            raise ConfigError(f"{source}: {fieldname}: {why}")

        if self.mode not in ("benchmark", "semantic"):
            bad("mode", f"must be 'benchmark' or 'semantic', got {self.mode!r}")
        if self.keyframe_spacing is not None and self.keyframe_spacing <= 0:
            bad("keyframe_spacing", "must be positive")
        try:
            h, v = self.sonar.horizontal(), self.sonar.vertical()
        except ValueError as e:
            bad("sonar", str(e))
        c = self.cfar
        if c.train_cells < 1:
            bad("cfar.train_cells", "must be >= 1")
        if c.guard_cells < 1:
            bad("cfar.guard_cells", "must be >= 1")
        if c.threshold_factor <= 0:
            bad("cfar.threshold_factor", "must be positive")
        span = 2 * (c.train_cells + c.guard_cells) + 1
        if span > min(h.range_bins, h.angular_bin_count, v.range_bins, v.angular_bin_count):
            bad("cfar", f"window of {span} cells does not fit the sonar images")
        if self.clustering.eps <= 0:
            bad("clustering.eps", "must be positive")
        if self.clustering.min_pts < 1:
            bad("clustering.min_pts", "must be >= 1")
        if self.clustering.min_cluster_size < 1:
            bad("clustering.min_cluster_size", "must be >= 1")
        k = self.classification
        if k.m < 1:
            bad("classification.m", "must be >= 1")
        if not 0 < k.accept_threshold <= 1:
            bad("classification.accept_threshold", "must be in (0, 1]")
        if k.perturbation_scale < 0:
            bad("classification.perturbation_scale", "must be >= 0")
        if not 0 <= self.fusion.min_confidence <= 1:
            bad("fusion.min_confidence", "must be in [0, 1]")
        if self.fusion.range_tolerance < 0:
            bad("fusion.range_tolerance", "must be >= 0")
        inf = self.inference
        if inf.sigma <= 0:
            bad("inference.sigma", "must be positive")
        if inf.likelihood_floor < 0:
            bad("inference.likelihood_floor", "must be >= 0")
        if inf.confidence_threshold is not None and not 0 < inf.confidence_threshold < 1:
            bad("inference.confidence_threshold", "must be in (0, 1)")
        try:
            inf.grid()
        except ValueError as e:
            bad("inference grid", str(e))
        if inf.icp_max_iters < 0:
            bad("inference.icp_max_iters", "must be >= 0")
        if inf.max_reference_points < 3:
            bad("inference.max_reference_points", "must be >= 3")
        if self.metrics.voxel_size <= 0:
            bad("metrics.voxel_size", "must be positive")
        return self


_SECTIONS = {
    "sonar": SonarSection,
    "cfar": CFARSection,
    "clustering": ClusteringSection,
    "classification": ClassificationSection,
    "fusion": FusionSection,
    "inference": InferenceSection,
    "metrics": MetricsSection,
}


_OPTIONAL_FLOATS = {"inference.confidence_threshold"}


def _coerce(value, default, where, source):
    if default is None or value is None:
        return value
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            return [str(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{source}: {where}: expected {type(default).__name__}, got {value!r}") from None
    return value


def config_from_dict(data: Optional[dict], source: str = "<config>") -> PipelineConfig:
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    cfg = PipelineConfig()
    top = {f.name for f in fields(PipelineConfig)}
    for key, value in data.items():
        if key not in top:
            raise ConfigError(f"{source}: {key}: unknown field")
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{source}: {key}: must be a mapping")
            section = getattr(cfg, key)
            names = {f.name for f in fields(section)}
            for sk, sv in value.items():
                if sk not in names:
                    raise ConfigError(f"{source}: {key}.{sk}: unknown field")
                default = getattr(section, sk)
                if default is None and f"{key}.{sk}" in _OPTIONAL_FLOATS:
                    default = 0.0
                setattr(section, sk, _coerce(sv, default, f"{key}.{sk}", source))
        elif key == "keyframe_spacing":
            cfg.keyframe_spacing = None if value is None else _coerce(value, 1.0, key, source)
        else:
            setattr(cfg, key, _coerce(value, getattr(cfg, key), key, source))
    return cfg.validate(source)


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig().validate()
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}") from None
    return config_from_dict(data, str(path))


def dump_config(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
