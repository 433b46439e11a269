"""Run configuration: one strict JSON document drives every stage.

A config file may set any subset of the fields below; unknown keys are
rejected so typos fail loudly instead of silently using a default. All
randomness in a run flows from the single ``seed`` field.
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

DEFAULT_CLASSES = {0: "terrain", 1: "building",
                   2: "high_vegetation", 3: "vehicle"}


class ConfigError(ValueError):
    """Bad configuration content; maps to the usage-error exit code."""


@dataclass
class PipelineConfig:
    input_path: str | None = None
    output_dir: str | None = None
    planarity_model: str | None = None
    semantic_model: str | None = None
    weld_epsilon: float = 1e-6
    eigen_radii: tuple = (0.5, 1.0, 2.0)
    elevation_radii: tuple = (10.0, 20.0, 40.0)
    trees: int = 100
    min_leaf: int = 5
    max_depth: int = 40
    lambda_d: float = 1.2
    lambda_m: float = 0.1
    lambda_g: float = 0.9
    parallel_angle_deg: float = 5.0
    ground_radius: float = 30.0
    proximity_mode: str = "knn"
    knn_k: int = 16
    knn_cutoff_factor: float = 16.0
    sampling_density: float = 10.0
    boundary_rings: int = 2
    nonplanar_classes: tuple = (2,)
    seed: int = 0
    threads: int = 0                    # 0 = auto
    classes: dict = field(default_factory=lambda: dict(DEFAULT_CLASSES))

    def __post_init__(self):
        self.eigen_radii = tuple(float(r) for r in self.eigen_radii)
        self.elevation_radii = tuple(float(r) for r in self.elevation_radii)
        self.nonplanar_classes = tuple(int(c) for c in self.nonplanar_classes)
        for name in ("weld_epsilon", "lambda_d", "lambda_m", "lambda_g"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("trees", "min_leaf", "max_depth"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("parallel_angle_deg", "ground_radius",
                     "knn_cutoff_factor", "sampling_density"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.knn_k < 1:
            raise ConfigError("knn_k must be >= 1")
        if self.boundary_rings < 0:
            raise ConfigError("boundary_rings must be >= 0")
        if self.threads < 0:
            raise ConfigError("threads must be >= 0")
        if self.proximity_mode not in ("knn", "delaunay"):
            raise ConfigError(f"unknown proximity mode {self.proximity_mode!r}")
        if any(r <= 0 for r in self.eigen_radii + self.elevation_radii):
            raise ConfigError("feature radii must be > 0")
        if not self.classes:
            raise ConfigError("class table must not be empty")
        self.classes = {int(k): str(v) for k, v in self.classes.items()}

    def as_dict(self) -> dict:
        """JSON-safe snapshot; class ids become string keys."""
        d = asdict(self)
        d["eigen_radii"] = list(self.eigen_radii)
        d["elevation_radii"] = list(self.elevation_radii)
        d["nonplanar_classes"] = list(self.nonplanar_classes)
        d["classes"] = {str(k): v for k, v in sorted(self.classes.items())}
        return d

    def face_feature_params(self):
        from .features import FaceFeatureParams
        return FaceFeatureParams(eigen_radii=self.eigen_radii,
                                 elevation_radii=self.elevation_radii)

    def forest_params(self):
        from .forest import ForestParams
        return ForestParams(trees=self.trees, min_leaf=self.min_leaf,
                            max_depth=self.max_depth)

    def growth_params(self):
        from .overseg import GrowthParams
        return GrowthParams(lambda_d=self.lambda_d, lambda_m=self.lambda_m,
                            lambda_g=self.lambda_g)

    def graph_params(self):
        from .seggraph import GraphParams
        return GraphParams(parallel_angle_deg=self.parallel_angle_deg,
                           ground_radius=self.ground_radius,
                           proximity_mode=self.proximity_mode,
                           knn_k=self.knn_k,
                           knn_cutoff_factor=self.knn_cutoff_factor,
                           exmat_density=self.sampling_density,
                           seed=self.seed)


_FIELD_NAMES = {f.name for f in fields(PipelineConfig)}


def config_from_dict(data: dict) -> PipelineConfig:
    unknown = sorted(set(data) - _FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    return PipelineConfig(**data)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return config_from_dict(data)


def save_config(config: PipelineConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config.as_dict(), fh, indent=1)
        fh.write("\n")


def override_config(config: PipelineConfig, **changes) -> PipelineConfig:
    """New config with the given fields replaced; unknown names rejected."""
    unknown = sorted(set(changes) - _FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    return replace(config, **changes)
