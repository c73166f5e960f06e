"""Structured configuration.

A configuration is a tree of dataclasses. Files are YAML and may set any subset
of the keys; :func:`load_config` merges, in order, the schema defaults, the file
and dot-list overrides (``loss.w_geo=0.01``), validating types with omegaconf.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from omegaconf import OmegaConf

VARIANTS = ("neus", "neus+curvature")
HIT_MODES = ("sample", "ray")
SURFACE_SDF_SOURCES = ("buffer", "field")
PRECISIONS = ("float64", "float32")


def _check_non_negative(section: str, **values: float) -> None:
    for key, value in values.items():
        if value < 0:
            raise ValueError("{}.{} must be >= 0. Got {}.".format(section, key, value))


def _check_choice(name: str, value: str, choices: Sequence[str]) -> None:
    if value not in choices:
        raise ValueError(
            "{} must be one of {}. Got {!r}.".format(name, ", ".join(choices), value)
        )


@dataclass
class SdfFieldConfig:
    n_layers: int = 4
    hidden_width: int = 128
    feature_width: int = 64
    num_frequencies: int = 6
    include_input: bool = True
    geometric_init: bool = True
    init_radius: float = 0.5
    softplus_beta: float = 100.0

    def __post_init__(self):
        if self.n_layers < 1 or self.hidden_width < 1:
            raise ValueError("sdf.n_layers and sdf.hidden_width must be >= 1.")
        if self.geometric_init and not self.include_input:
            raise ValueError("sdf.geometric_init requires sdf.include_input.")


@dataclass
class ColorFieldConfig:
    n_layers: int = 3
    hidden_width: int = 64
    view_frequencies: int = 4
    softplus_beta: float = 100.0


@dataclass
class RenderConfig:
    n_coarse: int = 64
    n_importance: int = 64
    perturb: bool = True
    s_init: float = 20.0
    s_min: float = 1.0
    alpha_eps: float = 1e-7
    bounding_radius: float = 1.0
    background: List[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])

    def __post_init__(self):
        if self.n_coarse < 2:
            raise ValueError("render.n_coarse must be >= 2.")
        if self.s_min <= 0 or self.s_init <= self.s_min:
            raise ValueError("render.s_init must be > render.s_min > 0.")


@dataclass
class BufferConfig:
    resolution: int = 64
    contrast: float = 0.5
    # Views between refreshes; 0 refreshes once per pass over all views.
    refresh_period: int = 0
    hit_mode: str = "sample"

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError("buffer.resolution must be >= 1.")
        _check_non_negative(
            "buffer", contrast=self.contrast, refresh_period=self.refresh_period
        )
        _check_choice("buffer.hit_mode", self.hit_mode, HIT_MODES)


@dataclass
class LossConfig:
    w_eik: float = 0.1
    w_geo: float = 0.1
    w_surf: float = 1.0
    w_global: float = 1.0
    w_curv: float = 5e-4
    curvature_step: float = 1e-2
    curvature_samples: int = 512
    # Render samples pulled to the surface per iteration (0: all of them); the
    # buffer resamples as many targets.
    pull_queries: int = 1024
    surface_sdf: str = "buffer"

    def __post_init__(self):
        _check_non_negative(
            "loss",
            w_eik=self.w_eik,
            w_geo=self.w_geo,
            w_surf=self.w_surf,
            w_global=self.w_global,
            w_curv=self.w_curv,
        )
        if self.curvature_step <= 0:
            raise ValueError("loss.curvature_step must be > 0.")
        if self.curvature_samples < 1 or self.pull_queries < 0:
            raise ValueError(
                "loss.curvature_samples must be >= 1 and loss.pull_queries >= 0."
            )
        _check_choice("loss.surface_sdf", self.surface_sdf, SURFACE_SDF_SOURCES)


@dataclass
class OptimConfig:
    learning_rate: float = 5e-4
    warmup_iterations: int = 500
    lr_alpha: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class MeshConfig:
    resolution: int = 128
    iso: float = 0.0
    chunk_size: int = 65536
    n_jobs: int = 1
    vertex_colors: bool = True

    def __post_init__(self):
        if self.resolution < 8:
            raise ValueError("mesh.resolution must be >= 8.")


@dataclass
class EvaluationConfig:
    n_points: int = 10000
    squared: bool = False
    eval_every: int = 0
    eval_resolution: int = 64
    seed: int = 0
    # Silhouettes are grown by this many pixels before hull filtering.
    hull_dilation: int = 1

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError("evaluation.n_points must be >= 1.")
        _check_non_negative(
            "evaluation",
            eval_every=self.eval_every,
            hull_dilation=self.hull_dilation,
        )


@dataclass
class TrainConfig:
    sdf: SdfFieldConfig = field(default_factory=SdfFieldConfig)
    color: ColorFieldConfig = field(default_factory=ColorFieldConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    buffer: BufferConfig = field(default_factory=BufferConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    rays_per_batch: int = 256
    iterations: int = 3000
    seed: int = 0
    variant: str = "neus"
    precision: str = "float64"
    log_every: int = 100
    checkpoint_every: int = 0
    dump_points_every: int = 0
    progress: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1.")
        if self.rays_per_batch < 1:
            raise ValueError("rays_per_batch must be >= 1.")
        _check_choice("variant", self.variant, VARIANTS)
        _check_choice("precision", self.precision, PRECISIONS)

    @property
    def dtype(self):
        return np.dtype(self.precision)

    @property
    def uses_curvature(self) -> bool:
        return self.variant == "neus+curvature" and self.loss.w_curv > 0

    @property
    def uses_refinement(self) -> bool:
        return self.loss.w_geo > 0


def load_config(
    path: Optional[str] = None,
    overrides: Sequence[str] = (),
    base: Optional[TrainConfig] = None,
) -> TrainConfig:
    """Build a TrainConfig from defaults (or ``base``), an optional YAML file and
    overrides."""
    merged = OmegaConf.structured(base if base is not None else TrainConfig)
    if path is not None:
        merged = OmegaConf.merge(merged, OmegaConf.load(path))
    if overrides:
        merged = OmegaConf.merge(merged, OmegaConf.from_dotlist(list(overrides)))
    return OmegaConf.to_object(merged)


def config_to_yaml(config: TrainConfig) -> str:
    return OmegaConf.to_yaml(OmegaConf.structured(config))


def config_from_yaml(text: str) -> TrainConfig:
    merged = OmegaConf.merge(OmegaConf.structured(TrainConfig), OmegaConf.create(text))
    return OmegaConf.to_object(merged)
