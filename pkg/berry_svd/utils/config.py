"""Option sets for continuation, phase accounting, probes and detection."""
import math
from dataclasses import dataclass, field
from typing import Tuple

from berry_svd.utils.errors import ConfigError


def _require_positive(owner: str, **values: float):
    """Raise ConfigError for every non-positive value."""
    for name, value in values.items():
        if not value > 0:
            raise ConfigError(f"{owner}.{name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class ContinuationOptions:
    """Step control and degeneracy thresholds for the SVD continuation."""

    corr_min: float = 0.99
    corr_grow: float = 0.999
    growth: float = 1.25
    dt_max: float = 1.0 / 64
    dt_min: float = 1e-9
    gap_min: float = 1e-8
    sig_min: float = 1e-10

    def __post_init__(self):
        _require_positive(
            "ContinuationOptions",
            corr_min=self.corr_min,
            corr_grow=self.corr_grow,
            dt_max=self.dt_max,
            dt_min=self.dt_min,
            gap_min=self.gap_min,
            sig_min=self.sig_min,
        )
        if not self.corr_min <= self.corr_grow <= 1.0:
            raise ConfigError("ContinuationOptions requires corr_min <= corr_grow <= 1")
        if self.growth <= 1.0:
            raise ConfigError(f"ContinuationOptions.growth must be > 1, got {self.growth!r}")
        if self.dt_min >= self.dt_max:
            raise ConfigError("ContinuationOptions requires dt_min < dt_max")


@dataclass(frozen=True)
class PhaseOptions:
    """Tolerances used when turning a closed trace into a phase report."""

    class_tol: float = 0.3
    offdiag_tol: float = 1e-6
    consistency_tol: float = 1e-8
    refine_rounds: int = 3
    max_increment: float = math.pi / 2

    def __post_init__(self):
        _require_positive(
            "PhaseOptions",
            class_tol=self.class_tol,
            offdiag_tol=self.offdiag_tol,
            consistency_tol=self.consistency_tol,
            max_increment=self.max_increment,
        )
        if self.class_tol >= math.pi / 2:
            raise ConfigError("PhaseOptions.class_tol must be below pi/2")
        if self.refine_rounds < 0:
            raise ConfigError("PhaseOptions.refine_rounds must be >= 0")


@dataclass(frozen=True)
class ProbeOptions:
    """Sampling policy for the genericity probes."""

    t_values: Tuple[float, ...] = (1e-2, 1e-3, 1e-4, 1e-5)
    n_directions: int = 16
    stabilization: float = 0.05
    gen_tol: float = 1e-6
    probe_tol: float = 1e-3
    candidate_tol: float = 1e-6

    def __post_init__(self):
        _require_positive(
            "ProbeOptions",
            stabilization=self.stabilization,
            gen_tol=self.gen_tol,
            probe_tol=self.probe_tol,
            candidate_tol=self.candidate_tol,
        )
        if len(self.t_values) < 2 or any(t <= 0 for t in self.t_values):
            raise ConfigError("ProbeOptions.t_values needs at least two positive values")
        if list(self.t_values) != sorted(self.t_values, reverse=True):
            raise ConfigError("ProbeOptions.t_values must be decreasing")
        if self.n_directions < 1:
            raise ConfigError("ProbeOptions.n_directions must be >= 1")


@dataclass(frozen=True)
class DetectorOptions:
    """Quadtree subdivision and Newton polish settings."""

    loc_tol: float = 1e-3
    det_tol: float = 1e-10
    max_cells: int = 4096
    samples: int = 128
    inflate: float = 0.1
    inflate_retries: int = 3
    newton_iter: int = 50
    initial_splits: int = 0
    continuation: ContinuationOptions = field(default_factory=ContinuationOptions)
    phase: PhaseOptions = field(default_factory=PhaseOptions)

    def __post_init__(self):
        _require_positive(
            "DetectorOptions",
            loc_tol=self.loc_tol,
            det_tol=self.det_tol,
            max_cells=self.max_cells,
            inflate=self.inflate,
            newton_iter=self.newton_iter,
        )
        if self.samples < 8:
            raise ConfigError(f"DetectorOptions.samples must be >= 8, got {self.samples}")
        if self.inflate_retries < 0 or self.initial_splits < 0:
            raise ConfigError("DetectorOptions retries and splits must be >= 0")
