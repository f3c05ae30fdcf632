"""Experiment configuration: dataclass with per-scenario defaults, loaded from JSON."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .gatesim import NoiseConfig
from .model import ModelParams, PriorSpec
from .smc import SmcConfig

SCENARIOS = ("risk_vs_K", "risk_vs_mmax", "gate_study", "fisher_landscape", "simulate")

DEFAULT_PRIOR_MEAN = (0.95, 0.95, 0.3, 0.5)
DEFAULT_PRIOR_SIGMA = (0.01, 0.01, 0.01, 0.01)

# Depolarizing + Z over-rotation on every Clifford, extra depolarizing on X,
# and lossy SPAM. Ground truth: p_tilde ~ 0.9983, p_ref ~ 0.9957,
# A ~ 0.3185, B ~ 0.5012.
GATE_STUDY_NOISE = {
    "depolarizing_strength": 0.0042687,
    "overrotation_angle": 0.02,
    "per_gate": {"X": {"depolarizing_strength": 0.0018331}},
    "prep_polarization": 0.71074,
    "meas_offset": 0.5012,
    "meas_contrast": 0.45,
}


def _lengths(start: int, stop: int, step: int = 1) -> list[int]:
    """Inclusive integer range."""
    return list(range(start, stop + 1, step))


DEFAULT_STUDIES = [
    {
        "name": "bad_prior",
        "prior": "fixed",
        "reference_lengths": _lengths(1, 191, 10),
        "interleaved_lengths": _lengths(2, 192, 10),
        "shots": 1000,
    },
    {
        "name": "good_prior",
        "prior": "around_truth",
        "reference_lengths": _lengths(1, 91, 10),
        "interleaved_lengths": _lengths(2, 192, 10),
        "shots": 100,
    },
]


@dataclass
class LandscapeConfig:
    p_tilde: float = 0.9988
    p_ref: float = 0.9978
    fixed_B: float = 0.5
    fixed_A: float = 0.25
    A_grid: list = field(default_factory=lambda: [round(0.025 * k, 3) for k in range(1, 21)])
    B_grid: list = field(default_factory=lambda: [round(0.025 * k, 3) for k in range(0, 31)])
    F_grid: list = field(default_factory=lambda: [0.99, 0.995, 0.998, 0.999, 0.9995, 0.9999])
    m_max: int = 50_000


@dataclass
class ExperimentConfig:
    scenario: str = "risk_vs_K"
    prior_mean: list = field(default_factory=lambda: list(DEFAULT_PRIOR_MEAN))
    prior_sigma: list = field(default_factory=lambda: list(DEFAULT_PRIOR_SIGMA))
    true_params: list | None = None
    noise: dict | None = None
    interleaved_gate: str = "X"
    reference_lengths: list = field(default_factory=lambda: _lengths(1, 100))
    interleaved_lengths: list = field(default_factory=lambda: _lengths(1, 50))
    shots: list = field(default_factory=lambda: [1, 3, 10, 32, 100])
    m_max: list = field(default_factory=lambda: [21, 51, 101, 201, 401])
    m_step: int = 10
    studies: list = field(default_factory=lambda: [dict(s) for s in DEFAULT_STUDIES])
    landscape: LandscapeConfig = field(default_factory=LandscapeConfig)
    n_trials: int = 100
    bim_samples: int = 10_000
    smc: SmcConfig = field(default_factory=SmcConfig)
    output_path: str | None = None
    records_path: str | None = None
    rng_seed: int = 20150101
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if isinstance(self.smc, dict):
            self.smc = SmcConfig(**self.smc)
        if isinstance(self.landscape, dict):
            self.landscape = LandscapeConfig(**self.landscape)
        for name in ("reference_lengths", "interleaved_lengths"):
            setattr(self, name, expand_lengths(getattr(self, name)))
        if isinstance(self.shots, int):
            self.shots = [self.shots]
        if self.n_trials < 1:
            raise ConfigError("n_trials must be at least 1")
        if not self.shots or not self.m_max:
            raise ConfigError("design grids must be nonempty")
        if self.scenario in ("risk_vs_K", "risk_vs_mmax") and not (
            self.reference_lengths and self.interleaved_lengths
        ):
            raise ConfigError("sequence-length grids must be nonempty")
        for study in self.studies:
            for name in ("reference_lengths", "interleaved_lengths"):
                study[name] = expand_lengths(study[name])

    @property
    def prior(self) -> PriorSpec:
        return PriorSpec(ModelParams.from_array(self.prior_mean), tuple(self.prior_sigma))

    @property
    def noise_config(self) -> NoiseConfig:
        return NoiseConfig(**(self.noise if self.noise is not None else GATE_STUDY_NOISE))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def expand_lengths(spec) -> list[int]:
    """A list of ints, or ``{"start", "stop", "step"}`` with inclusive stop."""
    if isinstance(spec, dict):
        try:
            return _lengths(int(spec["start"]), int(spec["stop"]), int(spec.get("step", 1)))
        except KeyError as exc:
            raise ConfigError(f"length range missing {exc}") from None
    return [int(m) for m in spec]


def default_config(scenario: str) -> ExperimentConfig:
    cfg = ExperimentConfig(scenario=scenario)
    if scenario == "risk_vs_mmax":
        cfg.shots = [1000]
    elif scenario == "gate_study":
        cfg.n_trials = 20
        cfg.noise = dict(GATE_STUDY_NOISE)
    elif scenario == "simulate":
        cfg.shots = [100]
        cfg.true_params = list(DEFAULT_PRIOR_MEAN)
    return cfg


def config_from_dict(data: dict, scenario: str | None = None) -> ExperimentConfig:
    data = dict(data)
    scenario = data.pop("scenario", None) or scenario or "risk_vs_K"
    base = default_config(scenario)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = base.to_dict()
    merged.update(data)
    merged["scenario"] = scenario
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, scenario: str | None = None) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_dict(data, scenario)
