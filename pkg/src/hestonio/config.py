"""Experiment configuration: YAML files, named presets and cross-field validation.

Everything that can be rejected is rejected here, before any path is simulated.
"""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError, HestonError
from .experiments import LqStudyConfig, estimator_horizon
from .params import HestonParams
from .realized import JRule, WindowScheme, resolve_scheme
from .sim import to_steps

STUDIES = ("lq-convergence", "estimator-convergence", "snapshot", "analytic-check")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Strict):
    kappa: float = 1.7
    theta: float = 4.0
    gamma: float = 2.0
    mu: float = 0.05
    beta: float = 0.0

    def params(self, beta: float | None = None) -> HestonParams:
        return HestonParams(self.kappa, self.theta, self.gamma, self.mu, self.beta if beta is None else beta)


class GridsSection(_Strict):
    eps: list[float] = Field(default_factory=lambda: [0.1, 0.05, 0.02, 0.01])
    beta: list[float] | None = None
    j_rules: list[int | str] = Field(default_factory=lambda: ["1/eps", 10, 40])

    @field_validator("j_rules")
    @classmethod
    def _parse_rules(cls, v: list[int | str]) -> list[int | str]:
        for r in v:
            JRule.parse(r)
        return v


class SimSection(_Strict):
    dt: float = 1e-5
    horizon: float | None = None
    seed: int = Field(default=0, ge=0, lt=2**64)
    v0: float | None = None


class LqSection(_Strict):
    q_list: list[int] = Field(default_factory=lambda: [2, 4])
    t_eval: float = 1.0
    n_blocks: int = 20
    block_size: int = 500
    slope_cut: float | None = 0.05


class EstimatorSection(_Strict):
    mc: int = 200
    lags: list[float] = Field(default_factory=lambda: [0.6])
    c_n: float = 100.0
    delta: float | None = None
    slope_cut: float | None = 0.05


class SnapshotSection(_Strict):
    epsilon: float = 0.01
    path_index: int = 0
    t_end: float = 1.0
    spacing: float | None = None


class AnalyticSection(_Strict):
    expected_ratio: float | None = None


class OutputSection(_Strict):
    dir: str = "out"
    formats: list[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])


class ExperimentConfig(_Strict):
    study: Literal["lq-convergence", "estimator-convergence", "snapshot", "analytic-check"] = "lq-convergence"
    model: ModelSection = Field(default_factory=ModelSection)
    grids: GridsSection = Field(default_factory=GridsSection)
    sim: SimSection = Field(default_factory=SimSection)
    lq: LqSection = Field(default_factory=LqSection)
    estimator: EstimatorSection = Field(default_factory=EstimatorSection)
    snapshot: SnapshotSection = Field(default_factory=SnapshotSection)
    analytic: AnalyticSection = Field(default_factory=AnalyticSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _check_model(self) -> "ExperimentConfig":
        for b in self.betas():
            self.model.params(b)
        return self

    def betas(self) -> list[float]:
        return list(self.grids.beta) if self.grids.beta else [self.model.beta]

    def j_rules(self) -> list[JRule]:
        return [JRule.parse(r) for r in self.grids.j_rules]

    def lq_config(self, beta: float | None = None) -> LqStudyConfig:
        lq = self.lq
        return LqStudyConfig(
            params=self.model.params(beta),
            eps_grid=tuple(self.grids.eps),
            j_rules=tuple(self.j_rules()),
            q_list=tuple(lq.q_list),
            t_eval=lq.t_eval,
            n_blocks=lq.n_blocks,
            block_size=lq.block_size,
            dt=self.sim.dt,
            seed=self.sim.seed,
            v0=self.sim.v0,
            slope_cut=lq.slope_cut,
        )

    def regime(self) -> WindowScheme:
        rules = self.j_rules()
        if len(rules) != 1:
            raise ConfigError(f"estimator studies take exactly one J rule, got {[r.label for r in rules]}")
        return WindowScheme(j_rule=rules[0], c_n=self.estimator.c_n, delta=self.estimator.delta)

    def validate_alignment(self) -> None:
        """Every grid the chosen study touches must be a multiple of dt."""
        if self.study == "analytic-check":
            return
        if not self.grids.eps and self.study != "snapshot":
            raise ConfigError("epsilon grid is empty")
        dt = self.sim.dt
        if not dt > 0:
            raise ConfigError(f"dt must be positive, got {dt}")
        if self.study == "lq-convergence":
            cfg = self.lq_config()
            if self.sim.horizon is not None and self.sim.horizon < cfg.t_eval:
                raise ConfigError(f"t_eval={cfg.t_eval} exceeds the horizon {self.sim.horizon}")
        elif self.study == "estimator-convergence":
            regime = self.regime()
            if self.estimator.mc < 2:
                raise ConfigError("need at least two replicates")
            if not self.estimator.lags or min(self.estimator.lags) <= 0:
                raise ConfigError("estimation lags must be positive")
            for e in self.grids.eps:
                resolve_scheme(regime, e).bind(dt)
            needed = estimator_horizon(regime, self.grids.eps, dt)
            if self.sim.horizon is not None and self.sim.horizon < needed:
                raise ConfigError(f"horizon {self.sim.horizon} is shorter than N*Delta = {needed}")
        elif self.study == "snapshot":
            snap = self.snapshot
            if not self.j_rules():
                raise ConfigError("no J rules given")
            to_steps(snap.epsilon, dt, "epsilon")
            to_steps(snap.t_end, dt, "t_end")
            for r in self.j_rules():
                to_steps(snap.epsilon / r.resolve(snap.epsilon), dt, f"eps/J for J={r.label}")
            if snap.spacing is not None:
                to_steps(snap.spacing, dt, "spacing")
            if snap.epsilon > snap.t_end:
                raise ConfigError("snapshot epsilon exceeds t_end")

    def resolved(self) -> dict[str, Any]:
        return self.model_dump(mode="json")

    def provenance(self) -> dict[str, Any]:
        """Everything that determines the numbers; the output section does not."""
        return self.model_dump(mode="json", exclude={"output"})


PRESETS: dict[str, dict[str, Any]] = {
    "desk-default": {
        "study": "lq-convergence",
        "grids": {"eps": [0.1, 0.05, 0.02, 0.01], "j_rules": ["1/eps", 10, 40]},
        "sim": {"dt": 1e-5, "seed": 0},
        "lq": {"n_blocks": 20, "block_size": 500},
    },
    "full-lq": {
        "study": "lq-convergence",
        "grids": {"eps": [0.1, 0.05, 0.04, 0.02, 0.01, 0.008, 0.005, 0.004], "j_rules": [10, 40, "1/eps"]},
        "sim": {"dt": 1e-6, "seed": 0},
        "lq": {"n_blocks": 200, "block_size": 1000},
    },
    "full-lq-inverse-square": {
        "study": "lq-convergence",
        "grids": {"eps": [0.1, 0.05, 0.02, 0.01, 0.005], "j_rules": ["1/eps^2"]},
        "sim": {"dt": 1.25e-7, "seed": 0},
        "lq": {"n_blocks": 200, "block_size": 1000},
    },
    "desk-beta-sweep": {
        "study": "lq-convergence",
        "grids": {"eps": [0.1, 0.05, 0.02, 0.01], "beta": [0.0, 0.3, 0.7], "j_rules": ["1/eps", 10, 40]},
        "sim": {"dt": 1e-5, "seed": 0},
        "lq": {"n_blocks": 20, "block_size": 500},
    },
    "desk-estimator": {
        "study": "estimator-convergence",
        "grids": {"eps": [0.1, 0.05, 0.02], "j_rules": ["1/eps"]},
        "sim": {"dt": 1e-4, "seed": 0},
        "estimator": {"mc": 200, "lags": [0.6]},
    },
    "full-estimator": {
        "study": "estimator-convergence",
        "grids": {"eps": [0.1, 0.05, 0.02, 0.01, 0.005], "j_rules": ["1/eps"]},
        "sim": {"dt": 1e-6, "seed": 0},
        "estimator": {"mc": 1000, "lags": [0.6]},
    },
    "full-snapshot": {
        "study": "snapshot",
        "grids": {"eps": [0.01], "j_rules": [10, 10000]},
        "sim": {"dt": 1e-6, "seed": 0},
        "snapshot": {"epsilon": 0.01, "t_end": 1.0},
    },
    "analytic-check": {"study": "analytic-check", "analytic": {"expected_ratio": 3.4}},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _format_errors(exc: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in exc.errors())


def build_config(data: dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None
    except HestonError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None = None, preset: str | None = None,
                overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Preset, then file, then ``overrides`` (nested dict), each layered over the last."""
    data: dict[str, Any] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; available: {', '.join(PRESETS)}")
        data = copy.deepcopy(PRESETS[preset])
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            loaded = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a mapping at the top level")
        data = _merge(data, loaded)
    if overrides:
        data = _merge(data, overrides)
    return build_config(data)
