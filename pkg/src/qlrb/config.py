"""Experiment configuration: one TOML file of scalars per experiment."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .fem import build_mesh
from .truth import (
    NewtonSettings,
    TimeGrid,
    TruthProblem,
    constant_reluctivity,
    exp_reluctivity,
    sine_source,
)

# fields that change where or how fast things run, never the numbers produced
_RUNTIME_ONLY = {"out_dir", "workers", "bench_repeats"}


@dataclass
class ExperimentConfig:
    """Defaults reproduce the 1-D magnetoquasistatic benchmark."""

    n_elem: int = 100
    K: int = 200
    T: float = 0.2
    nonlinearity: str = "exp"          # "exp" or "const"
    nonlinearity_const: float = 1.0    # value for "const"
    source_amplitude: float = 12.0
    param_min: float = 1.0
    param_max: float = 5.5
    eim_train_size: int = 200
    greedy_train_size: int = 400
    test_size: int = 200
    seed: int = 0
    eps_eim: float = 0.0
    M_max: int = 8
    eps_rb: float = 1e-5
    N_max: int = 7
    extend_to_N_max: bool = True       # keep enriching after eps_rb is met
    newton_tol: float = 1e-8
    newton_max_iter: int = 25
    jacobian: str = "exact"
    m_a_mode: str = "analytic"
    study_pairs: list = field(default_factory=lambda: [[2, 2], [3, 4], [5, 8]])
    study_M_values: list = field(default_factory=lambda: [4, 8])
    fig_mu: float = 5.5
    bench_repeats: int = 20
    workers: int = 1
    out_dir: str = "out"

    def __post_init__(self):
        counts = ("n_elem", "K", "eim_train_size", "greedy_train_size", "test_size",
                  "M_max", "N_max", "newton_max_iter", "bench_repeats", "workers")
        for name in counts:
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive count")
        if self.n_elem < 2:
            raise ValueError("n_elem must be >= 2")
        if not (self.T > 0 and self.newton_tol > 0 and self.eps_rb >= 0 and self.eps_eim >= 0):
            raise ValueError("T and tolerances must be positive")
        if not self.param_min <= self.param_max:
            raise ValueError("empty parameter domain")
        if self.nonlinearity not in ("exp", "const"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.jacobian not in ("exact", "inexact"):
            raise ValueError(f"unknown jacobian mode {self.jacobian!r}")
        if self.m_a_mode not in ("analytic", "empirical"):
            raise ValueError(f"unknown m_a mode {self.m_a_mode!r}")
        self.study_pairs = [[int(n), int(m)] for n, m in self.study_pairs]
        self.study_M_values = [int(m) for m in self.study_M_values]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_toml(self) -> str:
        lines = []
        for key, val in self.to_dict().items():
            if isinstance(val, bool):
                lines.append(f"{key} = {str(val).lower()}")
            elif isinstance(val, str):
                lines.append(f'{key} = "{val}"')
            else:
                lines.append(f"{key} = {json.dumps(val)}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        data = {k: v for k, v in self.to_dict().items() if k not in _RUNTIME_ONLY}
        blob = json.dumps(data, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def out_path(self) -> Path:
        return Path(self.out_dir)

    # -- derived objects --

    def problem(self) -> TruthProblem:
        if self.nonlinearity == "exp":
            nl = exp_reluctivity()
        else:
            nl = constant_reluctivity(self.nonlinearity_const)
        return TruthProblem(build_mesh(self.n_elem), TimeGrid.uniform(self.K, self.T), nl,
                            sine_source(self.source_amplitude), None,
                            (self.param_min, self.param_max))

    def newton(self) -> NewtonSettings:
        return NewtonSettings(self.newton_tol, self.newton_max_iter)

    def eim_train_set(self) -> np.ndarray:
        return np.linspace(self.param_min, self.param_max, self.eim_train_size)

    def greedy_train_set(self) -> np.ndarray:
        return np.linspace(self.param_min, self.param_max, self.greedy_train_size)

    def test_set(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return rng.uniform(self.param_min, self.param_max, self.test_size)
