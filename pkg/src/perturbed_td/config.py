"""Flat ``key = value`` experiment configuration.

Values may be numbers, booleans, bare strings or bracketed arrays
(``c = [0.8, 0.9, 1, 1.1]``). ``#`` starts a comment.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .resource import POLICY_KINDS, ResourceSpec
from .td import FIDELITIES, TdConfig


def _scalar(tok: str):
    t = tok.strip()
    if t.lower() in ("true", "false"):
        return t.lower() == "true"
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    if len(t) >= 2 and t[0] == t[-1] and t[0] in "\"'":
        return t[1:-1]
    return t


def parse_config(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValidationError(f"line {lineno}: empty key")
        out[key] = parse_value(val)
    return out


def parse_value(val: str):
    val = val.strip()
    if val.startswith("["):
        if not val.endswith("]"):
            raise ValidationError(f"unterminated array {val!r}")
        body = val[1:-1].strip()
        return [_scalar(t) for t in body.split(",")] if body else []
    return _scalar(val)


def load_config(path) -> dict:
    return parse_config(Path(path).read_text())


@dataclass
class ExperimentConfig:
    N: int = 20
    c: list = field(default_factory=lambda: [0.8, 0.9, 1.0, 1.1])
    lam: list = field(default_factory=lambda: [0.090596, 0.048632, 0.015657, 0.005088])
    mu: list = field(default_factory=lambda: [0.483723, 0.444019, 0.024843, 0.335103])
    alpha: float = 0.9
    m: int | None = None
    policy: str = "greedy"
    policies: list = field(default_factory=lambda: list(POLICY_KINDS))
    explore: str = "uniform"
    mixing: float | None = None
    mixing_file: str | None = None
    modulo_offset: int = 0
    step: str = "diminishing"
    step_a: float = 1.0
    step_b: float = 1000.0
    step_constant: float = 0.1
    run_length: int = 50_000
    num_runs: int = 100
    seed: int = 0
    decimation: int = 50
    fidelity: str = "default"
    r0: list | None = None
    threads: int = 1
    exact_cap: int = 200_000
    verify_cap: int = 5000
    project_iters: int = 500
    output: str = "out"

    _aliases = {"lambda": "lam", "discount": "alpha", "base_seed": "seed", "out": "output"}

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, val in mapping.items():
            name = cls._aliases.get(key, key)
            if name not in known:
                raise ValidationError(f"unknown configuration key {key!r}")
            kwargs[name] = val
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for name in ("c", "lam", "mu", "policies"):
            val = getattr(self, name)
            if not isinstance(val, list):
                setattr(self, name, [val])
        if self.m is not None and self.m != len(self.c):
            raise ValidationError(f"m = {self.m} but {len(self.c)} prices given")
        if self.policy not in POLICY_KINDS:
            raise ValidationError(f"policy must be one of {POLICY_KINDS}")
        bad = [p for p in self.policies if p not in POLICY_KINDS]
        if bad:
            raise ValidationError(f"unknown policies {bad}")
        if self.explore != "uniform" and self.explore not in POLICY_KINDS:
            raise ValidationError("explore must be 'uniform' or a policy kind")
        if self.fidelity not in FIDELITIES:
            raise ValidationError(f"fidelity must be one of {FIDELITIES}")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        if self.mixing is not None and not 0 < self.mixing < 1:
            raise ValidationError("mixing weight must lie in (0, 1)")
        self.resource_spec()
        self.td_config()

    @property
    def mixing_weight(self) -> float:
        return self.alpha if self.mixing is None else float(self.mixing)

    def mixing_weights(self, n_states: int) -> np.ndarray:
        if self.mixing_file:
            w = np.loadtxt(self.mixing_file, ndmin=1)
            if w.shape != (n_states,):
                raise ValidationError(f"{self.mixing_file}: expected {n_states} weights")
            return w
        return np.full(n_states, self.mixing_weight)

    def resource_spec(self) -> ResourceSpec:
        return ResourceSpec(N=self.N, c=tuple(self.c), lam=tuple(self.lam), mu=tuple(self.mu),
                            discount=self.alpha)

    def td_config(self) -> TdConfig:
        return TdConfig(
            discount=self.alpha, step=self.step, step_a=self.step_a, step_b=self.step_b,
            step_constant=self.step_constant, run_length=int(self.run_length),
            num_runs=int(self.num_runs), base_seed=int(self.seed),
            r0=None if self.r0 is None else tuple(self.r0),
            decimation=int(self.decimation), fidelity=self.fidelity,
        )

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("output")
        d.pop("threads")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()
