"""JSON experiment configuration: schema, semantic checks, conversion to runs."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .engine import RunConfig, config_hash
from .graph import Network, is_strongly_connected
from .model import InitialPriors, SignalModel, StateSpace
from .rules import (CommonFixedPrior, GeometricAveragePrior, RandomWalkNeighbor, Schedule,
                    TimeVaryingLogLinear, WeightedSelfBelief)

RULE_NAMES = ("common_prior", "random_walk", "geometric", "time_varying", "weighted_self")
SCHEDULE_KINDS = ("power", "log_power", "geometric", "constant")

_number_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}

SCHEMA = {
    "type": "object",
    "required": ["network", "states", "truth", "likelihoods", "rule", "horizon", "seed"],
    "additionalProperties": False,
    "properties": {
        "network": {"type": "array", "minItems": 1,
                    "items": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
        "states": {"type": "array", "minItems": 2, "items": {"type": "string"}},
        "truth": {"type": "string"},
        "likelihoods": {"type": "array", "minItems": 1, "items": _number_matrix},
        "priors": {"oneOf": [{"const": "uniform"}, _number_matrix]},
        "rule": {
            "type": "object",
            "required": ["name"],
            "additionalProperties": False,
            "properties": {
                "name": {"enum": list(RULE_NAMES)},
                "params": {"type": "object"},
            },
        },
        "horizon": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "n_seeds": {"type": "integer", "minimum": 1},
        "record_every": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
        "allow_zero_likelihoods": {"type": "boolean"},
    },
}

_PARAMS = {
    "common_prior": {"prior"},
    "random_walk": {"P", "prior"},
    "geometric": set(),
    "time_varying": {"x_schedule"},
    "weighted_self": {"eta"},
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _check_distribution(row, path, strict):
    arr = np.asarray(row, dtype=float)
    if (arr < 0).any():
        raise ConfigError(path, "probabilities must be nonnegative")
    if strict and (arr <= 0).any():
        raise ConfigError(path, "probabilities must be strictly positive")
    if abs(arr.sum() - 1.0) > 1e-9:
        raise ConfigError(path, f"probabilities sum to {arr.sum():.12g}, not 1")


@dataclass(frozen=True)
class ExperimentConfig:
    network: list
    states: list
    truth: str
    likelihoods: list
    rule: dict
    horizon: int
    seed: int
    priors: object = "uniform"
    n_seeds: int = 1
    record_every: int = 1
    allow_zero_likelihoods: bool = False
    output_dir: str | None = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(doc),
                        key=lambda e: list(map(str, e.absolute_path)))
        if errors:
            err = errors[0]
            raise ConfigError(_path(err.absolute_path), err.message)
        rule = {"name": doc["rule"]["name"], "params": dict(doc["rule"].get("params", {}))}
        cfg = cls(
            network=[list(nb) for nb in doc["network"]],
            states=list(doc["states"]),
            truth=doc["truth"],
            likelihoods=[[list(r) for r in table] for table in doc["likelihoods"]],
            rule=rule,
            horizon=doc["horizon"],
            seed=doc["seed"],
            priors=doc.get("priors", "uniform"),
            n_seeds=doc.get("n_seeds", 1),
            record_every=doc.get("record_every", 1),
            allow_zero_likelihoods=doc.get("allow_zero_likelihoods", False),
            output_dir=doc.get("output_dir"),
        )
        cfg._check()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("$", f"invalid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        doc = asdict(self)
        if doc["output_dir"] is None:
            del doc["output_dir"]
        return doc

    def hash(self) -> str:
        doc = self.to_dict()
        doc.pop("output_dir", None)
        return config_hash(doc)

    # -- semantic validation -------------------------------------------------

    def _check(self):
        n = len(self.network)
        k = len(self.states)
        if len(set(self.states)) != k:
            raise ConfigError("$.states", "state labels must be unique")
        if self.truth not in self.states:
            raise ConfigError("$.truth", f"{self.truth!r} is not one of the states")
        for i, nbrs in enumerate(self.network):
            for m, j in enumerate(nbrs):
                if j >= n:
                    raise ConfigError(f"$.network[{i}][{m}]", f"agent index {j} out of range 0..{n - 1}")
            if len(set(nbrs)) != len(nbrs):
                raise ConfigError(f"$.network[{i}]", "duplicate neighbor")
        if len(self.likelihoods) != n:
            raise ConfigError("$.likelihoods", f"expected {n} agents, got {len(self.likelihoods)}")
        for i, table in enumerate(self.likelihoods):
            if len(table) != k:
                raise ConfigError(f"$.likelihoods[{i}]", f"expected {k} state rows, got {len(table)}")
            width = len(table[0])
            for r, row in enumerate(table):
                path = f"$.likelihoods[{i}][{r}]"
                if len(row) != width or width == 0:
                    raise ConfigError(path, f"expected {width} signal probabilities, got {len(row)}")
                _check_distribution(row, path, strict=not self.allow_zero_likelihoods)
        if self.priors != "uniform":
            if len(self.priors) != n:
                raise ConfigError("$.priors", f"expected {n} agents, got {len(self.priors)}")
            for i, row in enumerate(self.priors):
                if len(row) != k:
                    raise ConfigError(f"$.priors[{i}]", f"expected {k} entries, got {len(row)}")
                _check_distribution(row, f"$.priors[{i}]", strict=True)
        if not is_strongly_connected(Network.from_neighbors(self.network)):
            raise ConfigError("$.network", "network is not strongly connected")
        self._check_rule(n, k)

    def _check_rule(self, n, k):
        name, params = self.rule["name"], self.rule["params"]
        extra = set(params) - _PARAMS[name]
        if extra:
            key = sorted(extra)[0]
            raise ConfigError(f"$.rule.params.{key}", f"unknown parameter for rule {name!r}")
        if "prior" in params:
            if not isinstance(params["prior"], list) or len(params["prior"]) != k:
                raise ConfigError("$.rule.params.prior", f"expected {k} probabilities")
            _check_distribution(params["prior"], "$.rule.params.prior", strict=True)
        if "P" in params:
            p = params["P"]
            if not isinstance(p, list) or len(p) != n or any(
                    not isinstance(r, list) or len(r) != n for r in p):
                raise ConfigError("$.rule.params.P", f"expected a {n}x{n} matrix")
            for i, row in enumerate(p):
                _check_distribution(row, f"$.rule.params.P[{i}]", strict=False)
                support = {j for j, v in enumerate(row) if v > 0}
                if support != set(self.network[i]):
                    raise ConfigError(f"$.rule.params.P[{i}]", "support must equal the neighborhood")
        if name == "weighted_self":
            eta = params.get("eta")
            if not isinstance(eta, (int, float)) or not 0 < eta < 1:
                raise ConfigError("$.rule.params.eta", "eta must be a number in (0, 1)")
        if name == "time_varying":
            sched = params.get("x_schedule", {})
            if not isinstance(sched, dict):
                raise ConfigError("$.rule.params.x_schedule", "expected an object")
            unknown = set(sched) - {"kind", "c", "p"}
            if unknown:
                raise ConfigError(f"$.rule.params.x_schedule.{sorted(unknown)[0]}", "unknown key")
            if sched.get("kind", "log_power") not in SCHEDULE_KINDS:
                raise ConfigError("$.rule.params.x_schedule.kind",
                                  f"must be one of {', '.join(SCHEDULE_KINDS)}")
            for key in ("c", "p"):
                val = sched.get(key)
                if val is not None and (not isinstance(val, (int, float)) or val < 0):
                    raise ConfigError(f"$.rule.params.x_schedule.{key}", "must be a nonnegative number")

    # -- conversion ------------------------------------------------------------

    def build_rule(self):
        return rule_from_dict(self.rule)

    def run_config(self, seed: int | None = None) -> RunConfig:
        n, k = len(self.network), len(self.states)
        priors = (InitialPriors.uniform(n, k) if self.priors == "uniform"
                  else InitialPriors(np.array(self.priors, dtype=float)))
        return RunConfig(
            network=Network.from_neighbors(self.network),
            states=StateSpace(tuple(self.states), self.states.index(self.truth)),
            signal_model=SignalModel(tuple(np.array(t, dtype=float) for t in self.likelihoods),
                                     allow_zeros=self.allow_zero_likelihoods),
            priors=priors,
            rule=self.build_rule(),
            horizon=self.horizon,
            seed=self.seed if seed is None else seed,
            record_every=self.record_every,
        )


def rule_from_dict(doc: dict):
    name, params = doc["name"], doc.get("params", {})
    if name == "common_prior":
        prior = params.get("prior")
        return CommonFixedPrior(None if prior is None else tuple(prior))
    if name == "random_walk":
        p, prior = params.get("P"), params.get("prior")
        return RandomWalkNeighbor(None if p is None else tuple(tuple(r) for r in p),
                                  None if prior is None else tuple(prior))
    if name == "geometric":
        return GeometricAveragePrior()
    if name == "time_varying":
        s = params.get("x_schedule", {})
        return TimeVaryingLogLinear(Schedule(s.get("kind", "log_power"), s.get("c"), s.get("p")))
    if name == "weighted_self":
        return WeightedSelfBelief(float(params["eta"]))
    raise ValueError(f"unknown rule {name!r}")


def rule_to_dict(rule) -> dict:
    if isinstance(rule, CommonFixedPrior):
        params = {} if rule.prior is None else {"prior": list(rule.prior)}
    elif isinstance(rule, RandomWalkNeighbor):
        params = {}
        if rule.P is not None:
            params["P"] = [list(r) for r in rule.P]
        if rule.prior is not None:
            params["prior"] = list(rule.prior)
    elif isinstance(rule, GeometricAveragePrior):
        params = {}
    elif isinstance(rule, TimeVaryingLogLinear):
        s = rule.schedule
        sched = {"kind": s.kind, "p": s.p}
        if s.c is not None:
            sched["c"] = s.c
        params = {"x_schedule": sched}
    elif isinstance(rule, WeightedSelfBelief):
        params = {"eta": rule.eta}
    else:
        raise TypeError(f"unsupported rule {rule!r}")
    return {"name": rule.name, "params": params}
