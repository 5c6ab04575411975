"""Run configuration: TOML text in, validated :class:`RunConfig` out.

Grammar (all tables optional except ``grid``/``stencil``)::

    metric = "zero"                 # or a [metric] table with modes/bumps
    cohomology = [[1.0, 0.0]]       # or a table {directions, magnitudes, include_zero}

    [grid]
    n = 16                          # cells per side, >= 4
    [stencil]
    radius = 2                      # >= 1

    [metric]                        # log-conformal factor f
    modes = [{k1 = 0, k2 = 1, amplitude = 0.1, phase = 0.0, kind = "sin"}]
    bumps = [{center = [0.5, 0.5], width = 0.1, amplitude = 0.2}]

    [[instances]]                   # extra metrics for ``sweep``; default: the metric above
    id = "well"
    metric = {modes = [{k1 = 0, k2 = 1, amplitude = 0.1}]}

    [tolerances]
    bisection = 1e-9                # alpha bracket width
    cycle = 1e-10                   # negative-cycle threshold (default 1e-12 * edges)
    aubry = 1e-6                    # zero-cost threshold (default max(1e-6, 10 * cycle))
    cluster = 1e-7                  # minimizer clustering (default 1e-6 * |optimum|)
    energy = 1e-9                   # energy-level check
    max_count = 64                  # cap on enumerated minimizers

    [experiment]                    # ``perturb``
    epsilon = 0.1
    trials = 20
    seed = 7
    bumps = 4

    [output]
    dir = "results"
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace

import tomli
import tomli_w

from .errors import ConfigError, ValidationError
from .torus import CohomologyClass, FieldSpec, default_class_grid


@dataclass(frozen=True)
class Tolerances:
    bisection: float = 1e-9
    cycle: float | None = None
    aubry: float | None = None
    cluster: float | None = None
    energy: float = 1e-9
    max_count: int = 64


@dataclass(frozen=True)
class Experiment:
    epsilon: float = 0.1
    trials: int = 0
    seed: int | None = None
    bumps: int = 4


@dataclass(frozen=True)
class RunConfig:
    grid_n: int
    radius: int
    metric: FieldSpec = FieldSpec()
    cohomology: tuple[CohomologyClass, ...] = ()
    instances: tuple[tuple[str, FieldSpec], ...] = ()
    tolerances: Tolerances = Tolerances()
    experiment: Experiment = Experiment()
    output_dir: str = "results"

    def classes(self) -> list[CohomologyClass]:
        return list(self.cohomology) if self.cohomology else default_class_grid()

    def metric_instances(self) -> list[tuple[str, FieldSpec]]:
        return list(self.instances) if self.instances else [("base", self.metric)]

    def to_dict(self) -> dict:
        tol = {k: v for k, v in vars(self.tolerances).items() if v is not None}
        exp = {k: v for k, v in vars(self.experiment).items() if v is not None}
        out = {
            "metric": self.metric.to_dict() or "zero",
            "grid": {"n": self.grid_n},
            "stencil": {"radius": self.radius},
            "tolerances": tol,
            "experiment": exp,
            "output": {"dir": self.output_dir},
        }
        if self.cohomology:
            out["cohomology"] = [[c.c1, c.c2] for c in self.cohomology]
        if self.instances:
            out["instances"] = [{"id": name, "metric": spec.to_dict() or "zero"} for name, spec in self.instances]
        return out

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def with_overrides(self, seed=None, grid_n=None, radius=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, experiment=replace(cfg.experiment, seed=int(seed)))
        if grid_n is not None:
            cfg = replace(cfg, grid_n=int(grid_n))
        if radius is not None:
            cfg = replace(cfg, radius=int(radius))
        _validate(cfg)
        return cfg


_TOP = {"grid", "stencil", "metric", "cohomology", "instances", "tolerances", "experiment", "output"}
_SUB = {
    "grid": {"n"},
    "stencil": {"radius"},
    "tolerances": {"bisection", "cycle", "aubry", "cluster", "energy", "max_count"},
    "experiment": {"epsilon", "trials", "seed", "bumps"},
    "output": {"dir"},
}
_FIELD_KEYS = {"modes", "bumps"}
_MODE_KEYS = {"k1", "k2", "amplitude", "phase", "kind"}
_BUMP_KEYS = {"center", "width", "amplitude"}


def _unknown(keys, allowed, where):
    extra = sorted(set(keys) - allowed)
    if extra:
        name = f"{where}.{extra[0]}" if where else extra[0]
        raise ConfigError(f"unknown key {name!r}", field=name)


def _number(value, name, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number", field=name)
    if integer and int(value) != value:
        raise ConfigError(f"{name} must be an integer", field=name)
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite", field=name)
    return int(value) if integer else float(value)


def _field_spec(data, where) -> FieldSpec:
    if data == "zero":
        return FieldSpec()
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be \"zero\" or a table", field=where)
    _unknown(data, _FIELD_KEYS, where)
    for k, m in enumerate(data.get("modes", [])):
        _unknown(m, _MODE_KEYS, f"{where}.modes[{k}]")
    for k, b in enumerate(data.get("bumps", [])):
        _unknown(b, _BUMP_KEYS, f"{where}.bumps[{k}]")
    try:
        return FieldSpec.from_dict(data)
    except (KeyError, TypeError, IndexError) as exc:
        raise ConfigError(f"{where}: missing or malformed entry ({exc})", field=where) from None
    except ValidationError as exc:
        raise ConfigError(f"{where}: {exc}", field=where) from None


def _cohomology(data) -> tuple[CohomologyClass, ...]:
    if isinstance(data, dict):
        _unknown(data, {"directions", "magnitudes", "include_zero"}, "cohomology")
        return tuple(default_class_grid(
            _number(data.get("directions", 16), "cohomology.directions", integer=True),
            [_number(r, "cohomology.magnitudes") for r in data.get("magnitudes", (0.5, 1.0, 2.0))],
            bool(data.get("include_zero", True)),
        ))
    if not isinstance(data, list):
        raise ConfigError("cohomology must be a list of pairs or a table", field="cohomology")
    classes = []
    for k, pair in enumerate(data):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigError(f"cohomology[{k}] must be a pair [c1, c2]", field=f"cohomology[{k}]")
        classes.append(CohomologyClass(_number(pair[0], f"cohomology[{k}]"), _number(pair[1], f"cohomology[{k}]")))
    return tuple(classes)


def _validate(cfg: RunConfig) -> None:
    if cfg.grid_n < 4:
        raise ConfigError("grid.n must be >= 4", field="grid.n")
    if cfg.radius < 1:
        raise ConfigError("stencil.radius must be >= 1", field="stencil.radius")
    for name in ("bisection", "cycle", "aubry", "cluster", "energy"):
        value = getattr(cfg.tolerances, name)
        if value is not None and not value > 0:
            raise ConfigError(f"tolerances.{name} must be > 0", field=f"tolerances.{name}")
    if cfg.tolerances.max_count < 1:
        raise ConfigError("tolerances.max_count must be >= 1", field="tolerances.max_count")
    exp = cfg.experiment
    if exp.trials < 0:
        raise ConfigError("experiment.trials must be >= 0", field="experiment.trials")
    if exp.trials > 0 and exp.seed is None:
        raise ConfigError("experiment.seed is required when trials > 0", field="experiment.seed")
    if exp.epsilon < 0:
        raise ConfigError("experiment.epsilon must be >= 0", field="experiment.epsilon")
    if exp.bumps < 0:
        raise ConfigError("experiment.bumps must be >= 0", field="experiment.bumps")
    ids = [name for name, _ in cfg.instances]
    if len(set(ids)) != len(ids):
        raise ConfigError("instance ids must be unique", field="instances")


def _location(message):
    m = re.search(r"line (\d+), column (\d+)", message)
    return (int(m.group(1)), int(m.group(2))) if m else (None, None)


def parse_config(text: str) -> RunConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line, col = _location(str(exc))
        raise ConfigError(f"parse error: {exc}", line=line, column=col) from None
    _unknown(raw, _TOP, "")
    for section, allowed in _SUB.items():
        if section in raw:
            if not isinstance(raw[section], dict):
                raise ConfigError(f"{section} must be a table", field=section)
            _unknown(raw[section], allowed, section)
    for section, key in (("grid", "n"), ("stencil", "radius")):
        if key not in raw.get(section, {}):
            raise ConfigError(f"{section}.{key} is required", field=f"{section}.{key}")
    tol_raw = raw.get("tolerances", {})
    tol = Tolerances(
        bisection=_number(tol_raw.get("bisection", 1e-9), "tolerances.bisection"),
        cycle=None if "cycle" not in tol_raw else _number(tol_raw["cycle"], "tolerances.cycle"),
        aubry=None if "aubry" not in tol_raw else _number(tol_raw["aubry"], "tolerances.aubry"),
        cluster=None if "cluster" not in tol_raw else _number(tol_raw["cluster"], "tolerances.cluster"),
        energy=_number(tol_raw.get("energy", 1e-9), "tolerances.energy"),
        max_count=_number(tol_raw.get("max_count", 64), "tolerances.max_count", integer=True),
    )
    exp_raw = raw.get("experiment", {})
    exp = Experiment(
        epsilon=_number(exp_raw.get("epsilon", 0.1), "experiment.epsilon"),
        trials=_number(exp_raw.get("trials", 0), "experiment.trials", integer=True),
        seed=None if "seed" not in exp_raw else _number(exp_raw["seed"], "experiment.seed", integer=True),
        bumps=_number(exp_raw.get("bumps", 4), "experiment.bumps", integer=True),
    )
    instances = []
    for k, inst in enumerate(raw.get("instances", [])):
        where = f"instances[{k}]"
        if not isinstance(inst, dict):
            raise ConfigError(f"{where} must be a table", field=where)
        _unknown(inst, {"id", "metric"}, where)
        if "id" not in inst:
            raise ConfigError(f"{where}.id is required", field=f"{where}.id")
        instances.append((str(inst["id"]), _field_spec(inst.get("metric", "zero"), f"{where}.metric")))
    output = raw.get("output", {})
    cfg = RunConfig(
        grid_n=_number(raw["grid"]["n"], "grid.n", integer=True),
        radius=_number(raw["stencil"]["radius"], "stencil.radius", integer=True),
        metric=_field_spec(raw.get("metric", "zero"), "metric"),
        cohomology=_cohomology(raw["cohomology"]) if "cohomology" in raw else (),
        instances=tuple(instances),
        tolerances=tol,
        experiment=exp,
        output_dir=str(output.get("dir", "results")),
    )
    _validate(cfg)
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
