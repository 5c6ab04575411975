"""Conformal perturbations ``(1 + 2u) g`` and sweeps over cohomology classes.

Counts produced here are observations at a fixed resolution (grid size,
stencil radius, tolerances). Nothing in this module asserts genericity.
"""
from __future__ import annotations

import csv
import io
import math
import time
import traceback
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .aubry import aubry_analysis, default_eps_aubry, static_classes
from .critical import build_action_graph, critical_value
from .errors import AubryLabError, ConstraintViolation
from .measures import assign_times, enumerate_minimizers, support_energy_check
from .torus import CohomologyClass, ConformalMetric, FieldSpec, PeriodicBump, TorusGrid, build_metric

H1_DIM = 2
BOUND = 1 + H1_DIM

COLUMNS = [
    "instance_id", "seed", "c1", "c2", "alpha", "minimizer_count", "class_count", "bound_ok",
    "max_energy_dev", "runtime_ms", "tol_bisection", "eps_cycle", "eps_aubry", "cluster_tol",
    "aubry_size", "flags", "status", "config_hash",
]


@dataclass(frozen=True, eq=False)
class PerturbedMetric(ConformalMetric):
    """A conformal metric carrying the perturbations applied to it."""

    perturbations: tuple = ()


def _sample(grid, u):
    if isinstance(u, FieldSpec):
        return u.sample(grid)
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        return np.full((grid.n, grid.n), float(u))
    return u.reshape(grid.n, grid.n)


def apply_perturbation(metric: ConformalMetric, u) -> ConformalMetric:
    """Metric ``(1 + 2u) e^f g``, i.e. log-factor ``f + ln(1 + 2u)``."""
    values = _sample(metric.grid, u)
    if not np.all(np.isfinite(values)):
        raise ConstraintViolation("perturbation must be finite")
    floor = float(np.min(1.0 + 2.0 * values))
    if floor <= 0:
        raise ConstraintViolation(f"1 + 2u must stay positive (min {floor:.3e})")
    f = metric.f + np.log1p(2.0 * values)
    history = getattr(metric, "perturbations", ())
    tag = u if isinstance(u, FieldSpec) else "array"
    return PerturbedMetric(metric.grid, f, metric.generators, history + (tag,))


def random_perturbation(grid: TorusGrid, rng: np.random.Generator, epsilon: float, bumps: int = 4,
                        widths=(0.05, 0.2), floor: float = 0.01, max_tries: int = 1000) -> FieldSpec:
    """Sum of ``bumps`` periodic Gaussians with random centers, signs and widths."""
    for _ in range(max_tries):
        terms = []
        for _ in range(bumps):
            center = rng.uniform(0.0, 1.0, size=2)
            amplitude = rng.uniform(-epsilon, epsilon)
            width = rng.uniform(*widths)
            terms.append(PeriodicBump((float(center[0]), float(center[1])), float(width), float(amplitude)))
        spec = FieldSpec(bumps=tuple(terms))
        if np.min(1.0 + 2.0 * spec.sample(grid)) > floor:
            return spec
    raise ConstraintViolation("could not draw a perturbation with 1 + 2u above the floor")


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(trial)]).generate_state(1)[0])


@dataclass(frozen=True)
class CellSettings:
    radius: int
    bisection: float = 1e-9
    eps_cycle: float | None = None
    eps_aubry: float | None = None
    cluster_tol: float | None = None
    energy_tol: float = 1e-9
    max_count: int = 64

    @classmethod
    def from_config(cls, cfg) -> "CellSettings":
        t = cfg.tolerances
        return cls(cfg.radius, t.bisection, t.cycle, t.aubry, t.cluster, t.energy, t.max_count)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def run_cell(instance_id: str, metric: ConformalMetric, c: CohomologyClass, settings: CellSettings,
             seed="", config_hash="", record_timings=False) -> dict:
    """One (instance, class) job: alpha, minimizers, Aubry set and classes."""
    start = time.perf_counter()
    row = {k: "" for k in COLUMNS}
    row.update(instance_id=instance_id, seed=seed, c1=c.c1, c2=c.c2, tol_bisection=settings.bisection,
               config_hash=config_hash)
    flags = []
    try:
        graph = build_action_graph(metric, settings.radius, c)
        eps_cycle = settings.eps_cycle if settings.eps_cycle is not None else graph.default_eps_cycle()
        eps_aubry = settings.eps_aubry if settings.eps_aubry is not None else default_eps_aubry(graph, eps_cycle)
        row.update(eps_cycle=eps_cycle, eps_aubry=eps_aubry)
        crit = critical_value(graph, settings.bisection, eps_cycle)
        alpha = crit.alpha
        if c.is_trivial:
            tgraph = assign_times(graph, "fixed", h=graph.grid.spacing)
            flags += ["trivial-class", "degenerate"]
        else:
            tgraph = assign_times(graph, "optimal", alpha=alpha)
            if metric.is_flat:
                flags.append("flat-degenerate")
        mset = enumerate_minimizers(tgraph, settings.cluster_tol, settings.max_count, eps_cycle)
        energy = support_energy_check(metric, tgraph, mset, alpha, settings.energy_tol)
        analysis = aubry_analysis(graph, alpha, eps_aubry, eps_cycle)
        report = static_classes(graph, alpha, analysis.nodes, eps_aubry, eps_cycle, analysis.potential)
        if mset.count_distinct >= settings.max_count:
            flags.append("cap-reached")
        if energy.flagged:
            flags.append("energy-off-level")
        row.update(
            alpha=alpha,
            minimizer_count=mset.count_distinct,
            class_count=report.class_count,
            bound_ok="" if c.is_trivial else mset.count_distinct <= BOUND,
            max_energy_dev=energy.max_deviation,
            cluster_tol=mset.cluster_tol,
            aubry_size=int(analysis.nodes.size),
            status="ok",
        )
    except AubryLabError as exc:
        row["status"] = f"error: {type(exc).__name__}: {exc}"
    except Exception as exc:  # keep the sweep going; the row records the failure
        row["status"] = f"error: {type(exc).__name__}: {exc}"
        row["_traceback"] = traceback.format_exc()
    row["flags"] = ";".join(flags)
    if record_timings:
        row["runtime_ms"] = round((time.perf_counter() - start) * 1000.0, 3)
    return row


@dataclass
class SweepResult:
    rows: list
    instances: dict = field(default_factory=dict)
    stage_seconds: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(row[k]) for k in COLUMNS])
        return buf.getvalue()

    def completed(self) -> int:
        return sum(1 for r in self.rows if r["status"] == "ok")


def _run_jobs(jobs, threads):
    if threads <= 1:
        return [run_cell(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: run_cell(*job), jobs))


def sweep(config, threads: int = 1, record_timings: bool = False, metrics=None, seed="") -> SweepResult:
    """Run every (instance, class) cell of ``config``; rows in deterministic order.

    ``metrics`` overrides the configured instances with ``(id, metric)`` pairs.
    """
    grid = TorusGrid(config.grid_n)
    settings = CellSettings.from_config(config)
    if metrics is None:
        metrics = [(name, build_metric(grid, spec)) for name, spec in config.metric_instances()]
        seed = "" if config.experiment.seed is None else config.experiment.seed
    chash = config.config_hash()
    jobs = []
    for name, metric in metrics:
        for c in config.classes():
            jobs.append((name, metric, c, settings, seed, chash, record_timings))
    t0 = time.perf_counter()
    rows = _run_jobs(jobs, threads)
    instances = {name: _describe(metric) for name, metric in metrics}
    return SweepResult(rows, instances, {"sweep": time.perf_counter() - t0})


def _describe(metric):
    return {
        "generators": metric.generators.to_dict(),
        "perturbations": [p.to_dict() if isinstance(p, FieldSpec) else p for p in getattr(metric, "perturbations", ())],
    }


def perturbation_trials(config):
    """Yield ``(instance_id, trial_seed, metric)`` for each seeded trial."""
    grid = TorusGrid(config.grid_n)
    base = build_metric(grid, config.metric)
    exp = config.experiment
    for trial in range(exp.trials):
        s = trial_seed(exp.seed, trial)
        rng = np.random.default_rng(s)
        if exp.bumps == 0 or exp.epsilon == 0:
            u = FieldSpec()
        else:
            u = random_perturbation(grid, rng, exp.epsilon, exp.bumps)
        yield f"trial-{trial:03d}", s, apply_perturbation(base, u)


def perturb_experiment(config, threads: int = 1, record_timings: bool = False):
    """Random conformal perturbations of the base metric, each swept over the classes."""
    if config.experiment.trials < 1:
        raise ValueError("perturb needs experiment.trials >= 1")
    grid = TorusGrid(config.grid_n)
    settings = CellSettings.from_config(config)
    chash = config.config_hash()
    jobs, instances = [], {}
    for name, s, metric in perturbation_trials(config):
        instances[name] = dict(_describe(metric), seed=s)
        for c in config.classes():
            jobs.append((name, metric, c, settings, s, chash, record_timings))
    t0 = time.perf_counter()
    rows = _run_jobs(jobs, threads)
    result = SweepResult(rows, instances, {"perturb": time.perf_counter() - t0})
    return result, summarize(result, config)


def summarize(result: SweepResult, config) -> dict:
    nontrivial = [r for r in result.rows if r["status"] == "ok" and r["bound_ok"] != ""]
    counts = Counter(int(r["minimizer_count"]) for r in nontrivial)
    classes = Counter(int(r["class_count"]) for r in nontrivial)
    t = config.tolerances
    return {
        "label": (
            f"observed at resolution (n={config.grid_n}, R={config.radius}, "
            f"bisection={t.bisection}, cycle={t.cycle}, aubry={t.aubry}, cluster={t.cluster})"
        ),
        "rows": len(result.rows),
        "completed": result.completed(),
        "completed_fraction": result.completed() / len(result.rows) if result.rows else math.nan,
        "bound": BOUND,
        "bound_ok_fraction": (sum(1 for r in nontrivial if r["bound_ok"]) / len(nontrivial)) if nontrivial else math.nan,
        "minimizer_count_distribution": {str(k): v for k, v in sorted(counts.items())},
        "class_count_distribution": {str(k): v for k, v in sorted(classes.items())},
    }


def rerun_row(config, instance_id: str, c) -> dict:
    """Recompute one emitted row from the configuration that produced it."""
    c = c if isinstance(c, CohomologyClass) else CohomologyClass(*c)
    settings = CellSettings.from_config(config)
    chash = config.config_hash()
    if instance_id.startswith("trial-") and config.experiment.trials > 0:
        for name, s, metric in perturbation_trials(config):
            if name == instance_id:
                return run_cell(name, metric, c, settings, s, chash)
    grid = TorusGrid(config.grid_n)
    for name, spec in config.metric_instances():
        if name == instance_id:
            seed = "" if config.experiment.seed is None else config.experiment.seed
            return run_cell(name, build_metric(grid, spec), c, settings, seed, chash)
    raise KeyError(instance_id)


__all__ = [
    "COLUMNS", "BOUND", "apply_perturbation", "random_perturbation", "sweep", "perturb_experiment",
    "rerun_row", "run_cell", "summarize", "SweepResult", "CellSettings", "trial_seed",
]
