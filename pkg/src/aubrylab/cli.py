"""Command line entry point: ``aubrylab <subcommand> --config run.toml --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 computation error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

from . import __version__
from .aubry import aubry_analysis, default_eps_aubry, static_classes
from .config import load_config
from .critical import build_action_graph, critical_value
from .errors import ConfigError
from .genericity import _fmt, perturb_experiment, sweep
from .measures import assign_times, enumerate_minimizers, support_energy_check
from .torus import TorusGrid, build_metric, homology_class

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE, EXIT_IO = 0, 2, 3, 4
SUBCOMMANDS = ("alpha", "measures", "aubry", "sweep", "perturb")


class StageError(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"{stage}: {type(exc).__name__}: {exc}")
        self.stage = stage
        self.cause = exc


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(k)) for k in columns])
    return buf.getvalue()


def _cells(cfg):
    grid = TorusGrid(cfg.grid_n)
    seed = "" if cfg.experiment.seed is None else cfg.experiment.seed
    for name, spec in cfg.metric_instances():
        metric = build_metric(grid, spec)
        for c in cfg.classes():
            yield name, seed, metric, c, build_action_graph(metric, cfg.radius, c)


def _alpha(cfg, timings):
    cols = ["instance_id", "seed", "c1", "c2", "alpha", "bracket_lo", "bracket_hi", "iterations",
            "witness_z1", "witness_z2", "tol_bisection", "eps_cycle", "config_hash"]
    rows = []
    for name, seed, metric, c, graph in _cells(cfg):
        eps = cfg.tolerances.cycle or graph.default_eps_cycle()
        with _stage("critical_value", timings):
            res = critical_value(graph, cfg.tolerances.bisection, eps)
        z = homology_class(res.witness_cycle) if res.witness_cycle is not None else ("", "")
        rows.append(dict(instance_id=name, seed=seed, c1=c.c1, c2=c.c2, alpha=res.alpha,
                         bracket_lo=res.bracket[0], bracket_hi=res.bracket[1], iterations=res.iterations,
                         witness_z1=z[0], witness_z2=z[1], tol_bisection=cfg.tolerances.bisection,
                         eps_cycle=eps, config_hash=cfg.config_hash()))
    return {"alpha.csv": _csv(cols, rows)}, len(rows)


def _measures(cfg, timings):
    cols = ["instance_id", "seed", "c1", "c2", "alpha", "optimal_value", "duality_gap", "minimizer_count",
            "max_energy_dev", "rotation_vectors", "cluster_tol", "config_hash"]
    rows, cycles = [], []
    for name, seed, metric, c, graph in _cells(cfg):
        eps = cfg.tolerances.cycle or graph.default_eps_cycle()
        with _stage("critical_value", timings):
            alpha = critical_value(graph, cfg.tolerances.bisection, eps).alpha
        with _stage("enumerate_minimizers", timings):
            if c.is_trivial:
                tgraph = assign_times(graph, "fixed", h=graph.grid.spacing)
            else:
                tgraph = assign_times(graph, "optimal", alpha=alpha)
            mset = enumerate_minimizers(tgraph, cfg.tolerances.cluster, cfg.tolerances.max_count, eps)
        energy = support_energy_check(metric, tgraph, mset, alpha, cfg.tolerances.energy)
        rot = " ".join(f"{a!r}:{b!r}" for a, b in mset.rotation_vectors)
        rows.append(dict(instance_id=name, seed=seed, c1=c.c1, c2=c.c2, alpha=alpha,
                         optimal_value=mset.optimal_value, duality_gap=mset.optimal_value + alpha,
                         minimizer_count=mset.count_distinct, max_energy_dev=energy.max_deviation,
                         rotation_vectors=rot, cluster_tol=mset.cluster_tol, config_hash=cfg.config_hash()))
        for loop, mean in zip(mset.cycles, mset.means):
            cycles.append({"instance_id": name, "c": [c.c1, c.c2], "mean": mean,
                           "homology": list(homology_class(loop)), "nodes": [list(v) for v in loop.nodes]})
    return {"measures.csv": _csv(cols, rows), "cycles.json": json.dumps(cycles, indent=1) + "\n"}, len(rows)


def _aubry(cfg, timings):
    cols = ["instance_id", "seed", "c1", "c2", "alpha", "aubry_size", "class_count", "eps_aubry", "config_hash"]
    node_cols = ["instance_id", "c1", "c2", "node", "i", "j", "x1", "x2", "class"]
    rows, node_rows = [], []
    for name, seed, metric, c, graph in _cells(cfg):
        eps = cfg.tolerances.cycle or graph.default_eps_cycle()
        eps_a = cfg.tolerances.aubry or default_eps_aubry(graph, eps)
        alpha = critical_value(graph, cfg.tolerances.bisection, eps).alpha
        with _stage("aubry_set", timings):
            analysis = aubry_analysis(graph, alpha, eps_a, eps)
        with _stage("static_classes", timings):
            report = static_classes(graph, alpha, analysis.nodes, eps_a, eps, analysis.potential)
        rows.append(dict(instance_id=name, seed=seed, c1=c.c1, c2=c.c2, alpha=alpha,
                         aubry_size=int(analysis.nodes.size), class_count=report.class_count,
                         eps_aubry=eps_a, config_hash=cfg.config_hash()))
        for k, members in enumerate(report.classes):
            for v in members:
                i, j = graph.grid.node_ij(v)
                node_rows.append(dict(instance_id=name, c1=c.c1, c2=c.c2, node=int(v), i=i, j=j,
                                      x1=i / graph.grid.n, x2=j / graph.grid.n, **{"class": k}))
    return {"aubry.csv": _csv(cols, rows), "aubry_nodes.csv": _csv(node_cols, node_rows)}, len(rows)


def _sweep(cfg, timings, threads, record):
    result = sweep(cfg, threads=threads, record_timings=record)
    timings.update(result.stage_seconds)
    return {"sweep.csv": result.to_csv()}, len(result.rows), result.instances


def _perturb(cfg, timings, threads, record):
    result, summary = perturb_experiment(cfg, threads=threads, record_timings=record)
    timings.update(result.stage_seconds)
    files = {"perturb.csv": result.to_csv(), "perturb_summary.json": json.dumps(summary, indent=1) + "\n"}
    return files, len(result.rows), result.instances


class _stage:
    def __init__(self, name, timings):
        self.name, self.timings = name, timings

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.name] = self.timings.get(self.name, 0.0) + time.perf_counter() - self.t0
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def build_parser():
    parser = argparse.ArgumentParser(prog="aubrylab", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--out", default=None, help="output directory (default: output.dir from config)")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None, help="override experiment.seed")
    parser.add_argument("--grid-n", type=int, default=None, help="override grid.n")
    parser.add_argument("--radius", type=int, default=None, help="override stencil.radius")
    parser.add_argument("--record-timings", action="store_true",
                        help="fill runtime_ms in CSV rows (breaks byte-identical reruns)")
    return parser


def _fail(code, record, out_dir=None):
    text = json.dumps(record, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def run(subcommand, cfg, out_dir, threads=1, record_timings=False):
    """Compute ``subcommand`` for ``cfg`` and write its files; returns the manifest."""
    timings: dict = {}
    t0 = time.perf_counter()
    instances = None
    if subcommand == "alpha":
        files, count = _alpha(cfg, timings)
    elif subcommand == "measures":
        files, count = _measures(cfg, timings)
    elif subcommand == "aubry":
        files, count = _aubry(cfg, timings)
    elif subcommand == "sweep":
        files, count, instances = _sweep(cfg, timings, threads, record_timings)
    elif subcommand == "perturb":
        files, count, instances = _perturb(cfg, timings, threads, record_timings)
    else:
        raise ValueError(subcommand)
    timings["total"] = time.perf_counter() - t0
    manifest = {
        "artifact_version": __version__,
        "subcommand": subcommand,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "tolerances": {k: v for k, v in vars(cfg.tolerances).items()},
        "stage_seconds": timings,
        "row_counts": {name: text.count("\n") - 1 for name, text in files.items() if name.endswith(".csv")},
        "rows": count,
        "threads": threads,
    }
    if instances is not None:
        manifest["instances"] = instances
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n")
    return manifest


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.grid_n, args.radius)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc.as_record(), args.out)
    except OSError as exc:
        return _fail(EXIT_IO, {"error": "io", "message": str(exc)})
    out_dir = args.out or cfg.output_dir
    if args.threads < 1:
        return _fail(EXIT_CONFIG, {"error": "config", "message": "--threads must be >= 1", "field": "threads"})
    try:
        run(args.subcommand, cfg, out_dir, args.threads, args.record_timings)
    except OSError as exc:
        return _fail(EXIT_IO, {"error": "io", "message": str(exc)})
    except StageError as exc:
        return _fail(EXIT_COMPUTE, {"error": "computation", "stage": exc.stage, "message": str(exc.cause)}, out_dir)
    except Exception as exc:
        return _fail(EXIT_COMPUTE, {"error": "computation", "stage": args.subcommand,
                                    "message": f"{type(exc).__name__}: {exc}"}, out_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
