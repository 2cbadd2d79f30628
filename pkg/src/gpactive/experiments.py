"""Replicated active-learning experiments and their reports.

A run executes the loop to its full budget for every (kernel, replication)
pair, recording metric snapshots, then evaluates each stopping criterion by
replaying the recorded variance history. One run therefore serves every
criterion.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import loop, metrics, sampling, stopping
from .chemistry import oracles as builtin
from .chemistry.external import ExternalOracle
from .gp import OptimizerConfig
from .kernels import Family

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
REPORT_METRICS = metrics.METRIC_NAMES + ("V",)
DEFAULT_SUBSAMPLE = 2000


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    # built-in oracle name, or {"command": [...], "timeout": seconds}
    oracle: object = "salt_1d"
    oracle_options: dict = field(default_factory=dict)
    # {"kind": "regular", "counts": [...]}, {"kind": "lhs", "d":, "m":, "seed":}, {"kind": "csv", "path":}
    grid: dict = field(default_factory=lambda: {"kind": "regular", "counts": [1140]})
    kernels: list = field(default_factory=lambda: ["SE"])
    replications: int = 10
    seeds: list | None = None
    base_seed: int = 0
    budget: int = 40
    t1: int = 3
    criteria: list = field(default_factory=lambda: [c.name for c in stopping.DEFAULT_CRITERIA])
    # {"policy": "auto" | "full" | "subsample", "size": int, "seed": int}
    test_set: dict = field(default_factory=lambda: {"policy": "auto"})
    snapshot_every: int = 1
    normalization: str = "standardize"
    refit_every: int = 1
    optimizer: dict = field(default_factory=dict)
    nugget: float = 1e-10
    on_oracle_error: str = "auto"
    output_dir: str | None = None
    cache_dir: str | None = None
    record_timing: bool = False

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.seeds is None:
            self.seeds = [self.base_seed + i for i in range(self.replications)]
        self.seeds = [int(s) for s in self.seeds]
        if len(self.seeds) != self.replications:
            raise ValueError(f"{len(self.seeds)} seeds for {self.replications} replications")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("replication seeds must be pairwise distinct")
        self.kernels = [Family.parse(k).value for k in self.kernels]
        self.criteria = [stopping.CriterionSpec.parse(c).name for c in self.criteria]
        if self.budget < self.t1:
            raise ValueError("budget must be >= t1")
        OptimizerConfig(**self.optimizer)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        data.pop("schema_version", None)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **dataclasses.asdict(self)}

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        """Apply dotted-key overrides, e.g. ``{"test_set.size": 500}``."""
        data = dataclasses.asdict(self)
        for key, value in overrides.items():
            parts = key.split(".")
            target = data
            for p in parts[:-1]:
                if not isinstance(target.get(p), dict):
                    target[p] = {}
                target = target[p]
            if parts[0] not in data:
                raise ValueError(f"unknown config field {parts[0]!r}")
            target[parts[-1]] = value
        if "replications" in overrides and "seeds" not in overrides:
            data["seeds"] = None
        return ExperimentConfig.from_dict(data)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    metric_rows: list = field(default_factory=list)    # (kernel, replication, t, metric, value)
    stopping_rows: list = field(default_factory=list)  # dicts
    traces: dict = field(default_factory=dict)         # (kernel, replication) -> RunTrace
    truth_info: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def metric(self, kernel, name, t=None, replication=None):
        rows = [r for r in self.metric_rows
                if r[0] == kernel and r[3] == name and (t is None or r[2] == t)
                and (replication is None or r[1] == replication)]
        return rows

    def aggregate_metrics(self) -> list:
        """Mean and std (ddof=0) over replications per (kernel, t, metric)."""
        groups: dict = {}
        for kernel, rep, t, name, value in self.metric_rows:
            groups.setdefault((kernel, t, name), []).append(value)
        out = []
        for (kernel, t, name), values in sorted(groups.items(), key=lambda kv: (
                self.config.kernels.index(kv[0][0]), kv[0][1], REPORT_METRICS.index(kv[0][2]))):
            v = np.asarray(values, dtype=float)
            out.append((kernel, t, name, len(v), float(np.mean(v)), float(np.std(v))))
        return out

    def aggregate_stopping(self) -> list:
        cols = ("t_star",) + REPORT_METRICS
        groups: dict = {}
        for row in self.stopping_rows:
            groups.setdefault((row["kernel"], row["criterion"]), []).append(row)
        out = []
        for (kernel, crit), rows in groups.items():
            agg = {"kernel": kernel, "criterion": crit, "n": len(rows),
                   "budget_capped": sum(bool(r["budget_capped"]) for r in rows)}
            for c in cols:
                v = np.asarray([r[c] for r in rows], dtype=float)
                agg[f"{c}_mean"] = float(np.mean(v))
                agg[f"{c}_std"] = float(np.std(v))
            out.append(agg)
        return out


# -- building blocks -----------------------------------------------------

def build_grid(spec: dict) -> sampling.CandidateGrid:
    kind = spec.get("kind", "regular")
    if kind == "regular":
        counts = spec["counts"]
        counts = [counts] if np.isscalar(counts) else list(counts)
        d = int(spec.get("d", len(counts)))
        return sampling.regular_grid(d, counts if len(counts) == d else counts[0])
    if kind == "lhs":
        return sampling.lhs(int(spec["d"]), int(spec["m"]), int(spec.get("seed", 0)),
                            centered=bool(spec.get("centered", False)))
    if kind == "csv":
        return sampling.read_grid_csv(spec["path"])
    raise ValueError(f"unknown grid kind {kind!r}")


def build_oracle(config: ExperimentConfig):
    spec = config.oracle
    if isinstance(spec, dict):
        if "command" not in spec:
            raise ValueError("external oracle config needs a 'command'")
        return ExternalOracle(spec["command"], timeout=spec.get("timeout", 60.0), cwd=spec.get("cwd"))
    opts = dict(config.oracle_options)
    return builtin.make_oracle(spec, opts.pop("bounds", None), **opts)


def oracle_key(config: ExperimentConfig, oracle) -> str:
    desc = oracle.describe() if hasattr(oracle, "describe") else {"oracle": config.oracle}
    blob = json.dumps(desc, sort_keys=True, default=str).encode()
    name = config.oracle if isinstance(config.oracle, str) else "external"
    return f"{name}-{hashlib.sha256(blob).hexdigest()[:12]}"


def evaluation_indices(config: ExperimentConfig, grid: sampling.CandidateGrid):
    spec = dict(config.test_set)
    policy = spec.get("policy", "auto")
    if policy == "auto":
        policy = "full" if grid.dim <= 2 else "subsample"
    if policy == "full":
        return np.arange(len(grid)), {"policy": "full", "size": len(grid)}
    if policy != "subsample":
        raise ValueError(f"unknown test-set policy {policy!r}")
    size = min(int(spec.get("size", DEFAULT_SUBSAMPLE)), len(grid))
    seed = int(spec.get("seed", 0))
    idx = np.sort(np.random.default_rng(seed).choice(len(grid), size=size, replace=False))
    return idx, {"policy": "subsample", "size": size, "seed": seed}


def ground_truth(config: ExperimentConfig, grid, oracle) -> tuple:
    """True oracle values on the test set, cached on disk when a cache dir is known."""
    idx, info = evaluation_indices(config, grid)
    cache_dir = config.cache_dir or (Path(config.output_dir) / "cache" if config.output_dir else None)
    key = f"{oracle_key(config, oracle)}-{grid.digest()}-{hashlib.sha256(idx.tobytes()).hexdigest()[:12]}"
    path = Path(cache_dir) / f"{key}.npz" if cache_dir else None
    if path is not None and path.exists():
        with np.load(path) as data:
            kept, values = data["indices"], data["values"]
        log.info("ground truth loaded from %s", path)
    else:
        kept, values = [], []
        for i in idx:
            try:
                values.append(float(oracle(grid.points[i])))
                kept.append(int(i))
            except Exception as exc:
                log.warning("ground truth unavailable at grid index %d (%s); dropped", i, exc)
        kept, values = np.asarray(kept, dtype=int), np.asarray(values)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            np.savez(path, indices=kept, values=values)
    info.update(dropped=int(len(idx) - len(kept)), cache_key=key)
    truth = metrics.GroundTruth(grid.points[kept], values, indices=kept, note=json.dumps(info))
    info.update(y_min=truth.y_min, y_max=truth.y_max)
    return truth, info


def loop_config(config: ExperimentConfig, kernel: str, seed: int) -> loop.LoopConfig:
    on_error = config.on_oracle_error
    if on_error == "auto":
        on_error = "skip" if config.oracle in ("calcite", "dolomite") else "abort"
    return loop.LoopConfig(
        family=kernel, t1=config.t1, max_iterations=config.budget, seed=seed,
        optimizer=OptimizerConfig(**config.optimizer), normalization=config.normalization,
        refit_every=config.refit_every, nugget=config.nugget, on_oracle_error=on_error,
        snapshot_every=config.snapshot_every,
    )


# -- replay ----------------------------------------------------------------

def replay_stopping(trace: loop.RunTrace, criteria) -> dict:
    """Evaluate stopping criteria on a recorded trace without re-running it.

    Returns ``{criterion name: {"t_star", "budget_capped", metrics..., "V"}}``.
    A criterion that never fires reports the last recorded iteration.
    """
    fitted = trace.fitted_records()
    if not fitted:
        raise ValueError("trace holds no fitted iterations")
    hist = np.array([r.V for r in fitted])
    out, missing = {}, []
    for crit in criteria:
        spec = stopping.CriterionSpec.parse(crit)
        i = stopping.first_stop(spec, hist)
        capped = i is None
        rec = fitted[-1] if capped else fitted[i]
        row = {"t_star": rec.t, "budget_capped": capped, "V": rec.V}
        if rec.metrics is None:
            missing.append(rec.t)
        else:
            row.update(rec.metrics)
        out[spec.name] = row
    if missing:
        raise ValueError(f"no metric snapshot at iteration(s) {sorted(set(missing))}")
    return out


# -- driver ------------------------------------------------------------------

def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentReport:
    grid = build_grid(config.grid)
    oracle = build_oracle(config)
    try:
        truth, info = ground_truth(config, grid, oracle)
        report = ExperimentReport(config, truth_info=info)
        for kernel in config.kernels:
            for rep, seed in enumerate(config.seeds):
                cfg = loop_config(config, kernel, seed)
                _, trace = loop.run(oracle, grid, cfg, truth)
                report.traces[(kernel, rep)] = trace
                if trace.status != "ok":
                    report.failures.append({"kernel": kernel, "replication": rep, "failure": trace.failure})
                    log.error("%s replication %d failed: %s", kernel, rep, trace.failure)
                for r in trace.records:
                    if r.metrics is not None:
                        for name in metrics.METRIC_NAMES:
                            report.metric_rows.append((kernel, rep, r.t, name, r.metrics[name]))
                        report.metric_rows.append((kernel, rep, r.t, "V", r.V))
                if trace.fitted_records():
                    for crit, row in replay_stopping(trace, config.criteria).items():
                        report.stopping_rows.append({"kernel": kernel, "replication": rep, "criterion": crit,
                                                     "partial": trace.status != "ok", **row})
                log.info("%s rep %d: %d evaluations, final metrics %s", kernel, rep,
                         trace.n_evaluations, trace.records[-1].metrics if trace.records else None)
    finally:
        if hasattr(oracle, "close"):
            oracle.close()
    if write and config.output_dir:
        emit_report(report, config.output_dir)
    return report


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


STOPPING_COLUMNS = ("kernel", "replication", "criterion", "t_star", "budget_capped", "partial") + REPORT_METRICS


def emit_report(report: ExperimentReport, directory) -> list:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = []

    def path(name):
        p = out / name
        files.append(p)
        return p

    _write_csv(path("metrics.csv"), ("kernel", "replication", "t", "metric", "value"), report.metric_rows)
    _write_csv(path("metrics_aggregate.csv"), ("kernel", "t", "metric", "n", "mean", "std"),
               report.aggregate_metrics())
    _write_csv(path("stopping_summary.csv"), STOPPING_COLUMNS,
               [[r.get(c) for c in STOPPING_COLUMNS] for r in report.stopping_rows])
    agg = report.aggregate_stopping()
    agg_cols = ["kernel", "criterion", "n", "budget_capped"] + [
        f"{c}_{s}" for c in ("t_star",) + REPORT_METRICS for s in ("mean", "std")]
    _write_csv(path("stopping_aggregate.csv"), agg_cols, [[a[c] for c in agg_cols] for a in agg])

    manifest = {"schema_version": SCHEMA_VERSION, "config": report.config.to_dict(),
                "ground_truth": report.truth_info, "partial": report.partial, "failures": report.failures}
    path("config.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")

    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    for (kernel, rep), trace in report.traces.items():
        stem = f"{kernel}_rep{rep:02d}"
        p = path(f"traces/{stem}.jsonl")
        trace.to_jsonl(p, include_timing=report.config.record_timing)
        rows = []
        for r in trace.records:
            if r.metrics is not None:
                rows.append([r.t] + [r.metrics[k] for k in metrics.METRIC_NAMES] + [r.V])
        _write_csv(path(f"traces/{stem}.csv"), ("t",) + REPORT_METRICS, rows)
    return files


def read_metrics_csv(path) -> list:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        return [(k, int(rep), int(t), name, float(v)) for k, rep, t, name, v in rd]


def live_stop(config: ExperimentConfig, kernel: str, replication: int, criterion,
              budget: int | None = None) -> loop.RunTrace:
    """Re-run one replication with ``criterion`` active inside the loop.

    ``budget`` lowers the iteration cap, which is enough to confirm a
    replayed stopping iteration without paying for the full run.
    """
    grid = build_grid(config.grid)
    oracle = build_oracle(config)
    try:
        cfg = loop_config(config, kernel, config.seeds[replication])
        cfg.criterion = stopping.CriterionSpec.parse(criterion)
        if budget is not None:
            cfg.max_iterations = max(int(budget), cfg.t1)
        _, trace = loop.run(oracle, grid, cfg)
    finally:
        if hasattr(oracle, "close"):
            oracle.close()
    return trace
