"""Sequential pure-exploration design: evaluate where the posterior variance peaks.

Each pass of :func:`run`, with ``t`` observations in hand:

1. re-estimate the length scales by maximum likelihood,
2. condition the GP on the observations,
3. compute the posterior variance over the candidate grid,
4. record ``V(t)``, the maximum grid variance,
5. test the stopping criterion (and the iteration budget),
6. otherwise query the oracle at the unvisited grid point of largest variance.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import gp, metrics, stopping
from .gp import GridPosterior, ObservationSet, OptimizerConfig, PosteriorModel
from .kernels import Family, KernelSpec
from .sampling import CandidateGrid, design_order

log = logging.getLogger(__name__)

TRACE_SCHEMA_VERSION = 1
NORMALIZATIONS = ("none", "standardize", "minmax")


class GridExhausted(RuntimeError):
    pass


@dataclass
class LoopConfig:
    family: Family = Family.SE
    t1: int = 3
    max_iterations: int = 40
    criterion: stopping.CriterionSpec | None = None
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    normalization: str = "standardize"
    refit_every: int = 1
    # fixed length scales disable maximum-likelihood refits altogether
    fixed_lengthscales: tuple | None = None
    initial_lengthscales: tuple | None = None
    nugget: float = gp.DEFAULT_NUGGET
    on_oracle_error: str = "abort"
    snapshot_every: int = 1

    def __post_init__(self):
        self.family = Family.parse(self.family)
        if self.t1 < 1:
            raise ValueError("t1 must be >= 1")
        if self.max_iterations < self.t1:
            raise ValueError("max_iterations must be >= t1")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.refit_every < 1 or self.snapshot_every < 1:
            raise ValueError("refit_every and snapshot_every must be >= 1")
        if self.on_oracle_error not in ("abort", "skip"):
            raise ValueError("on_oracle_error must be 'abort' or 'skip'")
        if self.criterion is not None:
            self.criterion = stopping.CriterionSpec.parse(self.criterion)


@dataclass
class IterationRecord:
    """One oracle evaluation and the model fitted once it was added.

    ``V``, ``lengthscales`` and ``metrics`` describe the posterior given the
    first ``t`` observations; they stay ``None`` while ``t < t1``.
    ``selected_variance`` is the variance of ``x`` when it was chosen.
    """

    t: int
    index: int
    x: list
    y: float
    initial: bool = False
    selected_variance: float | None = None
    lengthscales: list | None = None
    V: float | None = None
    metrics: dict | None = None
    wall_time: float = 0.0


@dataclass
class RunTrace:
    t1: int
    family: str
    seed: int
    records: list = field(default_factory=list)
    t_star: int | None = None
    stop_reason: str | None = None
    status: str = "running"
    failure: str | None = None
    skipped: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_evaluations(self) -> int:
        return len(self.records)

    def fitted_records(self):
        return [r for r in self.records if r.V is not None]

    def v_history(self) -> np.ndarray:
        return np.array([r.V for r in self.fitted_records()], dtype=float)

    def history_ts(self) -> list:
        return [r.t for r in self.fitted_records()]

    def to_jsonl(self, path=None, include_timing: bool = True) -> str:
        header = {"type": "header", "schema_version": TRACE_SCHEMA_VERSION, "t1": self.t1,
                  "family": self.family, "seed": self.seed, "meta": self.meta}
        lines = [json.dumps(header, sort_keys=True)]
        for r in self.records:
            d = {"type": "iteration", **asdict(r)}
            if not include_timing:
                d.pop("wall_time")
            lines.append(json.dumps(d, sort_keys=True))
        tail = {"type": "terminal", "t_star": self.t_star, "stop_reason": self.stop_reason,
                "status": self.status, "failure": self.failure, "skipped": self.skipped}
        lines.append(json.dumps(tail, sort_keys=True))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_jsonl(cls, source) -> "RunTrace":
        text = source
        if not isinstance(source, str) or "\n" not in source:
            with open(source) as fh:
                text = fh.read()
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows or rows[0].get("type") != "header":
            raise ValueError("trace is missing its header line")
        h = rows[0]
        if h.get("schema_version") != TRACE_SCHEMA_VERSION:
            raise ValueError(f"unsupported trace schema_version {h.get('schema_version')}")
        trace = cls(h["t1"], h["family"], h["seed"], meta=h.get("meta", {}))
        for row in rows[1:]:
            kind = row.pop("type")
            if kind == "iteration":
                trace.records.append(IterationRecord(**row))
            elif kind == "terminal":
                trace.t_star = row["t_star"]
                trace.stop_reason = row["stop_reason"]
                trace.status = row["status"]
                trace.failure = row["failure"]
                trace.skipped = row.get("skipped", [])
        return trace

    def to_csv(self, path) -> None:
        d = len(self.records[0].x) if self.records else 0
        cols = ["t", "index", "y", "V", "selected_variance"] + [f"lengthscale_{j}" for j in range(d)] \
            + list(metrics.METRIC_NAMES)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.records:
                ls = r.lengthscales or [None] * d
                ms = r.metrics or {}
                w.writerow([r.t, r.index, r.y, r.V, r.selected_variance, *ls,
                            *(ms.get(k) for k in metrics.METRIC_NAMES)])


def _normalize(y: np.ndarray, policy: str):
    if policy == "none" or len(y) == 0:
        return 0.0, 1.0
    if policy == "standardize":
        offset, scale = float(np.mean(y)), float(np.std(y))
    else:
        offset, scale = float(np.min(y)), float(np.ptp(y))
    if not scale > 0:
        scale = 1.0
    return offset, scale


def argmax_unvisited(variances: np.ndarray, visited) -> int:
    v = np.array(variances, dtype=float, copy=True)
    mask = np.zeros(len(v), dtype=bool)
    mask[list(visited)] = True
    if mask.all():
        raise GridExhausted("every grid point has been visited")
    v[mask] = -np.inf
    return int(np.argmax(v))  # first maximum: lowest index wins ties


def select_next(model: PosteriorModel, grid: CandidateGrid, visited) -> int:
    """Unvisited grid index with the largest posterior variance."""
    return argmax_unvisited(gp.posterior_variance_batch(model, grid.points), visited)


def predict(model: PosteriorModel, points) -> np.ndarray:
    return gp.posterior_mean_batch(model, points)


def run(oracle, grid: CandidateGrid, config: LoopConfig, truth: metrics.GroundTruth | None = None):
    """Run the active-learning loop; returns ``(model, trace)``.

    ``oracle`` maps a point of the unit cube to a real. When ``truth`` is
    given, metric snapshots are taken every ``config.snapshot_every``
    iterations and at the final iteration.
    """
    X = grid.points
    d = grid.dim
    trace = RunTrace(config.t1, config.family.value, int(config.seed),
                     meta={"criterion": config.criterion.name if config.criterion else None,
                           "max_iterations": config.max_iterations,
                           "normalization": config.normalization,
                           "refit_every": config.refit_every})
    order = iter(design_order(grid, config.seed))
    visited: set = set()
    idx_list: list = []
    y_list: list = []
    clock = time.perf_counter()

    def query(idx, initial, sel_var=None):
        nonlocal clock
        visited.add(idx)
        try:
            y = float(oracle(X[idx]))
            if not np.isfinite(y):
                raise ValueError(f"non-finite oracle value {y}")
        except Exception as exc:
            if config.on_oracle_error == "skip":
                log.warning("oracle failed at grid index %d (%s); skipping point", idx, exc)
                trace.skipped.append({"index": int(idx), "error": str(exc)})
                return False
            raise
        now = time.perf_counter()
        idx_list.append(int(idx))
        y_list.append(y)
        trace.records.append(IterationRecord(
            t=len(idx_list), index=int(idx), x=X[idx].tolist(), y=y, initial=initial,
            selected_variance=sel_var, wall_time=now - clock))
        clock = now
        return True

    model = None
    try:
        while len(idx_list) < config.t1:
            idx = next(order, None)
            if idx is None:
                raise GridExhausted("grid exhausted while drawing the initial design")
            query(int(idx), True)
    except GridExhausted as exc:
        trace.status, trace.stop_reason, trace.failure = "failed", "budget: grid exhausted", str(exc)
        return model, trace
    except Exception as exc:
        trace.status, trace.failure = "failed", f"oracle error: {exc}"
        return model, trace

    kernel = None
    if config.fixed_lengthscales is not None:
        kernel = KernelSpec(config.family, tuple(np.broadcast_to(config.fixed_lengthscales, d)))
    initial_ls = config.initial_lengthscales
    grid_post = GridPosterior(X, capacity=min(config.max_iterations, len(X)))
    last_snapshot = None

    while True:
        t = len(idx_list)
        y_raw = np.asarray(y_list)
        offset, scale = _normalize(y_raw, config.normalization)
        obs = ObservationSet(X[idx_list], (y_raw - offset) / scale)

        if config.fixed_lengthscales is None:
            due = (t - config.t1) % config.refit_every == 0
            if kernel is None and (t < 2 or not due):
                ls = initial_ls if initial_ls is not None else np.sqrt(np.prod(config.optimizer.bounds))
                kernel = KernelSpec(config.family, tuple(np.broadcast_to(ls, d)))
            if t >= 2 and due:
                opt = replace(config.optimizer, seed=[int(config.seed), t])
                incumbent = kernel.lengthscales if kernel is not None else initial_ls
                kernel = gp.optimize_lengthscales(obs, config.family, opt, incumbent=incumbent)

        if model is not None and model.kernel == kernel:
            model = gp.extend(model, obs)
        else:
            model = gp.fit(obs, kernel, config.nugget)
        model = replace(model, y_offset=offset, y_scale=scale)
        grid_post.update(model)
        variances = grid_post.variances()
        V = float(variances.max())

        rec = trace.records[-1]
        rec.V = V
        rec.lengthscales = list(kernel.lengthscales)

        stop_reason = None
        if config.criterion is not None and stopping.should_stop(config.criterion, trace.v_history()):
            stop_reason = config.criterion.name
        elif t >= config.max_iterations:
            stop_reason = "budget"

        if truth is not None and (stop_reason or (t - config.t1) % config.snapshot_every == 0):
            if truth.indices is not None:
                pred = grid_post.means(truth.indices)
            else:
                pred = gp.posterior_mean_batch(model, truth.points)
            rec.metrics = metrics.snapshot(truth, pred)
            last_snapshot = rec.metrics

        if stop_reason is None:
            try:
                while True:
                    nxt = argmax_unvisited(variances, visited)
                    if query(nxt, False, float(variances[nxt])):
                        break
            except GridExhausted:
                stop_reason = "budget: grid exhausted"
                if truth is not None and rec.metrics is None:
                    pred = grid_post.means(truth.indices) if truth.indices is not None \
                        else gp.posterior_mean_batch(model, truth.points)
                    rec.metrics = metrics.snapshot(truth, pred)
            except Exception as exc:
                trace.status, trace.failure = "failed", f"oracle error at iteration {t + 1}: {exc}"
                trace.t_star = t
                log.error("loop aborted: %s", trace.failure)
                return model, trace

        if stop_reason is not None:
            trace.t_star = t
            trace.stop_reason = stop_reason
            trace.status = "ok"
            log.debug("stopped at t=%d (%s), V=%.3g, metrics=%s", t, stop_reason, V, last_snapshot)
            return model, trace
