"""Seeded sweeps over ``(d, n)`` cells, per-seed metrics and their aggregation."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Literal

import numpy as np

from ..analysis import InfeasibleRadiusError, ScalingFit, fit_scaling_exponent, lower_bound_radius
from ..core import Environment, RngState, cumulative_regret, simple_regret
from ..policies import (
    EtcConfig,
    PolicyOutcome,
    WarmStartConfig,
    etc_run,
    full_policy_run,
    uniform_pure_exploration_run,
    warm_only_run,
)
from .config import ExperimentConfig

logger = logging.getLogger(__name__)

WORKERS_ENV = "PHASE_BANDIT_WORKERS"


class BudgetExceededError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunRecord:
    """Metrics of one ``(cell, seed)`` run. Warm fields are ``None`` when no warm start ran."""

    cum_regret: float
    simple_regret: float
    warm_rounds: int | None = None
    warm_success: bool | None = None


@dataclass(frozen=True)
class CellSummary:
    policy: str
    d: int
    n: int
    r: float
    sigma: float
    scale: float
    seeds: int
    mean_cum_regret: float
    se_cum_regret: float | None
    mean_simple_regret: float
    se_simple_regret: float | None
    mean_warm_rounds: float | None
    warm_success_rate: float | None

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.policy, self.d, self.n)


@dataclass
class RegretSummary:
    cells: list[CellSummary] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.cells = sorted(self.cells, key=lambda c: c.key)

    def cell(self, policy: str, d: int, n: int) -> CellSummary:
        for c in self.cells:
            if c.key == (policy, d, n):
                return c
        raise KeyError((policy, d, n))

    def __len__(self) -> int:
        return len(self.cells)


# ---------------------------------------------------------------------------
# one run
# ---------------------------------------------------------------------------


def cell_radius(cfg: ExperimentConfig, d: int, n: int) -> float:
    if cfg.r_mode == "fixed":
        return cfg.r
    kind = "cumulative" if cfg.r_mode == "lower_bound_cumulative" else "simple"
    return lower_bound_radius(d, n, kind)


def radius_probe_budget(d: int, n: int) -> int:
    """Rounds spent estimating the radius before the full policy runs."""
    return max(d, min(n // 4, int(math.ceil(d * math.sqrt(n)))))


def _configs(cfg: ExperimentConfig, n: int, r: float) -> tuple[WarmStartConfig, EtcConfig]:
    warm = WarmStartConfig(horizon=n, radius=r, constant_scale=cfg.constant_scale)
    etc = EtcConfig(
        horizon=n, radius=r, alpha=cfg.alpha, constant_scale=cfg.etc_constant_scale, mix_weight=cfg.mix_weight
    )
    return warm, etc


def _record(env: Environment, out: PolicyOutcome, n: int) -> RunRecord:
    if env.calls > n:
        raise BudgetExceededError(f"environment answered {env.calls} pulls with horizon {n}")
    pred = out.prediction
    sr = simple_regret(env, pred) if pred is not None else env.r**2
    warm = out.warm
    if warm is None:
        return RunRecord(cumulative_regret(env, out.trajectory), sr)
    return RunRecord(cumulative_regret(env, out.trajectory), sr, int(warm.rounds), bool(warm.success))


def run_single(cfg: ExperimentConfig, d: int, n: int, r: float, seed_index: int) -> RunRecord:
    """One ``(cell, seed)`` run on its own streams.

    ``theta*`` comes from a stream that does not depend on the policy, so
    different policies with the same ``base_seed`` face the same parameters.
    """
    base = RngState(cfg.base_seed)
    if cfg.theta_mode == "fixed":
        env = Environment.fixed(d, r, cfg.noise_sigma)
    else:
        env = Environment.on_sphere(d, r, base.child(d, n, seed_index, 0).generator(), cfg.noise_sigma)
    rng = base.child(d, n, seed_index, 1)
    warm_cfg, etc_cfg = _configs(cfg, n, r)
    if cfg.policy == "full":
        out = full_policy_run(env, n, warm_cfg, etc_cfg, rng)
    elif cfg.policy == "radius_probe":
        out = full_policy_run(env, n, warm_cfg, etc_cfg, rng, radius_budget=radius_probe_budget(d, n))
    elif cfg.policy == "warm_only":
        out = warm_only_run(env, n, warm_cfg, rng)
    elif cfg.policy == "etc_oracle_warm":
        out = etc_run(env, env.theta_star / env.r, etc_cfg, n, rng)
    elif cfg.policy == "uniform_pure":
        out = uniform_pure_exploration_run(env, n, rng)
    else:
        raise ValueError(f"unknown policy {cfg.policy!r}")
    return _record(env, out, n)


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


def _mean_se(values: list[float]) -> tuple[float, float | None]:
    arr = np.asarray(values, dtype=float)
    mean = float(np.mean(arr))
    if arr.size < 2:
        return mean, None
    return mean, float(np.std(arr, ddof=1) / math.sqrt(arr.size))


def summarize_cell(cfg: ExperimentConfig, d: int, n: int, r: float, records: list[RunRecord]) -> CellSummary:
    """Aggregate the records of one cell; they must be ordered by seed index."""
    cum, se_cum = _mean_se([rec.cum_regret for rec in records])
    sr, se_sr = _mean_se([rec.simple_regret for rec in records])
    warm = [rec for rec in records if rec.warm_rounds is not None]
    warm_rounds = float(np.mean([rec.warm_rounds for rec in warm])) if warm else None
    success = float(np.mean([bool(rec.warm_success) for rec in warm])) if warm else None
    return CellSummary(
        cfg.policy, d, n, float(r), float(cfg.noise_sigma), float(cfg.constant_scale), len(records),
        cum, se_cum, sr, se_sr, warm_rounds, success,
    )  # fmt: skip


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                workers = int(env)
            except ValueError:
                raise ValueError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        else:
            workers = os.cpu_count() or 1
    if workers < 1:
        raise ValueError("worker count must be >= 1")
    return workers


RunFn = Callable[[ExperimentConfig, int, int, float, int], RunRecord]


def _cells(cfg: ExperimentConfig) -> list[tuple[int, int, float]]:
    cells = []
    for d in cfg.d_grid:
        for n in cfg.n_grid:
            try:
                r = cell_radius(cfg, d, n)
            except InfeasibleRadiusError as exc:
                logger.warning("skipping cell d=%d n=%d: %s", d, n, exc)
                continue
            cells.append((d, n, r))
    return cells


def run_experiment(
    cfg: ExperimentConfig, workers: int | None = None, run_fn: RunFn | None = None
) -> RegretSummary:
    """Run every ``(cell, seed)`` pair and aggregate per cell.

    Results are keyed by ``(cell, seed)`` and aggregated in seed order, so the
    summary does not depend on the worker count or completion order.
    ``run_fn`` replaces :func:`run_single` (it must be picklable when
    ``workers > 1``).
    """
    run_fn = run_fn or run_single
    workers = resolve_workers(workers)
    cells = _cells(cfg)
    jobs = [(d, n, r, s) for d, n, r in cells for s in range(cfg.seeds)]
    results: dict[tuple[int, int, int], RunRecord] = {}
    if workers == 1 or len(jobs) <= 1:
        for d, n, r, s in jobs:
            results[(d, n, s)] = run_fn(cfg, d, n, r, s)
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            futures = {(d, n, s): pool.submit(run_fn, cfg, d, n, r, s) for d, n, r, s in jobs}
            for key, fut in futures.items():
                results[key] = fut.result()
    summaries = [
        summarize_cell(cfg, d, n, r, [results[(d, n, s)] for s in range(cfg.seeds)]) for d, n, r in cells
    ]
    return RegretSummary(summaries)


Metric = Literal["cum_regret", "simple_regret"]


def fit_summary(summary: RegretSummary, axis: Literal["n", "d"], metric: Metric = "cum_regret") -> ScalingFit:
    """Log-log OLS of the mean metric against the axis value over all cells."""
    points = []
    for c in summary.cells:
        x = c.n if axis == "n" else c.d
        y = c.mean_cum_regret if metric == "cum_regret" else c.mean_simple_regret
        points.append((x, y))
    return fit_scaling_exponent(points)


def sweep_and_fit(
    cfg: ExperimentConfig,
    axis: Literal["n", "d"],
    metric: Metric = "cum_regret",
    workers: int | None = None,
    run_fn: RunFn | None = None,
) -> tuple[ScalingFit, RegretSummary]:
    """Run the sweep and fit the scaling exponent along ``axis``.

    The other axis must hold a single value.
    """
    if axis not in ("n", "d"):
        raise ValueError(f"axis must be 'n' or 'd', got {axis!r}")
    grid, other = (cfg.n_grid, cfg.d_grid) if axis == "n" else (cfg.d_grid, cfg.n_grid)
    if len(set(grid)) < 3:
        raise ValueError(f"the {axis} grid needs at least 3 distinct points")
    if len(other) != 1:
        raise ValueError("the other grid must hold exactly one value")
    summary = run_experiment(cfg, workers, run_fn)
    return fit_summary(summary, axis, metric), summary


def iter_records(cfg: ExperimentConfig, d: int, n: int, seeds: Iterable[int]) -> list[RunRecord]:
    """Per-seed records of one cell, run sequentially (for paired comparisons)."""
    r = cell_radius(cfg, d, n)
    return [run_single(cfg, d, n, r, s) for s in seeds]
