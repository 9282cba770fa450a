"""Fast invariant checks behind ``phasebandit check``.

Each check is a reduced-size version of a property exercised in the test
suite, small enough to run in a few seconds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import analysis
from ..core import Bandit, Environment, RngState, sample_sphere_orthogonal, sample_unit_sphere
from ..estimator import (
    EstimatorProblem,
    FeasibleSet,
    HalfSpace,
    brute_force_ls_oracle,
    constrained_least_squares,
    quartic_loss,
)
from ..policies import WarmStartConfig, warm_start
from .config import ExperimentConfig
from .output import format_csv
from .runner import run_experiment


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_moments(seed: int) -> CheckResult:
    rng = RngState(seed).child(1).generator()
    worst = 0.0
    for d in (1, 2, 5):
        est = analysis.monte_carlo_moments(d, 1.0, 100_000, rng)
        targets = {
            "moment2": analysis.sphere_moment2(d, 1.0),
            "moment4": analysis.sphere_moment4(d, 1.0),
            "variance": analysis.reward_variance(d, 1.0),
        }
        for key, target in targets.items():
            e = est[key]
            z = abs(e.mean - target) / e.se if e.se > 0 else 0.0
            worst = max(worst, z)
    # 4 standard errors over 9 comparisons keeps the false-alarm rate tiny
    return CheckResult("moments", worst <= 4.0, f"max |z| = {worst:.2f}")


def check_information(seed: int) -> CheckResult:
    bad = [
        (d, r)
        for d in range(1, 257)
        for r in np.round(np.arange(1, 11) / 10, 1)
        if analysis.information_gain_approx(d, r) > analysis.information_gain_bound(d, r)
    ]
    ratios = [analysis.information_ratio(d, 1.0) / d**2 for d in range(4, 129)]
    ok = not bad and all(0.5 <= q <= 2.0 for q in ratios)
    return CheckResult("information", ok, f"{len(bad)} bound violations, ratio/d^2 in [{min(ratios):.3f}, {max(ratios):.3f}]")


def check_curvature(seed: int) -> CheckResult:
    rng = RngState(seed).child(2).generator()
    bad = analysis.curvature_violations(20_000, 4, rng)
    return CheckResult("curvature", bad == 0, f"{bad} violations")


def check_solver(seed: int) -> CheckResult:
    rng = RngState(seed).child(3).generator()
    worst = 0.0
    for _ in range(3):
        theta = 0.9 * sample_unit_sphere(2, rng)
        A = np.array([sample_unit_sphere(2, rng) for _ in range(12)])
        X = (A @ theta) ** 2 + 0.1 * rng.standard_normal(12)
        problem = EstimatorProblem(A, X, FeasibleSet(1.0, HalfSpace(theta, 0.1)))
        ours = quartic_loss(constrained_least_squares(problem, rng=rng), problem)
        grid = quartic_loss(brute_force_ls_oracle(problem, 401), problem)
        worst = max(worst, ours - grid)
    return CheckResult("solver", worst <= 1e-3, f"max excess loss over grid = {worst:.2e}")


def check_warm_basis(seed: int) -> CheckResult:
    base = RngState(seed).child(4)
    worst = 0.0
    for s in range(3):
        env = Environment.on_sphere(6, 1.0, base.child(s, 0).generator())
        cfg = WarmStartConfig(horizon=200_000, radius=1.0, constant_scale=0.005, check_stop_first=False)
        bandit = Bandit(env, cfg.horizon, base.child(s, 1).generator())
        res = warm_start(bandit, cfg, base.child(s, 2).generator())
        units = [w / np.linalg.norm(w) for w in res.basis if np.linalg.norm(w) > 0]
        if units:
            G = np.array(units) @ np.array(units).T
            worst = max(worst, float(np.max(np.abs(G - np.eye(len(units))))))
        worst = max(worst, abs(float(np.linalg.norm(res.action)) - 1.0))
    return CheckResult("warm-basis", worst <= 1e-9, f"max orthonormality defect = {worst:.1e}")


def check_orthogonal_sampler(seed: int) -> CheckResult:
    rng = RngState(seed).child(5).generator()
    Q, _ = np.linalg.qr(rng.standard_normal((7, 3)))
    worst = 0.0
    for _ in range(100):
        x = sample_sphere_orthogonal(7, list(Q.T), rng)
        worst = max(worst, float(np.max(np.abs(Q.T @ x))), abs(float(np.linalg.norm(x)) - 1.0))
    return CheckResult("orthogonal-sampler", worst <= 1e-9, f"max defect = {worst:.1e}")


def check_determinism(seed: int) -> CheckResult:
    cfg = ExperimentConfig(policy="full", d_grid=[3], n_grid=[2000], seeds=2, base_seed=seed, constant_scale=0.2)
    a = format_csv(run_experiment(cfg, workers=1))
    b = format_csv(run_experiment(cfg, workers=1))
    return CheckResult("determinism", a == b, "identical CSV" if a == b else "CSV differs between runs")


CHECKS: dict[str, Callable[[int], CheckResult]] = {
    "moments": check_moments,
    "information": check_information,
    "curvature": check_curvature,
    "solver": check_solver,
    "warm-basis": check_warm_basis,
    "orthogonal-sampler": check_orthogonal_sampler,
    "determinism": check_determinism,
}


def run_checks(names: list[str] | None = None, seed: int = 0) -> list[CheckResult]:
    names = names or list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {', '.join(unknown)}")
    return [CHECKS[n](seed) for n in names]


__all__ = ["CHECKS", "CheckResult", "run_checks"]
