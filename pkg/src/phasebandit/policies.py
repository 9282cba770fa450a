"""Learning policies: adaptive warm start, explore-then-commit and baselines.

The policy bodies (:func:`warm_start`, :func:`explore_then_commit`) only see a
:class:`~phasebandit.core.Bandit`, i.e. the dimension, the horizon and a reward
oracle. The ``*_run`` wrappers build that oracle around an
:class:`~phasebandit.core.Environment` and add ground-truth diagnostics.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .analysis import warm_start_beta
from .core import (
    Bandit,
    Environment,
    RngState,
    Trajectory,
    WarmOutput,
    sample_sphere_orthogonal,
    sample_unit_sphere,
    sample_unit_sphere_batch,
)
from .estimator import (
    EstimatorProblem,
    FeasibleSet,
    HalfSpace,
    SolverConfig,
    constrained_least_squares,
    estimate_radius,
    spectral_init,
)

logger = logging.getLogger(__name__)

WARM_ALPHA = 1.0 / 64.0


@dataclass(frozen=True)
class WarmStartConfig:
    """Settings for the adaptive warm start.

    ``constant_scale`` multiplies every episode length. With
    ``check_stop_first`` (the default) the energy stopping rule
    ``sum |w|^2 >= r^2/16`` is tested before each iteration ``k >= 2``;
    otherwise iteration 2 always runs and the rule is tested afterwards.
    """

    horizon: int
    radius: float
    constant_scale: float = 1.0
    check_stop_first: bool = True
    solver: SolverConfig = SolverConfig(restarts=3)

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 < self.radius <= 1.0:
            raise ValueError("radius must lie in (0, 1]")
        if self.constant_scale <= 0:
            raise ValueError("constant_scale must be positive")

    @property
    def beta(self) -> float:
        return warm_start_beta(self.horizon)

    def first_episode_length(self, d: int) -> int:
        tau4 = (self.radius**2 / d) ** 2
        return max(1, math.ceil(self.constant_scale * 8.0 / tau4 * math.log(2.0 * self.horizon**2)))

    def episode_length(self, d: int, k: int) -> int:
        """Per-action repetitions ``m`` in iteration ``k >= 2``."""
        m = self.constant_scale * 64.0 * d * d * self.beta / (k * self.radius**4)
        return max(1, math.ceil(m))


@dataclass(frozen=True)
class EtcConfig:
    """Settings for explore-then-commit around a warm action.

    ``alpha`` is the guaranteed quality ``<A_w, theta>^2 >= alpha r^2`` of the
    warm action; it sets the sign-pinning half-space and, unless
    ``mix_weight`` overrides it, the mixing weight ``min(1/2, sqrt(alpha)/4)``.
    """

    horizon: int
    radius: float
    alpha: float = WARM_ALPHA
    constant_scale: float = 1.0
    mix_weight: float | None = None
    solver: SolverConfig = SolverConfig(init_mode="warm", restarts=3)

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 < self.radius <= 1.0:
            raise ValueError("radius must lie in (0, 1]")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.constant_scale <= 0:
            raise ValueError("constant_scale must be positive")
        if self.mix_weight is not None and not 0.0 < self.mix_weight <= 0.5:
            raise ValueError("mix_weight must lie in (0, 1/2]")

    @property
    def lam(self) -> float:
        if self.mix_weight is not None:
            return self.mix_weight
        return min(0.5, math.sqrt(self.alpha) / 4.0)

    def exploration_length(self, d: int) -> int:
        n = self.horizon
        m = self.constant_scale * 4.0 * d * math.sqrt(n * math.log(n)) / self.radius**2
        return max(1, math.ceil(m))


@dataclass
class WarmStartResult:
    action: np.ndarray
    rounds: int
    completed: bool
    basis: list[np.ndarray] = field(default_factory=list)
    attempts: list[int] = field(default_factory=list)


@dataclass
class PolicyOutcome:
    trajectory: Trajectory
    committed_action: np.ndarray | None = None
    warm: WarmOutput | None = None
    basis: list[np.ndarray] = field(default_factory=list)
    radius_used: float | None = None

    @property
    def prediction(self) -> np.ndarray | None:
        return self.trajectory.prediction


def _normalized_sum(basis: list[np.ndarray]) -> np.ndarray:
    s = np.sum(basis, axis=0)
    return s / np.linalg.norm(s)


# ---------------------------------------------------------------------------
# warm start
# ---------------------------------------------------------------------------


def warm_start(bandit: Bandit, cfg: WarmStartConfig, rng: np.random.Generator) -> WarmStartResult:
    """Find a direction whose reward is a constant fraction of ``r^2``.

    First iteration: replay random unit directions until one has average
    reward at least ``tau^2 = r^2/d``. Later iterations sample a direction
    ``v`` orthogonal to everything found so far, probe it through
    ``(u+v)/√2, (u-v)/√2, u`` and keep ``<v, theta_hat> v`` once the
    least-squares estimate puts at least ``tau^2`` of energy on ``v``.
    Returns early (``completed=False``) if the bandit's budget runs out.
    """
    d = bandit.dim
    start = bandit.used
    tau2 = cfg.radius**2 / d
    basis: list[np.ndarray] = []
    attempts: list[int] = []

    def result(action: np.ndarray, completed: bool) -> WarmStartResult:
        return WarmStartResult(action, bandit.used - start, completed, basis, attempts)

    m = cfg.first_episode_length(d)
    tries = 0
    best_v, best_xbar = None, -math.inf
    while True:
        v = sample_unit_sphere(d, rng)
        tries += 1
        x = bandit.play(v, m, phase="warm-1")
        if len(x) < m:
            # out of budget before any direction qualified: recommend the
            # completed episode with the highest average reward
            return result(v if best_v is None else best_v, False)
        xbar = float(np.mean(x))
        if xbar >= tau2:
            break
        if xbar > best_xbar:
            best_v, best_xbar = v, xbar
    attempts.append(tries)
    basis.append(v * math.sqrt(xbar))

    target = cfg.radius**2 / 16.0
    k = 2
    while k <= d:
        if (cfg.check_stop_first or k > 2) and sum(float(w @ w) for w in basis) >= target:
            break
        m = cfg.episode_length(d, k)
        u = _normalized_sum(basis)
        tries = 0
        while True:
            v = sample_sphere_orthogonal(d, basis, rng)
            tries += 1
            probes = ((u + v) / math.sqrt(2.0), (u - v) / math.sqrt(2.0), u)
            acts, xs = [], []
            for a in probes:
                xs.append(bandit.play(a, m, phase=f"warm-{k}"))
                acts.append(np.broadcast_to(a, (len(xs[-1]), d)))
            if sum(len(x) for x in xs) < 3 * m:
                return result(_normalized_sum(basis), False)
            problem = EstimatorProblem(np.concatenate(acts), np.concatenate(xs), FeasibleSet(1.0))
            theta = constrained_least_squares(problem, cfg.solver, rng)
            # the loss is even in theta; take the minimiser on u's side
            if float(u @ theta) < 0.0:
                theta = -theta
            proj = float(v @ theta)
            if proj * proj >= tau2:
                break
        attempts.append(tries)
        basis.append(proj * v)
        k += 1
    return result(_normalized_sum(basis), True)


def warm_success(env: Environment, action: np.ndarray) -> bool:
    """Ground-truth check ``<A_w, theta*>^2 >= r^2/64`` (diagnostics only)."""
    return float(action @ env.theta_star) ** 2 >= env.r**2 / 64.0


def warm_start_run(env: Environment, cfg: WarmStartConfig, rng: RngState) -> PolicyOutcome:
    bandit = Bandit(env, cfg.horizon, rng.child(0).generator())
    res = warm_start(bandit, cfg, rng.child(1).generator())
    out = WarmOutput(res.action, res.rounds, res.completed and res.rounds < cfg.horizon and warm_success(env, res.action))
    traj = bandit.trajectory
    traj.warm_output = out
    traj.prediction = res.action
    return PolicyOutcome(traj, None, out, res.basis, cfg.radius)


def warm_only_run(env: Environment, n: int, cfg: WarmStartConfig, rng: RngState) -> PolicyOutcome:
    """Warm start, then replay its output action for every remaining round."""
    bandit = Bandit(env, n, rng.child(0).generator())
    cfg = replace(cfg, horizon=n)
    res = warm_start(bandit, cfg, rng.child(1).generator())
    success = res.completed and bandit.used < n and warm_success(env, res.action)
    warm = WarmOutput(res.action, res.rounds, success)
    bandit.play(res.action, bandit.remaining, phase="warm-commit")
    traj = bandit.trajectory
    traj.warm_output = warm
    traj.prediction = res.action
    return PolicyOutcome(traj, res.action, warm, res.basis, cfg.radius)


# ---------------------------------------------------------------------------
# explore then commit
# ---------------------------------------------------------------------------


def etc_design(warm_action: np.ndarray, lam: float) -> np.ndarray:
    """The ``2d`` exploration actions ``(1-lam) A_w ± lam e_k``, ordered by ``k`` then sign."""
    d = warm_action.shape[0]
    base = (1.0 - lam) * warm_action
    rows = []
    for k in range(d):
        for s in (1.0, -1.0):
            a = base.copy()
            a[k] += s * lam
            rows.append(a)
    return np.array(rows)


def explore_then_commit(
    bandit: Bandit, warm_action: np.ndarray, cfg: EtcConfig, rng: np.random.Generator
) -> np.ndarray | None:
    """Explore around ``warm_action``, fit, then commit for the rest of the budget.

    Returns the committed action. If the exploration length reaches the
    remaining budget the warm action is played throughout instead.
    """
    d = bandit.dim
    warm_action = np.asarray(warm_action, dtype=float)
    warm_action = warm_action / np.linalg.norm(warm_action)
    remaining = bandit.remaining
    if remaining == 0:
        return None
    m = cfg.exploration_length(d)
    if m >= remaining:
        bandit.play(warm_action, remaining, phase="etc-warm")
        return warm_action
    design = etc_design(warm_action, cfg.lam)
    schedule = design[np.arange(m) % (2 * d)]
    x = bandit.play_block(schedule, phase="etc-explore")
    r = cfg.radius
    feasible = FeasibleSet(r, HalfSpace(warm_action, r * math.sqrt(cfg.alpha)))
    problem = EstimatorProblem(schedule, x, feasible)
    theta = constrained_least_squares(problem, cfg.solver, rng, init=r * warm_action)
    norm = float(np.linalg.norm(theta))
    if norm == 0.0:
        logger.warning("degenerate zero estimate; committing to the warm action")
        commit = warm_action
    else:
        commit = theta / norm
    bandit.play(commit, bandit.remaining, phase="etc-commit")
    return commit


def etc_run(
    env: Environment, warm_action: np.ndarray, cfg: EtcConfig, remaining_budget: int, rng: RngState
) -> PolicyOutcome:
    bandit = Bandit(env, remaining_budget, rng.child(0).generator())
    commit = explore_then_commit(bandit, warm_action, cfg, rng.child(1).generator())
    traj = bandit.trajectory
    traj.prediction = commit
    return PolicyOutcome(traj, commit, radius_used=cfg.radius)


# ---------------------------------------------------------------------------
# composition and baselines
# ---------------------------------------------------------------------------


def full_policy_run(
    env: Environment,
    n: int,
    warm_cfg: WarmStartConfig,
    etc_cfg: EtcConfig,
    rng: RngState,
    radius_budget: int | None = None,
    radius_delta: float = 0.05,
) -> PolicyOutcome:
    """Warm start followed by explore-then-commit on the leftover rounds.

    With ``radius_budget`` the radius is not taken from the configs but
    estimated first from that many uniform rounds (which count against
    ``n``).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    bandit = Bandit(env, n, rng.child(0).generator())
    policy_rng = rng.child(1).generator()
    warm_cfg = replace(warm_cfg, horizon=n)
    etc_cfg = replace(etc_cfg, horizon=n)
    if radius_budget:
        r_hat = estimate_radius(bandit, radius_budget, radius_delta, policy_rng, env.noise_sigma)
        warm_cfg = replace(warm_cfg, radius=r_hat)
        etc_cfg = replace(etc_cfg, radius=r_hat)
    res = warm_start(bandit, warm_cfg, policy_rng)
    success = res.completed and bandit.used < n and warm_success(env, res.action)
    warm = WarmOutput(res.action, res.rounds, success)
    commit = None
    if bandit.remaining > 0:
        commit = explore_then_commit(bandit, res.action, etc_cfg, policy_rng)
    traj = bandit.trajectory
    traj.warm_output = warm
    traj.prediction = commit if commit is not None else res.action
    return PolicyOutcome(traj, commit, warm, res.basis, warm_cfg.radius)


def uniform_pure_exploration_run(
    env: Environment,
    n: int,
    rng: RngState,
    mode: Literal["ls", "spectral"] = "ls",
    solver: SolverConfig = SolverConfig(restarts=2, max_iters=2000),
) -> PolicyOutcome:
    """Non-adaptive design: ``n`` i.i.d. uniform unit actions, then one estimate.

    The recommendation is the normalised least-squares fit over the unit ball
    (``mode="ls"``) or the top eigenvector of ``(1/n) sum X_t A_t A_t^T``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    bandit = Bandit(env, n, rng.child(0).generator())
    policy_rng = rng.child(1).generator()
    actions = sample_unit_sphere_batch(env.dim, n, policy_rng)
    x = bandit.play_block(actions, phase="uniform")
    problem = EstimatorProblem(actions, x, FeasibleSet(1.0))
    if mode == "spectral":
        theta = spectral_init(problem)
    elif mode == "ls":
        theta = constrained_least_squares(problem, solver, policy_rng)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    norm = float(np.linalg.norm(theta))
    if norm == 0.0:
        prediction = sample_unit_sphere(env.dim, policy_rng)
    else:
        prediction = theta / norm
    traj = bandit.trajectory
    traj.prediction = prediction
    return PolicyOutcome(traj)


def predict_from_trajectory(
    traj: Trajectory, mode: Literal["uniform_sample", "committed"], rng: np.random.Generator
) -> np.ndarray:
    """Recommendation drawn from a finished trajectory.

    ``uniform_sample`` returns one logged action chosen uniformly at random;
    ``committed`` returns the trajectory's recorded prediction when present.
    """
    n = len(traj)
    if n == 0:
        raise ValueError("cannot predict from an empty trajectory")
    if mode == "committed" and traj.prediction is not None:
        return traj.prediction
    if mode not in ("committed", "uniform_sample"):
        raise ValueError(f"unknown mode {mode!r}")
    i = int(rng.integers(n))
    for b in traj.blocks:
        if i < len(b):
            return np.array(b.actions[i])
        i -= len(b)
    raise AssertionError("unreachable")
