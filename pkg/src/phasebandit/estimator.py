"""Constrained least squares for squared-inner-product observations.

The loss ``L(theta) = 1/2 sum_t (X_t - <A_t, theta>^2)^2`` is a non-convex
quartic that is invariant under ``theta -> -theta``. It is minimised over a
ball, optionally intersected with a half-space ``<u, theta> >= b`` that pins
the sign, by projected gradient descent from several starting points.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .core import (
    BALL_TOL,
    Bandit,
    InvalidDimensionError,
    PhaseBanditError,
    sample_unit_sphere,
    sample_unit_sphere_batch,
)


class InvalidProblemError(PhaseBanditError, ValueError):
    pass


class UnsupportedDimensionError(PhaseBanditError, ValueError):
    pass


@dataclass(frozen=True)
class HalfSpace:
    """``{theta : <direction, theta> >= offset}`` with a unit ``direction``."""

    direction: np.ndarray
    offset: float

    def __post_init__(self) -> None:
        u = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(u)
        if norm == 0.0:
            raise ValueError("half-space direction must be non-zero")
        object.__setattr__(self, "direction", u / norm)


@dataclass(frozen=True)
class FeasibleSet:
    ball_radius: float = 1.0
    half_space: HalfSpace | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.ball_radius <= 1.0 + BALL_TOL:
            raise ValueError(f"ball_radius must lie in (0, 1], got {self.ball_radius}")
        if self.half_space is not None and self.half_space.offset > self.ball_radius:
            raise ValueError("half-space does not meet the ball")

    def contains(self, theta: np.ndarray, tol: float = 1e-9) -> bool:
        theta = np.asarray(theta, dtype=float)
        if np.linalg.norm(theta) > self.ball_radius + tol:
            return False
        hs = self.half_space
        return hs is None or float(hs.direction @ theta) >= hs.offset - tol


@dataclass
class EstimatorProblem:
    """Observed ``(action, reward)`` pairs plus the feasible set.

    Repeated actions are common (the policies replay a handful of directions
    thousands of times), so the loss is evaluated on per-action sufficient
    statistics: count, sum of rewards and sum of squared rewards.
    """

    actions: np.ndarray
    rewards: np.ndarray
    feasible: FeasibleSet = field(default_factory=FeasibleSet)

    def __post_init__(self) -> None:
        self.actions = np.atleast_2d(np.asarray(self.actions, dtype=float))
        self.rewards = np.asarray(self.rewards, dtype=float).reshape(-1)
        if self.rewards.size == 0:
            raise InvalidProblemError("estimator needs at least one datum")
        if self.actions.shape[0] != self.rewards.shape[0]:
            raise InvalidProblemError("actions and rewards have different lengths")
        if np.any(np.linalg.norm(self.actions, axis=1) > 1.0 + BALL_TOL):
            raise InvalidProblemError("actions must lie in the unit ball")
        uniq, inverse, counts = np.unique(self.actions, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        self._uniq = uniq
        self._counts = counts.astype(float)
        self._s1 = np.bincount(inverse, weights=self.rewards, minlength=len(uniq))
        self._s2 = np.bincount(inverse, weights=self.rewards**2, minlength=len(uniq))

    @property
    def dim(self) -> int:
        return self.actions.shape[1]

    @property
    def size(self) -> int:
        return self.rewards.shape[0]

    def with_feasible(self, feasible: FeasibleSet) -> "EstimatorProblem":
        return EstimatorProblem(self.actions, self.rewards, feasible)

    # sufficient-statistic form, used by the solver
    def _loss(self, theta: np.ndarray) -> float:
        q = (self._uniq @ theta) ** 2
        return 0.5 * float(np.sum(self._s2 - 2.0 * q * self._s1 + self._counts * q * q))

    def _grad(self, theta: np.ndarray) -> np.ndarray:
        p = self._uniq @ theta
        return -2.0 * ((self._s1 - self._counts * p * p) * p) @ self._uniq


def _check_theta(theta: np.ndarray, problem: EstimatorProblem) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (problem.dim,):
        raise InvalidDimensionError(f"theta has shape {theta.shape}, expected ({problem.dim},)")
    return theta


def quartic_loss(theta: np.ndarray, problem: EstimatorProblem) -> float:
    """``1/2 sum_t (X_t - <A_t, theta>^2)^2`` evaluated directly on the data."""
    theta = _check_theta(theta, problem)
    resid = problem.rewards - (problem.actions @ theta) ** 2
    return 0.5 * float(resid @ resid)


def quartic_loss_grad(theta: np.ndarray, problem: EstimatorProblem) -> np.ndarray:
    """Analytic gradient ``-2 sum_t (X_t - <A_t,theta>^2) <A_t,theta> A_t``."""
    theta = _check_theta(theta, problem)
    p = problem.actions @ theta
    return -2.0 * ((problem.rewards - p * p) * p) @ problem.actions


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------


def project_ball(theta: np.ndarray, radius: float) -> np.ndarray:
    norm = np.linalg.norm(theta)
    if norm <= radius:
        return theta
    return theta * (radius / norm)


def project_half_space(theta: np.ndarray, hs: HalfSpace) -> np.ndarray:
    gap = hs.offset - float(hs.direction @ theta)
    if gap <= 0.0:
        return theta
    return theta + gap * hs.direction


def project_feasible(theta: np.ndarray, feasible: FeasibleSet) -> np.ndarray:
    """Euclidean projection onto ``ball ∩ half-space``.

    When neither single projection lands in the intersection, both
    constraints are active and the answer is the nearest point of the circle
    ``{|x| = R, <u, x> = b}``, which has a closed form.
    """
    theta = np.asarray(theta, dtype=float)
    R = feasible.ball_radius
    hs = feasible.half_space
    if hs is None:
        return project_ball(theta, R)
    if feasible.contains(theta, tol=0.0):
        return theta.copy()
    on_ball = project_ball(theta, R)
    if float(hs.direction @ on_ball) >= hs.offset:
        return on_ball
    on_plane = project_half_space(theta, hs)
    if np.linalg.norm(on_plane) <= R:
        return on_plane
    u, b = hs.direction, hs.offset
    w = theta - float(u @ theta) * u
    wn = np.linalg.norm(w)
    if wn == 0.0:
        # every point of the circle is equidistant; take one orthogonal to u
        w = np.eye(len(u))[int(np.argmin(np.abs(u)))]
        w = w - float(u @ w) * u
        wn = np.linalg.norm(w)
    return b * u + math.sqrt(max(R * R - b * b, 0.0)) * (w / wn)


def dykstra_projection(
    theta: np.ndarray, feasible: FeasibleSet, max_alternations: int = 100, tol: float = 1e-12
) -> np.ndarray:
    """Projection onto ``ball ∩ half-space`` by Dykstra's alternating scheme.

    Slower and only approximately feasible; kept as an independent check on
    :func:`project_feasible`.
    """
    x = np.asarray(theta, dtype=float).copy()
    if feasible.half_space is None:
        return project_ball(x, feasible.ball_radius)
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(max_alternations):
        y = project_ball(x + p, feasible.ball_radius)
        p = x + p - y
        x_new = project_half_space(y + q, feasible.half_space)
        q = y + q - x_new
        moved = np.linalg.norm(x_new - x)
        x = x_new
        if moved < tol:
            break
    return x


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------


def _power_iteration(M: np.ndarray, steps: int = 200, rtol: float = 1e-10) -> np.ndarray:
    d = M.shape[0]
    # shift by an upper bound on the spectral radius so the iteration finds the
    # algebraically largest eigenvalue even when M is indefinite
    shift = float(np.linalg.norm(M))
    S = M + shift * np.eye(d)
    x = np.ones(d) / math.sqrt(d)
    x[int(np.argmax(np.diag(M)))] += 1.0
    x /= np.linalg.norm(x)
    for _ in range(steps):
        y = S @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return x
        y /= ny
        if np.linalg.norm(y - x) < rtol:
            return y
        x = y
    return x


def spectral_init(problem: EstimatorProblem) -> np.ndarray:
    """Leading eigenvector of ``(1/n) sum_t X_t A_t A_t^T`` scaled to ``sqrt(d * mean X)``.

    Returns the zero vector when that matrix vanishes. If a half-space is
    present the sign is chosen to face it.
    """
    n = problem.size
    M = (problem._uniq.T * (problem._s1 / n)) @ problem._uniq
    if not np.any(M):
        return np.zeros(problem.dim)
    v = _power_iteration(M)
    scale = math.sqrt(max(0.0, problem.dim * float(np.mean(problem.rewards))))
    scale = min(scale, problem.feasible.ball_radius)
    hs = problem.feasible.half_space
    if hs is not None and float(hs.direction @ v) < 0.0:
        v = -v
    return scale * v


def _random_feasible(feasible: FeasibleSet, dim: int, rng: np.random.Generator) -> np.ndarray:
    radius = feasible.ball_radius * rng.random() ** (1.0 / dim)
    return project_feasible(radius * sample_unit_sphere(dim, rng), feasible)


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 5000
    step_size: float = 0.1
    grad_tolerance: float = 1e-8
    restarts: int = 5
    init_mode: Literal["spectral", "warm", "random"] = "spectral"
    max_halvings: int = 40

    def __post_init__(self) -> None:
        if self.max_iters < 1 or self.step_size <= 0 or self.restarts < 1:
            raise ValueError(f"invalid solver config {self}")
        if self.init_mode not in ("spectral", "warm", "random"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")


@dataclass
class SolveResult:
    theta: np.ndarray
    loss: float
    iterations: int
    converged: bool


def projected_gradient(
    problem: EstimatorProblem, init: np.ndarray, config: SolverConfig = SolverConfig()
) -> SolveResult:
    """Monotone projected gradient descent on the per-sample loss.

    Each trial step is halved until the loss does not increase (at most
    ``max_halvings`` times); after an accepted step the trial step doubles.
    Stops when the projected-gradient norm drops below ``grad_tolerance``.
    """
    feasible = problem.feasible
    scale = 1.0 / problem.size
    x = project_feasible(np.asarray(init, dtype=float), feasible)
    fx = problem._loss(x) * scale
    g = problem._grad(x) * scale
    step = config.step_size
    for it in range(1, config.max_iters + 1):
        for _ in range(config.max_halvings + 1):
            y = project_feasible(x - step * g, feasible)
            fy = problem._loss(y) * scale
            if fy <= fx:
                break
            step *= 0.5
        else:
            return SolveResult(x, fx / scale, it, False)
        pg = np.linalg.norm(y - x) / step
        x, fx = y, fy
        if pg < config.grad_tolerance:
            return SolveResult(x, fx / scale, it, True)
        g = problem._grad(x) * scale
        step = min(step * 2.0, 1e8)
    return SolveResult(x, fx / scale, config.max_iters, False)


def initial_points(
    problem: EstimatorProblem,
    config: SolverConfig,
    rng: np.random.Generator,
    init: np.ndarray | None = None,
) -> list[np.ndarray]:
    """Starting points, in order: warm vector (if used), spectral, then random."""
    points: list[np.ndarray] = []
    if config.init_mode == "warm" and init is not None:
        points.append(np.asarray(init, dtype=float))
    if config.init_mode in ("spectral", "warm"):
        s = spectral_init(problem)
        if np.any(s):
            points.append(s)
    while len(points) < config.restarts:
        points.append(_random_feasible(problem.feasible, problem.dim, rng))
    return [project_feasible(p, problem.feasible) for p in points[: config.restarts]]


def constrained_least_squares(
    problem: EstimatorProblem,
    config: SolverConfig = SolverConfig(),
    rng: np.random.Generator | None = None,
    init: np.ndarray | None = None,
) -> np.ndarray:
    """Best feasible minimiser of the quartic loss found over all restarts."""
    if rng is None:
        rng = np.random.default_rng(0)
    best: SolveResult | None = None
    for x0 in initial_points(problem, config, rng, init):
        res = projected_gradient(problem, x0, config)
        if best is None or res.loss < best.loss:
            best = res
    assert best is not None
    return best.theta


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------


def _monomials(dim: int, degree: int) -> list[tuple[int, ...]]:
    return [e for e in itertools.product(range(degree + 1), repeat=dim) if sum(e) == degree]


def _loss_polynomial(problem: EstimatorProblem) -> tuple[float, list, list]:
    """Coefficients of ``L(theta) = c0 - sum X <a,theta>^2 + 1/2 sum <a,theta>^4``."""
    A, X = problem.actions, problem.rewards
    c0 = 0.5 * float(X @ X)
    quad = []
    for e in _monomials(problem.dim, 2):
        coef = math.factorial(2) / math.prod(math.factorial(k) for k in e)
        quad.append((e, -coef * float(np.sum(X * np.prod(A**np.array(e), axis=1)))))
    quart = []
    for e in _monomials(problem.dim, 4):
        coef = math.factorial(4) / math.prod(math.factorial(k) for k in e)
        quart.append((e, 0.5 * coef * float(np.sum(np.prod(A**np.array(e), axis=1)))))
    return c0, quad, quart


def brute_force_ls_oracle(problem: EstimatorProblem, grid_points_per_axis: int = 2001) -> np.ndarray:
    """Grid argmin of the loss over the feasible set (``d <= 3`` only).

    The grid spans ``[-R, R]^d`` and the loss is evaluated from its expanded
    polynomial form, so this shares no code with the gradient solver.
    """
    d = problem.dim
    if d > 3:
        raise UnsupportedDimensionError(f"grid oracle supports d <= 3, got {d}")
    if grid_points_per_axis < 11:
        raise ValueError("grid_points_per_axis must be at least 11")
    R = problem.feasible.ball_radius
    hs = problem.feasible.half_space
    axis = np.linspace(-R, R, grid_points_per_axis)
    c0, quad, quart = _loss_polynomial(problem)
    best_val, best_pt = math.inf, None
    # chunk along the first axis to bound memory
    for i0 in range(0, grid_points_per_axis, 64):
        first = axis[i0 : i0 + 64]
        mesh = np.meshgrid(first, *([axis] * (d - 1)), indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        ok = np.sum(pts**2, axis=1) <= R * R * (1 + 1e-12)
        if hs is not None:
            ok &= pts @ hs.direction >= hs.offset
        pts = pts[ok]
        if len(pts) == 0:
            continue
        val = np.full(len(pts), c0)
        for e, c in quad + quart:
            val += c * np.prod(pts ** np.array(e), axis=1)
        j = int(np.argmin(val))
        if val[j] < best_val:
            best_val, best_pt = float(val[j]), pts[j].copy()
    if best_pt is None:
        raise InvalidProblemError("no grid point lies in the feasible set")
    return best_pt


# ---------------------------------------------------------------------------
# radius estimation
# ---------------------------------------------------------------------------


def estimate_radius_squared(bandit: Bandit, budget: int, rng: np.random.Generator) -> float:
    """Estimate ``|theta|^2`` as ``d * mean reward`` over uniform sphere actions.

    The rounds are played through ``bandit``, so they count against its
    horizon and show up in its trajectory (phase ``"radius"``).
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    actions = sample_unit_sphere_batch(bandit.dim, budget, rng)
    x = bandit.play_block(actions, phase="radius")
    if x.size == 0:
        return 0.0
    return float(np.clip(bandit.dim * np.mean(x), 0.0, 1.0))


def radius_squared_lower_bound(
    estimate: float, dim: int, budget: int, delta: float, noise_sigma: float = 1.0
) -> float:
    """One-sided ``1 - delta`` lower confidence bound on ``|theta|^2``.

    Uses the Gaussian tail with per-sample variance
    ``sigma^2 + 2(d-1)/(d^3+2d^2)`` (the worst case ``r = 1``).
    """
    var = noise_sigma**2 + 2.0 * (dim - 1) / (dim**3 + 2 * dim**2)
    width = dim * math.sqrt(2.0 * var * math.log(1.0 / delta) / budget)
    return max(0.0, estimate - width)


def estimate_radius(
    bandit: Bandit, budget: int, delta: float, rng: np.random.Generator, noise_sigma: float = 1.0
) -> float:
    """Conservative radius for the policies: ``sqrt`` of the lower confidence bound.

    Falls back to half the point estimate when the bound is vacuous, and
    never returns zero so the callers' constants stay finite.
    """
    r2 = estimate_radius_squared(bandit, budget, rng)
    lo = radius_squared_lower_bound(r2, bandit.dim, budget, delta, noise_sigma)
    r = math.sqrt(lo) if lo > 0 else 0.5 * math.sqrt(r2)
    return min(1.0, max(r, 1e-3))
