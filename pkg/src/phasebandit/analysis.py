"""Closed-form quantities for the uniform prior and Monte Carlo checks of them.

Everything here is either an exact formula or an explicit-rng simulation that
estimates the same quantity, so the two can be compared in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .core import InvalidDimensionError, PhaseBanditError, sample_unit_sphere_batch


class DegenerateRatioError(PhaseBanditError, ValueError):
    pass


class InfeasibleRadiusError(PhaseBanditError, ValueError):
    pass


def _check_dim(d: int) -> None:
    if d < 1:
        raise InvalidDimensionError(f"d must be >= 1, got {d}")


# ---------------------------------------------------------------------------
# sphere moments and the information picture
# ---------------------------------------------------------------------------


def sphere_moment2(d: int, r: float) -> float:
    """``E<A, theta>^2 = r^2 / d`` for ``A`` uniform on the unit sphere."""
    _check_dim(d)
    return r * r / d


def sphere_moment4(d: int, r: float) -> float:
    """``E<A, theta>^4 = 3 r^4 / (d^2 + 2d)``."""
    _check_dim(d)
    return 3.0 * r**4 / (d * d + 2 * d)


def reward_variance(d: int, r: float, sigma: float = 1.0) -> float:
    """Variance of ``X = <A,theta>^2 + sigma Z`` under a uniform action."""
    return sigma * sigma + sphere_moment4(d, r) - sphere_moment2(d, r) ** 2


def information_gain_bound(d: int, r: float) -> float:
    _check_dim(d)
    return r**4 / (d * d)


def information_gain_approx(d: int, r: float) -> float:
    """Second-order approximation of the per-round mutual information.

    Half the variance of the conditional mean reward,
    ``(r^4/2)(3/(d^2+2d) - 1/d^2)``; never exceeds ``r^4/d^2``.
    """
    _check_dim(d)
    value = 0.5 * r**4 * (3.0 / (d * d + 2 * d) - 1.0 / (d * d))
    assert value <= information_gain_bound(d, r)
    return value


def expected_gap(action_norm: float, d: int, r: float) -> float:
    """Prior-averaged regret ``r^2 (1 - |a|^2 / d)`` of a fixed action."""
    _check_dim(d)
    if not 0.0 <= action_norm <= 1.0 + 1e-12:
        raise ValueError(f"action_norm must lie in [0, 1], got {action_norm}")
    return r * r * (1.0 - action_norm**2 / d)


def information_ratio(d: int, r: float) -> float:
    """Squared gap over information gain for a unit action; equals ``(d-1)(d+2)``."""
    if d < 2:
        raise DegenerateRatioError("the gap vanishes for d = 1")
    if r <= 0:
        raise DegenerateRatioError("the information gain vanishes for r = 0")
    return expected_gap(1.0, d, r) ** 2 / information_gain_approx(d, r)


# ---------------------------------------------------------------------------
# concentration
# ---------------------------------------------------------------------------


def beta_bound(k: int, n: int, delta: float = 1.0, expectation: bool = False) -> float:
    """High-probability (or in-expectation) bound on the concentration statistic.

    ``9(log(1/delta) + k log(98 n))``, or ``9(1 + k log(98 n))`` for the
    expectation. ``k`` is the dimension of the span of the design.
    """
    if k < 1 or n < 1:
        raise ValueError("k and n must be positive")
    if expectation:
        return 9.0 * (1.0 + k * math.log(98.0 * n))
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    return 9.0 * (math.log(1.0 / delta) + k * math.log(98.0 * n))


def warm_start_beta(n: int) -> float:
    """``9(log 98 + 4 log n)``: the k=1, delta=n^-3 case of :func:`beta_bound`."""
    return 9.0 * (math.log(98.0) + 4.0 * math.log(n))


def concentration_statistic(
    actions: np.ndarray, theta_hat: np.ndarray, theta_star: np.ndarray
) -> float:
    """``sum_t <A_t, theta_hat - theta*>^2 <A_t, theta_hat + theta*>^2``."""
    A = np.atleast_2d(np.asarray(actions, dtype=float))
    th = np.asarray(theta_hat, dtype=float)
    ts = np.asarray(theta_star, dtype=float)
    if A.shape[1] != th.shape[0] or th.shape != ts.shape:
        raise InvalidDimensionError("dimension mismatch")
    return float(np.sum((A @ (th - ts)) ** 2 * (A @ (th + ts)) ** 2))


# ---------------------------------------------------------------------------
# lower-bound radii
# ---------------------------------------------------------------------------


def lower_bound_radius(d: int, n: int, kind: Literal["cumulative", "simple"]) -> float:
    """Radius of the hard prior used in the lower-bound constructions.

    cumulative: ``r^2 = sqrt((d^2 + 2d) / (96 e n))``
    simple:     ``r^2 = sqrt(d^3 / (32 n))``
    """
    _check_dim(d)
    if n < 1:
        raise ValueError("n must be positive")
    if kind == "cumulative":
        r2 = math.sqrt((d * d + 2 * d) / (96.0 * math.e * n))
    elif kind == "simple":
        r2 = math.sqrt(d**3 / (32.0 * n))
    else:
        raise ValueError(f"unknown kind {kind!r}")
    r = math.sqrt(r2)
    if not 0.0 < r <= 1.0:
        raise InfeasibleRadiusError(f"r = {r:.4g} is outside (0, 1] for d={d}, n={n}")
    return r


# ---------------------------------------------------------------------------
# scaling fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    residual_rms: float
    points: tuple[tuple[float, float], ...]

    def predict(self, x: float) -> float:
        return math.exp(self.intercept) * x**self.slope


def fit_scaling_exponent(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Ordinary least squares of ``log y`` on ``log x``."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 2:
        raise ValueError("need at least two points")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("scaling fit needs strictly positive x and y")
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    if np.ptp(lx) == 0.0:
        raise ValueError("x values must not all coincide")
    X = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(X, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    return ScalingFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))), tuple(pts))


# ---------------------------------------------------------------------------
# Monte Carlo checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    se: float

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.se


def _mc(samples: np.ndarray) -> MonteCarloEstimate:
    return MonteCarloEstimate(float(np.mean(samples)), float(np.std(samples, ddof=1) / math.sqrt(len(samples))))


def monte_carlo_moments(
    d: int, r: float, samples: int, rng: np.random.Generator, sigma: float = 1.0, chunk: int = 200_000
) -> dict[str, MonteCarloEstimate]:
    """Monte Carlo estimates of ``E<A,theta>^2``, ``E<A,theta>^4`` and ``Var X``.

    ``theta = r e_1`` suffices by rotation invariance. The variance SE uses the
    fourth central moment of ``X``.
    """
    m2, m4, xs = [], [], []
    left = samples
    while left > 0:
        k = min(chunk, left)
        A = sample_unit_sphere_batch(d, k, rng)
        p2 = (r * A[:, 0]) ** 2
        m2.append(p2)
        m4.append(p2 * p2)
        xs.append(p2 + sigma * rng.standard_normal(k))
        left -= k
    p2, p4, x = np.concatenate(m2), np.concatenate(m4), np.concatenate(xs)
    centred = (x - x.mean()) ** 2
    var = MonteCarloEstimate(float(np.mean(centred) * len(x) / (len(x) - 1)), float(np.std(centred, ddof=1) / math.sqrt(len(x))))
    return {"moment2": _mc(p2), "moment4": _mc(p4), "variance": var}


def curvature_gap(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Row-wise ``(2/|theta|) |theta - phi|^2 - <theta/|theta| - phi/|phi|, theta>``.

    Non-negative whenever the curvature inequality holds.
    """
    theta = np.atleast_2d(theta)
    phi = np.atleast_2d(phi)
    nt = np.linalg.norm(theta, axis=1)
    nf = np.linalg.norm(phi, axis=1)
    lhs = np.sum((theta / nt[:, None] - phi / nf[:, None]) * theta, axis=1)
    rhs = 2.0 / nt * np.sum((theta - phi) ** 2, axis=1)
    return rhs - lhs


def curvature_violations(pairs: int, d: int, rng: np.random.Generator, tol: float = 1e-12) -> int:
    """Count random non-zero ball pairs that break the curvature inequality."""
    theta = sample_unit_sphere_batch(d, pairs, rng) * rng.random(pairs)[:, None] ** (1.0 / d)
    phi = sample_unit_sphere_batch(d, pairs, rng) * rng.random(pairs)[:, None] ** (1.0 / d)
    keep = (np.linalg.norm(theta, axis=1) > 0) & (np.linalg.norm(phi, axis=1) > 0)
    gap = curvature_gap(theta[keep], phi[keep])
    return int(np.sum(gap < -tol * (1.0 + np.abs(gap))))


def gaussian_tail_violation_rate(
    weights: np.ndarray, delta: float, replications: int, rng: np.random.Generator, sharp: bool = False
) -> float:
    """Frequency with which the weighted Gaussian average exceeds its tail bound.

    The default threshold is ``sqrt(2 sum a^2 log(2/delta) / n)`` on
    ``|(1/n) sum a_t X_t|``; ``sharp=True`` uses the tighter
    ``sqrt(2 sum a^2 log(2/delta)) / n``.
    """
    a = np.asarray(weights, dtype=float)
    n = a.shape[0]
    stat = np.abs(rng.standard_normal((replications, n)) @ a) / n
    s2 = float(a @ a)
    if sharp:
        threshold = math.sqrt(2.0 * s2 * math.log(2.0 / delta)) / n
    else:
        threshold = math.sqrt(2.0 * s2 * math.log(2.0 / delta) / n)
    return float(np.mean(stat >= threshold))


def sphere_projection_probability_check(d: int, m: int, trials: int, rng: np.random.Generator) -> float:
    """Empirical ``P(<X, phi>^2 >= |phi|^2 / m)`` for ``X`` uniform on a unit m-sphere.

    A random ``m``-dimensional subspace ``V`` of ``R^d`` and a random
    ``phi in V`` are drawn once; ``X`` is uniform on ``S^{d-1} ∩ V``.
    """
    if not 1 <= m <= d:
        raise ValueError(f"need 1 <= m <= d, got m={m}, d={d}")
    Q, _ = np.linalg.qr(rng.standard_normal((d, m)))
    phi = Q @ rng.standard_normal(m)
    X = sample_unit_sphere_batch(m, trials, rng) @ Q.T
    lhs = (X @ phi) ** 2
    # relative slack so the m = 1 equality case is not lost to round-off
    return float(np.mean(lhs >= (phi @ phi) / m * (1.0 - 1e-12)))
