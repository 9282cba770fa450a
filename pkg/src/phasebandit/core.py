"""Environment, action geometry, sampling primitives and regret accounting.

Rewards follow ``X = <A, theta>^2 + sigma * Z`` with ``A`` in the closed unit
ball and ``theta`` on the sphere of radius ``r``. Policies never see the
:class:`Environment` directly; they interact through a :class:`Bandit`, which
enforces the horizon and logs every round into a :class:`Trajectory`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

BALL_TOL = 1e-12
ORTHO_TOL = 1e-9


class PhaseBanditError(Exception):
    """Base class for errors raised by this package."""


class InvalidDimensionError(PhaseBanditError, ValueError):
    pass


class EmptyComplementError(PhaseBanditError, ValueError):
    pass


class InvalidBasisError(PhaseBanditError, ValueError):
    pass


class ActionOutsideBallError(PhaseBanditError, ValueError):
    """Raised when an action with norm above ``1 + BALL_TOL`` is submitted."""


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RngState:
    """Seed plus stream id; each distinct pair gives an independent generator.

    Child streams are derived deterministically, so the draws seen by one run
    never depend on how many other runs were executed or in which order.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed & (2**64 - 1), spawn_key=(self.stream & (2**64 - 1),))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys: int) -> "RngState":
        words = [self.stream & (2**64 - 1)] + [int(k) & (2**64 - 1) for k in keys]
        (stream,) = np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)
        return RngState(self.seed, int(stream))


# ---------------------------------------------------------------------------
# actions and sampling
# ---------------------------------------------------------------------------


def check_action(action: np.ndarray, dim: int | None = None) -> np.ndarray:
    """Return ``action`` as a float vector, raising if it leaves the unit ball."""
    a = np.asarray(action, dtype=float)
    if a.ndim != 1:
        raise InvalidDimensionError(f"action must be a vector, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise InvalidDimensionError(f"action has dimension {a.shape[0]}, expected {dim}")
    norm = float(np.linalg.norm(a))
    if not norm <= 1.0 + BALL_TOL:
        raise ActionOutsideBallError(f"action norm {norm!r} exceeds 1")
    return a


def sample_unit_sphere(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the unit sphere in ``R^dim`` (normalized Gaussian)."""
    if dim < 1:
        raise InvalidDimensionError(f"dim must be >= 1, got {dim}")
    while True:
        g = rng.standard_normal(dim)
        norm = np.linalg.norm(g)
        if norm > 0.0:
            return g / norm


def sample_unit_sphere_batch(dim: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` independent uniform unit vectors as rows of a ``(size, dim)`` array."""
    if dim < 1:
        raise InvalidDimensionError(f"dim must be >= 1, got {dim}")
    g = rng.standard_normal((size, dim))
    norms = np.linalg.norm(g, axis=1)
    # a zero Gaussian vector has probability zero; redraw defensively anyway
    while np.any(norms == 0.0):
        bad = norms == 0.0
        g[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(g, axis=1)
    return g / norms[:, None]


def _orthonormal(basis: Sequence[np.ndarray], dim: int) -> np.ndarray:
    if len(basis) == 0:
        return np.zeros((0, dim))
    B = np.array([np.asarray(b, dtype=float) for b in basis])
    if B.shape[1] != dim:
        raise InvalidDimensionError(f"basis vectors have dimension {B.shape[1]}, expected {dim}")
    norms = np.linalg.norm(B, axis=1)
    if np.any(norms == 0.0):
        raise InvalidBasisError("basis contains a zero vector")
    Q = B / norms[:, None]
    gram = Q @ Q.T
    off = gram - np.diag(np.diag(gram))
    if np.max(np.abs(off), initial=0.0) >= ORTHO_TOL:
        raise InvalidBasisError("basis vectors are not mutually orthogonal")
    return Q


def sample_sphere_orthogonal(
    dim: int, basis: Sequence[np.ndarray], rng: np.random.Generator
) -> np.ndarray:
    """Uniform unit vector in the orthogonal complement of ``span(basis)``.

    The basis must be mutually orthogonal (it need not be normalized).
    """
    if dim < 1:
        raise InvalidDimensionError(f"dim must be >= 1, got {dim}")
    if len(basis) >= dim:
        raise EmptyComplementError(f"{len(basis)} basis vectors leave no complement in R^{dim}")
    Q = _orthonormal(basis, dim)
    while True:
        g = rng.standard_normal(dim)
        # two passes of Gram-Schmidt keep the residual overlap at round-off level
        g = g - Q.T @ (Q @ g)
        g = g - Q.T @ (Q @ g)
        norm = np.linalg.norm(g)
        if norm > 1e-12:
            return g / norm


# ---------------------------------------------------------------------------
# environment
# ---------------------------------------------------------------------------


@dataclass
class Environment:
    """Hidden parameter plus Gaussian noise level.

    ``calls`` counts every reward the environment has produced; harness audits
    compare it against the horizon.
    """

    theta_star: np.ndarray
    noise_sigma: float = 1.0
    calls: int = 0

    def __post_init__(self) -> None:
        self.theta_star = np.asarray(self.theta_star, dtype=float)
        if self.theta_star.ndim != 1 or self.theta_star.shape[0] < 1:
            raise InvalidDimensionError("theta_star must be a non-empty vector")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.r > 1.0 + BALL_TOL:
            raise ValueError(f"|theta_star| = {self.r} exceeds 1")

    @property
    def dim(self) -> int:
        return self.theta_star.shape[0]

    @property
    def r(self) -> float:
        return float(np.linalg.norm(self.theta_star))

    @classmethod
    def on_sphere(cls, dim: int, r: float, rng: np.random.Generator, noise_sigma: float = 1.0) -> "Environment":
        """Draw ``theta_star`` uniformly from the sphere of radius ``r``."""
        return cls(r * sample_unit_sphere(dim, rng), noise_sigma)

    @classmethod
    def fixed(cls, dim: int, r: float, noise_sigma: float = 1.0) -> "Environment":
        """``theta_star = r * e_1``; handy for debugging."""
        theta = np.zeros(dim)
        theta[0] = r
        return cls(theta, noise_sigma)

    def mean_reward(self, actions: np.ndarray) -> np.ndarray | float:
        return (np.asarray(actions, dtype=float) @ self.theta_star) ** 2

    def pull(self, actions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Noisy rewards for a ``(k, d)`` block of actions, one per row."""
        A = np.asarray(actions, dtype=float)
        if A.ndim != 2 or A.shape[1] != self.dim:
            raise InvalidDimensionError(f"expected a (k, {self.dim}) action block, got {A.shape}")
        norms = np.linalg.norm(A, axis=1)
        if np.any(~(norms <= 1.0 + BALL_TOL)):
            raise ActionOutsideBallError(f"action norm {float(norms.max())!r} exceeds 1")
        self.calls += A.shape[0]
        mean = (A @ self.theta_star) ** 2
        if self.noise_sigma == 0.0:
            return mean
        return mean + self.noise_sigma * rng.standard_normal(A.shape[0])


def reward(env: Environment, action: np.ndarray, rng: np.random.Generator) -> float:
    """One noisy reward ``<action, theta>^2 + sigma * Z``."""
    a = check_action(action, env.dim)
    return float(env.pull(a[None, :], rng)[0])


def instant_regret(env: Environment, action: np.ndarray) -> float:
    a = check_action(action, env.dim)
    return env.r ** 2 - float(a @ env.theta_star) ** 2


def simple_regret(env: Environment, prediction: np.ndarray) -> float:
    """Regret of a final recommendation; identical to :func:`instant_regret`."""
    return instant_regret(env, prediction)


# ---------------------------------------------------------------------------
# trajectories and the policy-facing bandit
# ---------------------------------------------------------------------------


class Step(NamedTuple):
    t: int
    action: np.ndarray
    reward: float
    phase: str


@dataclass
class Block:
    start: int  # 1-based round index of the first row
    actions: np.ndarray  # (k, d), possibly a read-only broadcast view
    rewards: np.ndarray  # (k,)
    phase: str

    def __len__(self) -> int:
        return self.rewards.shape[0]


@dataclass
class WarmOutput:
    action: np.ndarray
    rounds: int
    success: bool


@dataclass
class Trajectory:
    """Ordered log of played rounds, stored as contiguous blocks."""

    dim: int
    blocks: list[Block] = field(default_factory=list)
    prediction: np.ndarray | None = None
    warm_output: WarmOutput | None = None

    def __len__(self) -> int:
        return sum(len(b) for b in self.blocks)

    def append(self, actions: np.ndarray, rewards: np.ndarray, phase: str) -> None:
        if len(rewards) == 0:
            return
        self.blocks.append(Block(len(self) + 1, actions, np.asarray(rewards, dtype=float), phase))

    def steps(self) -> Iterator[Step]:
        for b in self.blocks:
            for i in range(len(b)):
                yield Step(b.start + i, b.actions[i], float(b.rewards[i]), b.phase)

    @property
    def actions(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros((0, self.dim))
        return np.concatenate([b.actions for b in self.blocks])

    @property
    def rewards(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0)
        return np.concatenate([b.rewards for b in self.blocks])

    @property
    def phases(self) -> list[str]:
        return [b.phase for b in self.blocks for _ in range(len(b))]

    def rounds_in_phase(self, prefix: str) -> int:
        return sum(len(b) for b in self.blocks if b.phase.startswith(prefix))


def cumulative_regret(env: Environment, traj: Trajectory) -> float:
    """Sum of instantaneous regrets over every logged round."""
    total = 0.0
    r2 = env.r ** 2
    for b in traj.blocks:
        norms = np.linalg.norm(b.actions, axis=1)
        if np.any(~(norms <= 1.0 + BALL_TOL)):
            raise ActionOutsideBallError("trajectory contains an action outside the unit ball")
        total += float(np.sum(r2 - (b.actions @ env.theta_star) ** 2))
    return total


class Bandit:
    """What a policy gets to see: dimension, horizon and a reward oracle.

    Every call to :meth:`play` is truncated to the remaining budget and the
    rounds are appended to :attr:`trajectory`.
    """

    def __init__(self, env: Environment, horizon: int, rng: np.random.Generator):
        if horizon < 0:
            raise ValueError("horizon must be non-negative")
        self._env = env
        self._rng = rng
        self.horizon = int(horizon)
        self.trajectory = Trajectory(env.dim)
        self.used = 0

    @property
    def dim(self) -> int:
        return self._env.dim

    @property
    def remaining(self) -> int:
        return self.horizon - self.used

    def play(self, action: np.ndarray, times: int = 1, phase: str = "") -> np.ndarray:
        """Play one action ``times`` times (fewer if the budget runs out)."""
        a = check_action(action, self.dim)
        k = max(0, min(int(times), self.remaining))
        return self.play_block(np.broadcast_to(a, (k, self.dim)), phase)

    def play_block(self, actions: np.ndarray, phase: str = "") -> np.ndarray:
        """Play the rows of ``actions`` in order, truncated to the budget."""
        A = np.asarray(actions, dtype=float)[: self.remaining]
        if A.shape[0] == 0:
            return np.zeros(0)
        rewards = self._env.pull(A, self._rng)
        self.used += A.shape[0]
        self.trajectory.append(A, rewards, phase)
        return rewards

