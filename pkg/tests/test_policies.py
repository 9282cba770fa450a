import math

import numpy as np
import pytest

from phasebandit.analysis import lower_bound_radius
from phasebandit.core import Bandit, Environment, RngState, Trajectory, cumulative_regret, simple_regret
from phasebandit.policies import (
    EtcConfig,
    WarmStartConfig,
    etc_design,
    etc_run,
    explore_then_commit,
    full_policy_run,
    predict_from_trajectory,
    uniform_pure_exploration_run,
    warm_only_run,
    warm_start,
    warm_start_run,
)


def basis_invariants(basis, tau2):
    units = np.array([w / np.linalg.norm(w) for w in basis])
    gram = units @ units.T
    off = gram - np.eye(len(basis))
    assert np.max(np.abs(off)) < 1e-9
    for w in basis:
        assert float(w @ w) >= tau2 * (1 - 1e-12)


class TestConfigs:
    def test_episode_lengths(self):
        cfg = WarmStartConfig(horizon=1000, radius=1.0)
        assert cfg.first_episode_length(2) == math.ceil(8 * 4 * math.log(2 * 1000**2))
        assert cfg.beta == pytest.approx(9 * (math.log(98) + 4 * math.log(1000)))
        assert cfg.episode_length(3, 2) == math.ceil(64 * 9 * cfg.beta / 2)

    def test_scale_shrinks_lengths(self):
        a = WarmStartConfig(horizon=10**5, radius=1.0)
        b = WarmStartConfig(horizon=10**5, radius=1.0, constant_scale=0.05)
        assert b.first_episode_length(5) < a.first_episode_length(5)

    def test_etc_defaults(self):
        cfg = EtcConfig(horizon=4096, radius=0.5)
        assert cfg.lam == pytest.approx(1 / 32)
        assert cfg.exploration_length(5) == math.ceil(4 * 5 * math.sqrt(4096 * math.log(4096)) / 0.25)
        assert EtcConfig(horizon=10, radius=1.0, alpha=1.0).lam == 0.25
        assert EtcConfig(horizon=10, radius=1.0, mix_weight=0.4).lam == 0.4

    @pytest.mark.parametrize(
        "kwargs",
        [dict(horizon=0, radius=1.0), dict(horizon=5, radius=0.0), dict(horizon=5, radius=1.0, constant_scale=0.0)],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            WarmStartConfig(**kwargs)
        with pytest.raises(ValueError):
            EtcConfig(**kwargs)


class TestWarmStart:
    def test_one_dimensional(self):
        env = Environment(np.array([1.0]), 0.0)
        out = warm_start_run(env, WarmStartConfig(horizon=100, radius=1.0), RngState(0))
        assert out.warm.success
        assert float(out.warm.action @ env.theta_star) ** 2 == pytest.approx(1.0)
        assert len(out.basis) == 1
        assert out.warm.rounds == WarmStartConfig(horizon=100, radius=1.0).first_episode_length(1)

    @pytest.mark.parametrize("seed", range(6))
    def test_basis_invariants_all_phases(self, seed):
        env = Environment.on_sphere(6, 1.0, RngState(seed).generator())
        cfg = WarmStartConfig(horizon=200_000, radius=1.0, constant_scale=0.005, check_stop_first=False)
        b = Bandit(env, cfg.horizon, RngState(seed, 1).generator())
        res = warm_start(b, cfg, RngState(seed, 2).generator())
        assert len(res.basis) >= 2
        basis_invariants(res.basis, 1.0 / 6)
        assert abs(np.linalg.norm(res.action) - 1.0) < 1e-12
        assert res.rounds == b.used

    def test_success_rate_small(self):
        ok = 0
        for s in range(20):
            env = Environment.on_sphere(5, 1.0, RngState(s).generator())
            out = warm_start_run(env, WarmStartConfig(horizon=10**5, radius=1.0, constant_scale=0.05), RngState(s, 1))
            basis_invariants(out.basis, 1.0 / 5)
            ok += out.warm.success
        assert ok >= 18

    def test_budget_exhaustion(self):
        env = Environment.on_sphere(8, 0.3, RngState(3).generator())
        cfg = WarmStartConfig(horizon=500, radius=0.3)
        out = warm_start_run(env, cfg, RngState(4))
        assert not out.warm.success
        assert out.warm.rounds == 500 == len(out.trajectory)
        assert abs(np.linalg.norm(out.warm.action) - 1.0) < 1e-12

    def test_deterministic(self):
        env = Environment.on_sphere(4, 1.0, RngState(8).generator())
        cfg = WarmStartConfig(horizon=50_000, radius=1.0, constant_scale=0.05, check_stop_first=False)
        a = warm_start_run(env, cfg, RngState(1))
        b = warm_start_run(env, cfg, RngState(1))
        np.testing.assert_array_equal(a.warm.action, b.warm.action)
        np.testing.assert_array_equal(a.trajectory.rewards, b.trajectory.rewards)


class TestEtc:
    @pytest.mark.parametrize("lam", [0.01, 0.25, 0.5])
    def test_design_in_ball(self, lam):
        rng = np.random.default_rng(0)
        for d in (1, 2, 7):
            w = rng.standard_normal(d)
            D = etc_design(w / np.linalg.norm(w), lam)
            assert D.shape == (2 * d, d)
            assert np.all(np.linalg.norm(D, axis=1) <= 1 + 1e-12)

    def test_noiseless_recovery(self):
        theta = np.array([0.6, 0.8])
        env = Environment(theta, 0.0)
        cfg = EtcConfig(horizon=10_000, radius=1.0, constant_scale=0.01)
        out = etc_run(env, theta, cfg, 10_000, RngState(0))
        np.testing.assert_allclose(out.committed_action, theta, atol=1e-3)
        assert out.trajectory.rounds_in_phase("etc-explore") == cfg.exploration_length(2)
        assert len(out.trajectory) == 10_000

    def test_degenerate_branch(self):
        env = Environment.on_sphere(5, 0.5, RngState(2).generator(), 1.0)
        warm = np.eye(5)[0]
        cfg = EtcConfig(horizon=200, radius=0.5)
        out = etc_run(env, warm, cfg, 200, RngState(3))
        assert np.all(out.trajectory.actions == warm)
        expected = 200 * (0.25 - float(warm @ env.theta_star) ** 2)
        assert cumulative_regret(env, out.trajectory) == pytest.approx(expected, rel=1e-12)

    def test_explore_with_no_budget(self):
        env = Environment(np.array([1.0, 0.0]), 1.0)
        b = Bandit(env, 0, np.random.default_rng(0))
        assert explore_then_commit(b, np.array([1.0, 0.0]), EtcConfig(horizon=10, radius=1.0), np.random.default_rng(0)) is None


class TestFullPolicy:
    def test_length_exact(self):
        rng = np.random.default_rng(10)
        for s in range(50):
            d = int(rng.integers(1, 8))
            n = int(rng.integers(1, 3000))
            r = float(rng.uniform(0.2, 1.0))
            c = float(rng.choice([0.01, 0.1, 1.0]))
            env = Environment.on_sphere(d, r, RngState(s).generator(), float(rng.choice([0.0, 1.0])))
            out = full_policy_run(
                env, n, WarmStartConfig(n, r, constant_scale=c), EtcConfig(n, r, constant_scale=c, mix_weight=0.25), RngState(s, 1)
            )
            assert len(out.trajectory) == n == env.calls
            assert out.prediction is not None

    def test_noiseless_commit_is_optimal(self):
        hits = 0
        for s in range(5):
            env = Environment.on_sphere(4, 1.0, RngState(s).generator(), 0.0)
            n = 20_000
            out = full_policy_run(
                env, n, WarmStartConfig(n, 1.0, constant_scale=0.05), EtcConfig(n, 1.0, constant_scale=0.05, mix_weight=0.25), RngState(s, 1)
            )
            if not out.warm.success:
                continue
            hits += 1
            traj = out.trajectory
            committed = [b for b in traj.blocks if b.phase == "etc-commit"]
            assert committed
            for b in committed:
                assert np.max(env.r**2 - (b.actions @ env.theta_star) ** 2) <= 1e-4
        assert hits >= 4

    def test_radius_probe_uses_budget(self):
        env = Environment.on_sphere(3, 0.9, RngState(0).generator())
        out = full_policy_run(
            env, 5000, WarmStartConfig(5000, 1.0, constant_scale=0.1), EtcConfig(5000, 1.0, constant_scale=0.1),
            RngState(1), radius_budget=400,
        )  # fmt: skip
        assert out.trajectory.rounds_in_phase("radius") == 400
        assert len(out.trajectory) == 5000
        assert 0 < out.radius_used <= 1.0

    def test_warm_only(self):
        env = Environment.on_sphere(3, 1.0, RngState(5).generator())
        out = warm_only_run(env, 20_000, WarmStartConfig(20_000, 1.0, constant_scale=0.05), RngState(6))
        assert len(out.trajectory) == 20_000
        tail = out.trajectory.blocks[-1]
        assert tail.phase == "warm-commit"
        np.testing.assert_array_equal(tail.actions[0], out.warm.action)

    def test_paired_streams(self):
        # theta* depends only on its own stream, so policies see the same parameter
        a = Environment.on_sphere(6, 1.0, RngState(9).child(6, 100, 0, 0).generator())
        b = Environment.on_sphere(6, 1.0, RngState(9).child(6, 100, 0, 0).generator())
        np.testing.assert_array_equal(a.theta_star, b.theta_star)


class TestUniformPure:
    def test_noiseless_recovery(self):
        env = Environment.on_sphere(2, 1.0, RngState(0).generator(), 0.0)
        out = uniform_pure_exploration_run(env, 100, RngState(1))
        assert simple_regret(env, out.prediction) < 1e-3
        assert abs(np.linalg.norm(out.prediction) - 1.0) < 1e-12

    @pytest.mark.parametrize("mode", ["ls", "spectral"])
    def test_prediction_is_unit(self, mode):
        env = Environment.on_sphere(5, 0.5, RngState(2).generator())
        out = uniform_pure_exploration_run(env, 300, RngState(3), mode=mode)
        assert abs(np.linalg.norm(out.prediction) - 1.0) < 1e-12
        assert len(out.trajectory) == 300

    def test_bad_mode(self):
        env = Environment.on_sphere(2, 0.5, RngState(2).generator())
        with pytest.raises(ValueError):
            uniform_pure_exploration_run(env, 10, RngState(3), mode="median")

    @pytest.mark.slow
    def test_adaptive_gap_d16(self):
        # directional check: at the hard radius the adaptive policy should
        # leave less simple regret than the non-adaptive uniform design
        d, n = 16, 4096
        r = lower_bound_radius(d, n, "simple")
        uni, full = [], []
        for s in range(100):
            env = Environment.on_sphere(d, r, RngState(77).child(s, 0).generator())
            uni.append(simple_regret(env, uniform_pure_exploration_run(env, n, RngState(77).child(s, 1)).prediction))
            env = Environment(env.theta_star, 1.0)
            out = full_policy_run(
                env, n, WarmStartConfig(n, r, constant_scale=0.2), EtcConfig(n, r, constant_scale=0.2, mix_weight=0.25),
                RngState(77).child(s, 2),
            )  # fmt: skip
            full.append(simple_regret(env, out.prediction))
        assert np.mean(uni) > np.mean(full)


class TestPredictFromTrajectory:
    def test_identical_actions(self):
        env = Environment(np.array([0.6, 0.8]), 1.0)
        b = Bandit(env, 10, np.random.default_rng(0))
        a = np.array([0.0, 1.0])
        b.play(a, 10)
        np.testing.assert_array_equal(predict_from_trajectory(b.trajectory, "uniform_sample", np.random.default_rng(1)), a)

    def test_committed(self):
        traj = Trajectory(2)
        traj.append(np.eye(2), np.zeros(2), "x")
        traj.prediction = np.array([0.6, 0.8])
        np.testing.assert_array_equal(predict_from_trajectory(traj, "committed", np.random.default_rng(0)), [0.6, 0.8])

    def test_empty(self):
        with pytest.raises(ValueError):
            predict_from_trajectory(Trajectory(2), "uniform_sample", np.random.default_rng(0))

    def test_uniform_selection(self):
        n, draws = 10_000, 100_000
        traj = Trajectory(1)
        # encode the round index in the action so selections can be counted
        for start in range(0, n, 1000):
            idx = np.arange(start, start + 1000)
            traj.append((idx / n)[:, None], np.zeros(1000), "x")
        rng = np.random.default_rng(4)
        picks = np.array([int(round(predict_from_trajectory(traj, "uniform_sample", rng)[0] * n)) for _ in range(draws)])
        counts = np.bincount(picks, minlength=n)
        expected = draws / n
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        # chi-square with n-1 dof: mean n-1, sd sqrt(2(n-1))
        assert abs(chi2 - (n - 1)) <= 3 * math.sqrt(2 * (n - 1))
