import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import evaluate, lagrangian, portfolio_closed_form, random_probs
from varac.envs import EnvSpec, generate, portfolio
from varac.errors import DivisionBySupportZero
from varac.mdp import StationaryPolicy, TabularMdp, exact_evaluation
from varac.oracle import (density_diagnostics, howard, inner_max_policy, modified_reward,
                          saddle_search, truncated_value_oracle, verify_performance_difference)


def one_state(rewards):
    n_a = len(rewards)
    return TabularMdp(np.ones((1, n_a, 1)), np.array([rewards], dtype=float))


def enumerate_deterministic(mdp):
    for acts in itertools.product(range(mdp.n_actions), repeat=mdp.n_states):
        yield StationaryPolicy.deterministic(acts, mdp.n_actions)


def brute_dual(mdp, lam, alpha, step=0.02):
    """max over a simplex grid of two-action policies of rho - lam (Var - alpha), vectorised."""
    n = mdp.n_states
    grid = np.arange(0, 1 + 1e-12, step)
    ps = np.array(np.meshgrid(*[grid] * n, indexing="ij")).reshape(n, -1).T  # prob of action 0
    probs = np.stack([ps, 1 - ps], axis=2)
    P_pi = np.einsum("bsa,sat->bst", probs, mdp.transition)
    A = np.transpose(np.eye(n) - P_pi, (0, 2, 1)).copy()
    A[:, -1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    nu = np.linalg.solve(A, np.broadcast_to(b, (len(ps), n))[..., None])[..., 0]
    rho = np.einsum("bs,bsa,sa->b", nu, probs, mdp.reward)
    eta = np.einsum("bs,bsa,sa->b", nu, probs, mdp.reward ** 2)
    return float(np.max(rho - lam * (eta - rho ** 2 - alpha)))


class TestInnerMax:
    def test_lambda_zero_is_greedy(self):
        pi, val = inner_max_policy(one_state([1.0, 0.0]), 0.0, 0.3)
        np.testing.assert_array_equal(pi.probs, [[1.0, 0.0]])
        assert val == pytest.approx(1.0)

    def test_tie_goes_to_lowest_index(self):
        pi, val = inner_max_policy(one_state([1.0, 0.0]), 1.0, 0.0, alpha=0.2)
        np.testing.assert_array_equal(pi.probs, [[1.0, 0.0]])
        assert val == pytest.approx(0.2)

    @given(st.integers(0, 10_000), st.floats(0, 5), st.floats(-1, 1))
    @settings(max_examples=25, deadline=None)
    def test_matches_exhaustive_enumeration(self, seed, lam, y):
        mdp = generate(EnvSpec("random", 4, 2, seed=seed))
        pi, val = inner_max_policy(mdp, lam, y, alpha=0.1)
        best = max(lagrangian(lam, *evaluate(mdp.transition, mdp.reward, p.probs)[1:3], y, 0.1)
                   for p in enumerate_deterministic(mdp))
        assert val == pytest.approx(best, abs=1e-10)

    def test_howard_gain_is_optimal_modified_reward(self, mdp4):
        r = modified_reward(mdp4, 0.7, 0.2)
        acts = howard(mdp4, r)
        gain = lambda p: evaluate(mdp4.transition, r, p.probs)[1]  # noqa: E731
        best = max(gain(p) for p in enumerate_deterministic(mdp4))
        assert gain(StationaryPolicy.deterministic(acts, 2)) == pytest.approx(best, abs=1e-12)

    def test_negative_lambda_rejected(self, mdp4):
        with pytest.raises(ValueError):
            inner_max_policy(mdp4, -0.1, 0.0)


class TestSaddleSearch:
    @pytest.fixture(scope="class")
    @classmethod
    def port(cls):
        mdp = portfolio()
        return mdp, saddle_search(mdp, 0.1, 5.0)

    def test_portfolio_closed_form(self, port):
        mdp, sol = port
        p_star, rho_star = portfolio_closed_form(0.1)
        assert p_star == pytest.approx(0.3905, abs=1e-4)
        ev = exact_evaluation(mdp, sol.pi_star)
        assert ev.rho == pytest.approx(rho_star, abs=1e-6)
        assert ev.variance == pytest.approx(0.1, abs=1e-9)
        assert sol.value == pytest.approx(rho_star, abs=1e-3)
        assert sol.y_star == pytest.approx(ev.rho)

    def test_portfolio_dual_by_hand(self, port):
        # deterministic policies give risky fractions 0, 1/2 and 1; the lower envelope
        # of the lines 0.4 + 0.1 lam and 0.5 - 0.15 lam is minimised at lam = 0.4
        _, sol = port
        assert sol.lambda_star == pytest.approx(0.4, abs=1e-12)
        assert sol.certificate["dual_value"] == pytest.approx(0.44, abs=1e-12)
        assert sol.certificate["duality_gap"] == pytest.approx(0.44 - sol.value, abs=1e-12)

    def test_slack_constraint(self):
        mdp = portfolio()
        sol = saddle_search(mdp, 1.0, 5.0, lambda_res=0.05, y_res=0.05)
        assert sol.lambda_star == 0.0
        assert sol.value == pytest.approx(0.5)
        assert exact_evaluation(mdp, sol.pi_star).rho == pytest.approx(0.5)

    def test_dual_matches_simplex_brute_force(self):
        mdp = generate(EnvSpec("random", 3, 2, seed=42))
        sol = saddle_search(mdp, 0.1, 5.0, lambda_res=0.05, y_res=0.01)
        brute = brute_dual(mdp, sol.lambda_star, 0.1)
        # the y-grid can only under-estimate the inner max by lam * res^2 / 4
        assert sol.certificate["dual_value"] <= brute + 1e-10
        assert brute - sol.certificate["dual_value"] <= sol.certificate["y_grid_bound"] + 1e-10

    def test_saddle_inequalities_against_probes(self):
        mdp = generate(EnvSpec("random", 3, 2, seed=7))
        sol = saddle_search(mdp, 0.1, 5.0, lambda_res=0.05, y_res=0.02)
        gap = sol.certificate["gap"]
        rng = np.random.default_rng(0)
        ev_star = exact_evaluation(mdp, sol.pi_star)
        for _ in range(1000):
            p = random_probs(rng, 3, 2)
            _, rho, eta, _, _ = evaluate(mdp.transition, mdp.reward, p)
            y = rng.choice(np.arange(-1, 1.0001, 0.02))
            lam = rng.choice(np.arange(0, 5.0001, 0.05))
            assert lagrangian(sol.lambda_star, rho, eta, y, 0.1) <= sol.value + gap + 1e-12
            assert sol.value <= lagrangian(lam, ev_star.rho, ev_star.eta, sol.y_star, 0.1) + gap + 1e-12

    def test_dual_is_convex_and_decreasing_up_to_lambda_star(self):
        mdp = generate(EnvSpec("random", 3, 2, seed=3))
        sol = saddle_search(mdp, 0.05, 3.0, lambda_res=0.1, y_res=0.02)
        lams = np.arange(0, 3.0001, 0.1)
        M = mdp.reward_bound
        ys = np.append(-M + 0.02 * np.arange(int((2 * M) / 0.02 + 1e-9) + 1), M)
        g = np.array([max(inner_max_policy(mdp, lam, y, 0.05)[1] for y in ys) for lam in lams])
        assert np.all(np.diff(g, 2) >= -1e-12)
        below = lams <= sol.lambda_star + 1e-12
        assert np.all(np.diff(g[below]) <= 1e-12)
        assert g.min() == pytest.approx(sol.certificate["dual_value"], abs=1e-12)

    def test_rejects_bad_resolution(self, mdp4):
        with pytest.raises(ValueError):
            saddle_search(mdp4, 0.1, 5.0, lambda_res=0.0)

    def test_to_dict_fields(self, port):
        d = port[1].to_dict()
        assert set(d) == {"lambda_star", "y_star", "pi_star", "value", "certificate"}
        assert {"lambda_res", "y_res", "bracket_gap", "gap"} <= set(d["certificate"])


class TestTruncatedOracle:
    def test_constant_reward_gives_zero(self):
        P = generate(EnvSpec("random", 3, 2, seed=0)).transition
        mdp = TabularMdp(P, np.full((3, 2), 0.3))
        np.testing.assert_allclose(truncated_value_oracle(mdp, StationaryPolicy.uniform(3, 2)), 0.0, atol=1e-15)

    def test_one_state_only_first_term(self):
        mdp = one_state([0.2, 0.8])
        pi = StationaryPolicy(np.array([[0.25, 0.75]]))
        z = 0.25 * 0.2 + 0.75 * 0.8
        np.testing.assert_allclose(truncated_value_oracle(mdp, pi, "reward", 50), [[0.2 - z, 0.8 - z]], atol=1e-15)
        z2 = 0.25 * 0.04 + 0.75 * 0.64
        np.testing.assert_allclose(truncated_value_oracle(mdp, pi, "squared-reward", 5),
                                   [[0.04 - z2, 0.64 - z2]], atol=1e-15)

    def test_matches_exact(self, mdp4):
        pi = StationaryPolicy.uniform(4, 2)
        ev = exact_evaluation(mdp4, pi)
        np.testing.assert_allclose(truncated_value_oracle(mdp4, pi, "reward", 5000), ev.q, atol=1e-10)


class TestPerformanceDifference:
    def test_same_policy_is_exactly_zero(self, mdp4):
        pi = StationaryPolicy(random_probs(np.random.default_rng(0), 4, 2))
        assert verify_performance_difference(mdp4, 1.3, 0.2, pi, pi) == 0.0

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_lambda_zero(self, seed):
        rng = np.random.default_rng(seed)
        mdp = generate(EnvSpec("random", 4, 3, seed=seed))
        p1, p2 = (StationaryPolicy(random_probs(rng, 4, 3)) for _ in range(2))
        assert verify_performance_difference(mdp, 0.0, rng.uniform(-1, 1), p1, p2) <= 1e-10

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_universal(self, seed):
        rng = np.random.default_rng(seed)
        mdp = generate(EnvSpec("random", 4, 2, seed=seed + 1))
        p1, p2 = (StationaryPolicy(random_probs(rng, 4, 2)) for _ in range(2))
        assert verify_performance_difference(mdp, rng.uniform(0, 5), rng.uniform(-1, 1), p1, p2) <= 1e-8


class TestDensityDiagnostics:
    def test_identical_policies(self, mdp4):
        pi = StationaryPolicy(random_probs(np.random.default_rng(1), 4, 2))
        d = density_diagnostics(mdp4, pi, pi, StationaryPolicy.uniform(4, 2))
        assert d.phi_star == 0.0 and d.psi_star == 0.0
        assert d.perf_diff_residual == 0.0

    def test_matches_direct_summation(self, mdp4):
        rng = np.random.default_rng(5)
        ref, k, p0 = (StationaryPolicy(random_probs(rng, 4, 2)) for _ in range(3))
        d = density_diagnostics(mdp4, ref, k, p0, rho_bar=0.1, eta_bar=0.2)
        nu_r, rho_r, *_ = evaluate(mdp4.transition, mdp4.reward, ref.probs)
        nu_k, rho_k, eta_k, *_ = evaluate(mdp4.transition, mdp4.reward, k.probs)
        phi = psi = 0.0
        for s in range(4):
            for a in range(2):
                sk = nu_k[s] * k.probs[s, a]
                sr = nu_r[s] * ref.probs[s, a]
                phi += sk * ((ref.probs[s, a] - k.probs[s, a]) / p0.probs[s, a]) ** 2
                psi += sk * (sr / sk - nu_r[s] / nu_k[s]) ** 2
        assert d.phi_star == pytest.approx(np.sqrt(phi), abs=1e-12)
        assert d.psi_star == pytest.approx(np.sqrt(psi), abs=1e-12)
        assert d.c_k == pytest.approx(abs(rho_k - 0.1), abs=1e-12)
        assert d.d_k == pytest.approx(abs(eta_k - 0.2), abs=1e-12)

    def test_zero_in_reference_policy(self, mdp4):
        pi = StationaryPolicy.uniform(4, 2)
        with pytest.raises(DivisionBySupportZero):
            density_diagnostics(mdp4, pi, pi, StationaryPolicy.deterministic([0, 0, 0, 0], 2))
