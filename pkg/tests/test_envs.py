import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import portfolio_closed_form, random_probs
from varac.envs import (EnvSpec, generate, portfolio, second_eigenvalue_modulus,
                        uniform_chain_is_ergodic)
from varac.errors import SpecInvalid
from varac.mdp import StationaryPolicy, TabularMdp, exact_evaluation, loads_mdp


@given(st.integers(0, 10_000), st.integers(1, 7), st.integers(1, 4), st.floats(0.01, 1.0))
@settings(max_examples=40, deadline=None)
def test_random_family_invariants(seed, n_s, n_a, mix):
    mdp = generate(EnvSpec("random", n_s, n_a, seed=seed, mix=mix))
    assert mdp.reward_bound <= 1.0
    assert loads_mdp(mdp.to_json()) == mdp
    assert uniform_chain_is_ergodic(mdp)
    assert second_eigenvalue_modulus(mdp) < 1 - 1e-6
    # mixing puts mass mix / n on every successor, so every policy is ergodic
    assert mdp.transition.min() >= mix / n_s * (1 - 1e-12)
    rng = np.random.default_rng(seed)
    exact_evaluation(mdp, StationaryPolicy(random_probs(rng, n_s, n_a)))


def test_full_mixing_is_uniform():
    mdp = generate(EnvSpec("random", 5, 2, seed=1, mix=1.0))
    np.testing.assert_allclose(mdp.transition, 0.2, atol=1e-15)


def test_same_spec_same_bytes():
    spec = EnvSpec("random", 4, 3, seed=9)
    assert generate(spec).to_json() == generate(spec).to_json()
    assert generate(spec).to_json() != generate(EnvSpec("random", 4, 3, seed=10)).to_json()


def test_portfolio_structure():
    mdp = portfolio()
    assert (mdp.n_states, mdp.n_actions) == (3, 2)
    assert generate(EnvSpec("portfolio", 3, 2)) == mdp
    # any policy's reward stream is a mixture of 0.4 and a fair coin over {0, 1}
    for p in (0.0, 0.25, 0.7, 1.0):
        ev = exact_evaluation(mdp, StationaryPolicy(np.tile([1 - p, p], (3, 1))))
        assert ev.rho == pytest.approx(0.4 + 0.1 * p, abs=1e-14)
        assert ev.variance == pytest.approx(0.26 * p - 0.01 * p * p, abs=1e-14)


def test_portfolio_constrained_optimum():
    mdp = portfolio()
    p, rho = portfolio_closed_form(0.1)
    ev = exact_evaluation(mdp, StationaryPolicy(np.tile([1 - p, p], (3, 1))))
    assert ev.variance == pytest.approx(0.1, abs=1e-12)
    assert ev.rho == pytest.approx(0.4390, abs=1e-4)


def test_custom_portfolio_payoffs():
    mdp = generate(EnvSpec("portfolio", 3, 2, safe_return=0.1, risky_low=-0.5, risky_high=0.9))
    ev = exact_evaluation(mdp, StationaryPolicy(np.tile([0.0, 1.0], (3, 1))))
    assert ev.rho == pytest.approx(0.2)
    assert ev.variance == pytest.approx(0.49)


def test_gridworld():
    mdp = generate(EnvSpec("gridworld", 12, 4, seed=0, slip=0.2))
    assert mdp.n_states == 12 and mdp.n_actions == 4
    assert set(np.unique(mdp.reward)) <= {-1.0, 0.0, 1.0}
    assert uniform_chain_is_ergodic(mdp)
    assert second_eigenvalue_modulus(mdp) < 1 - 1e-6


@pytest.mark.parametrize("spec", [
    EnvSpec("maze"), EnvSpec("random", 0, 2), EnvSpec("random", 3, 2, mix=0.0),
    EnvSpec("random", 3, 2, mix=1.5), EnvSpec("random", 3, 2, reward_scale=2.0),
    EnvSpec("random", 3, 2, seed=-1), EnvSpec("gridworld", 10, 4), EnvSpec("gridworld", 12, 3),
    EnvSpec("portfolio", 3, 2, risky_high=2.0),
])
def test_invalid_specs(spec):
    with pytest.raises(SpecInvalid):
        generate(spec)


def test_ergodicity_detector():
    periodic = TabularMdp(np.array([[[0.0, 1.0]], [[1.0, 0.0]]]), np.zeros((2, 1)))
    reducible = TabularMdp(np.array([[[1.0, 0.0]], [[0.5, 0.5]]]), np.zeros((2, 1)))
    assert not uniform_chain_is_ergodic(periodic)
    assert not uniform_chain_is_ergodic(reducible)
    assert second_eigenvalue_modulus(periodic) == pytest.approx(1.0)
