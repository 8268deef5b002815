"""Seeded environment families: random ergodic MDPs, the safe/risky portfolio, a cliff gridworld."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SpecInvalid
from .mdp import TabularMdp
from .rng import make_rng

FAMILIES = ("random", "portfolio", "gridworld")


@dataclass(frozen=True)
class EnvSpec:
    family: str = "random"
    n_states: int = 4
    n_actions: int = 2
    seed: int = 0
    mix: float = 0.05
    reward_scale: float = 1.0
    # portfolio only
    safe_return: float = 0.4
    risky_low: float = 0.0
    risky_high: float = 1.0
    # gridworld only
    slip: float = 0.1


def generate(spec: EnvSpec) -> TabularMdp:
    _validate(spec)
    if spec.family == "random":
        mdp = _random(spec)
    elif spec.family == "portfolio":
        mdp = portfolio(spec.safe_return, spec.risky_low, spec.risky_high)
    else:
        mdp = _gridworld(spec)
    if not uniform_chain_is_ergodic(mdp):
        raise SpecInvalid(f"{spec.family} environment is not ergodic under the uniform policy")
    return mdp


def _validate(spec: EnvSpec) -> None:
    if spec.family not in FAMILIES:
        raise SpecInvalid(f"family must be one of {FAMILIES}, got {spec.family!r}")
    if spec.n_states < 1 or spec.n_actions < 1:
        raise SpecInvalid("n_states and n_actions must be positive")
    if not 0 < spec.mix <= 1:
        raise SpecInvalid("mix must lie in (0, 1]")
    if not 0 < spec.reward_scale <= 1:
        raise SpecInvalid("reward_scale must lie in (0, 1] so rewards stay within [-1, 1]")
    if spec.seed < 0:
        raise SpecInvalid("seed must be non-negative")
    if spec.family == "portfolio":
        vals = (spec.safe_return, spec.risky_low, spec.risky_high)
        if any(abs(v) > 1 for v in vals):
            raise SpecInvalid("portfolio returns must lie in [-1, 1]")
    if spec.family == "gridworld":
        if spec.n_actions != 4:
            raise SpecInvalid("gridworld has exactly 4 actions")
        if spec.n_states < 9 or spec.n_states % 3:
            raise SpecInvalid("gridworld needs n_states = 3 * columns with at least 3 columns")
        if not 0 <= spec.slip < 1:
            raise SpecInvalid("slip must lie in [0, 1)")


def _random(spec: EnvSpec) -> TabularMdp:
    rng = make_rng(spec.seed)
    n_s, n_a = spec.n_states, spec.n_actions
    raw = rng.dirichlet(np.ones(n_s), size=(n_s, n_a))
    P = (1.0 - spec.mix) * raw + spec.mix / n_s
    P /= P.sum(axis=2, keepdims=True)
    r = spec.reward_scale * rng.uniform(-1.0, 1.0, size=(n_s, n_a))
    return TabularMdp(P, r)


def portfolio(safe: float = 0.4, low: float = 0.0, high: float = 1.0) -> TabularMdp:
    """Safe/risky allocation with the risky payoff realised through state splitting.

    States: 0 = previous pick was safe, 1 = risky paid ``high``,
    2 = risky paid ``low``. The reward collected in a state is the payoff of
    the previous pick, and transitions depend only on the action
    (0 = safe, 1 = risky). Under any policy the per-step reward is the mixture
    of ``safe`` and a fair coin over {low, high} with weight equal to the
    stationary probability of picking risky.
    """
    row_safe = [1.0, 0.0, 0.0]
    row_risky = [0.0, 0.5, 0.5]
    P = np.array([[row_safe, row_risky]] * 3)
    r = np.array([[safe, safe], [high, high], [low, low]])
    return TabularMdp(P, r)


def _gridworld(spec: EnvSpec) -> TabularMdp:
    """3-row cliff walk: start bottom-left, goal bottom-right, cliff between.

    Reward is +1 in the goal and -1 on a cliff cell (both send the agent back
    to the start); slipping moves in a uniformly random other direction.
    """
    rows, cols = 3, spec.n_states // 3
    n = rows * cols
    moves = [(-1, 0), (1, 0), (0, -1), (0, 1)]  # up, down, left, right

    def cell(rw, c):
        return rw * cols + c

    start, goal = cell(rows - 1, 0), cell(rows - 1, cols - 1)
    cliff = {cell(rows - 1, c) for c in range(1, cols - 1)}
    P = np.zeros((n, 4, n))
    r = np.zeros((n, 4))
    for rw in range(rows):
        for c in range(cols):
            s = cell(rw, c)
            if s == goal or s in cliff:
                P[s, :, start] = 1.0
                r[s, :] = 1.0 if s == goal else -1.0
                continue
            for a in range(4):
                for b, (dr, dc) in enumerate(moves):
                    p = 1.0 - spec.slip if a == b else spec.slip / 3
                    nr = min(max(rw + dr, 0), rows - 1)
                    nc = min(max(c + dc, 0), cols - 1)
                    P[s, a, cell(nr, nc)] += p
    P = (1.0 - spec.mix) * P + spec.mix / n
    P /= P.sum(axis=2, keepdims=True)
    return TabularMdp(P, spec.reward_scale * r)


def uniform_chain(mdp: TabularMdp) -> np.ndarray:
    return mdp.transition.mean(axis=1)


def uniform_chain_is_ergodic(mdp: TabularMdp) -> bool:
    """Irreducible and aperiodic <=> some power of the support pattern is all-positive."""
    n = mdp.n_states
    A = (uniform_chain(mdp) > 0).astype(np.int64)
    M = A.copy()
    # Wielandt: a primitive matrix satisfies A^k > 0 for k = n^2 - 2n + 2
    for _ in range(max(0, n * n - 2 * n + 1)):
        if M.all():
            return True
        M = np.minimum(M @ A, 1)
    return bool(M.all())


def second_eigenvalue_modulus(mdp: TabularMdp) -> float:
    ev = np.sort(np.abs(np.linalg.eigvals(uniform_chain(mdp))))[::-1]
    return float(ev[1]) if len(ev) > 1 else 0.0
