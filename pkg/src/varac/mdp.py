"""Tabular average-reward MDPs: exact evaluation, simulation and estimation.

Differential values come from the Poisson equation

    (I - P_pi) V = r_pi - rho * 1,    E_nu[V] = 0,

which coincides with the infinite-sum definitions for aperiodic unichain
models. The same routine handles the squared reward (W, U, eta).
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import MdpFormatError, NonUnichain, SingularSolve
from .rng import make_rng

PROB_TOL = 1e-12
DENSE_LIMIT = 200


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite MDP with transition tensor ``P[s, a, s']`` and reward ``r[s, a]``."""

    transition: np.ndarray
    reward: np.ndarray

    def __post_init__(self):
        P = _frozen(self.transition)
        r = _frozen(self.reward)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        _validate(P, r)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def reward_bound(self) -> float:
        return float(np.max(np.abs(self.reward)))

    @property
    def embed_dim(self) -> int:
        return self.n_states * self.n_actions

    def __eq__(self, other):
        if not isinstance(other, TabularMdp):
            return NotImplemented
        return (np.array_equal(self.transition, other.transition)
                and np.array_equal(self.reward, other.reward))

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=None, separators=(",", ":")) + "\n"

    def save(self, path) -> None:
        from .io import atomic_write_text
        atomic_write_text(path, self.to_json())


def _validate(P: np.ndarray, r: np.ndarray) -> None:
    if P.ndim != 3 or P.shape[0] != P.shape[2]:
        raise MdpFormatError(f"transition: expected shape [S][A][S], got {P.shape}")
    if r.shape != P.shape[:2]:
        raise MdpFormatError(f"reward: expected shape {P.shape[:2]}, got {r.shape}")
    if P.shape[0] < 1 or P.shape[1] < 1:
        raise MdpFormatError("transition: need at least one state and one action")
    if not np.all(np.isfinite(P)):
        raise MdpFormatError("transition: non-finite entry")
    if not np.all(np.isfinite(r)):
        raise MdpFormatError("reward: non-finite entry")
    neg = np.argwhere(P < 0)
    if len(neg):
        s, a, s2 = neg[0]
        raise MdpFormatError(f"transition[{s}][{a}][{s2}]: negative probability {P[s, a, s2]}")
    sums = P.sum(axis=2)
    bad = np.argwhere(np.abs(sums - 1.0) > PROB_TOL)
    if len(bad):
        s, a = bad[0]
        raise MdpFormatError(f"transition[{s}][{a}]: row sums to {sums[s, a]!r}, expected 1")


def mdp_from_dict(data) -> TabularMdp:
    if not isinstance(data, dict):
        raise MdpFormatError("top level: expected a JSON object")
    for key in ("n_states", "n_actions", "transition", "reward"):
        if key not in data:
            raise MdpFormatError(f"{key}: missing field")
    n_s, n_a = data["n_states"], data["n_actions"]
    for key, val in (("n_states", n_s), ("n_actions", n_a)):
        if isinstance(val, bool) or not isinstance(val, int) or val < 1:
            raise MdpFormatError(f"{key}: expected a positive integer, got {val!r}")
    trans, rew = data["transition"], data["reward"]
    if not isinstance(trans, list) or len(trans) != n_s:
        raise MdpFormatError(f"transition: expected {n_s} state rows")
    for s, row in enumerate(trans):
        if not isinstance(row, list) or len(row) != n_a:
            raise MdpFormatError(f"transition[{s}]: expected {n_a} action rows")
        for a, dist in enumerate(row):
            if not isinstance(dist, list) or len(dist) != n_s:
                raise MdpFormatError(f"transition[{s}][{a}]: expected {n_s} probabilities")
            for s2, p in enumerate(dist):
                if isinstance(p, bool) or not isinstance(p, (int, float)):
                    raise MdpFormatError(f"transition[{s}][{a}][{s2}]: not a number")
    if not isinstance(rew, list) or len(rew) != n_s:
        raise MdpFormatError(f"reward: expected {n_s} state rows")
    for s, row in enumerate(rew):
        if not isinstance(row, list) or len(row) != n_a:
            raise MdpFormatError(f"reward[{s}]: expected {n_a} entries")
        for a, x in enumerate(row):
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise MdpFormatError(f"reward[{s}][{a}]: not a number")
    return TabularMdp(np.array(trans, dtype=float), np.array(rew, dtype=float))


def loads_mdp(text: str) -> TabularMdp:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MdpFormatError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return mdp_from_dict(data)


def load_mdp(path) -> TabularMdp:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MdpFormatError(f"{path}: {exc.strerror}") from exc
    return loads_mdp(text)


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    """Row-stochastic matrix ``probs[s, a] = pi(a | s)``."""

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 2:
            raise ValueError(f"policy must be a matrix, got shape {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("policy has negative or non-finite entries")
        if np.max(np.abs(p.sum(axis=1) - 1.0)) > PROB_TOL:
            raise ValueError("policy rows must sum to 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "StationaryPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions, n_actions: int) -> "StationaryPolicy":
        actions = np.asarray(actions, dtype=int)
        p = np.zeros((len(actions), n_actions))
        p[np.arange(len(actions)), actions] = 1.0
        return cls(p)

    @classmethod
    def normalized(cls, weights) -> "StationaryPolicy":
        """Build from non-negative weights, renormalising rows."""
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum(axis=1, keepdims=True))


def induced_chain(mdp: TabularMdp, pi: StationaryPolicy) -> np.ndarray:
    """State transition matrix ``P_pi[s, s']`` under ``pi``."""
    if pi.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"policy shape {pi.probs.shape} does not match MDP "
                         f"({mdp.n_states}, {mdp.n_actions})")
    return np.einsum("sa,sat->st", pi.probs, mdp.transition)


def _check_unichain(P_pi: np.ndarray) -> None:
    n = P_pi.shape[0]
    if n == 1:
        return
    sv = np.linalg.svd(np.eye(n) - P_pi, compute_uv=False)
    # a chain with c recurrent classes has c zero singular values
    if sv[-2] <= 1e-10 * max(1.0, sv[0]):
        raise NonUnichain("induced chain has more than one recurrent class")


def stationary_distribution(mdp: TabularMdp, pi: StationaryPolicy) -> np.ndarray:
    return chain_stationary(induced_chain(mdp, pi))


def chain_stationary(P_pi: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    n = P_pi.shape[0]
    if n <= DENSE_LIMIT:
        _check_unichain(P_pi)
        A = np.vstack([(np.eye(n) - P_pi).T, np.ones((1, n))])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        nu = np.linalg.lstsq(A, b, rcond=None)[0]
    else:
        # lazy chain: same fixed point, no periodic oscillation
        lazy = 0.5 * (P_pi + np.eye(n))
        nu = np.full(n, 1.0 / n)
        for _ in range(1_000_000):
            nxt = nu @ lazy
            if np.abs(nxt - nu).sum() < tol:
                nu = nxt
                break
            nu = nxt
        else:
            raise NonUnichain("power iteration failed to converge")
    nu = np.clip(nu, 0.0, None)
    return nu / nu.sum()


@dataclass(frozen=True)
class ExactEvaluation:
    nu: np.ndarray
    sigma: np.ndarray
    rho: float
    eta: float
    variance: float
    q: np.ndarray
    v: np.ndarray
    w: np.ndarray
    u: np.ndarray


def _poisson(P_pi: np.ndarray, nu: np.ndarray, g_pi: np.ndarray, gain: float) -> np.ndarray:
    n = P_pi.shape[0]
    Z = np.eye(n) - P_pi + np.outer(np.ones(n), nu)
    if np.linalg.cond(Z) > 1e12:
        raise SingularSolve("Poisson system is rank deficient")
    return np.linalg.solve(Z, g_pi - gain)


def exact_evaluation(mdp: TabularMdp, pi: StationaryPolicy) -> ExactEvaluation:
    P_pi = induced_chain(mdp, pi)
    nu = chain_stationary(P_pi)
    probs = pi.probs
    r = mdp.reward
    r2 = r ** 2
    sigma = probs * nu[:, None]
    rho = float(np.sum(sigma * r))
    eta = float(np.sum(sigma * r2))
    v = _poisson(P_pi, nu, np.sum(probs * r, axis=1), rho)
    u = _poisson(P_pi, nu, np.sum(probs * r2, axis=1), eta)
    q = r - rho + mdp.transition @ v
    w = r2 - eta + mdp.transition @ u
    return ExactEvaluation(nu=nu, sigma=sigma, rho=rho, eta=eta,
                           variance=eta - rho ** 2, q=q, v=v, w=w, u=u)


def poisson_residual(mdp: TabularMdp, pi: StationaryPolicy, ev: ExactEvaluation) -> float:
    """Largest violation of the Bellman/Poisson identities for Q, V, W, U."""
    P = mdp.transition
    r = mdp.reward
    res = [
        np.abs(ev.v - np.sum(ev.q * pi.probs, axis=1)),
        np.abs(ev.q - (r - ev.rho + P @ ev.v)),
        np.abs(ev.u - np.sum(ev.w * pi.probs, axis=1)),
        np.abs(ev.w - (r ** 2 - ev.eta + P @ ev.u)),
        np.abs(ev.nu @ induced_chain(mdp, pi) - ev.nu),
        [abs(np.sum(ev.sigma * ev.q)), abs(np.sum(ev.sigma * ev.w))],
    ]
    return float(max(np.max(x) for x in res))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A single rollout ``(s_t, a_t, a0_t, r_t, s'_t, a'_t)`` for t < T.

    ``a0`` holds the auxiliary actions drawn from the reference policy, used
    as regression inputs by the actor.
    """

    states: np.ndarray
    actions: np.ndarray
    actions0: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    next_actions: np.ndarray
    seed: object = field(default=None)

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self) -> Iterator[tuple]:
        return zip(self.states.tolist(), self.actions.tolist(), self.rewards.tolist(),
                   self.next_states.tolist(), self.next_actions.tolist())

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        names = ("states", "actions", "actions0", "rewards", "next_states", "next_actions")
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in names)


def _cumulative(rows: np.ndarray) -> list:
    cum = np.cumsum(rows, axis=-1)
    cum[..., -1] = 1.0
    return [list(c) for c in cum]


def sample_trajectory(mdp: TabularMdp, pi: StationaryPolicy, T: int, seed,
                      burn_in: int = 1000, pi0: StationaryPolicy | None = None) -> Trajectory:
    """Roll out ``pi`` for ``burn_in + T`` steps from a uniform start state.

    Only the last ``T`` transitions are returned. ``pi0`` defaults to the
    uniform policy.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    n_s, n_a = mdp.n_states, mdp.n_actions
    rng = make_rng(seed)
    # joint (a, s') table per state: index = a * n_s + s'
    joint = pi.probs[:, :, None] * mdp.transition
    joint_cum = _cumulative(joint.reshape(n_s, n_a * n_s))
    act_cum = _cumulative(pi.probs)

    s = int(rng.integers(n_s))
    u = rng.random(burn_in + T).tolist()
    for i in range(burn_in):
        s = bisect_right(joint_cum[s], u[i]) % n_s
    states = [0] * (T + 1)
    actions = [0] * (T + 1)
    for t in range(T):
        idx = bisect_right(joint_cum[s], u[burn_in + t])
        states[t] = s
        actions[t], s = divmod(idx, n_s)
    states[T] = s
    actions[T] = bisect_right(act_cum[s], float(rng.random()))

    st = np.array(states, dtype=np.intp)
    ac = np.array(actions, dtype=np.intp)
    p0 = np.full((n_s, n_a), 1.0 / n_a) if pi0 is None else pi0.probs
    cum0 = np.cumsum(p0, axis=1)
    cum0[:, -1] = 1.0
    u0 = rng.random(T)
    a0 = np.sum(u0[:, None] >= cum0[st[:T]], axis=1).astype(np.intp)
    cols = dict(states=st[:T], actions=ac[:T], actions0=a0,
                rewards=mdp.reward[st[:T], ac[:T]],
                next_states=st[1:], next_actions=ac[1:])
    for arr in cols.values():
        arr.setflags(write=False)
    return Trajectory(seed=seed if not isinstance(seed, np.random.Generator) else None, **cols)


def estimate_rho_eta(traj: Trajectory) -> tuple[float, float]:
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    r = traj.rewards
    return float(np.mean(r)), float(np.mean(r ** 2))
