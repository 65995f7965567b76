"""Resource-allocation MDP: m price classes sharing N units of capacity.

Class ``i`` holds ``x_i`` customers. Each slot every occupied class releases
one customer with probability ``mu_i``; the class selected by the action
additionally receives an arrival with probability ``lambda_j`` (arrival and
departure of the selected class are mutually exclusive). Departures are
applied first; an arrival that would exceed the capacity is lost. Reward is
``sum_i c_i x_i`` and the decision-maker maximises it.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from scipy import sparse

from .errors import ValidationError
from .mdp import Mdp, StochasticMatrix
from .projection import FeatureMatrix

POLICY_KINDS = ("greedy", "fair", "random", "hybrid", "modulo")

# state-space sizes for (m, N) reported alongside the model
TABLE1_COUNTS = {
    (2, 10): 66,
    (3, 20): 1771,
    (5, 20): 53130,
    (6, 20): 230230,
    (4, 50): 316251,
    (5, 50): 3478761,
}


@dataclass(frozen=True)
class ResourceSpec:
    N: int
    c: tuple[float, ...]
    lam: tuple[float, ...]
    mu: tuple[float, ...]
    discount: float = 0.9
    allow_degenerate: bool = False

    def __post_init__(self):
        c, lam, mu = (tuple(float(v) for v in np.atleast_1d(a)) for a in (self.c, self.lam, self.mu))
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)
        if not (len(c) == len(lam) == len(mu)) or not c:
            raise ValidationError("c, lambda and mu must be non-empty and of equal length")
        if int(self.N) != self.N or self.N < 1:
            raise ValidationError(f"capacity N must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        lam_a, mu_a = np.array(lam), np.array(mu)
        if np.any(np.array(c) <= 0):
            raise ValidationError("prices must be strictly positive")
        if np.any(lam_a < 0) or np.any(mu_a < 0):
            raise ValidationError("probabilities must be nonnegative")
        if not self.allow_degenerate and np.any((mu_a <= 0) | (mu_a >= 1)):
            raise ValidationError("release probabilities must lie in (0, 1)")
        if np.any(lam_a + mu_a > 1.0):
            raise ValidationError("lambda_i + mu_i must not exceed 1")
        if not 0.0 < self.discount < 1.0:
            raise ValidationError("discount must lie in (0, 1)")

    @property
    def m(self) -> int:
        return len(self.c)


PAPER_SPEC = ResourceSpec(
    N=20,
    c=(0.8, 0.9, 1.0, 1.1),
    lam=(0.090596, 0.048632, 0.015657, 0.005088),
    mu=(0.483723, 0.444019, 0.024843, 0.335103),
    discount=0.9,
)

# averaged parameter vector reported for PAPER_SPEC
PAPER_R_BAR = np.array([0.0212, 1.9179, 2.2853, 8.9394, 3.3748])


def state_count(m: int, N: int) -> int:
    return comb(N + m, m)


@lru_cache(maxsize=None)
def _compositions(total: int, parts: int) -> np.ndarray:
    """Weak compositions of ``total`` into ``parts``, lexicographically ascending."""
    if parts == 1:
        return np.array([[total]], dtype=np.int32)
    blocks = []
    for first in range(total + 1):
        rest = _compositions(total - first, parts - 1)
        head = np.full((rest.shape[0], 1), first, dtype=np.int32)
        blocks.append(np.hstack([head, rest]))
    return np.vstack(blocks)


class StateIndex:
    """Bijection between occupancy vectors and dense indices.

    States are ordered by total occupancy, then lexicographically.
    """

    def __init__(self, m: int, N: int):
        if m < 1 or N < 1:
            raise ValidationError("need m >= 1 and N >= 1")
        self.m, self.N = m, N
        states = np.vstack([_compositions(t, m) for t in range(N + 1)])
        states.setflags(write=False)
        self.states = states
        self._radix = (N + 1) ** np.arange(m - 1, -1, -1, dtype=np.int64)
        keys = states.astype(np.int64) @ self._radix
        self._order = np.argsort(keys, kind="stable")
        self._sorted_keys = keys[self._order]

    def __len__(self):
        return self.states.shape[0]

    def state(self, i: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self.states[i])

    def indices(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64)
        X2 = np.atleast_2d(X)
        if X2.shape[1] != self.m:
            raise ValidationError(f"occupancy vectors must have {self.m} entries")
        if np.any(X2 < 0) or np.any(X2.sum(axis=1) > self.N):
            raise ValidationError("occupancy outside the state space")
        keys = X2 @ self._radix
        pos = np.searchsorted(self._sorted_keys, keys)
        out = self._order[pos]
        return out if X.ndim == 2 else out[0]

    def index(self, x) -> int:
        return int(self.indices(np.asarray(x)))

    def to_csv(self) -> str:
        head = "index," + ",".join(f"x{i + 1}" for i in range(self.m))
        rows = (f"{i}," + ",".join(str(int(v)) for v in s) for i, s in enumerate(self.states))
        return head + "\n" + "\n".join(rows) + "\n"


def enumerate_states(m: int, N: int) -> StateIndex:
    return StateIndex(m, N)


def build_transition(spec: ResourceSpec, action: int, states: StateIndex | None = None) -> StochasticMatrix:
    """Transition matrix when price class ``action`` (0-based) accepts arrivals."""
    m = spec.m
    if not 0 <= action < m:
        raise ValidationError(f"action must be in 0..{m - 1}, got {action}")
    if states is None:
        states = StateIndex(m, spec.N)
    X = states.states.astype(np.int64)
    K = X.shape[0]
    occupied = X > 0
    mu = np.array(spec.mu)
    lam_j = spec.lam[action]
    others = [i for i in range(m) if i != action]
    rows, cols, vals = [], [], []
    src = np.arange(K)
    for departs in itertools.product((False, True), repeat=len(others)):
        p_other = np.ones(K)
        dep = np.zeros_like(X)
        for i, d in zip(others, departs):
            if d:
                p_other = p_other * (mu[i] * occupied[:, i])
                dep[:, i] = 1
            else:
                p_other = p_other * (1.0 - mu[i] * occupied[:, i])
        for event in ("arrive", "depart", "hold"):
            Y = X - dep
            if event == "arrive":
                p = p_other * lam_j
                room = Y.sum(axis=1) < spec.N
                Y[room, action] += 1
            elif event == "depart":
                p = p_other * (mu[action] * occupied[:, action])
                Y[:, action] -= occupied[:, action]
            else:
                p = p_other * (1.0 - lam_j - mu[action] * occupied[:, action])
            keep = p > 0
            if not np.any(keep):
                continue
            Yk = Y[keep]
            rows.append(src[keep])
            cols.append(states.indices(Yk))
            vals.append(p[keep])
    T = sparse.coo_array(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(K, K)
    ).tocsr()
    T.sum_duplicates()
    return StochasticMatrix(T, tol=1e-12)


def reward_vector(spec: ResourceSpec, states: StateIndex | None = None) -> np.ndarray:
    if states is None:
        states = StateIndex(spec.m, spec.N)
    return states.states @ np.array(spec.c)


def feature_matrix(spec: ResourceSpec, states: StateIndex | None = None) -> FeatureMatrix:
    """Constant column followed by the m occupancy counts."""
    if states is None:
        states = StateIndex(spec.m, spec.N)
    X = states.states.astype(float)
    return FeatureMatrix(np.column_stack([np.ones(X.shape[0]), X]))


def build_mdp(spec: ResourceSpec, states: StateIndex | None = None) -> Mdp:
    if states is None:
        states = StateIndex(spec.m, spec.N)
    trans = tuple(build_transition(spec, j, states) for j in range(spec.m))
    return Mdp(trans, reward_vector(spec, states), spec.discount, maximize=True,
               state_labels=states.states)


def target_policy(spec: ResourceSpec, kind: str, mdp: Mdp | None = None,
                  modulo_offset: int = 0) -> np.ndarray:
    """One of the five benchmark target policies (0-based action indices).

    greedy / fair pick the action with the highest / lowest expected reward
    after one step, ties to the lowest index. random is uniform, hybrid puts
    0.6 on the class with the smallest release probability and spreads 0.4
    uniformly, modulo picks ``(sum(x) + modulo_offset) mod m``. Deterministic
    kinds return an integer vector, the others an |X| x m matrix.
    """
    if kind not in POLICY_KINDS:
        raise ValidationError(f"unknown policy kind {kind!r}; expected one of {POLICY_KINDS}")
    m = spec.m
    if mdp is None:
        mdp = build_mdp(spec)
    n = mdp.n_states
    if kind in ("greedy", "fair"):
        score = np.column_stack([P @ mdp.reward for P in mdp.transitions])
        # equal-score actions must tie exactly, not up to summation order
        score = np.round(score, 12)
        return np.argmax(score, axis=1) if kind == "greedy" else np.argmin(score, axis=1)
    if kind == "random":
        return np.full((n, m), 1.0 / m)
    if kind == "hybrid":
        W = np.full((n, m), 0.4 / m)
        W[:, int(np.argmin(spec.mu))] += 0.6
        return W
    totals = np.asarray(mdp.state_labels).sum(axis=1)
    return ((totals + modulo_offset) % m).astype(np.intp)
