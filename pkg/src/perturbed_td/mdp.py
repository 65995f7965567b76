"""Finite MDP primitives: stochastic matrices, policies, regularity and norms."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import ValidationError

ROW_TOL = 1e-9
DENSE_MAX = 64


@dataclass(frozen=True)
class StochasticityReport:
    passed: bool
    row_deviation: np.ndarray
    negative_entries: int
    out_of_range_entries: int

    @property
    def max_deviation(self) -> float:
        return float(self.row_deviation.max(initial=0.0))

    @property
    def worst_row(self) -> int:
        return int(np.argmax(self.row_deviation)) if self.row_deviation.size else -1


def _as_sparse(M) -> sparse.csr_array:
    if isinstance(M, StochasticMatrix):
        return M.tocsr()
    if sparse.issparse(M):
        return sparse.csr_array(M, dtype=float)
    arr = np.asarray(M, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"expected a 2-d matrix, got shape {arr.shape}")
    return sparse.csr_array(arr)


def validate_stochastic(M, tol: float = ROW_TOL) -> StochasticityReport:
    """Check entries lie in [0, 1] and every row sums to 1 within ``tol``."""
    S = _as_sparse(M)
    if S.shape[0] != S.shape[1]:
        raise ValidationError(f"stochastic matrix must be square, got {S.shape}")
    data = S.data
    neg = int(np.count_nonzero(data < 0.0))
    over = int(np.count_nonzero(data > 1.0 + tol))
    deviation = np.abs(np.asarray(S.sum(axis=1)).ravel() - 1.0)
    passed = neg == 0 and over == 0 and bool(np.all(deviation <= tol))
    return StochasticityReport(passed, deviation, neg, over)


class StochasticMatrix:
    """Immutable row-stochastic matrix.

    Stored densely for ``n <= 64`` and as CSR otherwise. Rows whose sum is off
    by less than ``tol`` are renormalised; anything worse is rejected.
    """

    __slots__ = ("_csr", "_dense", "tol")

    def __init__(self, M, tol: float = ROW_TOL):
        report = validate_stochastic(M, tol)
        if not report.passed:
            raise ValidationError(
                "not a stochastic matrix: "
                f"max row deviation {report.max_deviation:.3g} (row {report.worst_row}), "
                f"{report.negative_entries} negative, "
                f"{report.out_of_range_entries} above one"
            )
        S = _as_sparse(M).copy()
        S.eliminate_zeros()
        S.sort_indices()
        sums = np.asarray(S.sum(axis=1)).ravel()
        S = sparse.csr_array(sparse.diags_array(1.0 / sums) @ S)
        S.sort_indices()
        S.data.setflags(write=False)
        object.__setattr__(self, "_csr", S)
        dense = S.toarray() if S.shape[0] <= DENSE_MAX else None
        if dense is not None:
            dense.setflags(write=False)
        object.__setattr__(self, "_dense", dense)
        object.__setattr__(self, "tol", tol)

    def __setattr__(self, name, value):
        raise AttributeError("StochasticMatrix is immutable")

    @property
    def n(self) -> int:
        return self._csr.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self._csr.shape

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def matrix(self):
        """Dense ndarray for small matrices, CSR array otherwise."""
        return self._dense if self._dense is not None else self._csr

    def tocsr(self) -> sparse.csr_array:
        return self._csr

    def toarray(self) -> np.ndarray:
        return self._csr.toarray()

    def row(self, x: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self._csr.indptr[x], self._csr.indptr[x + 1]
        return self._csr.indices[lo:hi], self._csr.data[lo:hi]

    def __matmul__(self, other):
        return self.matrix @ other

    def __rmatmul__(self, other):
        return other @ self.matrix

    def __repr__(self):
        return f"StochasticMatrix(n={self.n}, nnz={self.nnz})"


def as_stochastic(M, tol: float = ROW_TOL) -> StochasticMatrix:
    return M if isinstance(M, StochasticMatrix) else StochasticMatrix(M, tol)


@dataclass(frozen=True)
class Mdp:
    """Finite MDP with state-only reward.

    ``transitions[u]`` is the matrix of action ``u``. ``maximize`` selects the
    orientation of the Bellman optimum (rewards vs costs).
    """

    transitions: tuple[StochasticMatrix, ...]
    reward: np.ndarray
    discount: float
    maximize: bool = False
    state_labels: Sequence | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        trans = tuple(as_stochastic(P) for P in self.transitions)
        if not trans:
            raise ValidationError("an MDP needs at least one action")
        n = trans[0].n
        if any(P.n != n for P in trans):
            raise ValidationError("all action matrices must share one state space")
        reward = np.array(self.reward, dtype=float).ravel()
        if reward.shape != (n,):
            raise ValidationError(f"reward length {reward.size} != |X| = {n}")
        if not np.all(np.isfinite(reward)):
            raise ValidationError("reward must be finite")
        if not 0.0 < self.discount < 1.0:
            raise ValidationError(f"discount must lie in (0, 1), got {self.discount}")
        if self.state_labels is not None and len(self.state_labels) != n:
            raise ValidationError("state_labels length must equal |X|")
        reward.setflags(write=False)
        object.__setattr__(self, "transitions", trans)
        object.__setattr__(self, "reward", reward)

    @property
    def n_states(self) -> int:
        return self.transitions[0].n

    @property
    def n_actions(self) -> int:
        return len(self.transitions)


def policy_weights(policy, n_states: int, n_actions: int) -> np.ndarray:
    """Return the |X| x |U| action-probability matrix of a policy.

    A 1-d integer array is a deterministic policy; a 2-d array is a
    stochastic one.
    """
    pol = np.asarray(policy)
    if pol.ndim == 1:
        if pol.shape != (n_states,):
            raise ValidationError(f"policy length {pol.size} != |X| = {n_states}")
        if not np.issubdtype(pol.dtype, np.integer):
            if not np.all(pol == np.round(pol)):
                raise ValidationError("deterministic policy entries must be integers")
            pol = pol.astype(int)
        if pol.size and (pol.min() < 0 or pol.max() >= n_actions):
            raise ValidationError("policy refers to an action index out of range")
        W = np.zeros((n_states, n_actions))
        W[np.arange(n_states), pol] = 1.0
        return W
    if pol.shape != (n_states, n_actions):
        raise ValidationError(f"stochastic policy shape {pol.shape} != {(n_states, n_actions)}")
    W = pol.astype(float)
    if np.any(W < 0) or np.any(W > 1 + ROW_TOL) or np.any(np.abs(W.sum(axis=1) - 1) > ROW_TOL):
        raise ValidationError("stochastic policy rows must be probability vectors")
    return W


def transition_under_policy(mdp: Mdp, policy) -> StochasticMatrix:
    """Transition matrix of the Markov chain induced by ``policy``."""
    W = policy_weights(policy, mdp.n_states, mdp.n_actions)
    total = None
    for a, P in enumerate(mdp.transitions):
        w = W[:, a]
        if not np.any(w):
            continue
        term = sparse.diags_array(w) @ P.tocsr()
        total = term if total is None else total + term
    return StochasticMatrix(total)


def infinity_norm_diff(P, Q) -> float:
    """max_x sum_x' |P[x, x'] - Q[x, x']|."""
    A, B = _as_sparse(P), _as_sparse(Q)
    if A.shape != B.shape:
        raise ValidationError(f"shape mismatch {A.shape} vs {B.shape}")
    D = abs(A - B)
    if D.shape[0] == 0:
        return 0.0
    return float(np.asarray(D.sum(axis=1)).max())


@dataclass(frozen=True)
class RegularityReport:
    regular: bool
    irreducible: bool
    period: int | None
    n_components: int
    diagnosis: str

    def __bool__(self):
        return self.regular


def is_regular(P) -> RegularityReport:
    """Irreducibility via strong components, aperiodicity via BFS level gcd."""
    S = as_stochastic(P).tocsr()
    n = S.shape[0]
    ncomp, _ = csgraph.connected_components(S, directed=True, connection="strong")
    if ncomp > 1:
        return RegularityReport(False, False, None, ncomp,
                                f"reducible: {ncomp} strongly connected components")
    order, pred = csgraph.breadth_first_order(S, 0, directed=True, return_predecessors=True)
    level = np.zeros(n, dtype=np.int64)
    for v in order[1:]:
        level[v] = level[pred[v]] + 1
    coo = S.tocoo()
    diffs = np.abs(level[coo.row] + 1 - level[coo.col])
    period = 0
    for g in np.unique(diffs):
        period = gcd(period, int(g))
        if period == 1:
            break
    if period == 1:
        return RegularityReport(True, True, 1, 1, "regular")
    return RegularityReport(False, True, period, 1, f"periodic with period {period}")


# -- plain-text exchange formats ------------------------------------------------

def write_triplets(path, M) -> None:
    """``n nnz`` header then one ``row col value`` line per stored entry."""
    S = _as_sparse(M).tocoo()
    order = np.lexsort((S.col, S.row))
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{S.shape[0]} {S.nnz}\n")
        for i in order:
            fh.write(f"{S.row[i]} {S.col[i]} {S.data[i]:.17g}\n")


def read_triplets(path) -> sparse.csr_array:
    with open(path) as fh:
        n, nnz = (int(t) for t in fh.readline().split())
        body = np.loadtxt(fh, ndmin=2) if nnz else np.empty((0, 3))
    if body.shape[0] != nnz:
        raise ValidationError(f"{path}: header announces {nnz} entries, found {body.shape[0]}")
    return sparse.csr_array(
        (body[:, 2], (body[:, 0].astype(int), body[:, 1].astype(int))), shape=(n, n)
    )


def write_vector(path, v) -> None:
    Path(path).write_text("".join(f"{x:.17g}\n" for x in np.asarray(v, dtype=float)))


def read_vector(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=1)
