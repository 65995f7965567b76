"""Exact dynamic-programming oracles for desk-sized problems."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import NumericalError, ValidationError
from .mdp import Mdp, StochasticMatrix, as_stochastic, is_regular

DENSE_SOLVE_MAX = 2000


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    tolerance: float

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in vars(self).items())


def _q_values(mdp: Mdp, J: np.ndarray, discount: float | None = None) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    if J.shape != (mdp.n_states,):
        raise ValidationError(f"value function length {J.size} != |X| = {mdp.n_states}")
    a = mdp.discount if discount is None else discount
    return np.column_stack([mdp.reward + a * (P @ J) for P in mdp.transitions])


def _opt(mdp: Mdp, q: np.ndarray) -> np.ndarray:
    return q.max(axis=1) if mdp.maximize else q.min(axis=1)


def bellman_apply(mdp: Mdp, J, discount: float | None = None) -> np.ndarray:
    """One application of the optimal Bellman operator.

    ``discount`` overrides the MDP's own factor; 0 is allowed here and gives
    the one-step reward.
    """
    if discount is not None and not 0.0 <= discount < 1.0:
        raise ValidationError("discount override must lie in [0, 1)")
    return _opt(mdp, _q_values(mdp, J, discount))


def greedy_policy(mdp: Mdp, J) -> np.ndarray:
    """Greedy actions for ``J``; ties go to the lowest action index."""
    q = _q_values(mdp, J)
    return np.argmax(q, axis=1) if mdp.maximize else np.argmin(q, axis=1)


def value_iteration(mdp: Mdp, tol: float | None = None, max_iter: int = 100_000):
    """Iterate the Bellman operator until successive iterates differ by ``tol``.

    The default tolerance ``1e-10 (1 - a) / a`` puts the result within 1e-10 of
    the fixed point. Returns ``(J, policy, report)``; on hitting ``max_iter`` the
    partial ``J`` is returned with ``report.converged = False``.
    """
    a = mdp.discount
    if tol is None:
        tol = 1e-10 * (1.0 - a) / a
    if tol <= 0:
        raise ValidationError("tol must be positive")
    J = np.zeros(mdp.n_states)
    residual = np.inf
    it = 0
    while it < max_iter:
        it += 1
        J_next = bellman_apply(mdp, J)
        residual = float(np.max(np.abs(J_next - J), initial=0.0))
        J = J_next
        if residual <= tol:
            break
    report = SolveReport(it, residual, residual <= tol, tol)
    return J, greedy_policy(mdp, J), report


def evaluate_policy_exact(P, R, discount: float, tol: float = 1e-10) -> np.ndarray:
    """Solve ``(I - a P) J = R``.

    Dense LU up to 2000 states, Richardson iteration ``J <- R + a P J`` above
    that, stopped once the Bellman residual is below ``tol``.
    """
    P = as_stochastic(P)
    R = np.asarray(R, dtype=float)
    if R.shape != (P.n,):
        raise ValidationError(f"reward length {R.size} != {P.n}")
    if not 0.0 < discount < 1.0:
        raise ValidationError("discount must lie in (0, 1)")
    if P.n <= DENSE_SOLVE_MAX:
        A = np.eye(P.n) - discount * P.toarray()
        try:
            J = np.linalg.solve(A, R)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"policy evaluation system is singular: {exc}") from exc
        if not np.all(np.isfinite(J)):
            raise NumericalError("policy evaluation produced non-finite values")
        return J
    M = P.tocsr()
    J = R / (1.0 - discount)
    # the contraction bound makes 10x the worst-case count a safe ceiling
    scale = max(np.max(np.abs(R), initial=0.0) / (1 - discount), 1.0)
    max_iter = 10 * int(np.ceil(np.log(tol / scale) / np.log(discount))) + 100
    for _ in range(max_iter):
        J_next = R + discount * (M @ J)
        if np.max(np.abs(J_next - J)) <= tol:
            return J_next
        J = J_next
    raise NumericalError("Richardson iteration did not reach the residual tolerance")


def stationary_distribution(P, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Stationary distribution of a regular chain.

    Direct null-space solve up to 2000 states; power iteration otherwise, with
    a Cesaro average as fallback when the plain iterates stall.
    """
    P = as_stochastic(P)
    reg = is_regular(P)
    if not reg.regular:
        raise ValidationError(f"stationary distribution needs a regular chain: {reg.diagnosis}")
    n = P.n
    M = P.tocsr()
    MT = M.T.tocsr()

    def residual(v):
        return float(np.abs(MT @ v - v).sum())

    eps = None
    if n <= DENSE_SOLVE_MAX:
        A = np.eye(n) - P.toarray().T
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        eps = np.linalg.solve(A, b)
        eps = np.clip(eps, 0.0, None)
        eps /= eps.sum()
        for _ in range(100):
            if residual(eps) <= tol:
                break
            eps = MT @ eps
            eps /= eps.sum()
        if residual(eps) > tol:
            eps = None
    if eps is None:
        v = np.full(n, 1.0 / n)
        acc = np.zeros(n)
        count = 0
        for it in range(max_iter):
            w = MT @ v
            w /= w.sum()
            if it % 10 == 0 and float(np.abs(w - v).sum()) <= tol:
                v = w
                break
            v = w
            if it >= max_iter // 2:
                acc += v
                count += 1
        if residual(v) > tol and count:
            v = acc / count
        eps = v
        if residual(eps) > tol:
            raise NumericalError(
                f"stationary distribution did not converge (residual {residual(eps):.3g})"
            )
    if np.min(eps) <= 0.0:
        raise NumericalError("stationary distribution has non-positive entries")
    return eps


@dataclass(frozen=True)
class BoundReport:
    lhs: float
    rhs: float
    holds: bool

    def to_text(self) -> str:
        return f"lhs = {self.lhs:.17g}\nrhs = {self.rhs:.17g}\nholds = {self.holds}\n"


def theorem2_bound_check(J_star, J_bar, R, discount: float) -> BoundReport:
    """Compare ||J* - J_bar||_inf with a ||R||_inf / (1 - a)."""
    J_star, J_bar, R = (np.asarray(v, dtype=float) for v in (J_star, J_bar, R))
    if J_star.shape != J_bar.shape or J_star.shape != R.shape:
        raise ValidationError("J_star, J_bar and R must have equal lengths")
    lhs = float(np.max(np.abs(J_star - J_bar), initial=0.0))
    rhs = discount * float(np.max(np.abs(R), initial=0.0)) / (1.0 - discount)
    return BoundReport(lhs, rhs, lhs <= rhs + 1e-12)


@dataclass(frozen=True)
class NormConditionReport:
    value: float
    threshold: float
    holds: bool
    worst_pair: tuple[int, int] | None
    worst_state: int | None

    def to_text(self) -> str:
        return (
            f"norm_condition_value = {self.value:.17g}\n"
            f"norm_condition_threshold = {self.threshold:.17g}\n"
            f"norm_condition_holds = {self.holds}\n"
            f"norm_condition_worst_pair = {self.worst_pair}\n"
            f"norm_condition_worst_state = {self.worst_state}\n"
        )


def norm_condition_check(mdp: Mdp, discount: float | None = None) -> NormConditionReport:
    """Largest L1 row distance between any two action matrices, against 1 - a."""
    a = mdp.discount if discount is None else discount
    best, pair, state = 0.0, None, None
    for i, j in itertools.combinations(range(mdp.n_actions), 2):
        D = abs(mdp.transitions[i].tocsr() - mdp.transitions[j].tocsr())
        rows = np.asarray(sparse.csr_array(D).sum(axis=1)).ravel()
        k = int(np.argmax(rows))
        if rows[k] > best or pair is None:
            best, pair, state = float(rows[k]), (i, j), k
    return NormConditionReport(best, 1.0 - a, best < 1.0 - a, pair, state)
