"""Perturbed transition matrices ``(I - A) Q + A P`` and policy mixtures."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ValidationError
from .mdp import StochasticMatrix, as_stochastic, infinity_norm_diff, policy_weights


@dataclass(frozen=True)
class PerturbationSpec:
    """Diagonal mixing weights ``A`` (one per state) and an exploratory matrix ``Q``.

    Row ``x`` of the perturbed matrix keeps weight ``A[x]`` on the target and
    puts ``1 - A[x]`` on ``Q``. Every weight must lie strictly inside (0, 1).
    """

    weights: np.ndarray
    explore: StochasticMatrix

    def __post_init__(self):
        Q = as_stochastic(self.explore)
        w = np.array(self.weights, dtype=float).ravel()
        if w.size == 1:
            w = np.full(Q.n, w[0])
        if w.shape != (Q.n,):
            raise ValidationError(f"mixing weights length {w.size} != |X| = {Q.n}")
        if np.any(~np.isfinite(w)) or np.any(w <= 0.0) or np.any(w >= 1.0):
            raise ValidationError("mixing weights must lie strictly inside (0, 1)")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "explore", Q)

    @classmethod
    def uniform(cls, weight: float, explore) -> "PerturbationSpec":
        return cls(np.array([weight]), explore)

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))


def perturb_transition(P, spec: PerturbationSpec) -> StochasticMatrix:
    P = as_stochastic(P)
    if P.n != spec.explore.n:
        raise ValidationError("target and exploratory matrices differ in size")
    A = sparse.diags_array(spec.weights)
    IA = sparse.diags_array(1.0 - spec.weights)
    return StochasticMatrix(IA @ spec.explore.tocsr() + A @ P.tocsr())


@dataclass(frozen=True)
class MixtureReport:
    deviation: float
    bound: float
    explore_distance: float
    threshold: float
    condition: bool
    uniform: bool

    def to_text(self) -> str:
        return (
            f"deviation = {self.deviation:.17g}\n"
            f"bound = {self.bound:.17g}\n"
            f"explore_distance = {self.explore_distance:.17g}\n"
            f"threshold = {self.threshold:.17g}\n"
            f"condition = {self.condition}\n"
            f"uniform = {self.uniform}\n"
        )


def deviation_report(P, spec: PerturbationSpec, P_bar=None) -> MixtureReport:
    """Distance of the perturbed matrix from ``P`` and the ``1 - a`` condition.

    ``bound`` is ``(1 - min A) ||P - Q||_inf``; for uniform weights it equals
    the deviation up to rounding, which is asserted.
    """
    P = as_stochastic(P)
    if P_bar is None:
        P_bar = perturb_transition(P, spec)
    dev = infinity_norm_diff(P, P_bar)
    dist = infinity_norm_diff(P, spec.explore)
    a_min = float(spec.weights.min())
    bound = (1.0 - a_min) * dist
    uniform = spec.is_uniform
    if uniform and abs(dev - bound) > 1e-12:
        raise AssertionError(f"uniform-weight identity broken: {dev!r} vs {bound!r}")
    return MixtureReport(dev, bound, dist, 1.0 - a_min, dev <= 1.0 - a_min, uniform)


def mixture_policy(target, explore, xi: float) -> np.ndarray:
    """``xi * explore + (1 - xi) * target`` as an |X| x |U| stochastic policy.

    Deterministic policies (1-d integer arrays) are one-hot encoded first; the
    action count is taken from the widest stochastic input, or inferred from
    the largest action index.
    """
    if not 0.0 < xi < 1.0:
        raise ValidationError(f"xi must lie strictly inside (0, 1), got {xi}")
    t, e = np.asarray(target), np.asarray(explore)
    n = t.shape[0]
    if e.shape[0] != n:
        raise ValidationError("policies cover different state counts")
    widths = [p.shape[1] for p in (t, e) if p.ndim == 2]
    if widths:
        n_actions = max(widths)
    else:
        n_actions = int(max(t.max(), e.max())) + 1
    T = policy_weights(t, n, n_actions)
    E = policy_weights(e, n, n_actions)
    return xi * E + (1.0 - xi) * T
