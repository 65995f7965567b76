"""Linear-feature projected Bellman equation: assembly, solvers, certificates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .errors import DivergenceError, NumericalError, ValidationError
from .mdp import ROW_TOL, as_stochastic

DENSE_EIG_MAX = 2000


class FeatureMatrix:
    """|X| x psi basis with full column rank (checked by pivoted QR)."""

    def __init__(self, phi, rank_tol: float = 1e-10):
        phi = np.array(phi, dtype=float)
        if phi.ndim == 1:
            phi = phi[:, None]
        if phi.ndim != 2 or phi.shape[0] == 0 or phi.shape[1] == 0:
            raise ValidationError(f"feature matrix must be a non-empty 2-d array, got {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise ValidationError("feature matrix has non-finite entries")
        self.rank = feature_rank(phi, rank_tol)
        if self.rank < phi.shape[1]:
            raise ValidationError(
                f"feature matrix is rank deficient: rank {self.rank} < {phi.shape[1]} columns"
            )
        phi.setflags(write=False)
        self.values = phi

    @property
    def n_states(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __repr__(self):
        return f"FeatureMatrix(n_states={self.n_states}, n_features={self.n_features})"


def feature_rank(phi, rank_tol: float = 1e-10) -> int:
    phi = np.asarray(phi, dtype=float)
    R = linalg.qr(phi, mode="r", pivoting=True)[0]
    scale = np.linalg.norm(phi, 2)
    diag = np.abs(np.diag(R))
    return int(np.count_nonzero(diag > rank_tol * scale))


def as_features(phi) -> FeatureMatrix:
    return phi if isinstance(phi, FeatureMatrix) else FeatureMatrix(phi)


def _weights(eps, n: int) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (n,):
        raise ValidationError(f"weight vector length {eps.size} != {n}")
    if np.any(eps <= 0.0):
        raise ValidationError("projection weights must be strictly positive")
    if abs(eps.sum() - 1.0) > ROW_TOL:
        raise ValidationError(f"projection weights must sum to 1, got {eps.sum():.17g}")
    return eps


@dataclass(frozen=True)
class ProjectedSystem:
    """``Z r = d`` with ``Z = Phi' W (I - a P) Phi`` and ``d = Phi' W R``."""

    Z: np.ndarray
    d: np.ndarray
    gram: np.ndarray
    weights: np.ndarray
    discount: float
    variant: str = "paper"

    @property
    def n_features(self) -> int:
        return self.d.size

    @property
    def n_states(self) -> int:
        return self.weights.size

    def to_text(self) -> str:
        lines = [
            f"discount = {self.discount:.17g}",
            f"n_features = {self.n_features}",
            f"n_states = {self.n_states}",
            f"variant = {self.variant}",
            "Z",
        ]
        lines += [" ".join(f"{z:.17g}" for z in row) for row in self.Z]
        lines.append("d")
        lines.append(" ".join(f"{v:.17g}" for v in self.d))
        return "\n".join(lines) + "\n"


def assemble_projected_system(phi, eps, P, R, discount: float,
                              variant: str = "paper", behavior=None) -> ProjectedSystem:
    """Build the projected system weighted by ``eps``.

    ``variant="paper"`` keeps the target matrix ``P`` inside ``Z``. The
    ``"behavior"`` variant swaps in the ``behavior`` matrix instead.
    """
    phi = as_features(phi).values
    P = as_stochastic(P)
    n = P.n
    if phi.shape[0] != n:
        raise ValidationError(f"feature rows {phi.shape[0]} != |X| = {n}")
    eps = _weights(eps, n)
    R = np.asarray(R, dtype=float)
    if R.shape != (n,):
        raise ValidationError(f"reward length {R.size} != {n}")
    if variant == "paper":
        T = P
    elif variant == "behavior":
        if behavior is None:
            raise ValidationError("the behavior variant needs the behavior matrix")
        T = as_stochastic(behavior)
        if T.n != n:
            raise ValidationError("behavior matrix dimension mismatch")
    else:
        raise ValidationError(f"unknown variant {variant!r}")
    weighted = eps[:, None] * phi
    gram = phi.T @ weighted
    Z = weighted.T @ (phi - discount * (T @ phi))
    d = weighted.T @ R
    return ProjectedSystem(Z, d, gram, eps.copy(), float(discount), variant)


def solve_direct(system: ProjectedSystem, max_cond: float = 1e14) -> np.ndarray:
    Z, d = system.Z, system.d
    cond = np.linalg.cond(Z)
    if not np.isfinite(cond) or cond > max_cond:
        raise NumericalError(f"Z is numerically singular (condition estimate {cond:.3g})")
    r = np.linalg.solve(Z, d)
    if np.linalg.norm(Z @ r - d) > 1e-10 * max(np.linalg.norm(d), np.finfo(float).tiny):
        r = r + np.linalg.solve(Z, d - Z @ r)
    return r


def iterate_projected(system: ProjectedSystem, r0, iters: int,
                      blowup: float = 1e12) -> np.ndarray:
    """Trajectory of ``r <- r - gram^{-1} (Z r - d)``, rows ``r_0 .. r_iters``."""
    r = np.array(r0, dtype=float).ravel()
    if r.shape != system.d.shape:
        raise ValidationError("r0 has the wrong length")
    step = linalg.cho_factor(system.gram)
    GZ = linalg.cho_solve(step, system.Z)
    Gd = linalg.cho_solve(step, system.d)
    out = np.empty((iters + 1, r.size))
    out[0] = r
    for k in range(1, iters + 1):
        r = r - (GZ @ r - Gd)
        if not np.all(np.isfinite(r)) or np.linalg.norm(r) > blowup:
            raise DivergenceError(f"projected iteration diverged at step {k}")
        out[k] = r
    return out


@dataclass(frozen=True)
class PositiveDefiniteCertificate:
    min_eigenvalue: float
    threshold: float
    holds: bool
    gershgorin_bound: float
    method: str

    def to_text(self, prefix: str = "pd") -> str:
        return "".join(f"{prefix}_{k} = {v}\n" for k, v in vars(self).items())


def certificate_positive_definite(eps, P, discount: float) -> PositiveDefiniteCertificate:
    """Smallest eigenvalue of the symmetric part of ``diag(eps) (I - a P)``.

    ``holds`` needs it above ``1e-12 ||M||``. The Gershgorin lower bound is
    reported as an independent, always-rigorous check.
    """
    P = as_stochastic(P)
    n = P.n
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (n,) or np.any(eps <= 0):
        raise ValidationError("eps must be a strictly positive vector of length |X|")
    Mp = sparse.csr_array(sparse.diags_array(eps) @ P.tocsr())
    M = sparse.csr_array(sparse.diags_array(eps) - discount * Mp)
    S = sparse.csr_array((M + M.T) * 0.5)
    diag = S.diagonal()
    off = np.asarray(abs(S).sum(axis=1)).ravel() - np.abs(diag)
    gersh = float(np.min(diag - off))
    if n <= DENSE_EIG_MAX:
        Md = M.toarray()
        lam = float(linalg.eigvalsh((Md + Md.T) * 0.5, subset_by_index=[0, 0])[0])
        norm = float(np.linalg.norm(Md, 2))
        method = "dense"
    else:
        lam = float(splinalg.eigsh(S, k=1, which="SA", return_eigenvectors=False,
                                   maxiter=100 * n, tol=1e-14)[0])
        norm = float(np.sqrt(splinalg.norm(M, 1) * splinalg.norm(M, np.inf)))
        method = "lanczos"
    thr = 1e-12 * norm
    return PositiveDefiniteCertificate(lam, thr, lam > thr, gersh, method)


@dataclass(frozen=True)
class SpectrumCertificate:
    spectral_radius: float
    holds: bool
    z_symmetric_min_eigenvalue: float

    def to_text(self, prefix: str = "iteration") -> str:
        return "".join(f"{prefix}_{k} = {v}\n" for k, v in vars(self).items())


def iteration_matrix(system: ProjectedSystem) -> np.ndarray:
    return np.eye(system.n_features) - np.linalg.solve(system.gram, system.Z)


def certificate_iteration_spectrum(system: ProjectedSystem) -> SpectrumCertificate:
    """Spectral radius of ``I - gram^{-1} Z``; convergence iff below one."""
    rho = float(np.max(np.abs(np.linalg.eigvals(iteration_matrix(system)))))
    zmin = float(np.linalg.eigvalsh((system.Z + system.Z.T) * 0.5)[0])
    return SpectrumCertificate(rho, rho < 1.0 - 1e-12, zmin)


def project_value(J, phi, eps):
    """Weighted least-squares fit of ``J`` onto the span of ``phi``.

    Returns the coefficients and the fitted values ``phi @ r``.
    """
    phi = as_features(phi).values
    J = np.asarray(J, dtype=float)
    eps = _weights(eps, phi.shape[0])
    if J.shape != (phi.shape[0],):
        raise ValidationError("J length must equal the number of feature rows")
    sw = np.sqrt(eps)
    r = np.linalg.lstsq(sw[:, None] * phi, sw * J, rcond=None)[0]
    return r, phi @ r
