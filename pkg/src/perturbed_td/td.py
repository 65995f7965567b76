"""Off-policy TD(0) with a perturbed behavior chain, plus the two-sequence
Monte-Carlo estimator of the projected system.

A behavior chain ``xb(k)`` moves with the perturbed matrix. At each visited
state one extra transition ``x(k)`` is drawn from the target matrix, and the
parameter vector is moved along the TD error of that pair.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .mdp import StochasticMatrix, as_stochastic
from .projection import as_features

FIDELITIES = ("default", "paper")


class TransitionSampler:
    """Inverse-CDF sampling from the rows of a sparse stochastic matrix.

    The row CDFs are stored back to back, shifted by the row index, so one
    ``searchsorted`` serves a whole batch of states.
    """

    def __init__(self, P):
        P = as_stochastic(P)
        S = P.tocsr()
        self.n = P.n
        self.indptr = S.indptr.astype(np.int64)
        self.indices = S.indices.astype(np.int64)
        counts = np.diff(self.indptr)
        rows = np.repeat(np.arange(self.n), counts)
        cum = np.cumsum(S.data)
        start = np.repeat(cum[self.indptr[:-1]] - S.data[self.indptr[:-1]], counts)
        g = rows + (cum - start)
        g[self.indptr[1:] - 1] = np.arange(self.n) + 1.0
        self.cdf = g
        self._cdf_list = None

    def sample(self, x, u):
        """Next states for current states ``x`` and uniforms ``u`` in [0, 1)."""
        x = np.asarray(x, dtype=np.int64)
        pos = np.searchsorted(self.cdf, x + np.asarray(u), side="right")
        pos = np.clip(pos, self.indptr[x], self.indptr[x + 1] - 1)
        return self.indices[pos]

    def walk(self, x0: int, u) -> np.ndarray:
        """Sequential path ``x0, x1, ..`` of length ``len(u) + 1``."""
        if self._cdf_list is None:
            self._cdf_list = self.cdf.tolist()
        cdf, indptr, indices = self._cdf_list, self.indptr.tolist(), self.indices.tolist()
        out = [int(x0)]
        x = int(x0)
        for uk in u.tolist():
            lo, hi = indptr[x], indptr[x + 1]
            pos = bisect.bisect_right(cdf, x + uk, lo, hi)
            x = indices[min(pos, hi - 1)]
            out.append(x)
        return np.array(out, dtype=np.int64)


def sample_next(P, x: int, rng: np.random.Generator) -> int:
    P = as_stochastic(P)
    if not 0 <= x < P.n:
        raise ValidationError(f"state {x} outside 0..{P.n - 1}")
    cols, probs = P.row(x)
    cdf = np.cumsum(probs)
    pos = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return int(cols[min(pos, cols.size - 1)])


def run_stream(base_seed: int, run_index: int) -> np.random.Generator:
    """Counter-based generator owned by one run."""
    seq = np.random.SeedSequence(int(base_seed), spawn_key=(int(run_index),))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class TdConfig:
    discount: float = 0.9
    step: str = "diminishing"
    step_a: float = 1.0
    step_b: float = 1000.0
    step_constant: float = 0.1
    run_length: int = 50_000
    num_runs: int = 100
    base_seed: int = 0
    r0: tuple | None = None
    decimation: int = 50
    fidelity: str = "default"
    blowup: float = 1e12

    def __post_init__(self):
        if not 0.0 < self.discount < 1.0:
            raise ValidationError("discount must lie in (0, 1)")
        if self.step not in ("diminishing", "constant"):
            raise ValidationError(f"unknown step schedule {self.step!r}")
        if self.run_length < 1 or self.num_runs < 1 or self.decimation < 1:
            raise ValidationError("run_length, num_runs and decimation must be >= 1")
        if self.step == "diminishing" and (self.step_a <= 0 or self.step_b <= 0):
            raise ValidationError("diminishing step needs a > 0 and b > 0")
        if self.step == "constant" and self.step_constant <= 0:
            raise ValidationError("constant step must be positive")
        if self.fidelity not in FIDELITIES:
            raise ValidationError(f"fidelity must be one of {FIDELITIES}")

    def step_sizes(self) -> np.ndarray:
        k = np.arange(self.run_length, dtype=float)
        if self.step == "constant":
            return np.full(self.run_length, self.step_constant)
        return self.step_a / (self.step_b + k)

    def initial_parameters(self, n_features: int) -> np.ndarray:
        if self.r0 is None:
            return np.zeros(n_features)
        r0 = np.array(self.r0, dtype=float).ravel()
        if r0.shape != (n_features,):
            raise ValidationError(f"r0 must have {n_features} entries")
        return r0


@dataclass
class TdRunResult:
    run_index: int
    base_seed: int
    initial_state: int
    iterations: np.ndarray
    snapshots: np.ndarray
    td_error_mean: np.ndarray
    norms: np.ndarray
    diverged: bool = False
    diverged_at: int | None = None
    td_error_stats: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]

    def to_csv(self) -> str:
        psi = self.snapshots.shape[1]
        head = "iteration," + ",".join(f"r_{i + 1}" for i in range(psi)) + ",norm2,td_error_mean"
        lines = [head]
        for it, r, e in zip(self.iterations, self.snapshots, self.td_error_mean):
            vals = ",".join(f"{v:.17g}" for v in r)
            lines.append(f"{it},{vals},{np.sqrt(np.sum(r * r)):.17g},{e:.17g}")
        return "\n".join(lines) + "\n"


def _check_inputs(behavior, target, R, phi):
    Pb, P = as_stochastic(behavior), as_stochastic(target)
    phi = as_features(phi).values
    R = np.asarray(R, dtype=float)
    n = P.n
    if Pb.n != n or phi.shape[0] != n or R.shape != (n,):
        raise ValidationError("behavior, target, reward and features disagree on |X|")
    return Pb, P, R, phi


def run_many(behavior, target, R, phi, cfg: TdConfig, run_indices=None,
             initial_distribution=None) -> list[TdRunResult]:
    """Run several independent copies of the algorithm in lock-step.

    Each run draws from its own stream, so results do not depend on which runs
    are batched together. Initial behavior states are uniform unless
    ``initial_distribution`` is given.
    """
    Pb, P, R, phi = _check_inputs(behavior, target, R, phi)
    if run_indices is None:
        run_indices = range(cfg.num_runs)
    run_indices = list(run_indices)
    B, psi, n, L = len(run_indices), phi.shape[1], P.n, cfg.run_length
    sb, st = TransitionSampler(Pb), TransitionSampler(P)
    rngs = [run_stream(cfg.base_seed, i) for i in run_indices]
    if initial_distribution is None:
        xb = np.array([g.integers(n) for g in rngs], dtype=np.int64)
    else:
        p0 = np.asarray(initial_distribution, dtype=float)
        if p0.shape != (n,) or np.any(p0 < 0):
            raise ValidationError("initial_distribution must be a length-|X| probability vector")
        p0 = p0 / p0.sum()
        xb = np.array([g.choice(n, p=p0) for g in rngs], dtype=np.int64)
    x_init = xb.copy()
    r = np.tile(cfg.initial_parameters(psi), (B, 1))
    gammas = cfg.step_sizes()
    a = cfg.discount
    paper = cfg.fidelity == "paper"
    dec = cfg.decimation
    snap_at = [k for k in range(L) if (k + 1) % dec == 0 or k == L - 1]
    snaps = np.empty((len(snap_at), B, psi))
    td_mean = np.empty((len(snap_at), B))
    norms = np.empty((L, B))
    active = np.ones(B, dtype=bool)
    diverged_at = np.full(B, -1)
    td_sum, td_cnt = np.zeros(B), 0
    td_abs, td_sq = np.zeros(B), np.zeros(B)
    chunk = 4096
    si = 0
    for start in range(0, L, chunk):
        stop = min(start + chunk, L)
        U = np.stack([g.random((stop - start, 2)) for g in rngs], axis=1)
        for k in range(start, stop):
            u = U[k - start]
            x = st.sample(xb, u[:, 0])
            fb, fx = phi[xb], phi[x]
            vb = fb[:, 0] * r[:, 0]
            vx = fx[:, 0] * r[:, 0]
            for j in range(1, psi):
                vb = vb + fb[:, j] * r[:, j]
                vx = vx + fx[:, j] * r[:, j]
            rew = R[x] if paper else R[xb]
            delta = (rew + a * vx - vb) * active
            grad = fx if paper else fb
            r_new = r + (gammas[k] * delta)[:, None] * grad
            nrm = np.sqrt(np.sum(r_new * r_new, axis=1))
            bad = active & (~np.isfinite(nrm) | (nrm > cfg.blowup))
            if np.any(bad):
                diverged_at[bad] = k
                active &= ~bad
                r_new[bad] = r[bad]
                nrm[bad] = np.sqrt(np.sum(r[bad] * r[bad], axis=1))
                delta = delta * active
            r = r_new
            norms[k] = nrm
            td_sum += delta
            td_abs += np.abs(delta)
            td_sq += delta * delta
            td_cnt += 1
            if si < len(snap_at) and snap_at[si] == k:
                snaps[si] = r
                td_mean[si] = td_sum / td_cnt
                td_sum[:] = 0.0
                td_cnt = 0
                si += 1
            xb = sb.sample(xb, u[:, 1])
    iterations = np.array(snap_at) + 1
    out = []
    for b, idx in enumerate(run_indices):
        out.append(TdRunResult(
            run_index=idx,
            base_seed=cfg.base_seed,
            initial_state=int(x_init[b]),
            iterations=iterations,
            snapshots=snaps[:, b, :].copy(),
            td_error_mean=td_mean[:, b].copy(),
            norms=norms[:, b].copy(),
            diverged=bool(diverged_at[b] >= 0),
            diverged_at=int(diverged_at[b]) if diverged_at[b] >= 0 else None,
            td_error_stats={"mean_abs": td_abs[b] / L, "rms": np.sqrt(td_sq[b] / L)},
        ))
    return out


def run_algorithm1(behavior, target, R, phi, cfg: TdConfig, run_index: int = 0,
                   initial_distribution=None) -> TdRunResult:
    """One run of off-policy TD with behavior matrix ``behavior``.

    ``cfg.fidelity="default"`` uses ``R(xb) + a phi(x)'r - phi(xb)'r`` and moves
    along ``phi(xb)``; ``"paper"`` takes the reward and update direction at the
    target-sampled state ``x`` instead.
    """
    return run_many(behavior, target, R, phi, cfg, [run_index], initial_distribution)[0]


@dataclass(frozen=True)
class McEstimate:
    Z: np.ndarray
    d: np.ndarray
    samples: int


def estimate_projected_system_mc(behavior, target, R, phi, samples: int,
                                 rng: np.random.Generator, discount: float,
                                 x0: int | None = None, stationary=None) -> McEstimate:
    """Sample averages of ``phi(xb)(phi(xb) - a phi(x))'`` and ``phi(xb) R(xb)``.

    ``xb`` follows the behavior chain from ``x0`` (uniform when omitted), or is
    drawn i.i.d. from ``stationary`` when given; ``x`` is an independent target
    transition out of each ``xb``.
    """
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    Pb, P, R, phi = _check_inputs(behavior, target, R, phi)
    if stationary is not None:
        eps = np.asarray(stationary, dtype=float)
        xb = rng.choice(P.n, size=samples, p=eps / eps.sum())
    else:
        start = int(rng.integers(P.n)) if x0 is None else int(x0)
        xb = TransitionSampler(Pb).walk(start, rng.random(samples - 1))
    x = TransitionSampler(P).sample(xb, rng.random(samples))
    fb = phi[xb]
    Z = fb.T @ (fb - discount * phi[x]) / samples
    d = fb.T @ R[xb] / samples
    return McEstimate(Z, d, samples)


@dataclass
class Aggregate:
    mean_r: np.ndarray
    iterations: np.ndarray
    norm_curves: np.ndarray
    run_indices: list
    divergence_count: int

    @property
    def mean_curve(self) -> np.ndarray:
        return self.norm_curves.mean(axis=0)

    def to_csv(self, decimation: int = 1) -> str:
        """Mean norm curve and every run's curve, one row per kept iteration."""
        L = self.norm_curves.shape[1]
        keep = [k for k in range(L) if (k + 1) % decimation == 0 or k == L - 1]
        head = "iteration,mean_norm2," + ",".join(f"run_{i}" for i in self.run_indices)
        lines = [head]
        mean = self.mean_curve
        for k in keep:
            vals = ",".join(f"{v:.17g}" for v in self.norm_curves[:, k])
            lines.append(f"{k + 1},{mean[k]:.17g},{vals}")
        return "\n".join(lines) + "\n"

    def mean_to_csv(self) -> str:
        return "coordinate,r_bar\n" + "".join(
            f"{i + 1},{v:.17g}\n" for i, v in enumerate(self.mean_r)
        )


def aggregate_runs(results: list[TdRunResult]) -> Aggregate:
    if not results:
        raise ValidationError("need at least one run")
    good = [res for res in results if not res.diverged]
    if not good:
        raise NumericalError(f"all {len(results)} runs diverged")
    mean_r = np.mean([res.final for res in good], axis=0)
    return Aggregate(
        mean_r=mean_r,
        iterations=np.arange(1, results[0].norms.size + 1),
        norm_curves=np.array([res.norms for res in good]),
        run_indices=[res.run_index for res in good],
        divergence_count=len(results) - len(good),
    )


def flattening_ratio(curve, windows: int = 100) -> float:
    """Slope over the last tenth of ``curve`` relative to its steepest window.

    The curve is cut into ``windows`` equal pieces; each piece's slope is its
    end-to-end change per iteration.
    """
    curve = np.asarray(curve, dtype=float)
    L = curve.size
    if L < 20:
        raise ValidationError("curve too short to assess flattening")
    edges = np.linspace(0, L - 1, windows + 1).round().astype(int)
    slopes = np.abs(np.diff(curve[edges])) / np.maximum(np.diff(edges), 1)
    peak = float(slopes.max())
    k0 = int(round(0.9 * (L - 1)))
    last = abs(curve[-1] - curve[k0]) / max(L - 1 - k0, 1)
    return last / peak if peak > 0 else 0.0
