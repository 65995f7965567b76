"""End-to-end pipelines behind the CLI subcommands.

Each ``cmd_*`` function computes everything first and then writes its files
in one pass, returning a dict of the key numbers for callers and tests.
"""
from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse

from . import __version__
from .config import ExperimentConfig
from .errors import CapabilityError, NumericalError, ValidationError
from .exact import (evaluate_policy_exact, norm_condition_check, stationary_distribution,
                    theorem2_bound_check, value_iteration)
from .mdp import StochasticMatrix, infinity_norm_diff, transition_under_policy
from .perturbation import PerturbationSpec, deviation_report, perturb_transition
from .projection import (assemble_projected_system, certificate_iteration_spectrum,
                         certificate_positive_definite, iterate_projected, solve_direct)
from .resource import (PAPER_R_BAR, PAPER_SPEC, StateIndex, build_mdp, enumerate_states,
                       feature_matrix, state_count, target_policy)
from .td import Aggregate, TdRunResult, aggregate_runs, flattening_ratio, run_many

OUTPUT_ENV = "PERTURBED_TD_OUT"


@dataclass
class OffPolicySetup:
    """Matrices of one resource-allocation experiment for one target policy."""

    cfg: ExperimentConfig
    policy_kind: str

    @cached_property
    def spec(self):
        return self.cfg.resource_spec()

    @cached_property
    def states(self) -> StateIndex:
        return enumerate_states(self.spec.m, self.spec.N)

    @cached_property
    def mdp(self):
        return build_mdp(self.spec, self.states)

    @cached_property
    def features(self):
        return feature_matrix(self.spec, self.states)

    @cached_property
    def policy(self):
        return target_policy(self.spec, self.policy_kind, self.mdp, self.cfg.modulo_offset)

    @cached_property
    def target(self) -> StochasticMatrix:
        return transition_under_policy(self.mdp, self.policy)

    @cached_property
    def explore(self) -> StochasticMatrix:
        if self.cfg.explore == "uniform":
            mats = [P.tocsr() for P in self.mdp.transitions]
            return StochasticMatrix(sum(mats[1:], mats[0]) / len(mats))
        pol = target_policy(self.spec, self.cfg.explore, self.mdp, self.cfg.modulo_offset)
        return transition_under_policy(self.mdp, pol)

    @cached_property
    def perturbation(self) -> PerturbationSpec:
        return PerturbationSpec(self.cfg.mixing_weights(self.mdp.n_states), self.explore)

    @cached_property
    def behavior(self) -> StochasticMatrix:
        return perturb_transition(self.target, self.perturbation)

    @cached_property
    def behavior_stationary(self) -> np.ndarray:
        return stationary_distribution(self.behavior)

    @cached_property
    def system(self):
        return assemble_projected_system(self.features, self.behavior_stationary, self.target,
                                         self.mdp.reward, self.spec.discount)

    @cached_property
    def r_direct(self) -> np.ndarray:
        return solve_direct(self.system)


def run_td(setup: OffPolicySetup, threads: int = 1) -> list[TdRunResult]:
    cfg = setup.cfg.td_config()
    args = (setup.behavior, setup.target, setup.mdp.reward, setup.features, cfg)
    idx = list(range(cfg.num_runs))
    if threads <= 1 or len(idx) < 2:
        return run_many(*args, run_indices=idx)
    chunks = [c.tolist() for c in np.array_split(idx, min(threads, len(idx)))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda c: run_many(*args, run_indices=c), chunks))
    return [r for part in parts for r in part]


# -- output helpers -------------------------------------------------------------

def resolve_output(cfg: ExperimentConfig, cli_out: str | None = None) -> Path:
    out = cli_out or os.environ.get(OUTPUT_ENV) or cfg.output
    return Path(out)


class _Writer:
    """Collects files in memory and flushes them in one sequence."""

    def __init__(self, root: Path):
        self.root = root
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str) -> None:
        self.files[name] = text

    def flush(self, cfg: ExperimentConfig | None, command: str, started: float) -> list[str]:
        self.root.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            path = self.root / name
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="\n", encoding="utf-8") as fh:
                fh.write(text)
        names = sorted(self.files)
        manifest = {
            "command": command,
            "config_hash": cfg.digest() if cfg else None,
            "seed": cfg.seed if cfg else None,
            "version": __version__,
            "wall_clock_seconds": round(time.time() - started, 3),
            "files": names,
        }
        (self.root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        return names


def _vector_csv(name: str, values, labels: np.ndarray | None = None) -> str:
    values = np.asarray(values)
    if labels is None:
        lines = [f"index,{name}"]
        lines += [f"{i},{v:.17g}" if values.dtype.kind == "f" else f"{i},{v}"
                  for i, v in enumerate(values)]
    else:
        m = labels.shape[1]
        lines = ["index," + ",".join(f"x{j + 1}" for j in range(m)) + f",{name}"]
        for i, (lab, v) in enumerate(zip(labels, values)):
            val = f"{v:.17g}" if values.dtype.kind == "f" else str(v)
            lines.append(f"{i}," + ",".join(str(int(t)) for t in lab) + f",{val}")
    return "\n".join(lines) + "\n"


def _kv(pairs: dict) -> str:
    out = []
    for k, v in pairs.items():
        if isinstance(v, float):
            v = f"{v:.17g}"
        elif isinstance(v, np.ndarray):
            v = "[" + ", ".join(f"{t:.17g}" for t in v) + "]"
        out.append(f"{k} = {v}")
    return "\n".join(out) + "\n"


def _gnuplot(csv_name: str, columns: list[str], title: str) -> str:
    lines = [
        "set datafile separator ','",
        "set logscale x",
        "set xlabel 'iteration'",
        "set ylabel '||r_k||_2'",
        f"set title '{title}'",
        "plot " + ", \\\n     ".join(
            f"'{csv_name}' using 1:{i + 2} with lines title '{c}'" for i, c in enumerate(columns)
        ),
    ]
    return "\n".join(lines) + "\n"


# -- subcommands ---------------------------------------------------------------

def cmd_state_count(m: int, N: int, enumerate_max: int = 500_000) -> dict:
    closed = state_count(m, N)
    enumerated = None
    if closed <= enumerate_max:
        enumerated = len(enumerate_states(m, N))
        if enumerated != closed:
            raise NumericalError(f"enumeration gives {enumerated}, closed form {closed}")
    return {"count": closed, "enumerated": enumerated}


def cmd_solve_exact(cfg: ExperimentConfig, out: Path) -> dict:
    started = time.time()
    spec = cfg.resource_spec()
    n = state_count(spec.m, spec.N)
    if n > cfg.exact_cap:
        raise CapabilityError(
            f"|X| = {n} exceeds exact_cap = {cfg.exact_cap}; use td-run instead"
        )
    states = enumerate_states(spec.m, spec.N)
    mdp = build_mdp(spec, states)
    J, policy, report = value_iteration(mdp)
    if not report.converged:
        raise NumericalError(f"value iteration did not converge: {report}")
    J_check = evaluate_policy_exact(transition_under_policy(mdp, policy), mdp.reward, spec.discount)
    cond = norm_condition_check(mdp)
    bound = float(np.max(np.abs(mdp.reward), initial=0.0)) / (1 - spec.discount)
    summary = {
        "n_states": n,
        "policy_evaluation_gap": float(np.max(np.abs(J - J_check))),
        "J_star_sup_norm": float(np.max(np.abs(J))),
        "J_star_sup_bound": bound,
        "J_star_within_bound": bool(np.max(np.abs(J)) <= bound + 1e-9),
    }
    w = _Writer(out)
    w.add("J_star.csv", _vector_csv("J", J, states.states))
    w.add("policy.csv", _vector_csv("action", policy, states.states))
    w.add("report.txt", report.to_text() + cond.to_text() + _kv(summary))
    w.flush(cfg, "solve-exact", started)
    return {"J": J, "policy": policy, "report": report, "norm_condition": cond, **summary}


def cmd_project(cfg: ExperimentConfig, out: Path) -> dict:
    started = time.time()
    setup = OffPolicySetup(cfg, cfg.policy)
    r = setup.r_direct
    traj = iterate_projected(setup.system, np.zeros_like(r), cfg.project_iters)
    spec_cert = certificate_iteration_spectrum(setup.system)
    w = _Writer(out)
    w.add("projected_system.txt", setup.system.to_text())
    w.add("r_direct.csv", "coordinate,r\n" + "".join(f"{i + 1},{v:.17g}\n" for i, v in enumerate(r)))
    head = "iteration," + ",".join(f"r_{i + 1}" for i in range(r.size))
    w.add("trajectory.csv", head + "\n" + "".join(
        f"{k}," + ",".join(f"{v:.17g}" for v in row) + "\n" for k, row in enumerate(traj)))
    w.add("certificates.txt", spec_cert.to_text())
    w.flush(cfg, "project", started)
    return {"r_direct": r, "trajectory": traj, "spectrum": spec_cert,
            "final_gap": float(np.linalg.norm(traj[-1] - r))}


def _crosscheck(setup: OffPolicySetup, agg: Aggregate) -> dict:
    info = {}
    if setup.mdp.n_states <= setup.cfg.exact_cap:
        r = setup.r_direct
        info["r_direct"] = r
        info["relative_error"] = np.abs(agg.mean_r - r) / np.abs(r)
    if setup.spec == PAPER_SPEC:
        info["r_paper"] = PAPER_R_BAR
    return info


def cmd_td_run(cfg: ExperimentConfig, out: Path) -> dict:
    started = time.time()
    setup = OffPolicySetup(cfg, cfg.policy)
    results = run_td(setup, cfg.threads)
    agg = aggregate_runs(results)
    w = _Writer(out)
    width = len(str(max(len(results) - 1, 0)))
    for res in results:
        w.add(f"runs/run_{res.run_index:0{width}d}.csv", res.to_csv())
    w.add("aggregate.csv", agg.to_csv(cfg.decimation))
    w.add("r_bar.csv", agg.mean_to_csv())
    check = _crosscheck(setup, agg)
    flat = flattening_ratio(agg.mean_curve) if agg.mean_curve.size >= 20 else float("nan")
    summary = {
        "policy": cfg.policy,
        "num_runs": len(results),
        "divergent_runs": agg.divergence_count,
        "r_bar": agg.mean_r,
        "flattening_ratio": flat,
        **check,
    }
    w.add("summary.txt", _kv(summary))
    w.add("norms.gp", _gnuplot("aggregate.csv", ["mean"], f"off-policy TD, {cfg.policy} target"))
    w.flush(cfg, "td-run", started)
    return {"results": results, "aggregate": agg, "setup": setup, **summary}


def ordering_holds(final_norms: dict) -> bool | None:
    """Greedy >= each of random/hybrid/modulo >= fair, over the kinds present."""
    mids = [final_norms[k] for k in ("random", "hybrid", "modulo") if k in final_norms]
    ok = True
    if "greedy" in final_norms:
        ok &= all(final_norms["greedy"] >= v for v in mids)
        if "fair" in final_norms:
            ok &= final_norms["greedy"] >= final_norms["fair"]
    if "fair" in final_norms:
        ok &= all(v >= final_norms["fair"] for v in mids)
    return bool(ok)


def cmd_compare_policies(cfg: ExperimentConfig, out: Path) -> dict:
    started = time.time()
    curves, finals, means = {}, {}, {}
    seen: dict[str, int] = {}
    # a kind listed twice gets its own column ("greedy_2"), run with the same seeds
    for kind in cfg.policies:
        seen[kind] = seen.get(kind, 0) + 1
        label = kind if seen[kind] == 1 else f"{kind}_{seen[kind]}"
        agg = aggregate_runs(run_td(OffPolicySetup(cfg, kind), cfg.threads))
        curves[label] = agg.mean_curve
        finals[label] = float(agg.norm_curves[:, -1].mean())
        means[label] = agg.mean_r
    kinds = list(curves)
    L = cfg.run_length
    keep = [k for k in range(L) if (k + 1) % cfg.decimation == 0 or k == L - 1]
    lines = ["iteration," + ",".join(kinds)]
    for k in keep:
        lines.append(f"{k + 1}," + ",".join(f"{curves[p][k]:.17g}" for p in kinds))
    holds = ordering_holds(finals)
    report = {f"final_norm_{k}": finals[k] for k in kinds}
    report.update({f"r_bar_{k}": means[k] for k in kinds})
    report["ordering_holds"] = holds
    w = _Writer(out)
    w.add("policy_comparison.csv", "\n".join(lines) + "\n")
    w.add("ordering.txt", _kv(report))
    w.add("policies.gp", _gnuplot("policy_comparison.csv", kinds, "target policy comparison"))
    w.flush(cfg, "compare-policies", started)
    return {"curves": curves, "final_norms": finals, "r_bar": means, "ordering_holds": holds}


def verify_matrices(P, Pb, eps_bar, R, discount, phi, perturbation=None,
                    eps_target=None) -> dict:
    """All certificates for one (target, behavior) pair, as a flat dict.

    The target-weighted certificate uses ``eps_target`` when given, else the
    target's stationary distribution; it is skipped when the target chain
    is not regular.
    """
    out = {}
    pd_target = None
    try:
        eps = stationary_distribution(P) if eps_target is None else eps_target
        pd_target = certificate_positive_definite(eps, P, discount)
    except ValidationError as exc:
        out["pd_target_skipped"] = str(exc)
    pd_bar = certificate_positive_definite(eps_bar, P, discount)
    system = assemble_projected_system(phi, eps_bar, P, R, discount)
    spectrum = certificate_iteration_spectrum(system)
    dev = infinity_norm_diff(P, Pb)
    if pd_target is not None:
        out.update({f"pd_target_{k}": v for k, v in vars(pd_target).items()})
    out.update({f"pd_behavior_weighted_{k}": v for k, v in vars(pd_bar).items()})
    out.update({f"iteration_{k}": v for k, v in vars(spectrum).items()})
    out["deviation_inf_norm"] = dev
    out["deviation_threshold"] = 1.0 - discount
    out["deviation_condition"] = dev <= 1.0 - discount + 1e-12
    if perturbation is not None:
        rep = deviation_report(P, perturbation, Pb)
        out["explore_distance"] = rep.explore_distance
    return out


def cmd_verify(cfg: ExperimentConfig, out: Path) -> dict:
    started = time.time()
    setup = OffPolicySetup(cfg, cfg.policy)
    n = state_count(setup.spec.m, setup.spec.N)
    if n > cfg.verify_cap:
        raise CapabilityError(f"|X| = {n} exceeds verify_cap = {cfg.verify_cap}")
    a = setup.spec.discount
    res = verify_matrices(setup.target, setup.behavior, setup.behavior_stationary,
                          setup.mdp.reward, a, setup.features, setup.perturbation)
    cond = norm_condition_check(setup.mdp)
    res["norm_condition_value"] = cond.value
    res["norm_condition_holds"] = cond.holds
    if n <= cfg.exact_cap:
        J_star, pol_star, _ = value_iteration(setup.mdp)
        P_star = transition_under_policy(setup.mdp, pol_star)
        Pb_star = perturb_transition(P_star, PerturbationSpec(setup.perturbation.weights,
                                                              setup.explore))
        J_bar = evaluate_policy_exact(Pb_star, setup.mdp.reward, a)
        b = theorem2_bound_check(J_star, J_bar, setup.mdp.reward, a)
        res.update({"theorem2_lhs": b.lhs, "theorem2_rhs": b.rhs, "theorem2_holds": b.holds,
                    "theorem2_premise": infinity_norm_diff(P_star, Pb_star) <= 1 - a + 1e-12})
    w = _Writer(out)
    w.add("certificates.txt", _kv(res))
    w.flush(cfg, "verify", started)
    return res


def identity_verify(n: int = 4, discount: float = 0.9) -> dict:
    """Certificates for the identity chain with uniform weights and features."""
    eye = StochasticMatrix(sparse.identity(n, format="csr"))
    eps = np.full(n, 1.0 / n)
    return verify_matrices(eye, eye, eps, np.ones(n), discount, np.eye(n), eps_target=eps)
