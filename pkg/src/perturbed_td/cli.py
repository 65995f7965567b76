"""``perturbed-td`` command line.

Precedence for every setting: command-line flag, then ``--set KEY=VALUE``
overrides, then the config file, then built-in defaults. The output
directory may also come from ``PERTURBED_TD_OUT`` (below ``--out``).
"""
from __future__ import annotations

import argparse
import sys

from . import experiment as ex
from .config import ExperimentConfig, load_config, parse_value
from .errors import PerturbedTDError, ValidationError
from .td import FIDELITIES


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="base seed for the per-run RNG streams")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker threads for TD runs")
    p.add_argument("--fidelity", choices=FIDELITIES, help="TD update variant")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perturbed-td",
                                     description="Off-policy TD on perturbed MDPs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("state-count", help="size of the resource-allocation state space")
    p.add_argument("m", type=int)
    p.add_argument("N", type=int)

    for name, text in [
        ("solve-exact", "value iteration on the resource MDP"),
        ("project", "assemble and solve the projected system"),
        ("td-run", "Monte-Carlo off-policy TD runs"),
        ("compare-policies", "TD runs for several target policies"),
        ("verify", "positive-definiteness, spectrum and bound certificates"),
    ]:
        _common(sub.add_parser(name, help=text))
    return parser


def config_from_args(args) -> ExperimentConfig:
    mapping = load_config(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        mapping[key.strip()] = parse_value(val)
    for flag, key in (("seed", "seed"), ("threads", "threads"), ("fidelity", "fidelity")):
        if getattr(args, flag) is not None:
            mapping[key] = getattr(args, flag)
    return ExperimentConfig.from_mapping(mapping)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if hasattr(v, "tolist"):
        return "[" + ", ".join(f"{t:.6g}" for t in v.tolist()) + "]"
    return str(v)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "state-count":
            if args.m < 1 or args.N < 1:
                raise ValidationError("m and N must be positive")
            res = ex.cmd_state_count(args.m, args.N)
            print(res["count"])
            return 0
        cfg = config_from_args(args)
        out = ex.resolve_output(cfg, args.out)
        if args.command == "solve-exact":
            res = ex.cmd_solve_exact(cfg, out)
            keys = ("n_states", "J_star_sup_norm", "J_star_sup_bound", "policy_evaluation_gap")
            print(res["norm_condition"].to_text(), end="")
        elif args.command == "project":
            res = ex.cmd_project(cfg, out)
            keys = ("r_direct", "final_gap")
        elif args.command == "td-run":
            res = ex.cmd_td_run(cfg, out)
            keys = ("num_runs", "divergent_runs", "r_bar", "r_direct", "r_paper",
                    "relative_error", "flattening_ratio")
        elif args.command == "compare-policies":
            res = ex.cmd_compare_policies(cfg, out)
            for kind, v in res["final_norms"].items():
                print(f"final_norm_{kind} = {v:.6g}")
            keys = ("ordering_holds",)
        else:
            res = ex.cmd_verify(cfg, out)
            keys = tuple(res)
        for k in keys:
            if k in res:
                print(f"{k} = {_fmt(res[k])}")
        print(f"wrote {out}")
        return 0
    except PerturbedTDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:  # numpy/scipy argument errors surface as validation failures
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
