"""The full four-class experiment: 10626 states, 100 runs of 50000 steps.

Runs the greedy target policy end to end, compares the TD average with the
exact projected solution, then repeats for all five target policies. Files
land in ./demo_out (or $PERTURBED_TD_OUT). Takes about a minute.
"""
import os
from pathlib import Path

import numpy as np

from perturbed_td.config import ExperimentConfig
from perturbed_td.experiment import cmd_compare_policies, cmd_td_run

np.set_printoptions(precision=4, suppress=True)

out = Path(os.environ.get("PERTURBED_TD_OUT", "demo_out"))
cfg = ExperimentConfig.from_mapping(dict(step_a=4000, step_b=200000, seed=0))

res = cmd_td_run(cfg, out / "greedy")
print("TD average    ", res["r_bar"])
print("exact         ", res["r_direct"])
print("published     ", res["r_paper"])
print("relative error", res["relative_error"])
print("flattening    ", round(res["flattening_ratio"], 5))

cmp = cmd_compare_policies(cfg, out / "policies")
for kind, v in cmp["final_norms"].items():
    print(f"{kind:>7}: final |r| = {v:.3f}")
print("greedy >= random/hybrid/modulo >= fair:", cmp["ordering_holds"])
print("curves written to", out / "policies" / "policy_comparison.csv")
