"""Perturbing the optimal chain and bounding the damage.

The behavior chain keeps weight a on the target and 1 - a on an
exploratory matrix Q. With a uniform weight the distance to the target is
exactly (1 - a) ||P - Q||; when that is at most 1 - a, the value of the
perturbed chain stays within a ||R|| / (1 - a) of the optimum.
"""
import numpy as np

from perturbed_td.exact import evaluate_policy_exact, theorem2_bound_check, value_iteration
from perturbed_td.mdp import transition_under_policy
from perturbed_td.perturbation import (PerturbationSpec, deviation_report, mixture_policy,
                                       perturb_transition)
from perturbed_td.resource import ResourceSpec, build_mdp

spec = ResourceSpec(N=2, c=(0.8, 0.9), lam=(0.3, 0.2), mu=(0.4, 0.5))
mdp = build_mdp(spec)
a = spec.discount

J_star, pol, _ = value_iteration(mdp)
P_star = transition_under_policy(mdp, pol)
Q = transition_under_policy(mdp, np.full((mdp.n_states, 2), 0.5))

pert = PerturbationSpec.uniform(a, Q)
P_bar = perturb_transition(P_star, pert)
print(deviation_report(P_star, pert, P_bar).to_text())

J_bar = evaluate_policy_exact(P_bar, mdp.reward, a)
print(theorem2_bound_check(J_star, J_bar, mdp.reward, a).to_text())

# per-state weights are allowed too; the uniform identity then becomes a bound
A = np.linspace(0.6, 0.95, mdp.n_states)
print(deviation_report(P_star, PerturbationSpec(A, Q)).to_text())

# the same chain, built from a mixed policy instead of mixed matrices
W = mixture_policy(pol, np.full((mdp.n_states, 2), 0.5), xi=1 - a)
P_mix = transition_under_policy(mdp, W)
print("policy mixture vs matrix mixture:", np.abs(P_mix.toarray() - P_bar.toarray()).max())
