"""Exact solution of a small admission-control MDP.

Two price classes share two units of capacity. The action says which class
may receive an arrival this slot. We solve for the optimal revenue with value
iteration and then check the answer with a direct linear solve.
"""
import numpy as np

from perturbed_td.exact import (evaluate_policy_exact, norm_condition_check,
                                stationary_distribution, value_iteration)
from perturbed_td.mdp import is_regular, transition_under_policy
from perturbed_td.resource import ResourceSpec, build_mdp, enumerate_states

np.set_printoptions(precision=4, suppress=True)

spec = ResourceSpec(N=2, c=(0.8, 0.9), lam=(0.3, 0.2), mu=(0.4, 0.5), discount=0.9)
states = enumerate_states(spec.m, spec.N)
mdp = build_mdp(spec, states)

# the action-0 matrix: class 1 is offered, class 2 only drains
print("P(class 1 offered):")
print(mdp.transitions[0].toarray())

J, policy, report = value_iteration(mdp)
print("\nvalue iteration:", report)
for x, v, u in zip(states.states, J, policy):
    print(f"  x={tuple(x)}  J*={v:7.4f}  offer class {u + 1}")

# J* must be the value of the policy it induces
P_star = transition_under_policy(mdp, policy)
J_check = evaluate_policy_exact(P_star, mdp.reward, spec.discount)
print("\nmax |J* - J_policy| =", np.abs(J - J_check).max())

# the optimal chain here is not regular, so it has no unique stationary law
print("optimal chain:", is_regular(P_star).diagnosis)
uniform = transition_under_policy(mdp, np.full((len(states), spec.m), 0.5))
print("uniform-random chain:", is_regular(uniform).diagnosis)
print("its stationary distribution:", stationary_distribution(uniform))

# how far apart are the action matrices, row by row?
print()
print(norm_condition_check(mdp).to_text(), end="")
