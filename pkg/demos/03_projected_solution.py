"""Linear value approximation: the projected fixed point and its certificates.

With features phi and a weighting eps over states, the projected Bellman
equation reduces to a small linear system Z r = d. We assemble it, solve it
two ways and check the conditions under which the iteration converges.
"""
import numpy as np

from perturbed_td.exact import evaluate_policy_exact, stationary_distribution
from perturbed_td.mdp import transition_under_policy
from perturbed_td.perturbation import PerturbationSpec, perturb_transition
from perturbed_td.projection import (assemble_projected_system, certificate_iteration_spectrum,
                                     certificate_positive_definite, iterate_projected,
                                     project_value, solve_direct)
from perturbed_td.resource import ResourceSpec, build_mdp, feature_matrix, target_policy

np.set_printoptions(precision=5, suppress=True)

spec = ResourceSpec(N=2, c=(0.8, 0.9), lam=(0.3, 0.2), mu=(0.4, 0.5))
mdp = build_mdp(spec)
phi = feature_matrix(spec)          # constant column plus the two occupancies
P = transition_under_policy(mdp, target_policy(spec, "random", mdp))

# weights come from a behavior chain that mixes P with exploration
Q = transition_under_policy(mdp, np.full((mdp.n_states, 2), 0.5))
P_bar = perturb_transition(P, PerturbationSpec.uniform(0.9, Q))
eps_bar = stationary_distribution(P_bar)

system = assemble_projected_system(phi, eps_bar, P, mdp.reward, 0.9)
print(system.to_text())

r = solve_direct(system)
print("direct solve       r =", r)
traj = iterate_projected(system, np.zeros(3), 300)
print("after 300 steps    r =", traj[-1], " gap", np.linalg.norm(traj[-1] - r))

print()
print(certificate_positive_definite(eps_bar, P, 0.9).to_text("pd"), end="")
print(certificate_iteration_spectrum(system).to_text(), end="")

# the approximation next to the true value of the target policy
J = evaluate_policy_exact(P, mdp.reward, 0.9)
_, best_fit = project_value(J, phi, eps_bar)
print("\n  J        ", J)
print("  phi r    ", phi.values @ r)
print("  best fit ", best_fit)

# a deliberately bad weighting breaks positive definiteness
swap = np.array([[0.0, 1.0], [1.0, 0.0]])
bad = certificate_positive_definite([0.999, 0.001], swap, 0.99)
print("\nadversarial weights: min eigenvalue", round(bad.min_eigenvalue, 4), "holds", bad.holds)
