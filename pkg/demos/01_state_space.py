"""How fast the resource-allocation state space grows.

Each state is a vector of occupancy counts, one per price class, whose sum
is at most the capacity N. There are C(N + m, m) of them.
"""
from math import comb

from perturbed_td.resource import StateIndex, enumerate_states, state_count

# the six sizes usually quoted to make the point
for m, N in [(2, 10), (3, 20), (5, 20), (6, 20), (4, 50), (5, 50)]:
    print(f"m={m}  N={N:>2}  |X| = {state_count(m, N):>9,}")

# closed form and enumeration agree
S = enumerate_states(4, 20)
print("\nm=4, N=20:", len(S), "states;", "closed form", comb(24, 4))

# states are ordered by total occupancy, then lexicographically
small = StateIndex(2, 2)
print("\nm=2, N=2 ordering:")
print(small.to_csv(), end="")

# index <-> state round trip
x = (3, 5, 0, 2)
i = S.index(x)
print(f"\nstate {x} has index {i}; index {i} is state {S.state(i)}")

# at m=40, N=400 the count no longer fits in 64 bits; Python ints don't care
print("\nm=40, N=400:", state_count(40, 400))
