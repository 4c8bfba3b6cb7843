"""Walk through the basic objects: a filtered tree, conditional values,
stopping times, adapted processes and the billing pairing."""

import numpy as np

from dynrisk import (
    AdaptedProcess,
    DensityProcess,
    FiniteFilteredSpace,
    StoppingTime,
    cond_expect,
    dyadic_uniform,
    enumerate_stopping_times,
    pairing,
    remaining_mass,
)

# a four-outcome binary tree, uniform probabilities, two steps of information
sp = dyadic_uniform(2)
print(sp)
for t in range(sp.horizon + 1):
    print(f"  atoms at t={t}:", sp.atoms(t))

# conditional expectation collapses outcome vectors onto atoms
y = np.array([4.0, 0.0, 1.0, 3.0])
for t in range(sp.horizon + 1):
    print(f"E[y | F_{t}] =", cond_expect(sp, y, t).values)

# the same machinery on a non-uniform, non-dyadic tree
sp2 = FiniteFilteredSpace(
    [0.2, 0.3, 0.1, 0.4],
    [[(0, 1, 2, 3)], [(0, 1), (2, 3)], [(0,), (1,), (2, 3)]],
)
print(sp2, "E[y|F_1] =", cond_expect(sp2, y, 1).values)

# every stopping time on the small tree, built level by level
thetas = enumerate_stopping_times(sp)
print(len(thetas), "stopping times on the dyadic tree, e.g.", thetas[:3])

theta = StoppingTime(sp, [1, 1, 2, 2])  # stop early on the up branch
print("chosen stopping time:", theta)

# an adapted position and a billing density on the full window
X = AdaptedProcess(sp, 0, [[1.0, 1.0, 1.0, 1.0], [2.0, 2.0, 0.0, 0.0], [3.0, 1.0, 0.0, 4.0]])
a = DensityProcess(sp, 0, [[0.2, 0.2, 0.2, 0.2], [0.3, 0.3, 0.5, 0.5], [0.5, 0.5, 0.3, 0.3]])

print("remaining mass from 0:", remaining_mass(a, 0).values)     # starts at 1
print("remaining mass from 1:", remaining_mass(a, 1).values)     # what is left
print("billing <X, a> at t=0:", pairing(X, a, 0).values)
print("billing <X, a> at t=1:", pairing(X, a, 1).values)

# restriction and shift behave like the usual window operations
print("X restricted to [1,2]:", X.restrict(1).window, "sup norm", X.restrict(1).sup_norm())
print("X + 0.5 at t=0:", X.shift_by(0.5).slice_at(0))
