"""Splicing densities at stopping times, pasting terminal densities, and
checking whether a finite family is closed under both operations."""

import numpy as np

from dynrisk import (
    DensityProcess,
    StoppingTime,
    TerminalDensity,
    concatenate,
    dyadic_uniform,
    m1_closure,
    membership,
    paste,
    stability_check,
)

sp = dyadic_uniform(2)

a = DensityProcess(sp, 0, [[0.2, 0.2, 0.2, 0.2], [0.3, 0.3, 0.5, 0.5], [0.5, 0.5, 0.3, 0.3]])
b = DensityProcess(sp, 0, [[0.1, 0.1, 0.1, 0.1], [0.4, 0.4, 0.2, 0.2], [0.5, 0.5, 0.7, 0.7]])

for name, d in (("a", a), ("b", b)):
    for kind in ("A1plus", "D", "De"):
        ok, diag = membership(d, kind)
        print(f"{name} in {kind}: {ok}" + (f" ({diag})" if diag else ""))

# splice: follow a, then continue along b from time 1 on the up branch only
theta = StoppingTime.constant(sp, 1)
event = np.array([True, True, False, False])
c = concatenate(a, b, theta, event)
print("spliced increments:\n", c.values)
print("spliced process still in D:", membership(c, "D")[0])
# self-splicing is the identity
print("concat(a, a) == a:", concatenate(a, a, theta, event).approx_eq(a, 1e-12))

# terminal densities: pasting reweights g so conditional masses match f
f = TerminalDensity(sp, [1.6, 0.8, 0.8, 0.8])
g = TerminalDensity(sp, [0.5, 1.5, 1.0, 1.0])
h = paste(f, g, 1, event)
print("paste(f, g) on the up branch:", h.h, " mean:", sp.expect(h.h))

# the pair {f, g} is not closed under pasting; the fixpoint closure is small
rep = stability_check([f, g], "m1")
print("pair m1-stable:", rep.stable, "| first missing element:", None if rep.stable else rep.missing.h)
closed = m1_closure([f, g])
print("pasting closure has", len(closed), "elements:")
for d in closed:
    print("   ", d.h)
print("closure m1-stable:", stability_check(closed, "m1").stable)

# a singleton is always stable under concatenation: splicing a with itself
rep = stability_check([a], "concatenation")
print("singleton concat-stable:", rep.stable, f"({rep.generated} splices tried, {rep.stopping_times})")
