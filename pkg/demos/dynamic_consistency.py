"""Time consistency of stage families and preservation of worst portfolios
across stages, including what the harness does with an invalid candidate."""

import numpy as np

from dynrisk import (
    EntropicUtility,
    StoppingTime,
    UtilityProcess,
    dyadic_uniform,
    entropic_process,
    time_consistency_check,
    verify_preservation,
)
from dynrisk.random_gen import preservation_instance

sp = dyadic_uniform(2)

# one entropic stage per time with a common alpha: the dynamic-programming
# recursion holds at every enumerated stopping time
up = entropic_process(sp, alpha=1.0)
rep = time_consistency_check(up, sample_count=4, seed=11)
print("entropic process consistent:", rep.passed)
print(f"   {rep.checked} (t, theta, sample) checks, worst residual {rep.max_residual:.2e}, {rep.stopping_times}")

# a single residual, spelled out: cut a position at a genuine stopping time
theta = StoppingTime(sp, [1, 1, 2, 2])
from dynrisk.random_gen import random_adapted

X = random_adapted(sp, 0, 2, np.random.default_rng(3))
print("one-step residual at theta:", up.consistency_residual(0, theta, X))

# mixing alphas across stages breaks the recursion immediately
mixed = UtilityProcess({0: EntropicUtility(sp, 0.5, 0), 1: EntropicUtility(sp, 2.0, 1), 2: EntropicUtility(sp, 2.0, 2)})
rep = time_consistency_check(mixed, sample_count=4, seed=11)
print("mixed-alpha process consistent:", rep.passed, f"(worst residual {rep.max_residual:.3f})")
print("   first failure:", rep.failures[0])

# preservation: a candidate certified worst at stage 0 stays worst at every
# later stage, with the hypotheses re-verified inside the run
for variant in ("thm33", "thm42", "thm32"):
    hyp, up, cand = preservation_instance(np.random.default_rng(42), variant)
    rep = verify_preservation(hyp, up, cand)
    stages = ", ".join(f"t={c.t}:{c.residual:.1e}" for c in rep.stage_checks)
    print(f"{variant}: passed={rep.passed} skipped={rep.skipped}  [{stages}]")

# feeding a random (non-worst) candidate: the harness refuses to conclude
from dynrisk import AdaptedWorstProcess, Portfolio, normalized_scenario_process
from dynrisk.random_gen import random_density

a = random_density(sp, 0, 2, np.random.default_rng(75), strict=True)
up = normalized_scenario_process(sp, a)
bogus = AdaptedWorstProcess.from_restrictions(Portfolio([random_adapted(sp, 0, 2, np.random.default_rng(76))]))
from dynrisk import build_preservation_hypotheses

rep = verify_preservation(build_preservation_hypotheses(up, "thm33"), up, bogus)
print("random candidate: skipped =", rep.skipped)
print("   ", [n for n in rep.notes if "worst" in n][0])
