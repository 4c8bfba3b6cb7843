"""Monetary utility functions on a window, their insurance versions and checkers.

Three families are implemented: finite dual representations (a list of
scenario densities with penalties), entropic certainty equivalents, and the
robust entropic variant taking a worst case over terminal densities.  The
insurance version of any of them is X -> -phi(-X).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lp
from .processes import (
    AdaptedProcess,
    DensityProcess,
    TerminalDensity,
    membership,
    pairing,
    remaining_mass,
)
from .space import (
    DEFAULT_TOL,
    NEG_INF,
    ConditionalValue,
    FiniteFilteredSpace,
    StoppingTime,
    cond_expect,
    enumerate_events,
    enumerate_stopping_times,
    ess_sup_family,
)


class UtilityBase:
    """Common window plumbing; subclasses provide evaluate()."""

    def __init__(self, space: FiniteFilteredSpace, t_start: int, t_end: int):
        if not 0 <= t_start <= t_end <= space.horizon:
            raise ValueError(f"window [{t_start}, {t_end}] outside [0, {space.horizon}]")
        self.space = space
        self.t_start = t_start
        self.t_end = t_end

    @property
    def window(self) -> tuple[int, int]:
        return (self.t_start, self.t_end)

    def _check_position(self, X: AdaptedProcess) -> None:
        if X.space is not self.space:
            raise ValueError("position lives on a different space")
        if X.t_start > self.t_start or X.t_end < self.t_end:
            raise ValueError(f"position window {X.window} does not contain {self.window}")

    def evaluate(self, X: AdaptedProcess) -> ConditionalValue:
        raise NotImplementedError

    def insurance(self, X: AdaptedProcess) -> ConditionalValue:
        """The insurance version -phi(-X)."""
        return -self.evaluate(-X)


class DualFiniteUtility(UtilityBase):
    """phi(X) = min over scenarios of (pairing(X, a_i) - gamma_i).

    Scenarios carry densities normalized on the window and penalties in
    [-inf, 0] whose atom-wise maximum is zero.  gamma identically zero means
    the utility is coherent (a max of linear functionals).
    """

    def __init__(
        self,
        space: FiniteFilteredSpace,
        t_start: int,
        t_end: int,
        scenarios: Sequence[tuple[DensityProcess, ConditionalValue]],
        validate: bool = True,
    ):
        super().__init__(space, t_start, t_end)
        scenarios = [(a, g) for a, g in scenarios]
        if not scenarios:
            raise ValueError("need at least one scenario")
        for i, (a, g) in enumerate(scenarios):
            if a.space is not space or a.t_start > t_start or a.t_end < t_end:
                raise ValueError(f"scenario {i} density window {a.window} does not cover {self.window}")
            if g.space is not space or g.time != t_start:
                raise ValueError(f"scenario {i} penalty must live at t={t_start}")
            if validate:
                window = [a.slice_at(s) for s in range(t_start, t_end + 1)]
                ok, diag = membership(DensityProcess(space, t_start, window), "D", t_start)
                if not ok:
                    raise ValueError(f"scenario {i} not a density on the window: {diag}")
                if np.any(g.values > 1e-12):
                    raise ValueError(f"scenario {i} penalty takes a positive value")
        self.scenarios = scenarios
        if validate:
            gmax = ess_sup_family([g for _, g in scenarios])
            if np.any(np.abs(gmax.values) > 1e-9):
                raise ValueError("penalties are not normalized: atom-wise max gamma must be 0")

    @property
    def coherent(self) -> bool:
        return all(np.all(g.values == 0.0) for _, g in self.scenarios)

    def gamma_norm(self) -> float:
        """Largest finite penalty magnitude (0 when all are 0 or -inf)."""
        vals = [abs(v) for _, g in self.scenarios for v in g.values if np.isfinite(v)]
        return max(vals, default=0.0)

    def _scenario_values(self, X: AdaptedProcess) -> np.ndarray:
        """Row i holds pairing(X, a_i) per atom of the window start."""
        self._check_position(X)
        return np.stack([pairing(X, a, self.t_start, self.t_end).values for a, _ in self.scenarios])

    def evaluate(self, X: AdaptedProcess) -> ConditionalValue:
        pair = self._scenario_values(X)
        gam = np.stack([g.values for _, g in self.scenarios])
        # -(-inf) penalties knock a scenario out of the min
        cand = np.where(np.isneginf(gam), np.inf, pair - gam)
        return ConditionalValue(self.space, self.t_start, cand.min(axis=0))

    def insurance(self, X: AdaptedProcess) -> ConditionalValue:
        pair = self._scenario_values(X)
        gam = np.stack([g.values for _, g in self.scenarios])
        cand = np.where(np.isneginf(gam), NEG_INF, pair + gam)
        return ConditionalValue(self.space, self.t_start, cand.max(axis=0))


class EntropicUtility(UtilityBase):
    """Conditional certainty equivalent of exponential utility; only the
    terminal slice of the position matters."""

    def __init__(self, space: FiniteFilteredSpace, alpha: float, t_start: int, t_end: int | None = None):
        super().__init__(space, t_start, space.horizon if t_end is None else t_end)
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.alpha = float(alpha)

    def evaluate(self, X: AdaptedProcess) -> ConditionalValue:
        self._check_position(X)
        order, starts, seg, w_ord, wsum = self.space.atom_layout(self.t_start)
        # segmented logsumexp anchored at each atom's max
        z = -self.alpha * X.slice_at(self.t_end)[order]
        m = np.maximum.reduceat(z, starts)
        s = np.add.reduceat(w_ord * np.exp(z - m[seg]), starts)
        out = -(m + np.log(s) - np.log(wsum)) / self.alpha
        return ConditionalValue(self.space, self.t_start, out)


class RobustEntropicUtility(UtilityBase):
    """Worst-case entropic value over a finite family of terminal densities."""

    def __init__(
        self,
        space: FiniteFilteredSpace,
        alpha: float,
        densities: Sequence[TerminalDensity],
        t_start: int,
        t_end: int | None = None,
    ):
        super().__init__(space, t_start, space.horizon if t_end is None else t_end)
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        if not densities:
            raise ValueError("need at least one terminal density")
        self.alpha = float(alpha)
        self.densities = list(densities)

    def evaluate(self, X: AdaptedProcess) -> ConditionalValue:
        self._check_position(X)
        order, starts, seg, _, _ = self.space.atom_layout(self.t_start)
        z = -self.alpha * X.slice_at(self.t_end)[order]
        m = np.maximum.reduceat(z, starts)
        e = np.exp(z - m[seg])
        rows = []
        for f in self.densities:
            w = (self.space.probs * f.h)[order]
            s = np.add.reduceat(w * e, starts)
            rows.append(-(m + np.log(s) - np.log(np.add.reduceat(w, starts))) / self.alpha)
        return ConditionalValue(self.space, self.t_start, np.stack(rows).min(axis=0))


def penalty(
    u: DualFiniteUtility,
    a: DensityProcess,
    bound: float | None = None,
    solver: str = "highs",
) -> ConditionalValue:
    """Smallest billing of an acceptable position against a, per window-start atom.

    One linear program per atom of the window start, over the adapted degrees
    of freedom inside that atom; the box-escalation wrapper reports -inf for
    atoms where the infimum is unbounded.
    """
    if not isinstance(u, DualFiniteUtility):
        raise TypeError("penalty evaluation needs an explicit finite scenario set")
    if a.space is not u.space or a.t_start > u.t_start or a.t_end < u.t_end:
        raise ValueError(f"density window {a.window} does not cover {u.window}")
    space = u.space
    t, T = u.t_start, u.t_end
    if bound is None:
        bound = 1e6 * max(1.0, u.gamma_norm())
    solve = lp.solve_box_lp_highs if solver == "highs" else lp.solve_box_lp_vertices

    out = np.empty(space.n_atoms(t))
    for k, atom in enumerate(space.atoms(t)):
        variables = []  # (time, tuple of outcome indices inside this atom)
        inside = set(atom)
        for s in range(t, T + 1):
            for sub in space.atoms(s):
                if sub[0] in inside:
                    variables.append((s, sub))
        p_atom = space.probs[list(atom)].sum()

        def coeffs(dens: DensityProcess) -> np.ndarray:
            c = np.empty(len(variables))
            for v, (s, sub) in enumerate(variables):
                idx = list(sub)
                c[v] = float(space.probs[idx] @ dens.slice_at(s)[idx]) / p_atom
            return c

        c = coeffs(a)
        G, h = [], []
        for a_i, g_i in u.scenarios:
            rhs = g_i.values[k]
            if np.isneginf(rhs):
                continue
            G.append(coeffs(a_i))
            h.append(rhs)
        if G:
            G_arr, h_arr = np.array(G), np.array(h)
        else:
            G_arr, h_arr = np.zeros((0, len(variables))), np.zeros(0)
        val, _ = lp.minimize_with_escalation(solve, c, G_arr, h_arr, bound)
        if np.isfinite(val) and val > 1e-7 * max(1.0, bound / 1e6):
            raise RuntimeError(
                f"penalty came out positive ({val:.3g}) on atom {atom}; zero must be feasible"
            )
        out[k] = val
    return ConditionalValue(space, t, out)


def argmax_density(
    u: DualFiniteUtility, X: AdaptedProcess, tol: float = DEFAULT_TOL
) -> tuple[DensityProcess, ConditionalValue, bool]:
    """Scenario density attaining the insurance value, glued across atoms.

    Per window-start atom the best scenario is selected (first index on
    ties) and the increments are mixed by indicators; the glued density
    stays normalized because the mixing events are measurable at the start.
    """
    value = u.insurance(X)
    pair = u._scenario_values(X)
    gam = np.stack([g.values for _, g in u.scenarios])
    cand = np.where(np.isneginf(gam), NEG_INF, pair + gam)
    best = cand.argmax(axis=0)  # first maximizer wins

    t, T = u.t_start, u.t_end
    atom_of = u.space.atom_index(t)
    incs = np.empty((T - t + 1, u.space.n_outcomes))
    glued_gamma = np.empty(u.space.n_atoms(t))
    for k in range(u.space.n_atoms(t)):
        i = int(best[k])
        a_i, g_i = u.scenarios[i]
        cols = atom_of == k
        for s in range(t, T + 1):
            incs[s - t, cols] = a_i.slice_at(s)[cols]
        glued_gamma[k] = g_i.values[k]
    a_star = DensityProcess(u.space, t, incs)

    check = pairing(X, a_star, t, T) + ConditionalValue(u.space, t, glued_gamma)
    if check.max_residual(value) > 1e-9:
        raise RuntimeError("glued density does not reproduce the insurance value")
    attained = any(a_star.approx_eq(DensityProcess(u.space, t, [a.slice_at(s) for s in range(t, T + 1)]), tol)
                   for a, _ in u.scenarios)
    return a_star, value, attained


@dataclass
class AxiomResult:
    passed: bool | None
    samples: int = 0
    counterexample: str | None = None
    note: str | None = None


@dataclass
class AxiomReport:
    seed: int
    results: dict[str, AxiomResult] = field(default_factory=dict)

    def passed(self, *axioms: str) -> bool:
        return all(self.results[a].passed for a in axioms)


def _sample_events(space: FiniteFilteredSpace, t: int, rng) -> list[np.ndarray]:
    if space.n_atoms(t) <= 8:
        return enumerate_events(space, t)
    masks = []
    for _ in range(32):
        picks = rng.random(space.n_atoms(t)) < 0.5
        masks.append(picks[space.atom_index(t)])
    return masks


def check_axioms(
    u: UtilityBase,
    sample_count: int = 20,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    relevance_eps: Sequence[float] = (1.0, 0.1, 0.01),
) -> AxiomReport:
    """Sampled verification of the utility axioms on the unit's window.

    Locality, monotonicity, cash invariance, concavity and coherence are
    tested on seeded random positions; relevance on every atom at every time
    with a small grid of loss sizes.  Continuity for bounded decreasing
    sequences holds vacuously on a finite space and is reported untested.
    """
    from .random_gen import random_adapted, random_conditional

    rng = np.random.default_rng(seed)
    space, t, T = u.space, u.t_start, u.t_end
    report = AxiomReport(seed=seed)
    draws = [random_adapted(space, t, T, rng) for _ in range(sample_count)]

    # (0) locality over window-start events
    res = AxiomResult(True, 0)
    for X in draws:
        for mask in _sample_events(space, t, rng):
            res.samples += 1
            lhs = u.evaluate(X.indicator(mask))
            base = u.evaluate(X).values
            atom_in = np.array([bool(mask[atom[0]]) for atom in space.atoms(t)])
            want = np.where(atom_in, base, 0.0)
            if np.abs(lhs.values - want).max() > tol:
                res.passed = False
                res.counterexample = f"event of size {int(mask.sum())}, residual {np.abs(lhs.values - want).max():.3g}"
                break
        if not res.passed:
            break
    report.results["locality"] = res

    # (1) monotonicity
    res = AxiomResult(True, 0)
    for X in draws:
        bump = random_adapted(space, t, T, rng)
        Y = X + AdaptedProcess(space, t, np.abs(bump.values))
        res.samples += 1
        gap = (u.evaluate(X).values - u.evaluate(Y).values).max()
        if gap > tol:
            res.passed = False
            res.counterexample = f"phi(X) exceeds phi(Y) by {gap:.3g} despite X <= Y"
            break
    report.results["monotonicity"] = res

    # (2) cash invariance with measurable shifts
    res = AxiomResult(True, 0)
    for X in draws:
        m = random_conditional(space, t, rng, -2.0, 2.0)
        res.samples += 1
        lhs = u.evaluate(X.shift_by(m))
        rhs = u.evaluate(X) + m
        if lhs.max_residual(rhs) > tol:
            res.passed = False
            res.counterexample = f"shift residual {lhs.max_residual(rhs):.3g}"
            break
    report.results["cash_invariance"] = res

    # (3) concavity with measurable weights
    res = AxiomResult(True, 0)
    for X in draws:
        Y = random_adapted(space, t, T, rng)
        lam = random_conditional(space, t, rng, 0.0, 1.0)
        mix = X.scale_by(lam) + Y.scale_by(ConditionalValue(space, t, 1.0 - lam.values))
        res.samples += 1
        lhs = u.evaluate(mix).values
        rhs = lam.values * u.evaluate(X).values + (1.0 - lam.values) * u.evaluate(Y).values
        if (rhs - lhs).max() > tol:
            res.passed = False
            res.counterexample = f"concavity violated by {(rhs - lhs).max():.3g}"
            break
    report.results["concavity"] = res

    # (4) coherence: positive homogeneity with measurable factors
    res = AxiomResult(True, 0)
    for X in draws:
        for lam in [ConditionalValue.constant(space, t, 2.0),
                    ConditionalValue.constant(space, t, 0.5),
                    random_conditional(space, t, rng, 0.0, 3.0)]:
            res.samples += 1
            lhs = u.evaluate(X.scale_by(lam))
            rhs = lam.values * u.evaluate(X).values
            gap = np.abs(lhs.values - rhs).max()
            if gap > tol:
                res.passed = False
                res.counterexample = (
                    f"scaling by {np.array2string(lam.values, precision=3)} moves the value by {gap:.3g}"
                )
                break
        if not res.passed:
            break
    report.results["coherence"] = res

    # (5) continuity: nothing to test on a finite space
    report.results["continuity"] = AxiomResult(None, note="vacuous on finite spaces")

    # (6) relevance: losses on any atom at any time must register
    res = AxiomResult(True, 0)
    for s in range(t, T + 1):
        for atom in space.atoms(s):
            mask = np.zeros(space.n_outcomes, dtype=bool)
            mask[list(atom)] = True
            for eps in relevance_eps:
                vals = np.zeros((T - t + 1, space.n_outcomes))
                for r in range(s, T + 1):
                    vals[r - t] = -eps * mask
                X = AdaptedProcess(space, t, vals)
                res.samples += 1
                lifted = u.evaluate(X).lift()
                if np.any(lifted[mask] >= 0):
                    res.passed = False
                    res.counterexample = f"loss of {eps} on atom {atom} at t={s} not priced below zero"
                    break
            if not res.passed:
                break
        if not res.passed:
            break
    report.results["relevance"] = res
    return report


class UtilityProcess:
    """One utility per stage t in [start, T], all ending at the same horizon."""

    def __init__(self, stages: dict[int, UtilityBase]):
        if not stages:
            raise ValueError("empty utility process")
        times = sorted(stages)
        first = stages[times[0]]
        self.space = first.space
        self.t_end = first.t_end
        for t in times:
            st = stages[t]
            if st.space is not self.space or st.t_start != t or st.t_end != self.t_end:
                raise ValueError(f"stage {t} has window {st.window}, expected ({t}, {self.t_end})")
        if times != list(range(times[0], times[-1] + 1)):
            raise ValueError("stages must cover a contiguous range")
        if times[-1] != self.t_end:
            raise ValueError("the last stage must sit at the common horizon")
        self.t_start = times[0]
        self.stages = dict(stages)

    def stage(self, t: int) -> UtilityBase:
        return self.stages[t]

    def evaluate_at_stopping(self, theta: StoppingTime, X: AdaptedProcess) -> np.ndarray:
        """Outcome-indexed value of the stage picked by the stopping time.

        Realizes the sum over t of phi_t(1_{theta=t} X), glued along the
        level sets of theta.
        """
        if theta.min_value() < self.t_start or theta.max_value() > self.t_end:
            raise ValueError("stopping time leaves the stage range")
        out = np.zeros(X.space.n_outcomes)
        for t in range(theta.min_value(), theta.max_value() + 1):
            level = theta.values == t
            if not level.any():
                continue
            # {theta == t} is a time-t event by construction, so the cut
            # position can skip the indicator's measurability check
            piece = AdaptedProcess._wrap(X.space, t, X.values[X._index(t):] * level[None, :])
            val = self.stage(t).evaluate(piece).lift()
            out[level] = val[level]
        return out

    def _folded_value(self, t: int, theta: StoppingTime, X: AdaptedProcess, v: np.ndarray) -> ConditionalValue:
        """phi_t of X frozen at theta and continued by the glued value v."""
        rows = X.values[X._index(t):X._index(self.t_end) + 1]
        srange = np.arange(t, self.t_end + 1)[:, None]
        vals = np.where(srange < theta.values[None, :], rows, v[None, :])
        return self.stage(t).evaluate(AdaptedProcess._wrap(self.space, t, vals))

    def consistency_residual(self, t: int, theta: StoppingTime, X: AdaptedProcess) -> float:
        """Gap in the one-step dynamic-programming identity at (t, theta)."""
        v = self.evaluate_at_stopping(theta, X)
        lhs = self._folded_value(t, theta, X, v)
        rhs = self.stage(t).evaluate(X.restrict(t))
        return lhs.max_residual(rhs)


@dataclass
class ConsistencyReport:
    passed: bool
    max_residual: float
    checked: int
    failures: list[str]
    stopping_times: str


def time_consistency_check(
    up: UtilityProcess,
    samples: Sequence[AdaptedProcess] | None = None,
    sample_count: int = 5,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    exhaustive_limit: tuple[int, int] = (8, 3),
) -> ConsistencyReport:
    """Test the recursion phi_t(X) = phi_t(X before theta, then phi_theta(X)).

    Stopping times are enumerated exhaustively on small spaces, otherwise the
    deterministic ones are used; the report also confirms that the glued
    stopping-time evaluation collapses to the stage value at deterministic
    times.
    """
    from .random_gen import random_adapted

    space = up.space
    if samples is None:
        rng = np.random.default_rng(seed)
        samples = [random_adapted(space, up.t_start, up.t_end, rng) for _ in range(sample_count)]
    exhaustive = space.n_outcomes <= exhaustive_limit[0] and space.horizon <= exhaustive_limit[1]
    mode = "all" if exhaustive else "deterministic-only"

    worst = 0.0
    checked = 0
    failures: list[str] = []
    # the glued value phi_theta(X) does not depend on t, so it is cached
    # across the nested loops; the rhs only depends on (t, X)
    glue_cache: dict[bytes, list[np.ndarray]] = {}
    for t in range(up.t_start, up.t_end + 1):
        if exhaustive:
            thetas = enumerate_stopping_times(space, t_low=t)
            thetas = [th for th in thetas if th.max_value() <= up.t_end]
        else:
            thetas = [StoppingTime.constant(space, s) for s in range(t, up.t_end + 1)]
        rhs = [up.stage(t).evaluate(X.restrict(t)) for X in samples]
        for theta in thetas:
            key = theta.values.tobytes()
            glued = glue_cache.get(key)
            if glued is None:
                glued = [up.evaluate_at_stopping(theta, X) for X in samples]
                glue_cache[key] = glued
            for idx, X in enumerate(samples):
                res = up._folded_value(t, theta, X, glued[idx]).max_residual(rhs[idx])
                worst = max(worst, res)
                checked += 1
                if res > tol:
                    failures.append(f"t={t}, theta={theta.values.tolist()}, sample {idx}: residual {res:.3g}")
    # stage collapse at deterministic times
    for s in range(up.t_start, up.t_end + 1):
        theta = StoppingTime.constant(space, s)
        for idx, X in enumerate(samples):
            glued = up.evaluate_at_stopping(theta, X)
            direct = up.stage(s).evaluate(X.restrict(s)).lift()
            res = float(np.abs(glued - direct).max())
            worst = max(worst, res)
            checked += 1
            if res > tol:
                failures.append(f"deterministic tau={s}, sample {idx}: glue residual {res:.3g}")
    return ConsistencyReport(not failures, worst, checked, failures, mode)


def entropic_process(space: FiniteFilteredSpace, alpha: float, start: int = 0) -> UtilityProcess:
    return UtilityProcess({t: EntropicUtility(space, alpha, t) for t in range(start, space.horizon + 1)})


def robust_entropic_process(
    space: FiniteFilteredSpace, alpha: float, densities: Sequence[TerminalDensity], start: int = 0
) -> UtilityProcess:
    return UtilityProcess(
        {t: RobustEntropicUtility(space, alpha, densities, t) for t in range(start, space.horizon + 1)}
    )


def normalize_to_window(a: DensityProcess, t: int, t_end: int | None = None) -> DensityProcess:
    """Rescale the tail of a so its conditional mass on [t, t_end] is one."""
    if t_end is None:
        t_end = a.t_end
    mass = remaining_mass(a, t, t_end)
    if np.any(mass.values <= 1e-12):
        raise ValueError(f"no remaining mass on some atom at t={t}; cannot normalize")
    incs = np.stack([a.slice_at(s) for s in range(t, t_end + 1)]) / mass.lift()[None, :]
    return DensityProcess(a.space, t, incs)


def normalized_scenario_process(space: FiniteFilteredSpace, a: DensityProcess, start: int = 0) -> UtilityProcess:
    """Coherent single-scenario stages phi_t(X) = pairing(X, a)/mass on [t, T].

    The driving density must keep strictly positive conditional mass at every
    stage (guaranteed on the strictly-positive-tail class).
    """
    stages: dict[int, UtilityBase] = {}
    for t in range(start, a.t_end + 1):
        scen = normalize_to_window(a, t)
        zero = ConditionalValue.constant(space, t, 0.0)
        stages[t] = DualFiniteUtility(space, t, a.t_end, [(scen, zero)])
    return UtilityProcess(stages)


@dataclass
class PenaltyConsistencyReport:
    residuals: list[tuple[int, np.ndarray]]  # (scenario index at stage t, per-atom gap LHS-RHS)
    max_abs_residual: float


def penalty_consistency_check(
    up: UtilityProcess, t: int, s: int, solver: str = "highs"
) -> PenaltyConsistencyReport:
    """Compare the stage-t penalty with its splice-and-condition decomposition.

    For every scenario a at stage t, evaluates the stage-t penalty of a
    against the best splice of a with a stage-s scenario at theta = s, plus
    the conditioned stage-s penalty of a's tail.  Residuals are reported,
    not asserted.
    """
    from .processes import concatenate

    if not (up.t_start <= t <= s <= up.t_end):
        raise ValueError("need start <= t <= s <= horizon")
    ut = up.stage(t)
    us = up.stage(s)
    if not isinstance(ut, DualFiniteUtility) or not isinstance(us, DualFiniteUtility):
        raise TypeError("penalty decomposition needs finite scenario sets at both stages")
    theta = StoppingTime.constant(up.space, s)
    omega = np.ones(up.space.n_outcomes, dtype=bool)

    rows = []
    worst = 0.0
    for i, (a, _) in enumerate(ut.scenarios):
        lhs = penalty(ut, a, solver=solver)
        spliced_vals = []
        for b, _ in us.scenarios:
            b_ext = b.extend_to(a.t_start) if b.t_start > a.t_start else b
            d = concatenate(a, b_ext, theta, omega)
            spliced_vals.append(penalty(ut, d, solver=solver))
        best = ess_sup_family(spliced_vals)
        tail_pen = penalty(us, a.restrict(s), solver=solver)
        rhs = best + cond_expect(up.space, tail_pen.lift(), t)
        gap = np.where(
            np.isneginf(lhs.values) & np.isneginf(rhs.values), 0.0, lhs.values - rhs.values
        )
        rows.append((i, gap))
        finite = gap[np.isfinite(gap)]
        if finite.size:
            worst = max(worst, float(np.abs(finite).max()))
        if np.any(~np.isfinite(gap)):
            worst = float("inf")
    return PenaltyConsistencyReport(rows, worst)
