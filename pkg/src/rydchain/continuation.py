"""Branch tracking in the inter-chain coupling and bifurcation locators.

Natural-parameter continuation: the root at the previous coupling value seeds
Newton at the next one, with failure-driven step halving down to a floor.
Bisection locators then pin the Hopf point (leading complex pair of the af2
root crossing the axis), the subcritical pitchfork (af2 stability flip
coinciding with the disappearance of the non-uniform roots) and the merge of
the af2 root pair into the uniform root.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cycles import classify_attractor
from .dynamics import initial_state
from .lattice import ModelParams, UnitCell, build_unit_cell
from .steady import (DEDUP_TOL, FixedPoint, SolutionCensus, census, eigenvalues,
                     jacobian, newton_solve, uniform_scalar_roots, _pattern_seed)

STEP_MIN = 1e-4
DEFAULT_RESOLUTION = 1e-4
IM_TOL = 1e-3
PITCHFORK_AGREE_TOL = 5e-3


class ContinuationError(RuntimeError):
    """Branch tracking or event location could not complete as requested."""


@dataclass
class System:
    """Parameter family: the same drive with a variable inter-chain coupling."""

    params: ModelParams
    rows: int = 2
    cols: int = 2

    def at(self, v_inter: float):
        p = self.params.with_v_inter(v_inter)
        return build_unit_cell(self.rows, self.cols, p), p

    def solve(self, v_inter: float, seed_state) -> FixedPoint | None:
        cell, p = self.at(v_inter)
        return newton_solve(seed_state, cell, p)

    def uniform_root(self, v_inter: float) -> FixedPoint:
        cell, p = self.at(v_inter)
        anchors = uniform_scalar_roots(cell, p)
        for u in anchors:
            fp = newton_solve(_pattern_seed(np.full(cell.n_sites, u), cell, p), cell, p)
            if fp is not None and fp.label == "uniform":
                return fp
        raise ContinuationError(f"no uniform root found at v_inter={v_inter}")


@dataclass
class Branch:
    """One solution class followed along the coupling axis."""

    label: str
    system: System
    v_values: list = field(default_factory=list)
    points: list = field(default_factory=list)
    termination: dict | None = None

    def nearest(self, v: float) -> FixedPoint:
        k = int(np.argmin(np.abs(np.asarray(self.v_values) - v)))
        return self.points[k]

    def solve_at(self, v: float, seed: FixedPoint | None = None):
        """Continue the branch's root to an arbitrary coupling value."""
        src = seed if seed is not None else self.nearest(v)
        return self.system.solve(v, src.state)

    def leading_complex_re(self, fp: FixedPoint) -> float | None:
        ev = fp.eigenvalues
        cplx = ev[np.abs(ev.imag) > IM_TOL]
        if cplx.size == 0:
            return None
        return float(cplx.real.max())


def branch_track(label: str, v_start: float, v_stop: float, step: float,
                 params: ModelParams, rows: int = 2, cols: int = 2,
                 census_seeds: int = 120, rng_seed: int = 0,
                 step_min: float = STEP_MIN) -> Branch:
    """Follow every root of a class from v_start toward v_stop.

    Terminates honestly: a Newton failure (after halving the step to the
    floor) or the continued root leaving its class ends the branch with the
    reason recorded.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    system = System(params, rows, cols)
    cell, p0 = system.at(v_start)
    start_census = census(cell, p0, n_seeds=census_seeds, rng_seed=rng_seed)
    members = start_census.of_class(label)
    if not members:
        raise ContinuationError(f"no {label!r} root at v_inter={v_start}")
    branch = Branch(label=label, system=system)
    branch.v_values.append(v_start)
    branch.points.append(members[0])

    direction = 1.0 if v_stop >= v_start else -1.0
    v, h = v_start, step
    current = members[0]
    while (v_stop - v) * direction > 1e-12:
        trial_v = v + direction * min(h, abs(v_stop - v))
        fp = system.solve(trial_v, current.state)
        if fp is not None and fp.label == label:
            v, current = trial_v, fp
            branch.v_values.append(v)
            branch.points.append(fp)
            h = min(step, 2 * h)
            continue
        if h / 2 >= step_min:
            h /= 2
            continue
        reason = "no-convergence" if fp is None else f"left-class:{fp.label}"
        branch.termination = {"v": trial_v, "reason": reason}
        if fp is not None:
            branch.termination["final_label"] = fp.label
        break
    return branch


@dataclass
class BifurcationEvent:
    kind: str
    v_inter: float
    bracket: tuple
    evidence: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "v_inter": self.v_inter,
                "bracket": list(self.bracket), "evidence": self.evidence}


def _bisect(predicate, lo, hi, resolution):
    """Shrink [lo, hi] with predicate(lo) != predicate(hi) to `resolution`."""
    p_lo = predicate(lo)
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if predicate(mid) == p_lo:
            lo = mid
        else:
            hi = mid
    return lo, hi


def locate_hopf(branch: Branch, resolution: float = DEFAULT_RESOLUTION,
                verify: bool = True) -> BifurcationEvent:
    """Bisect the sign change of the branch's leading complex pair.

    Confirms the crossing pair has a finite imaginary part and, when
    `verify`, that a small stable cycle with shrinking amplitude sits just on
    the unstable side of the crossing.
    """
    res = [branch.leading_complex_re(fp) for fp in branch.points]
    crossing = None
    for k in range(len(res) - 1):
        if res[k] is None or res[k + 1] is None:
            continue
        if (res[k] > 0) != (res[k + 1] > 0):
            crossing = k
            break
    if crossing is None:
        raise ContinuationError("no sign change of the complex pair in range")

    state = {"fp": branch.points[crossing]}

    def unstable(v):
        fp = branch.solve_at(v, seed=state["fp"])
        if fp is None or fp.label != branch.label:
            raise ContinuationError(f"lost the {branch.label} root at v={v}")
        state["fp"] = fp
        re = branch.leading_complex_re(fp)
        if re is None:
            raise ContinuationError(f"complex pair vanished at v={v}")
        return re > 0

    lo, hi = _bisect(unstable, branch.v_values[crossing],
                     branch.v_values[crossing + 1], resolution)
    v_c = 0.5 * (lo + hi)
    fp_c = branch.solve_at(v_c)
    ev = fp_c.eigenvalues
    cplx = ev[np.abs(ev.imag) > IM_TOL]
    pair = cplx[np.argmax(cplx.real)]
    evidence = {"eigenvalue_pair": [float(pair.real), float(abs(pair.imag))]}
    if abs(pair.imag) <= IM_TOL:
        raise ContinuationError("crossing pair has no imaginary part (not a Hopf)")

    if verify:
        direction = -1.0 if unstable(lo) else 1.0  # side where the pair has Re > 0
        far, near = v_c + 0.2 * direction, v_c + 0.1 * direction
        amp_far = _small_cycle_amplitude(branch, far)
        amp_near = _small_cycle_amplitude(branch, near)
        evidence["cycle_amplitudes"] = {f"{far:.6f}": amp_far, f"{near:.6f}": amp_near}
        evidence["amplitude_shrinks_toward_crossing"] = bool(
            amp_far is not None and amp_near is not None and amp_far > amp_near > 0)
    return BifurcationEvent("hopf", v_c, (lo, hi), evidence)


def _small_cycle_amplitude(branch: Branch, v: float) -> float | None:
    """Amplitude of the cycle grown from the branch root's unstable plane."""
    fp = branch.solve_at(v)
    if fp is None:
        return None
    cell, p = branch.system.at(v)
    J = jacobian(fp.state, cell, p)
    vals, vecs = np.linalg.eig(J)
    cplx = np.where(np.abs(vals.imag) > IM_TOL)[0]
    if cplx.size == 0:
        return None
    lead = cplx[np.argmax(vals.real[cplx])]
    direction = np.real(vecs[:, lead])
    direction /= np.abs(direction).max()
    seed = fp.state + 1e-3 * direction
    label, desc = classify_attractor(seed, cell, p, t_transient=400.0,
                                     t_window=150.0, max_extensions=2)
    return desc.amplitude if desc.period is not None else 0.0


def locate_pitchfork(af2_branch: Branch, nonuniform_branch: Branch,
                     resolution: float = DEFAULT_RESOLUTION,
                     agree_tol: float = PITCHFORK_AGREE_TOL) -> BifurcationEvent:
    """Bisect the af2 stability flip and the non-uniform root disappearance.

    The two indicators must bracket the same coupling within `agree_tol`;
    otherwise both brackets are reported in the raised error.
    """
    # indicator A: sign of the af2 root's largest eigenvalue real part
    res = [fp.max_re for fp in af2_branch.points]
    idx = None
    for k in range(len(res) - 1):
        if (res[k] > 0) != (res[k + 1] > 0):
            idx = k
            break
    if idx is None:
        raise ContinuationError("af2 branch shows no stability flip in range")
    seed_a = {"fp": af2_branch.points[idx]}

    def af2_unstable(v):
        fp = af2_branch.solve_at(v, seed=seed_a["fp"])
        if fp is None or fp.label != "af2":
            raise ContinuationError(f"lost the af2 root at v={v}")
        seed_a["fp"] = fp
        return fp.max_re > 0

    lo_a, hi_a = _bisect(af2_unstable, af2_branch.v_values[idx],
                         af2_branch.v_values[idx + 1], resolution)

    # indicator B: existence of the non-uniform root pair
    if nonuniform_branch.termination is None:
        raise ContinuationError("non-uniform branch did not terminate in range")
    v_last = nonuniform_branch.v_values[-1]
    v_dead = nonuniform_branch.termination["v"]
    seed_b = {"fp": nonuniform_branch.points[-1]}

    def nonuniform_exists(v):
        fp = nonuniform_branch.solve_at(v, seed=seed_b["fp"])
        if fp is not None and fp.label == "non-uniform":
            seed_b["fp"] = fp
            return True
        return False

    lo_b, hi_b = _bisect(nonuniform_exists, v_last, v_dead, resolution)

    mid_a, mid_b = 0.5 * (lo_a + hi_a), 0.5 * (lo_b + hi_b)
    if abs(mid_a - mid_b) > agree_tol:
        raise ContinuationError(
            "pitchfork indicators disagree: stability flip in "
            f"[{lo_a:.6f}, {hi_a:.6f}] vs root disappearance in [{lo_b:.6f}, {hi_b:.6f}]")

    distances = _branch_distance_sequence(af2_branch, nonuniform_branch)
    evidence = {
        "stability_bracket": [lo_a, hi_a],
        "existence_bracket": [lo_b, hi_b],
        "nonuniform_distance_sequence": distances,
    }
    return BifurcationEvent("pitchfork", 0.5 * (mid_a + mid_b), (lo_a, hi_a), evidence)


def _branch_distance_sequence(af2_branch: Branch, nonuniform_branch: Branch):
    seq = []
    for v, fp in zip(nonuniform_branch.v_values, nonuniform_branch.points):
        af2 = af2_branch.solve_at(v)
        if af2 is None:
            continue
        seq.append([float(v), float(np.abs(fp.state - af2.state).max())])
    return seq


def locate_merge(af2_branch: Branch, resolution: float = DEFAULT_RESOLUTION,
                 merge_tol: float = DEDUP_TOL) -> BifurcationEvent:
    """Bisect where the af2 root pair collapses onto the uniform root.

    Above the merge the continued root either converges to the uniform
    solution or lands within the dedup radius of it.
    """
    system = af2_branch.system
    seed = {"fp": af2_branch.points[-1]}
    distances = []

    def distinct(v):
        fp = af2_branch.solve_at(v, seed=seed["fp"])
        if fp is None:
            return False
        uni = system.uniform_root(v)
        d = float(np.abs(fp.state - uni.state).max())
        if fp.label == "af2" and d > merge_tol:
            seed["fp"] = fp
            distances.append([float(v), d])
            return True
        return False

    v_last = af2_branch.v_values[-1]
    if af2_branch.termination is not None:
        v_dead = af2_branch.termination["v"]
    else:
        raise ContinuationError("af2 branch did not terminate; extend the range")
    if not distinct(v_last):
        raise ContinuationError(f"af2 root already merged at v={v_last}")
    lo, hi = _bisect(distinct, v_last, v_dead, resolution)
    dedup = {round(v, 12): d for v, d in sorted(distances)}
    distances = [[v, d] for v, d in dedup.items()]
    ds = [d for _, d in distances]
    evidence = {
        "distance_sequence": distances,
        "distance_monotone_decreasing": bool(all(a >= b - 1e-12 for a, b in zip(ds, ds[1:]))),
    }
    return BifurcationEvent("merge", 0.5 * (lo + hi), (lo, hi), evidence)


# ---------------------------------------------------------------------------
# phase diagram

@dataclass
class PhasePoint:
    """Attractor and census summary at one coupling value."""

    v_inter: float
    phase: int | None
    af_attractor: str
    af2_attractor: str
    census: SolutionCensus
    flagged: bool = False

    def to_row(self) -> dict:
        counts = self.census.counts()
        row = {
            "v_inter": self.v_inter,
            "phase": "" if self.phase is None else self.phase,
            "af_cycle": self.af_attractor,
            "af2_attractor": self.af2_attractor,
        }
        for label, c in counts.items():
            key = label.replace("-", "_")
            row[f"{key}_total"] = c["total"]
            row[f"{key}_stable"] = c["stable"]
        return row


def assign_phase(v_inter: float, af2_attractor: str) -> int | None:
    """Phase label from the attractor reached by the af2-biased seed."""
    if v_inter == 0:
        return 0
    if af2_attractor == "af2-cycle":
        return 1
    if af2_attractor == "fixed-point:af2":
        return 2
    if af2_attractor == "af-cycle":
        return 3
    return None


def phase_point(v_inter: float, params: ModelParams, rows: int = 2, cols: int = 2,
                census_seeds: int = 120, rng_seed: int = 0,
                t_transient: float = 300.0, t_window: float = 150.0) -> PhasePoint:
    """Census plus biased-seed attractor classification at one coupling."""
    p = params.with_v_inter(v_inter)
    cell = build_unit_cell(rows, cols, p)
    cen = census(cell, p, n_seeds=census_seeds, rng_seed=rng_seed)
    af_label, _ = classify_attractor(initial_state("af", cell), cell, p,
                                     t_transient=t_transient, t_window=t_window)
    af2_label, _ = classify_attractor(initial_state("af2", cell), cell, p,
                                      t_transient=t_transient, t_window=t_window)
    phase = assign_phase(v_inter, af2_label)
    flagged = phase is None or af_label != "af-cycle"
    return PhasePoint(v_inter, phase, af_label, af2_label, cen, flagged)


def locate_default_events(params: ModelParams, rows: int = 2, cols: int = 2,
                          v_lo: float = 0.5, v_hi: float = 4.6,
                          step: float = 0.1,
                          resolution: float = DEFAULT_RESOLUTION,
                          verify_hopf: bool = True) -> list:
    """Track the standard branches and locate hopf, pitchfork and merge."""
    af2 = branch_track("af2", v_lo, v_hi, step, params, rows, cols)
    events = [locate_hopf(af2, resolution=resolution, verify=verify_hopf)]
    nonuni = branch_track("non-uniform", max(v_lo, 1.8), v_hi, step, params, rows, cols)
    events.append(locate_pitchfork(af2, nonuni, resolution=resolution))
    events.append(locate_merge(af2, resolution=resolution))
    return events


def phase_diagram(v_grid, params: ModelParams, rows: int = 2, cols: int = 2,
                  census_seeds: int = 120, rng_seed: int = 0,
                  with_events: bool = True,
                  resolution: float = DEFAULT_RESOLUTION,
                  verify_hopf: bool = True):
    """Phase label per grid point plus the located transition events."""
    v_grid = [float(v) for v in v_grid]
    if any(v < 0 for v in v_grid):
        raise ValueError("grid values must be non-negative")
    points = [phase_point(v, params, rows, cols, census_seeds, rng_seed)
              for v in v_grid]
    events = []
    if with_events:
        events = locate_default_events(params, rows, cols,
                                       resolution=resolution,
                                       verify_hopf=verify_hopf)
    return points, events
