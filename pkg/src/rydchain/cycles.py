"""Limit-cycle detection, synchronization-mode classification and basins.

A cycle is identified from the successive maxima of the most strongly
oscillating site.  Waveforms may carry several local maxima per period (the
strongly driven regime period-doubles), so the peak-gap sequence is grouped
into k-blocks and the smallest k whose block sums repeat consistently sets
the period.

Mode tests, all reported in the descriptor:

* af-cycle:  instantaneous checkerboard equality, n identical within each
  (row+column)-parity class; the two classes differ.
* af2-cycle: within every chain, columns of equal parity carry identical
  signals, and adjacent chains repeat each other half a period later
  (the two chains oscillate with a pi phase difference site-by-site).

The descriptor also carries the residuals of the alternative reading of the
second mode (instantaneous inter-chain lock, intra-chain half-period shift)
so either formulation can be audited; that reading is not satisfied by any
attractor of these equations and is not used for classification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import (Trajectory, initial_state, integrate_rk4,
                       random_bloch_states, split_state)
from .lattice import ModelParams, UnitCell
from .steady import classify_pattern, newton_solve

#: a site with population swing below this is treated as stationary
EPS_OSC = 1e-4
#: relative tolerance, as a fraction of the largest amplitude, for mode tests
EPS_CYCLE_REL = 1e-3
#: peak-gap block sums must repeat to this relative spread
PERIOD_SPREAD_TOL = 0.01
#: peak heights must have stopped drifting to this fraction of the amplitude
HEIGHT_DRIFT_TOL = 0.05
MAX_PEAKS_PER_PERIOD = 4
MIN_PERIODS = 8


class TrajectoryTooShort(ValueError):
    """Analysis window lacks the samples needed for cycle detection."""


CYCLE_CLASSES = ("fixed-point", "af-cycle", "af2-cycle", "unclassified")


@dataclass
class CycleDescriptor:
    """Detected cycle properties for one trajectory."""

    label: str                       # one of CYCLE_CLASSES
    period: float | None
    peaks_per_period: int
    amplitudes: np.ndarray           # per site, (max-min)/2 of n
    means: np.ndarray
    offsets: np.ndarray | None       # pairwise phase lags in [0, 2pi), (m, m)
    residuals: dict = field(default_factory=dict)
    reason: str = ""
    ref_site: int = 0
    window: tuple = (0.0, 0.0)

    @property
    def amplitude(self) -> float:
        return float(self.amplitudes.max()) if self.amplitudes.size else 0.0

    def to_dict(self, cell: UnitCell) -> dict:
        labels = cell.labels
        out = {
            "class": self.label,
            "period": self.period,
            "peaks_per_period": self.peaks_per_period,
            "amplitudes": {lab: float(a) for lab, a in zip(labels, self.amplitudes)},
            "means": {lab: float(v) for lab, v in zip(labels, self.means)},
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "reason": self.reason,
            "reference_site": labels[self.ref_site],
            "window": list(self.window),
        }
        if self.offsets is not None:
            out["phase_offsets"] = {
                f"{labels[i]}/{labels[j]}": float(self.offsets[i, j])
                for i in range(len(labels)) for j in range(len(labels)) if i != j
            }
        return out


def refined_peaks(times: np.ndarray, signal: np.ndarray):
    """Interior local maxima with parabolic sub-sample refinement."""
    s = signal
    idx = np.where((s[1:-1] > s[:-2]) & (s[1:-1] >= s[2:]))[0] + 1
    if idx.size == 0:
        return np.empty(0), np.empty(0)
    dt = times[1] - times[0]
    a, b, c = s[idx - 1], s[idx], s[idx + 1]
    denom = a - 2 * b + c
    frac = np.where(denom == 0, 0.0, 0.5 * (a - c) / np.where(denom == 0, 1.0, denom))
    return times[idx] + frac * dt, b - 0.25 * (a - c) * frac


def _block_period(gaps: np.ndarray, spread_tol: float):
    """Smallest peaks-per-period k whose k-block gap sums repeat consistently."""
    for k in range(1, MAX_PEAKS_PER_PERIOD + 1):
        n_blocks = gaps.size // k
        if n_blocks < 2:
            break
        blocks = gaps[: n_blocks * k].reshape(n_blocks, k).sum(axis=1)
        spread = float(blocks.max() - blocks.min())
        if spread < spread_tol * float(blocks.mean()):
            return float(blocks.mean()), k
    return None, 0


def _uniform_window(traj: Trajectory, t_from: float):
    """Post-transient window resampled to a uniform grid if necessary."""
    mask = traj.times >= t_from - 1e-12
    times = traj.times[mask]
    states = traj.states[mask]
    if times.size >= 2:
        steps = np.diff(times)
        if np.ptp(steps) > 1e-9 * steps.mean():
            grid = np.linspace(times[0], times[-1], times.size)
            flat = states.reshape(times.size, -1)
            res = np.empty_like(flat)
            for j in range(flat.shape[1]):
                res[:, j] = np.interp(grid, times, flat[:, j])
            return grid, res.reshape(states.shape)
    return times, states


def shift_residual(times, sig_a, sig_b, lag):
    """max over t of |sig_a(t) - sig_b(t + lag)|, linear interpolation."""
    t2 = times + lag
    ok = t2 <= times[-1] + 1e-12
    if not ok.any():
        return float("inf")
    return float(np.max(np.abs(sig_a[ok] - np.interp(t2[ok], times, sig_b))))


def phase_offsets(times, n, period):
    """Pairwise phase lags from circular cross-correlation peak positions.

    offsets[i, j] is the phase (in [0, 2pi)) by which site j trails site i;
    computed over the largest whole number of periods in the window.
    """
    dt = times[1] - times[0]
    n_per = int(np.floor((times[-1] - times[0]) / period))
    L = max(2, int(round(n_per * period / dt)))
    L = min(L, len(times))
    m = n.shape[1]
    sig = n[:L] - n[:L].mean(axis=0)
    spectra = np.fft.rfft(sig, axis=0)
    offsets = np.full((m, m), np.nan)
    active = sig.std(axis=0) > 0
    for i in range(m):
        if not active[i]:
            continue
        for j in range(m):
            if i == j or not active[j]:
                continue
            corr = np.fft.irfft(np.conj(spectra[:, i]) * spectra[:, j], L)
            l0 = int(np.argmax(corr))
            ym, y0, yp = corr[(l0 - 1) % L], corr[l0], corr[(l0 + 1) % L]
            denom = ym - 2 * y0 + yp
            frac = 0.0 if denom == 0 else 0.5 * (ym - yp) / denom
            lag = (l0 + frac) * dt
            offsets[i, j] = (2 * np.pi * lag / period) % (2 * np.pi)
    return offsets


def _group_residual(n, group_masks):
    """Largest deviation of any site signal from its group-mean signal."""
    worst = 0.0
    for mask in group_masks:
        if mask.sum() < 2:
            continue
        grp = n[:, mask]
        worst = max(worst, float(np.max(np.abs(grp - grp.mean(axis=1, keepdims=True)))))
    return worst


def _group_separation(n, mask):
    """L-inf distance between the two parity group-mean signals."""
    g0 = n[:, mask == 0].mean(axis=1)
    g1 = n[:, mask == 1].mean(axis=1)
    return float(np.max(np.abs(g0 - g1)))


def mode_residuals(times, n, cell: UnitCell, period: float) -> dict:
    """Residuals of every synchronization-mode test on the window."""
    rows_idx = cell.site_rows
    cols_idx = cell.site_cols
    rc = (rows_idx + cols_idx) % 2
    cpar = cols_idx % 2
    res = {}
    res["af_checkerboard"] = _group_residual(n, [rc == 0, rc == 1])
    res["af_separation"] = _group_separation(n, rc)
    res["af2_column_lock"] = _group_residual(
        n, [(rows_idx == r) & (cpar == p) for r in range(cell.rows) for p in (0, 1)])
    res["af2_separation"] = _group_separation(n, cpar)

    half = period / 2.0
    pairs = []
    if cell.rows == 2:
        pairs = [(c, cell.cols + c) for c in range(cell.cols)]
    elif cell.rows >= 3:
        for r in range(cell.rows):
            rn = (r + 1) % cell.rows
            pairs += [(r * cell.cols + c, rn * cell.cols + c) for c in range(cell.cols)]
    shift = 0.0
    for i, j in pairs:
        shift = max(shift, shift_residual(times, n[:, i], n[:, j], half))
    res["af2_interchain_shift"] = shift if pairs else float("nan")

    # audit residuals for the alternative (instantaneous-lock) reading
    res["onsite_lock"] = _group_residual(
        n, [cpar == 0, cpar == 1]) if cell.rows > 1 else float("nan")
    intra = 0.0
    for r in range(cell.rows):
        for c in range(cell.cols):
            i = r * cell.cols + c
            j = r * cell.cols + (c + 1) % cell.cols
            if i != j:
                intra = max(intra, shift_residual(times, n[:, i], n[:, j], half))
    res["intrachain_shift"] = intra if cell.cols > 1 else float("nan")
    return res


def _assign_class(res: dict, eps: float, cell: UnitCell) -> str:
    sep_floor = 10 * eps
    if res["af_checkerboard"] < eps and res["af_separation"] >= sep_floor:
        return "af-cycle"
    if (cell.rows >= 2
            and res["af2_column_lock"] < eps
            and res["af2_interchain_shift"] < eps
            and res["af2_separation"] >= sep_floor):
        return "af2-cycle"
    return "unclassified"


def classify_cycle(traj: Trajectory, descriptor: CycleDescriptor,
                   eps_rel: float = EPS_CYCLE_REL) -> CycleDescriptor:
    """Re-evaluate the mode residuals of a detected cycle and assign a class."""
    if descriptor.period is None:
        return descriptor
    times, states = _uniform_window(traj, descriptor.window[0])
    n = states[..., : traj.n_sites]
    res = mode_residuals(times, n, traj.cell, descriptor.period)
    eps = eps_rel * max(descriptor.amplitude, np.finfo(float).tiny)
    label = _assign_class(res, eps, traj.cell)
    descriptor.residuals = res
    descriptor.label = label
    if label == "unclassified":
        descriptor.reason = "no-mode-test-passed"
    return descriptor


def detect_cycle(traj: Trajectory, t_transient: float, eps_osc: float = EPS_OSC,
                 eps_rel: float = EPS_CYCLE_REL,
                 spread_tol: float = PERIOD_SPREAD_TOL,
                 drift_tol: float = HEIGHT_DRIFT_TOL) -> CycleDescriptor:
    """Analyze the post-transient window of a trajectory for a limit cycle.

    A window whose population swings all stay below eps_osc is a fixed point.
    Otherwise the period comes from the peak train of the most active site
    (parabolic refinement, k-block grouping); inconsistent gaps or still
    drifting peak heights yield "unclassified" with the reason recorded.
    """
    if traj.states.ndim != 2:
        raise ValueError("detect_cycle expects a single trajectory; use .select(b)")
    times, states = _uniform_window(traj, t_transient)
    if times.size < 64:
        raise TrajectoryTooShort(
            f"only {times.size} samples after t={t_transient:g}")
    m = traj.n_sites
    n = states[:, :m]
    amps = (n.max(axis=0) - n.min(axis=0)) / 2.0
    means = n.mean(axis=0)
    span = (float(times[0]), float(times[-1]))

    if float(amps.max()) < eps_osc:
        return CycleDescriptor("fixed-point", None, 0, amps, means, None,
                               window=span)

    ref = int(np.argmax(amps))
    peak_t, peak_h = refined_peaks(times, n[:, ref])
    base = CycleDescriptor("unclassified", None, 0, amps, means, None,
                           ref_site=ref, window=span)
    if peak_t.size < 5:
        base.reason = "too-few-peaks"
        return base
    gaps = np.diff(peak_t)
    period, k = _block_period(gaps, spread_tol)
    if period is None:
        base.reason = "inconsistent-period"
        return base
    if gaps.size // k < MIN_PERIODS:
        base.reason = "window-too-short"
        return base
    drift = max(float(np.abs(peak_h[j::k][-1] - peak_h[j::k][0])) for j in range(k))
    if drift > drift_tol * amps[ref]:
        base.reason = "not-settled"
        return base

    desc = CycleDescriptor("unclassified", period, k, amps, means,
                           phase_offsets(times, n, period), ref_site=ref,
                           window=span)
    return classify_cycle(traj, desc, eps_rel=eps_rel)


# ---------------------------------------------------------------------------
# attractor driver and basin sampling

ATTRACTOR_DT = 1e-3
ATTRACTOR_RECORD_DT = 1e-2


def settle(states0, cell: UnitCell, params: ModelParams, t_transient: float,
           t_window: float, dt: float = ATTRACTOR_DT, W=None) -> Trajectory:
    """Integrate, recording only the analysis window after the transient."""
    stride = max(1, int(round(ATTRACTOR_RECORD_DT / dt)))
    return integrate_rk4(states0, cell, params, t_transient + t_window, dt=dt,
                         record_stride=stride, record_from=t_transient, W=W)


def _attractor_label(traj: Trajectory, desc: CycleDescriptor,
                     cell: UnitCell, params: ModelParams) -> str:
    if desc.label == "fixed-point":
        fp = newton_solve(traj.states[-1], cell, params)
        sub = fp.label if fp is not None else classify_pattern(
            traj.states[-1][: cell.n_sites], cell, eps=1e-4)
        return f"fixed-point:{sub}"
    if desc.label in ("af-cycle", "af2-cycle"):
        return desc.label
    return f"unclassified:{desc.reason}"


def classify_attractor(seed_state, cell: UnitCell, params: ModelParams,
                       t_transient: float = 300.0, t_window: float = 150.0,
                       dt: float = ATTRACTOR_DT, max_extensions: int = 2):
    """(label, descriptor) for the attractor reached from one seed.

    Trajectories still drifting at the end of the window are continued from
    their final state with a doubled transient, up to max_extensions times.
    """
    state = np.asarray(seed_state, dtype=float)
    transient = t_transient
    for _ in range(max_extensions + 1):
        traj = settle(state, cell, params, transient, t_window, dt=dt)
        desc = detect_cycle(traj, transient)
        if desc.label != "unclassified":
            return _attractor_label(traj, desc, cell, params), desc
        state = traj.states[-1]
        transient = 2 * transient
    return _attractor_label(traj, desc, cell, params), desc


@dataclass
class BasinSample:
    """Attractor census over random initial conditions."""

    rng_seed: int
    classes: list
    fractions: dict

    def to_dict(self, cell: UnitCell, params: ModelParams) -> dict:
        return {
            "rng_seed": self.rng_seed,
            "n_samples": len(self.classes),
            "params": params.as_dict(),
            "cell": {"rows": cell.rows, "cols": cell.cols},
            "fractions": self.fractions,
            "per_seed": [{"index": i, "class": c} for i, c in enumerate(self.classes)],
        }


def basin_sample(cell: UnitCell, params: ModelParams, n_samples: int,
                 rng_seed: int = 0, t_max: float = 450.0,
                 t_transient: float = 300.0, dt: float = ATTRACTOR_DT,
                 chunk: int = 32, max_extensions: int = 2) -> BasinSample:
    """Classify the attractor reached from uniform Bloch-ball seeds.

    Seeds integrate in lockstep batches; stragglers that have not settled
    within the window are continued individually.  Unclassified attractors
    are counted explicitly, never dropped.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    t_window = max(t_max - t_transient, 100.0)
    seeds = random_bloch_states(cell.n_sites, n_samples, np.random.default_rng(rng_seed))
    classes = [None] * n_samples
    for start in range(0, n_samples, chunk):
        batch = seeds[start: start + chunk]
        traj = settle(batch, cell, params, t_transient, t_window, dt=dt)
        for b in range(batch.shape[0]):
            single = traj.select(b)
            desc = detect_cycle(single, t_transient)
            if desc.label == "unclassified" and max_extensions > 0:
                label, desc = classify_attractor(
                    single.states[-1], cell, params, t_transient=2 * t_transient,
                    t_window=t_window, dt=dt, max_extensions=max_extensions - 1)
            else:
                label = _attractor_label(single, desc, cell, params)
            classes[start + b] = label
    fractions = {}
    for c in classes:
        fractions[c] = fractions.get(c, 0) + 1
    fractions = {k: v / n_samples for k, v in sorted(fractions.items())}
    return BasinSample(rng_seed=rng_seed, classes=classes, fractions=fractions)
