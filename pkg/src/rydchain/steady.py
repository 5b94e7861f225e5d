"""Fixed points: multistart Newton census, Jacobians and stability labels.

Steady solutions of the sublattice equations are classified by their
population pattern: uniform (all equal), af (checkerboard), af2 (equal down
each column-parity class across chains) or non-uniform, with the most
symmetric label winning ties.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import eom_rhs, join_state, random_bloch_states, split_state
from .lattice import ModelParams, UnitCell

#: population-equality tolerance for pattern classification
EPS_EQUAL = 1e-6
#: L-inf dedup radius between census members
DEDUP_TOL = 1e-6
#: stability margin: stable iff max Re(lambda) below -STABILITY_MARGIN
STABILITY_MARGIN = 1e-9
#: hard cap for the dense eigensolver
EIG_MAX_DIM = 48
EIG_RESIDUAL_TOL = 1e-8

CLASS_LABELS = ("uniform", "af", "af2", "non-uniform")


class EigenSolveError(RuntimeError):
    """Eigen decomposition failed to converge or verify."""


def jacobian(state, cell: UnitCell, params: ModelParams) -> np.ndarray:
    """Analytic Jacobian of eom_rhs; all partials are polynomial."""
    m = cell.n_sites
    n, x, y = split_state(np.asarray(state, dtype=float), m)
    shift = cell.W @ n
    if params.r_high_order:
        shift = shift + params.r_high_order * cell.v_sum * n * n
    dshift_dn = cell.W.copy()
    if params.r_high_order:
        dshift_dn[np.diag_indices(m)] += 2.0 * params.r_high_order * cell.v_sum * n
    rot = params.delta - shift
    I = np.eye(m)
    J = np.zeros((3 * m, 3 * m))
    J[:m, :m] = -params.gamma * I
    J[:m, 2 * m:] = params.omega * I
    J[m:2 * m, :m] = -y[:, None] * dshift_dn
    J[m:2 * m, m:2 * m] = -0.5 * params.gamma * I
    J[m:2 * m, 2 * m:] = np.diag(rot)
    J[2 * m:, :m] = x[:, None] * dshift_dn - params.omega * I
    J[2 * m:, m:2 * m] = -np.diag(rot)
    J[2 * m:, 2 * m:] = -0.5 * params.gamma * I
    return J


def jacobian_fd(state, cell: UnitCell, params: ModelParams, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian, the cross-check for the analytic one."""
    state = np.asarray(state, dtype=float)
    dim = state.size
    J = np.empty((dim, dim))
    for j in range(dim):
        step = np.zeros(dim)
        step[j] = h
        J[:, j] = (eom_rhs(state + step, cell, params)
                   - eom_rhs(state - step, cell, params)) / (2 * h)
    return J


def eigenvalues(matrix) -> np.ndarray:
    """Full nonsymmetric spectrum of a small dense real matrix.

    Uses the LAPACK Hessenberg-QR path and verifies every pair against
    ||A v - lambda v|| < 1e-8 before returning.
    """
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("eigenvalues expects a square matrix")
    if A.shape[0] > EIG_MAX_DIM:
        raise ValueError(f"matrix dimension {A.shape[0]} exceeds {EIG_MAX_DIM}")
    try:
        vals, vecs = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise EigenSolveError(f"QR iteration failed: {exc}") from exc
    residual = np.abs(A @ vecs - vecs * vals[None, :]).max(axis=0)
    worst = float(residual.max())
    if worst >= EIG_RESIDUAL_TOL:
        raise EigenSolveError(f"eigenpair residual {worst:.3e} exceeds {EIG_RESIDUAL_TOL}")
    return vals


def classify_pattern(n_values, cell: UnitCell, eps: float = EPS_EQUAL) -> str:
    """Table-style label of a population pattern, most symmetric first."""
    n = np.asarray(n_values, dtype=float)
    if np.ptp(n) < eps:
        return "uniform"
    rc = (cell.site_rows + cell.site_cols) % 2
    cpar = cell.site_cols % 2

    def groups_flat(mask_parity):
        for par in (0, 1):
            grp = n[mask_parity == par]
            if grp.size and np.ptp(grp) >= eps:
                return False
        return True

    if groups_flat(rc):
        return "af"
    if groups_flat(cpar):
        return "af2"
    return "non-uniform"


@dataclass
class FixedPoint:
    """A converged steady solution with its linearization."""

    state: np.ndarray
    residual: float
    eigenvalues: np.ndarray
    stable: bool
    label: str

    @property
    def populations(self) -> np.ndarray:
        return self.state[: self.state.size // 3]

    @property
    def max_re(self) -> float:
        return float(self.eigenvalues.real.max())

    def to_dict(self, cell: UnitCell) -> dict:
        return {
            "state": [float(v) for v in self.state],
            "populations": {lab: float(v) for lab, v in zip(cell.labels, self.populations)},
            "residual": self.residual,
            "eigenvalues": [[float(ev.real), float(ev.imag)] for ev in self.eigenvalues],
            "stable": bool(self.stable),
            "class": self.label,
        }


def newton_solve(seed, cell: UnitCell, params: ModelParams, tol: float = 1e-12,
                 max_iter: int = 200) -> FixedPoint | None:
    """Damped Newton iteration on eom_rhs = 0 from the given seed.

    Returns None on non-convergence or a singular Jacobian; a result is only
    produced when the max-norm residual actually drops below tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    state = np.array(seed, dtype=float)
    for _ in range(max_iter):
        f = eom_rhs(state, cell, params)
        res = float(np.abs(f).max())
        if not np.isfinite(res):
            return None
        if res < tol:
            return _finish_fixed_point(state, res, cell, params)
        try:
            step = np.linalg.solve(jacobian(state, cell, params), -f)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        for _ in range(40):
            trial = state + lam * step
            trial_res = float(np.abs(eom_rhs(trial, cell, params)).max())
            if np.isfinite(trial_res) and trial_res < res:
                state = trial
                break
            lam *= 0.5
        else:
            return None
    return None


def _finish_fixed_point(state, residual, cell, params) -> FixedPoint:
    eig = eigenvalues(jacobian(state, cell, params))
    stable = bool(eig.real.max() < -STABILITY_MARGIN)
    label = classify_pattern(state[: cell.n_sites], cell)
    return FixedPoint(state=state, residual=residual, eigenvalues=eig,
                      stable=stable, label=label)


# ---------------------------------------------------------------------------
# multistart census

def uniform_scalar_roots(cell: UnitCell, params: ModelParams) -> list:
    """All uniform-population roots by sign-change scan plus bisection.

    On the uniform slice the steady condition reduces to a scalar equation
    n * ((delta - D(n))^2 + gamma^2/4 + omega^2/2) = omega^2/4 with
    D(n) = s n + r s n^2 and s the common coupling row sum.
    """
    s = float(cell.v_sum[0])
    g, om, de, r = params.gamma, params.omega, params.delta, params.r_high_order

    def f(n):
        shift = de - (s * n + r * s * n * n)
        return n * (shift * shift + g * g / 4 + om * om / 2) - om * om / 4

    grid = np.linspace(0.0, 1.0, 2001)
    vals = f(grid)
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            roots.append(float(a))
            continue
        if fa * fb < 0:
            lo, hi, flo = a, b, fa
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                fm = f(mid)
                if flo * fm <= 0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            roots.append(0.5 * (lo + hi))
    return roots


def _pattern_seed(n_pattern, cell: UnitCell, params: ModelParams) -> np.ndarray:
    """Seed with coherences consistent with two of the three steady equations."""
    n = np.asarray(n_pattern, dtype=float)
    if params.omega == 0:
        return join_state(n, np.zeros_like(n), np.zeros_like(n))
    shift = cell.W @ n + params.r_high_order * cell.v_sum * n * n
    rot = params.delta - shift
    y = params.gamma * n / params.omega
    safe = np.where(np.abs(rot) < 1e-9, 1.0, rot)
    x = np.where(np.abs(rot) < 1e-9, 0.0,
                 (-0.5 * params.gamma * y - 0.5 * params.omega * (2 * n - 1)) / safe)
    return join_state(n, x, y)


def structured_seeds(cell: UnitCell, params: ModelParams) -> list:
    """Uniform/af/af2 pattern seeds built around the uniform scalar roots."""
    seeds = []
    rc = (cell.site_rows + cell.site_cols) % 2
    cpar = cell.site_cols % 2
    anchors = uniform_scalar_roots(cell, params) or [0.15]
    deltas = (0.05, 0.15, 0.3)
    for u in anchors:
        seeds.append(_pattern_seed(np.full(cell.n_sites, u), cell, params))
        for d in deltas:
            hi = min(u + d, 0.98)
            lo = max(u - d, 0.01)
            for parity in (rc, cpar):
                seeds.append(_pattern_seed(np.where(parity == 0, hi, lo), cell, params))
                seeds.append(_pattern_seed(np.where(parity == 0, lo, hi), cell, params))
    for hi, lo in ((0.8, 0.2), (0.6, 0.1)):
        for parity in (rc, cpar):
            seeds.append(_pattern_seed(np.where(parity == 0, hi, lo), cell, params))
            seeds.append(_pattern_seed(np.where(parity == 0, lo, hi), cell, params))
    return seeds


@dataclass
class SolutionCensus:
    """Deduplicated fixed points at one inter-chain coupling value."""

    v_inter: float
    points: list = field(default_factory=list)

    def counts(self) -> dict:
        out = {label: {"total": 0, "stable": 0, "unstable": 0} for label in CLASS_LABELS}
        for fp in self.points:
            row = out[fp.label]
            row["total"] += 1
            row["stable" if fp.stable else "unstable"] += 1
        return out

    def of_class(self, label: str) -> list:
        return [fp for fp in self.points if fp.label == label]

    def to_dict(self, cell: UnitCell, params: ModelParams) -> dict:
        return {
            "v_inter": self.v_inter,
            "params": params.as_dict(),
            "cell": {"rows": cell.rows, "cols": cell.cols, "labels": list(cell.labels)},
            "counts": self.counts(),
            "fixed_points": [fp.to_dict(cell) for fp in self.points],
        }


def census(cell: UnitCell, params: ModelParams, n_seeds: int = 200,
           rng_seed: int = 0, tol: float = 1e-12) -> SolutionCensus:
    """Multistart Newton census: structured plus random Bloch-ball seeds.

    Roots are deduplicated at L-inf DEDUP_TOL over the full state vector and
    sorted deterministically; empty classes are a valid outcome.
    """
    seeds = structured_seeds(cell, params)
    randoms = random_bloch_states(cell.n_sites, n_seeds, np.random.default_rng(rng_seed))
    roots: list[FixedPoint] = []
    for seed in [*seeds, *randoms]:
        fp = newton_solve(seed, cell, params, tol=tol)
        if fp is None:
            continue
        if any(np.abs(fp.state - other.state).max() < DEDUP_TOL for other in roots):
            continue
        roots.append(fp)
    roots.sort(key=lambda fp: tuple(np.round(fp.state, 9)))
    return SolutionCensus(v_inter=params.v_inter, points=roots)
