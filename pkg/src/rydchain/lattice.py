"""Model parameters, periodic unit cells and the mean-field coupling matrix.

Geometry convention: a cell has `rows` chains stacked vertically and `cols`
sites per chain along the horizontal (chain) direction.  Sites are labelled
"<chain><column letter>", e.g. 1A, 1B, 2A, 2B for a 2x2 cell, in row-major
order.  The chain direction is always treated as infinite (periodic wrap of
the cell), while rows=2 means exactly two physical chains: the single
inter-chain bond is counted once, not twice through the wrap.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field, replace, asdict

import numpy as np

#: Drive/detuning/interaction set used throughout the reference phase diagram
#: (all rates in units of the decay gamma).
PRESETS = {
    "paper-default": dict(omega=2.2, delta=2.5, gamma=1.0, v_intra=5.0, v_diag=0.0),
}


@dataclass(frozen=True)
class ModelParams:
    """Physical couplings and mean-field options, in units of gamma.

    v_diag is stored resolved to a number; use :func:`resolve_v_diag` to turn
    the "geometric" config keyword into its value.  diag_multiplicity selects
    how the pair of diagonal inter-chain bonds is weighted (1 follows the
    four-site equations as printed, 2 counts both bonds geometrically).
    """

    omega: float = 2.2
    delta: float = 2.5
    gamma: float = 1.0
    v_intra: float = 5.0
    v_inter: float = 0.0
    v_diag: float = 0.0
    r_high_order: float = 0.0
    v_nnn: float = 0.0
    diag_multiplicity: int = 1

    def __post_init__(self):
        vals = [self.omega, self.delta, self.gamma, self.v_intra,
                self.v_inter, self.v_diag, self.r_high_order, self.v_nnn]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("all model parameters must be finite")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.v_inter < 0 or self.v_intra < self.v_inter:
            raise ValueError("couplings must satisfy v_intra >= v_inter >= 0")
        if self.diag_multiplicity not in (1, 2):
            raise ValueError("diag_multiplicity must be 1 or 2")

    def with_v_inter(self, v_inter: float) -> "ModelParams":
        return replace(self, v_inter=float(v_inter))

    def as_dict(self) -> dict:
        return asdict(self)


def preset(name: str, **overrides) -> ModelParams:
    """Named parameter set, optionally overridden field-by-field."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    base = dict(PRESETS[name])
    base.update(overrides)
    return ModelParams(**base)


def geometric_diag_coupling(v_intra: float, v_inter: float) -> float:
    """Diagonal inter-chain coupling implied by the 1/r^6 law.

    With V = C6/a^6 and V_i = C6/b^6 the diagonal neighbour sits at
    sqrt(a^2 + b^2), giving (V^(-1/3) + V_i^(-1/3))^(-3).
    """
    if v_intra <= 0 or v_inter <= 0:
        raise ValueError("geometric diagonal coupling needs positive V, V_i")
    return (v_intra ** (-1 / 3) + v_inter ** (-1 / 3)) ** (-3)


def resolve_v_diag(value, v_intra: float, v_inter: float) -> float:
    """Resolve a config-file v_diag entry: a number or the word "geometric"."""
    if isinstance(value, str):
        if value.strip().lower() == "geometric":
            return geometric_diag_coupling(v_intra, v_inter)
        return float(value)
    return float(value)


@dataclass(frozen=True)
class UnitScale:
    """Conversion between gamma-units and laboratory units for reporting."""

    gamma_mhz: float

    def __post_init__(self):
        if self.gamma_mhz <= 0:
            raise ValueError("gamma_mhz must be positive")

    @property
    def gamma_rad_per_s(self) -> float:
        return 2 * math.pi * self.gamma_mhz * 1e6

    def time_seconds(self, t_gamma_units: float) -> float:
        """Time expressed in 1/gamma, converted to seconds."""
        return t_gamma_units / self.gamma_rad_per_s

    def angular_frequency_rad_s(self, f_gamma_units: float) -> float:
        return f_gamma_units * self.gamma_rad_per_s


def physical_units(gamma_mhz: float) -> UnitScale:
    """Scale factor object for a decay rate given as gamma = <x> * 2pi MHz."""
    return UnitScale(gamma_mhz)


@dataclass(frozen=True)
class UnitCell:
    """Periodic sublattice geometry plus the mean-field coupling matrix.

    W[i, j] is the total interaction coefficient multiplying n_j inside the
    effective detuning of site i; v_sum are the row sums (the per-site total
    coupling entering the high-order mean-field term).
    """

    rows: int
    cols: int
    labels: tuple
    W: np.ndarray
    v_sum: np.ndarray = field(repr=False)

    @property
    def n_sites(self) -> int:
        return self.rows * self.cols

    @property
    def site_rows(self) -> np.ndarray:
        return np.repeat(np.arange(self.rows), self.cols)

    @property
    def site_cols(self) -> np.ndarray:
        return np.tile(np.arange(self.cols), self.rows)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def permutation_swap_chains(self) -> np.ndarray:
        """Site permutation mapping chain r to chain rows-1-r (2-chain swap)."""
        r, c = self.site_rows, self.site_cols
        return (self.rows - 1 - r) * self.cols + c

    def permutation_swap_columns(self) -> np.ndarray:
        """Site permutation shifting every column by one (A<->B for cols=2)."""
        r, c = self.site_rows, self.site_cols
        return r * self.cols + (c + 1) % self.cols


def site_label(row: int, col: int) -> str:
    return f"{row + 1}{string.ascii_uppercase[col]}"


def build_unit_cell(rows: int, cols: int, params: ModelParams) -> UnitCell:
    """Assemble the coupling matrix for a rows x cols periodic cell.

    Bond bookkeeping: intra-chain nearest and next-nearest neighbours always
    come in left/right pairs (the chain is infinite, so wraps that land on the
    same sublattice accumulate, e.g. a 1x1 cell gets the full 2V on its
    diagonal).  Vertically, rows=1 has no partner chain, rows=2 has exactly
    one (counted once), and rows>=3 is a periodic stack with two neighbours.
    Each diagonal bond carries v_diag * diag_multiplicity / 2 so that the
    2x2 cell reproduces the printed coefficient at multiplicity 1.
    """
    if rows < 1 or cols < 1:
        raise ValueError("unit cell needs rows >= 1 and cols >= 1")
    if cols > 1 and cols % 2:
        raise ValueError("cols must be even when larger than 1")
    if cols > 26:
        raise ValueError("cols beyond 26 not supported by site labels")

    m = rows * cols
    W = np.zeros((m, m))

    def idx(r, c):
        return (r % rows) * cols + (c % cols)

    diag_w = params.v_diag * params.diag_multiplicity / 2.0
    for r in range(rows):
        for c in range(cols):
            i = idx(r, c)
            for dc in (1, -1):
                W[i, idx(r, c + dc)] += params.v_intra
                if params.v_nnn:
                    W[i, idx(r, c + 2 * dc)] += params.v_nnn
            if rows == 2:
                W[i, idx(r + 1, c)] += params.v_inter
                if diag_w:
                    for dc in (1, -1):
                        W[i, idx(r + 1, c + dc)] += diag_w
            elif rows >= 3:
                for dr in (1, -1):
                    W[i, idx(r + dr, c)] += params.v_inter
                    if diag_w:
                        for dc in (1, -1):
                            W[i, idx(r + dr, c + dc)] += diag_w

    labels = tuple(site_label(r, c) for r in range(rows) for c in range(cols))
    v_sum = W.sum(axis=1)
    W.setflags(write=False)
    v_sum.setflags(write=False)
    return UnitCell(rows=rows, cols=cols, labels=labels, W=W, v_sum=v_sum)


# ---------------------------------------------------------------------------
# plain-text key=value configuration files

CONFIG_KEYS = ("omega", "delta", "gamma", "v_intra", "v_inter", "v_diag",
               "r_high_order", "v_nnn", "diag_multiplicity", "rows", "cols")


def parse_config(text: str) -> dict:
    """Parse flat `key = value` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        out[key] = val
    return out


def load_config(path) -> tuple:
    """Read a config file into (ModelParams, rows, cols)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = parse_config(fh.read())
    rows = int(raw.pop("rows", 2))
    cols = int(raw.pop("cols", 2))
    keys = dict(raw)
    v_intra = float(keys.get("v_intra", PRESETS["paper-default"]["v_intra"]))
    v_inter = float(keys.get("v_inter", 0.0))
    if "v_diag" in keys:
        keys["v_diag"] = resolve_v_diag(keys["v_diag"], v_intra, v_inter)
    numeric = {k: (int(v) if k == "diag_multiplicity" else float(v)) for k, v in keys.items()}
    return ModelParams(**numeric), rows, cols


def dump_config(params: ModelParams, rows: int, cols: int) -> str:
    """Render the fully resolved configuration in the loadable format."""
    lines = []
    for key in CONFIG_KEYS:
        if key == "rows":
            lines.append(f"rows = {rows}")
        elif key == "cols":
            lines.append(f"cols = {cols}")
        else:
            value = getattr(params, key)
            lines.append(f"{key} = {value!r}")
    return "\n".join(lines) + "\n"
