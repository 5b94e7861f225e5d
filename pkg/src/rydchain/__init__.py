"""Mean-field dynamics of coupled driven-dissipative Rydberg chains."""

__version__ = "0.1.0"

from .lattice import (ModelParams, UnitCell, UnitScale, build_unit_cell,
                      geometric_diag_coupling, physical_units, preset)
from .dynamics import (IntegrationError, Trajectory, eom_rhs, initial_state,
                       integrate_adaptive, integrate_rk4)
from .steady import (FixedPoint, SolutionCensus, census, classify_pattern,
                     eigenvalues, jacobian, jacobian_fd, newton_solve)
from .cycles import (BasinSample, CycleDescriptor, basin_sample,
                     classify_attractor, classify_cycle, detect_cycle)
from .continuation import (BifurcationEvent, Branch, ContinuationError,
                           PhasePoint, branch_track, locate_hopf, locate_merge,
                           locate_pitchfork, phase_diagram)

__all__ = [
    "ModelParams", "UnitCell", "UnitScale", "build_unit_cell",
    "geometric_diag_coupling", "physical_units", "preset",
    "IntegrationError", "Trajectory", "eom_rhs", "initial_state",
    "integrate_adaptive", "integrate_rk4",
    "FixedPoint", "SolutionCensus", "census", "classify_pattern",
    "eigenvalues", "jacobian", "jacobian_fd", "newton_solve",
    "BasinSample", "CycleDescriptor", "basin_sample", "classify_attractor",
    "classify_cycle", "detect_cycle",
    "BifurcationEvent", "Branch", "ContinuationError", "PhasePoint",
    "branch_track", "locate_hopf", "locate_merge", "locate_pitchfork",
    "phase_diagram",
]
