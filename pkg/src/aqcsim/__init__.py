"""Simulator for feedback-controlled adiabatic quantum computation.

Builds random diagonal problem Hamiltonians under a strong transverse bias,
propagates the Pechukas-Yukawa level dynamics to obtain the ground-state
curvature, evolves the wavefunction under linear or curvature-feedback
annealing schedules, and runs the seeded ensemble experiments (P versus T,
time-to-target scaling in qubit count, gain sweeps) behind the `aqcsim`
command-line tool.
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateGroundError,
    FitUnderdeterminedError,
    IntegrationFailureError,
    InvalidStateError,
    NearDegeneracyError,
    ProfileFormatError,
    SimulationError,
    UnreachableTargetError,
)
from .hamiltonians import (
    BiasSpec,
    EigenSystem,
    HamiltonianPair,
    ProblemSpec,
    bias_ground_state,
    build_bias,
    build_problem,
    default_bias_strength,
    diagonalize,
    make_pair,
    pair_from_seed,
    problem_ground_index,
    sample_problem,
    spectrum_at,
    total_hamiltonian,
)
from .spectral import (
    CurvatureSample,
    LevelFlow,
    SpectrumState,
    curvature,
    curvature_from_spectrum,
    curvature_profile,
    init_spectrum,
    integrate_py,
    py_rhs,
    solve_levels,
)
from .evolution import (
    BackactionWindow,
    PaceController,
    RunRecord,
    SchedulePlan,
    adiabatic_time,
    backaction_window_ok,
    build_schedule,
    evolve,
    gain_for_time,
    min_gap,
    pace,
    success_probability,
)
from .experiments import (
    DeltaPResult,
    EnsembleSpec,
    EnsembleSummary,
    PowerLawFit,
    ScalingCell,
    TargetResult,
    delta_p_sweep,
    instance_seed,
    make_instance,
    scaling_study,
    sweep_T,
    time_to_target,
)
from .state import WaveState
