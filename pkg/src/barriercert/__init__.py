"""Input-output robustness certificates for barrier-based MPC.

The package closes the loop between a linear plant, an output-feedback
barrier MPC controller, and frequency-domain multiplier tests: it builds
the condensed controller map, bounds its slope, wraps it in a family of
integral quadratic constraints, and certifies closed-loop stability by
solving a single semidefinite feasibility problem.  Margin sweeps,
closed-loop simulation, and a property-based self-test suite sit on top.
"""

from .lti import (
    StateSpace,
    ObserverPair,
    dare_kalman,
    observer_with_input,
    freq_response,
    series,
    diagonal_augment,
    output_gain,
    interconnect,
    schur_stable,
)
from .mpc import (
    ConstraintSet,
    BarrierProblem,
    NewtonError,
    Trajectory,
    condense,
    barrier_eval,
    phi_solve,
    psi_solve,
    box_qp_solve,
    parallel_decompose_solve,
    closed_loop_simulate,
    recentering_weights,
)
from .slope import SlopeCertificate, compute_m, m_grid_oracle
from .multipliers import (
    MultiplierSpec,
    multiplier_constraint_set,
    params_to_matrices,
    m_frequency,
    pi_frequency,
    static_multiplier,
    psi_realize,
    assemble_K,
    dominance_margin,
)
from .kyp import (
    LmiProblem,
    CertificationReport,
    build_G_psi,
    solve_kyp_lmi,
    lmi_residual,
    frequency_check,
    dump_lmi,
)
from .analysis import (
    AnalysisConfig,
    LoopData,
    MarginResult,
    BracketError,
    MonotonicityError,
    example_plant,
    task_config,
    synthesize,
    build_Ms,
    certify,
    bisect_margin,
)
from .properties import PropertyCase, CaseResult, SuiteReport, run_case, run_suite

__version__ = "0.1.0"

__all__ = [
    "StateSpace",
    "ObserverPair",
    "dare_kalman",
    "observer_with_input",
    "freq_response",
    "series",
    "diagonal_augment",
    "output_gain",
    "interconnect",
    "schur_stable",
    "ConstraintSet",
    "BarrierProblem",
    "NewtonError",
    "Trajectory",
    "condense",
    "barrier_eval",
    "phi_solve",
    "psi_solve",
    "box_qp_solve",
    "parallel_decompose_solve",
    "closed_loop_simulate",
    "recentering_weights",
    "SlopeCertificate",
    "compute_m",
    "m_grid_oracle",
    "MultiplierSpec",
    "multiplier_constraint_set",
    "params_to_matrices",
    "m_frequency",
    "pi_frequency",
    "static_multiplier",
    "psi_realize",
    "assemble_K",
    "dominance_margin",
    "LmiProblem",
    "CertificationReport",
    "build_G_psi",
    "solve_kyp_lmi",
    "lmi_residual",
    "frequency_check",
    "dump_lmi",
    "AnalysisConfig",
    "LoopData",
    "MarginResult",
    "BracketError",
    "MonotonicityError",
    "example_plant",
    "task_config",
    "synthesize",
    "build_Ms",
    "certify",
    "bisect_margin",
    "PropertyCase",
    "CaseResult",
    "SuiteReport",
    "run_case",
    "run_suite",
    "__version__",
]
