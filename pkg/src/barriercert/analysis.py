"""Closed-loop assembly, certification and margin bisection.

Builds the uncertain interconnection ``M_s`` around an observer-based
barrier MPC loop, runs single KYP certifications, and drives the three
margin searches (largest output gain ``kappa``, smallest control weight
``r``, largest uncertainty level ``b``).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .lti import StateSpace, ObserverPair, dare_kalman, observer_with_input
from .mpc import ConstraintSet, BarrierProblem, condense
from .slope import compute_m, SlopeCertificate
from .multipliers import MultiplierSpec
from .kyp import (
    LmiProblem,
    CertificationReport,
    solve_kyp_lmi,
    LAMBDA_MIN,
    SOLVERS,
)

__all__ = [
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
    "BRACKETS",
]

#: Default bisection brackets per target.
BRACKETS = {
    "max-kappa": (1.0, 10.0),
    "min-r": (1e-4, 10.0),
    "max-b": (0.0, 1.0),
}

#: Default relative bisection tolerance.
TOL_BISECT = 1e-3


class BracketError(RuntimeError):
    """Both bracket ends gave the same verdict; no margin inside."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = tuple(trace)


class MonotonicityError(RuntimeError):
    """A certified value appeared beyond an uncertified one."""


@dataclass(frozen=True)
class AnalysisConfig:
    """Complete description of one certification scenario.

    Parameters
    ----------
    plant : StateSpace
        Discrete-time plant ``(A, B, C)`` (no feedthrough).
    observer_Qn, observer_Rn : Kalman design weights (identity scale).
    N : control = prediction horizon.
    q_weight : output weight scale in the stage cost (the state-space
        weight is ``C' q C``; an identity output weight reproduces the
        reference tables, see notes in the analysis module).
    r_weight : control weight scalar ``r`` (stage cost ``r |u|^2``).
    mu : barrier weight.
    barrier_kind : barrier variant for the controller map.
    lower, upper : per-input stage bounds (strictly bracketing 0).
    mode : "barrier" (slope-shifted ``H_tilde = H + mu m I``) or
        "nominal" (sector-only certificate, ``H_tilde = H``).
    mclass : multiplier class name.
    n_zf : FIR taps per side for the dynamic classes.
    b : uncertainty level (0 removes the channel).
    kappa : output gain on the plant (Task 1's destabilizing gain).
    uncertainty_tap : "measured" feeds the perturbed measurement to the
        uncertainty ("w = sqrt(b) y_meas"); "nominal" feeds the
        unperturbed plant output, reproducing the block formula with a
        zero (1,1) entry.  The default "auto" resolves per mode:
        "measured" for barrier loops, "nominal" for nominal loops (the
        combination that reproduces the reference margins, see the
        notes in this module).
    tol_bisect : relative bisection tolerance.
    lam_min : LMI decay floor.
    solvers : SDP backend cascade.
    """

    plant: StateSpace
    observer_Qn: float = 1.0
    observer_Rn: float = 1.0
    N: int = 2
    q_weight: float = 1.0
    r_weight: float = 0.1
    mu: float = 0.8
    barrier_kind: str = "gradient-recentered"
    lower: tuple = (-0.5,)
    upper: tuple = (1.0,)
    mode: str = "barrier"
    mclass: str = "static-sector"
    n_zf: int = 0
    b: float = 0.0
    kappa: float = 1.0
    uncertainty_tap: str = "auto"
    tol_bisect: float = TOL_BISECT
    lam_min: float = LAMBDA_MIN
    solvers: tuple = SOLVERS

    def __post_init__(self):
        if self.b < 0:
            raise ValueError("b must be nonnegative")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.r_weight <= 0:
            raise ValueError("r must be positive")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.mode not in ("barrier", "nominal"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.uncertainty_tap not in ("auto", "measured", "nominal"):
            raise ValueError(f"unknown uncertainty tap {self.uncertainty_tap!r}")
        if self.N < 1:
            raise ValueError("horizon must be at least 1")

    def resolved_tap(self) -> str:
        """The effective uncertainty tap after per-mode resolution."""
        if self.uncertainty_tap != "auto":
            return self.uncertainty_tap
        return "measured" if self.mode == "barrier" else "nominal"


@dataclass(frozen=True)
class LoopData:
    """Synthesized loop pieces shared by certification and simulation."""

    problem: BarrierProblem
    observer: ObserverPair
    slope: SlopeCertificate
    H_tilde: np.ndarray
    Ms: StateSpace
    lmi: LmiProblem


def example_plant() -> StateSpace:
    """The running numerical example's two-state non-minimum-phase plant."""
    return StateSpace(
        A=np.array([[0.7, 0.3], [0.8, 0.01]]),
        B=np.array([[1.0], [0.0]]),
        C=np.array([[1.0, 1.5]]),
        D=np.zeros((1, 1)),
    )


def task_config(task: str, mode: str = "barrier",
                mclass: str = "static-sector", n_zf: int = 0,
                **overrides) -> AnalysisConfig:
    """Preset configurations for the three margin studies.

    ``task1``: gain sweep at ``b = 0`` with the calibrated control
    weight ``r = 0.045``; ``task2a``: control-weight sweep at
    ``b = 0.25``; ``task2b``: uncertainty sweep at ``r = 0.1``;
    ``task2b-prose``: the alternative ``r = 0.001`` variant.
    """
    base = dict(plant=example_plant(), mode=mode, mclass=mclass, n_zf=n_zf)
    presets = {
        "task1": dict(b=0.0, r_weight=0.045),
        "task2a": dict(b=0.25, r_weight=0.1),
        "task2b": dict(b=0.0, r_weight=0.1),
        "task2b-prose": dict(b=0.0, r_weight=0.001),
    }
    if task not in presets:
        raise ValueError(f"unknown task {task!r}")
    base.update(presets[task])
    base.update(overrides)
    return AnalysisConfig(**base)


def synthesize(config: AnalysisConfig) -> LoopData:
    """Condense, synthesize the observer, and assemble the LMI problem."""
    plant = config.plant
    n_u = plant.n_inputs
    Q_state = config.q_weight * (plant.C.T @ plant.C)
    R = config.r_weight * np.eye(n_u)
    H, S = condense(plant.A, plant.B, Q_state, R, config.N)
    constraints = ConstraintSet.box_horizon(config.lower, config.upper,
                                            n_u, config.N)
    problem = BarrierProblem(H=H, S=S, constraints=constraints,
                             barrier_kind=config.barrier_kind, mu=config.mu)
    if config.mode == "barrier":
        cert = compute_m(constraints, H=H, mu=config.mu)
    else:
        # Sector-only certificate of the unbarriered QP: m-term absent.
        cert = SlopeCertificate(m=0.0, H_tilde=H.copy(), method="nominal-sector")
    H_tilde = cert.H_tilde

    pair = dare_kalman(plant.A, plant.C,
                       config.observer_Qn * np.eye(plant.n_states),
                       config.observer_Rn * np.eye(plant.n_outputs))
    observer = observer_with_input(pair, plant.B)

    Ms = build_Ms(config, S=S)
    n_w = plant.n_outputs if config.b > 0 else 0
    n_v = n_w
    spec = MultiplierSpec(config.mclass, config.n_zf, config.n_zf,
                          dim=n_u * config.N)
    lmi = LmiProblem(Ms=Ms, spec=spec, H_tilde=H_tilde, n_w=n_w, n_v=n_v)
    return LoopData(problem=problem, observer=observer, slope=cert,
                    H_tilde=H_tilde, Ms=Ms, lmi=lmi)


def build_Ms(config: AnalysisConfig, S: np.ndarray | None = None) -> StateSpace:
    """Realization of the loop system ``M_s``.

    Inputs ``[v; U]`` and outputs ``[w; theta]`` (``v, w`` absent for
    ``b = 0``), with the frequency response

        ``diag(sqrt(b) I, -S) [[T, G], [J_y, J_u + J_y G]]
          diag(sqrt(b) I, E)``

    where ``E`` selects the first input move, ``G`` carries the output
    gain ``kappa``, and the (1,1) block ``T`` is ``I`` for the measured
    uncertainty tap or ``0`` for the nominal tap.  The observer is the
    predictor-form Kalman filter designed on the unscaled plant.
    """
    plant = config.plant
    if S is None:
        Q_state = config.q_weight * (plant.C.T @ plant.C)
        _, S = condense(plant.A, plant.B,
                        Q_state, config.r_weight * np.eye(plant.n_inputs),
                        config.N)
    A, B, C = plant.A, plant.B, plant.C
    n_x, n_u, n_y = plant.n_states, plant.n_inputs, plant.n_outputs
    n_U = n_u * config.N
    pair = dare_kalman(A, C, config.observer_Qn * np.eye(n_x),
                       config.observer_Rn * np.eye(n_y))
    AL = A @ pair.L
    kC = config.kappa * C            # the perturbed plant output map
    E = np.zeros((n_u, n_U))
    E[:, :n_u] = np.eye(n_u)
    BE = B @ E

    sb = np.sqrt(config.b)
    A_ms = np.block([[A, np.zeros((n_x, n_x))],
                     [AL @ kC, A - AL @ C]])
    if config.b == 0:
        B_ms = np.vstack([BE, BE])
        C_ms = np.hstack([np.zeros((n_U, n_x)), -S])
        D_ms = np.zeros((n_U, n_U))
        return StateSpace(A_ms, B_ms, C_ms, D_ms)

    B_ms = np.block([[np.zeros((n_x, n_y)), BE],
                     [sb * AL, BE]])
    theta_C = np.hstack([np.zeros((n_U, n_x)), -S])
    theta_D = np.zeros((n_U, n_y + n_U))
    if config.resolved_tap() == "measured":
        w_C = np.hstack([sb * kC, np.zeros((n_y, n_x))])
        w_D = np.hstack([config.b * np.eye(n_y), np.zeros((n_y, n_U))])
    else:
        w_C = np.hstack([sb * kC, np.zeros((n_y, n_x))])
        w_D = np.zeros((n_y, n_y + n_U))
    C_ms = np.vstack([w_C, theta_C])
    D_ms = np.vstack([w_D, theta_D])
    return StateSpace(A_ms, B_ms, C_ms, D_ms)


def certify(config: AnalysisConfig) -> CertificationReport:
    """Single certification at the configured operating point."""
    loop = synthesize(config)
    return solve_kyp_lmi(loop.lmi, lam_min=config.lam_min,
                         solvers=config.solvers)


@dataclass(frozen=True)
class MarginResult:
    """Outcome of a margin bisection.

    ``margin`` is the last certified value; ``at_floor`` marks a min-r
    search that certified all the way down to the bracket floor.  The
    trace records every probe as ``(value, feasible, lambda)``.
    """

    target: str
    margin: float
    at_floor: bool
    trace: tuple
    bracket: tuple


def _probe(config: AnalysisConfig, target: str, value: float
           ) -> CertificationReport:
    if target == "max-kappa":
        cfg = dataclasses.replace(config, kappa=value)
    elif target == "min-r":
        cfg = dataclasses.replace(config, r_weight=value)
    elif target == "max-b":
        cfg = dataclasses.replace(config, b=value)
    else:
        raise ValueError(f"unknown target {target!r}")
    return certify(cfg)


def _check_monotone(target: str, trace) -> None:
    """Abort when the verdict pattern contradicts margin monotonicity."""
    increasing_good = target == "min-r"
    for v1, ok1, _ in trace:
        for v2, ok2, _ in trace:
            # contradiction: a value on the easy side of a certified one
            # failed (easy side: smaller for max-*, larger for min-r)
            bad = (ok1 and not ok2 and
                   (v2 > v1 if increasing_good else v2 < v1) and
                   not np.isclose(v1, v2))
            if bad:
                raise MonotonicityError(
                    f"{target}: certified at {v1:g} but not at {v2:g}; "
                    "bisection verdicts are not monotone")
    # possible only when certified region is an interval toward the easy end


def bisect_margin(config: AnalysisConfig, target: str,
                  interval: tuple | None = None,
                  tol_bisect: float | None = None) -> MarginResult:
    """Bisection for the three margin tasks.

    ``max-kappa`` and ``max-b`` search arithmetically for the largest
    certified value; ``min-r`` searches the control weight downward on a
    log scale.  The bracket must split (one end certified, the other
    not), except that a min-r search certified at both ends reports the
    bracket floor (the search cannot distinguish margins below it).

    Returns the last certified value together with the full probe trace;
    raises :class:`BracketError` when the bracket does not split and
    :class:`MonotonicityError` on contradictory verdict patterns.
    """
    lo, hi = interval if interval is not None else BRACKETS[target]
    tol = config.tol_bisect if tol_bisect is None else tol_bisect
    trace = []

    def probe(v):
        rep = _probe(config, target, v)
        trace.append((float(v), rep.feasible, rep.lam))
        return rep.feasible

    ok_lo = probe(lo)
    ok_hi = probe(hi)
    maximizing = target in ("max-kappa", "max-b")
    log_scale = target == "min-r"

    if maximizing:
        if not ok_lo:
            raise BracketError(
                f"{target}: not certified at bracket start {lo:g}", trace)
        if ok_hi:
            raise BracketError(
                f"{target}: certified at both bracket ends (cap {hi:g})",
                trace)
        good, bad = lo, hi
    else:
        if not ok_hi:
            raise BracketError(
                f"{target}: not certified at bracket top {hi:g}", trace)
        if ok_lo:
            _check_monotone(target, trace)
            return MarginResult(target=target, margin=float(lo),
                                at_floor=True, trace=tuple(trace),
                                bracket=(lo, hi))
        good, bad = hi, lo

    while abs(good - bad) > tol * max(abs(good), abs(bad)):
        if log_scale:
            mid = float(np.sqrt(good * bad))
        else:
            mid = 0.5 * (good + bad)
        if probe(mid):
            good = mid
        else:
            bad = mid
    _check_monotone(target, trace)
    return MarginResult(target=target, margin=float(good), at_floor=False,
                        trace=tuple(trace), bracket=(lo, hi))
