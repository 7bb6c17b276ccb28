"""KYP-lemma LMI feasibility for multiplier-certified loop stability.

Given the loop system ``M_s`` (inputs ``[v; U]``, outputs ``[w; theta]``
with the uncertainty channels ``v, w`` absent in the nominal case), a
multiplier class and the shifted Hessian, this module assembles the
state-space LMI

    ``[[A'PA - P, A'PB], [B'PA, B'PB]] + [C D]' K [C D] <= -lambda I``

over the delay-line-augmented stack ``G_psi = Psi [M_s; I]`` and
searches the multiplier parameter cone with an SDP solver.  A reported
certificate is only accepted after two independent checks: the returned
variables must reproduce the LMI residual numerically, and the
frequency-domain inequality must hold with margin on a dense grid.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np

from .lti import StateSpace, freq_response, series, diagonal_augment
from .multipliers import (
    MultiplierSpec,
    EPS_POS,
    assemble_K,
    pi_frequency,
    psi_realize,
    multiplier_constraint_set,
)

__all__ = [
    "LmiProblem",
    "CertificationReport",
    "LAMBDA_MIN",
    "build_G_psi",
    "embed_K",
    "embed_pi",
    "lmi_residual",
    "solve_kyp_lmi",
    "frequency_check",
    "dump_lmi",
]

#: Lower bound on the LMI decay variable lambda.
LAMBDA_MIN = 1e-9

#: Default solver cascade.
SOLVERS = ("CLARABEL", "SCS")

#: Frequency grid size for post-solve verification.
N_FREQ_CHECK = 512


@dataclass(frozen=True)
class LmiProblem:
    """One KYP feasibility instance.

    Parameters
    ----------
    Ms : StateSpace
        Loop system, inputs ``[v; U]`` and outputs ``[w; theta]``
        (``n_w = n_v = 0`` for the nominal loop ``U -> theta``).
    spec : MultiplierSpec
        Multiplier search class; ``spec.dim`` must equal the width of
        ``U``.
    H_tilde : (dim, dim) shifted Hessian entering the multiplier.
    n_w, n_v : widths of the uncertainty output/input channels.
    sigma_delta : fixed scale on the uncertainty multiplier
        ``diag(I, -I)``; by homogeneity of the remaining variables a
        unit scale is fully general.
    """

    Ms: StateSpace
    spec: MultiplierSpec
    H_tilde: np.ndarray
    n_w: int = 0
    n_v: int = 0
    sigma_delta: float = 1.0

    def __post_init__(self):
        H = np.asarray(self.H_tilde, dtype=float)
        object.__setattr__(self, "H_tilde", H)
        if H.shape != (self.spec.dim, self.spec.dim):
            raise ValueError("H_tilde must match the multiplier dimension")
        if self.Ms.n_inputs != self.n_v + self.spec.dim:
            raise ValueError("Ms inputs must be [v; U]")
        if self.Ms.n_outputs != self.n_w + self.spec.dim:
            raise ValueError("Ms outputs must be [w; theta]")
        if (self.n_w == 0) != (self.n_v == 0):
            raise ValueError("uncertainty channels come in in/out pairs")

    @property
    def stack_width(self) -> int:
        """Width of the Psi-augmented signal stack."""
        q = self.spec.depth
        return self.n_w + self.n_v + 2 * (q + 1) * self.spec.dim


@dataclass(frozen=True)
class CertificationReport:
    """Outcome of one LMI solve.

    ``feasible`` is True only when a solver succeeded *and* the
    re-substitution and frequency checks passed.  ``status`` is one of
    ``"certified"``, ``"infeasible"`` or ``"unknown"`` — an unknown
    verdict is never treated as stability.
    """

    feasible: bool
    status: str
    lam: float = 0.0
    params: dict = field(default_factory=dict)
    P: np.ndarray | None = None
    solver: str = ""
    runtime: float = 0.0
    freq_margin: float | None = None
    detail: str = ""


def build_G_psi(problem: LmiProblem) -> StateSpace:
    """Delay-line-augmented stack ``Psi [M_s; I]``.

    The inner stack maps ``[v; U]`` to ``[w; theta; v; U]``; the outer
    factor applies the difference taps to the ``theta`` and ``U``
    signals and passes ``w, v`` through.
    """
    Ms = problem.Ms
    m = Ms.n_inputs
    stack = StateSpace(
        Ms.A, Ms.B,
        np.vstack([Ms.C, np.zeros((m, Ms.n_states))]),
        np.vstack([Ms.D, np.eye(m)]),
    )
    psi11 = psi_realize(problem.spec)
    if problem.n_w:
        outer = diagonal_augment(
            StateSpace.identity(problem.n_w), psi11,
            StateSpace.identity(problem.n_v), psi11,
        )
    else:
        outer = diagonal_augment(psi11, psi11)
    return series(stack, outer)


def _stack_slices(problem: LmiProblem, width: int):
    """Index ranges of the theta- and U-blocks in a ``[w; th; v; U]`` stack.

    ``width`` is the per-signal block width: ``(q+1) dim`` for the
    Psi-augmented stack or ``dim`` for raw frequency samples.
    """
    th = slice(problem.n_w, problem.n_w + width)
    u = slice(problem.n_w + width + problem.n_v,
              problem.n_w + 2 * width + problem.n_v)
    return th, u


def embed_K(problem: LmiProblem, K_theta_u: np.ndarray) -> np.ndarray:
    """Embed a ``[theta-stack; U-stack]`` multiplier into the full stack.

    Adds the fixed uncertainty multiplier ``sigma_delta diag(I, -I)``
    on the ``(w, v)`` channels when present.
    """
    q = problem.spec.depth
    width = (q + 1) * problem.spec.dim
    total = problem.stack_width
    K = np.zeros((total, total))
    th, u = _stack_slices(problem, width)
    K[th, th] = K_theta_u[:width, :width]
    K[th, u] = K_theta_u[:width, width:]
    K[u, th] = K_theta_u[width:, :width]
    K[u, u] = K_theta_u[width:, width:]
    if problem.n_w:
        K[:problem.n_w, :problem.n_w] += problem.sigma_delta * np.eye(problem.n_w)
        v0 = problem.n_w + width
        K[v0:v0 + problem.n_v, v0:v0 + problem.n_v] -= (
            problem.sigma_delta * np.eye(problem.n_v))
    return K


def embed_pi(problem: LmiProblem, pi_theta_u: np.ndarray) -> np.ndarray:
    """Embed frequency samples of ``Pi`` into the raw ``[w; th; v; U]`` stack."""
    dim = problem.spec.dim
    n_sig = problem.n_w + problem.n_v + 2 * dim
    out = np.zeros(pi_theta_u.shape[:-2] + (n_sig, n_sig), dtype=complex)
    th, u = _stack_slices(problem, dim)
    out[..., th, th] = pi_theta_u[..., :dim, :dim]
    out[..., th, u] = pi_theta_u[..., :dim, dim:]
    out[..., u, th] = pi_theta_u[..., dim:, :dim]
    out[..., u, u] = pi_theta_u[..., dim:, dim:]
    if problem.n_w:
        out[..., :problem.n_w, :problem.n_w] += problem.sigma_delta * np.eye(
            problem.n_w)
        v0 = problem.n_w + dim
        out[..., v0:v0 + problem.n_v, v0:v0 + problem.n_v] -= (
            problem.sigma_delta * np.eye(problem.n_v))
    return out


def _param_basis(problem: LmiProblem):
    """Constant LMI-matrix basis, one entry per free multiplier scalar.

    Returns ``[(tap, component, K_full), ...]`` with ``K_full`` the
    embedded middle matrix for a unit value of that scalar; the full
    middle matrix is the nonnegative combination plus the fixed
    uncertainty block.
    """
    spec = problem.spec
    width = spec.dim if spec.mclass == "czf-diagonal" else 1
    # sigma_delta = 0 copy: the fixed uncertainty block is added once,
    # not once per basis element.
    plain = LmiProblem(problem.Ms, spec, problem.H_tilde,
                       problem.n_w, problem.n_v, 0.0)
    entries = []
    for j in spec.taps:
        for d in range(width):
            params = {k: np.zeros(width) for k in spec.taps}
            params[j][d] = 1.0
            K_tu = assemble_K(spec, params, problem.H_tilde)
            entries.append((j, d, embed_K(plain, K_tu)))
    return entries


def lmi_residual(problem: LmiProblem, P: np.ndarray, params: dict,
                 G_psi: StateSpace | None = None) -> np.ndarray:
    """Numeric LMI left-hand side for given variables.

    Used by the re-substitution gate and by homogeneity tests: the map
    ``(P, params) -> residual`` is linear, so scaling both by ``a``
    scales the residual by ``a`` (uncertainty block excluded).
    """
    if G_psi is None:
        G_psi = build_G_psi(problem)
    A, B, C, D = G_psi.A, G_psi.B, G_psi.C, G_psi.D
    K_tu = assemble_K(problem.spec, params, problem.H_tilde)
    K = embed_K(problem, K_tu)
    CD = np.hstack([C, D])
    top = np.hstack([A.T @ P @ A - P, A.T @ P @ B])
    bot = np.hstack([B.T @ P @ A, B.T @ P @ B])
    return np.vstack([top, bot]) + CD.T @ K @ CD


def solve_kyp_lmi(problem: LmiProblem, lam_min: float = LAMBDA_MIN,
                  solvers: tuple = SOLVERS,
                  verify_frequency: bool = True) -> CertificationReport:
    """Search the multiplier cone for a KYP certificate.

    The decay variable is maximized subject to ``lambda >= lam_min``
    (capped at 1 to keep the homogeneous directions bounded).  In the
    nominal case the problem is jointly homogeneous in
    ``(P, params, lambda)`` and the tap parameters are normalized to
    total mass at most one; with uncertainty channels the fixed
    ``sigma_delta`` block provides the scale instead.

    A solver claim is accepted only if re-substituting the returned
    variables reproduces ``residual <= -(lam_min / 2) I`` and (when
    ``verify_frequency``) the dense frequency-domain check passes with
    margin ``lambda / 2``; otherwise the next solver is tried and the
    final verdict degrades to ``"unknown"`` rather than a certificate.
    """
    import cvxpy as cp

    t0 = time.monotonic()
    G_psi = build_G_psi(problem)
    A, B, C, D = G_psi.A, G_psi.B, G_psi.C, G_psi.D
    n, m = G_psi.n_states, G_psi.n_inputs
    CD = np.hstack([C, D])

    P = cp.Variable((n, n), symmetric=True)
    lam = cp.Variable(nonneg=True)
    basis = _param_basis(problem)
    width = (problem.spec.dim
             if problem.spec.mclass == "czf-diagonal" else 1)
    taps = {j: cp.Variable(width) for j in problem.spec.taps}

    K_expr = 0
    for j, d, K_full in basis:
        K_expr = K_expr + taps[j][d] * K_full
    if problem.n_w:
        K_expr = K_expr + embed_K(problem, np.zeros(
            (2 * (problem.spec.depth + 1) * problem.spec.dim,) * 2))

    kyp = cp.bmat([
        [A.T @ P @ A - P, A.T @ P @ B],
        [B.T @ P @ A, B.T @ P @ B],
    ])
    lhs = kyp + CD.T @ K_expr @ CD

    constraints = [lhs + lam * np.eye(n + m) << 0,
                   lam >= lam_min, lam <= 1.0]
    for j in problem.spec.taps:
        constraints.append(taps[j] >= (EPS_POS if j == 0 else 0.0))
    if not problem.n_w:
        constraints.append(sum(cp.sum(taps[j]) for j in problem.spec.taps) <= 1)

    prob = cp.Problem(cp.Maximize(lam), constraints)
    attempts = []
    for solver in solvers:
        try:
            if solver == "SCS":
                prob.solve(solver="SCS", eps=1e-8, max_iters=200000)
            else:
                prob.solve(solver=solver)
        except KeyboardInterrupt:
            raise
        except BaseException as exc:  # solver backends can raise panics
            attempts.append(f"{solver}: error {type(exc).__name__}")
            continue
        status = prob.status
        if status in ("infeasible", "infeasible_inaccurate"):
            return CertificationReport(
                feasible=False, status="infeasible", solver=solver,
                runtime=time.monotonic() - t0,
                detail="; ".join(attempts + [f"{solver}: {status}"]))
        if status not in ("optimal", "optimal_inaccurate"):
            attempts.append(f"{solver}: {status}")
            continue
        P_num = np.asarray(P.value)
        params = {j: np.atleast_1d(np.asarray(taps[j].value, dtype=float))
                  for j in problem.spec.taps}
        # clip solver noise off the cone boundary
        for j in problem.spec.taps:
            lo = EPS_POS if j == 0 else 0.0
            params[j] = np.maximum(params[j], lo)
        lam_num = float(lam.value)
        res = lmi_residual(problem, P_num, params, G_psi=G_psi)
        gate = float(np.max(np.linalg.eigvalsh(0.5 * (res + res.T))))
        if gate > -lam_min / 2:
            attempts.append(f"{solver}: re-substitution gate {gate:.2e}")
            continue
        margin = None
        if verify_frequency:
            margin = frequency_check(problem, params)
            if margin > -lam_num / 2:
                attempts.append(f"{solver}: frequency margin {margin:.2e}")
                continue
        return CertificationReport(
            feasible=True, status="certified", lam=lam_num, params=params,
            P=P_num, solver=solver, runtime=time.monotonic() - t0,
            freq_margin=margin, detail="; ".join(attempts))
    return CertificationReport(
        feasible=False, status="unknown", runtime=time.monotonic() - t0,
        detail="; ".join(attempts) or "no solver attempt succeeded")


def frequency_check(problem: LmiProblem, params: dict,
                    n_freq: int = N_FREQ_CHECK) -> float:
    """Dense-grid maximum of ``lambda_max([Ms; I]^* Pi [Ms; I])``.

    A sound certificate must drive this strictly negative; callers
    compare against ``-lambda / 2``.
    """
    omegas = np.linspace(0.0, np.pi, n_freq)
    pis = embed_pi(problem, pi_frequency(
        problem.spec, params, problem.H_tilde, omegas))
    m = problem.Ms.n_inputs
    worst = -np.inf
    for i, w in enumerate(omegas):
        G = freq_response(problem.Ms, w)
        GI = np.vstack([G, np.eye(m)])
        Q = GI.conj().T @ pis[i] @ GI
        worst = max(worst, float(np.max(np.linalg.eigvalsh(
            0.5 * (Q + Q.conj().T)))))
    return worst


def dump_lmi(problem: LmiProblem, report: CertificationReport | None = None
             ) -> str:
    """Plain-text rendering of the LMI data for external checking.

    Prints the augmented realization, the multiplier structure and,
    when a report is given, the numeric middle matrix and certificate
    diagnostics.  Matrices are printed row-major with one row per line.
    """
    G_psi = build_G_psi(problem)
    out = io.StringIO()

    def put(name, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        out.write(f"{name} ({M.shape[0]}x{M.shape[1]}):\n")
        for row in M:
            out.write("  " + "  ".join(f"{v: .12e}" for v in row) + "\n")

    out.write("KYP feasibility problem\n")
    out.write(f"multiplier class: {problem.spec.mclass}  "
              f"taps n-={problem.spec.n_minus} n+={problem.spec.n_plus}  "
              f"dim={problem.spec.dim}\n")
    out.write(f"uncertainty channels: n_w={problem.n_w} n_v={problem.n_v} "
              f"sigma_delta={problem.sigma_delta}\n")
    out.write("LMI: [[A'PA-P, A'PB],[B'PA, B'PB]] + [C D]'K[C D] <= -lambda I\n")
    for name, M in (("A", G_psi.A), ("B", G_psi.B),
                    ("C", G_psi.C), ("D", G_psi.D)):
        put(name, M)
    put("H_tilde", problem.H_tilde)
    for c in multiplier_constraint_set(problem.spec):
        out.write(f"tap {c['tap']:+d}: form={c['form']} lower={c['lower']}\n")
    if report is not None and report.params:
        K = embed_K(problem, assemble_K(problem.spec, report.params,
                                        problem.H_tilde))
        put("K", K)
        if report.P is not None:
            put("P", report.P)
        out.write(f"lambda: {report.lam:.6e}\n")
        out.write(f"status: {report.status} via {report.solver}\n")
        if report.freq_margin is not None:
            out.write(f"frequency margin: {report.freq_margin:.6e}\n")
    return out.getvalue()
