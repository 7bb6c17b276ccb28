"""Condensed MPC quadratic programs and barrier controller maps.

Builds the condensed horizon QP ``min 1/2 U'HU - theta'U`` from plant
data, evaluates recentered and relaxed log-barriers, and realizes the
controller map ``phi`` (and the auxiliary maps ``psi`` and ``nu_i``) by
damped Newton iteration with a fraction-to-boundary safeguard.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .lti import StateSpace, ObserverPair, _as_matrix

__all__ = [
    "ConstraintSet",
    "BarrierProblem",
    "NewtonError",
    "condense",
    "barrier_eval",
    "phi_solve",
    "psi_solve",
    "box_qp_solve",
    "parallel_decompose_solve",
    "closed_loop_simulate",
    "recentering_weights",
]

#: Stationarity tolerance for the damped Newton solver.
TOL_NEWTON = 1e-10

#: Maximum Newton iterations before giving up.
MAX_NEWTON_ITER = 200

#: Fraction-to-boundary factor: iterates keep at least this fraction of
#: the current slack on every constraint.
BOUNDARY_KEEP = 0.01

#: Construction-time tolerance for the recentering identities
#: B(0) = 0 and grad B(0) = 0.
RECENTER_TOL = 1e-10


class NewtonError(RuntimeError):
    """Newton iteration failed to reach the stationarity tolerance.

    Attributes
    ----------
    residual : float
        Norm of the last stationarity residual.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class ConstraintSet:
    """Linear inequality constraints ``L u <= W`` with structure tags.

    Parameters
    ----------
    kind : {"box", "staged", "polytope"}
        Structural class.  ``box`` is one coordinate per block with an
        upper and a lower bound; ``staged`` is a block-diagonal family
        with mutually orthogonal block row spaces; ``polytope`` carries
        no exploitable structure.
    L : (n_c, n_U) array_like
    W : (n_c,) array_like
        Right-hand sides; all strictly positive so that 0 is strictly
        interior (required for the recentered barrier).
    blocks : tuple of (row-index tuple), optional
        For staged/box kinds, the partition of constraint rows into
        orthogonal blocks.
    """

    kind: str
    L: np.ndarray
    W: np.ndarray
    blocks: tuple = ()

    def __post_init__(self):
        if self.kind not in ("box", "staged", "polytope"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        L = _as_matrix(self.L, "L")
        W = np.asarray(self.W, dtype=float).reshape(-1)
        if W.shape[0] != L.shape[0]:
            raise ValueError("W length must match the rows of L")
        if np.any(W <= 0):
            raise ValueError("all W_i must be positive (0 strictly interior)")
        L.setflags(write=False)
        W.setflags(write=False)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "W", W)
        blocks = tuple(tuple(int(i) for i in blk) for blk in self.blocks)
        if self.kind in ("box", "staged"):
            if not blocks:
                raise ValueError(f"{self.kind} constraints need a block partition")
            seen = sorted(i for blk in blocks for i in blk)
            if seen != list(range(L.shape[0])):
                raise ValueError("blocks must partition the constraint rows")
            for a in range(len(blocks)):
                for b in range(a + 1, len(blocks)):
                    cross = L[list(blocks[a])] @ L[list(blocks[b])].T
                    if np.max(np.abs(cross)) > 1e-12:
                        raise ValueError(
                            "staged blocks must have orthogonal row spaces"
                        )
        object.__setattr__(self, "blocks", blocks)

    @property
    def n_inputs(self) -> int:
        return self.L.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.L.shape[0]

    @staticmethod
    def box(lower, upper) -> "ConstraintSet":
        """Box ``lower_i <= u_i <= upper_i`` with ``lower_i < 0 < upper_i``.

        Stored in staged-compatible form: block ``i`` holds the rows
        ``u_i <= upper_i`` and ``-u_i <= -lower_i``.
        """
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise ValueError("lower/upper must have equal length")
        n = lower.shape[0]
        L = np.zeros((2 * n, n))
        W = np.zeros(2 * n)
        blocks = []
        for i in range(n):
            L[2 * i, i] = 1.0
            W[2 * i] = upper[i]
            L[2 * i + 1, i] = -1.0
            W[2 * i + 1] = -lower[i]
            blocks.append((2 * i, 2 * i + 1))
        return ConstraintSet(kind="box", L=L, W=W, blocks=tuple(blocks))

    @staticmethod
    def box_horizon(lower, upper, n_u: int, horizon: int) -> "ConstraintSet":
        """Per-stage box bounds tiled over the whole input horizon."""
        lo = np.tile(np.asarray(lower, dtype=float).reshape(-1), horizon)
        up = np.tile(np.asarray(upper, dtype=float).reshape(-1), horizon)
        if lo.shape[0] != n_u * horizon:
            raise ValueError("bounds do not tile to n_u * horizon")
        return ConstraintSet.box(lo, up)

    def block_basis(self, index: int) -> np.ndarray:
        """Orthonormal basis ``L_bar_i`` of block ``index``'s row space."""
        rows = self.L[list(self.blocks[index])]
        # SVD right-singular vectors spanning the row space.
        _, s, Vt = np.linalg.svd(rows, full_matrices=False)
        rank = int(np.sum(s > 1e-12 * max(1.0, s[0])))
        return Vt[:rank]

    def slack(self, U) -> np.ndarray:
        """Constraint slacks ``W - L U``."""
        U = np.asarray(U, dtype=float).reshape(-1)
        return self.W - self.L @ U


def recentering_weights(constraints: ConstraintSet) -> np.ndarray:
    """Canonical weights for the weight-recentered barrier.

    For every box block the pair ``(w_up, w_lo)`` is chosen so the
    barrier gradient cancels at the origin, normalized to sum to the
    block size::

        w_i = 2 W_i / (W_up + W_lo)

    Parameters
    ----------
    constraints : ConstraintSet
        Must be of box kind.

    Returns
    -------
    (n_c,) ndarray of positive weights with ``sum_i w_i L_i / W_i = 0``.
    """
    if constraints.kind != "box":
        raise ValueError("canonical recentering weights need a box set")
    w = np.zeros(constraints.n_constraints)
    for blk in constraints.blocks:
        total = sum(constraints.W[i] for i in blk)
        for i in blk:
            w[i] = len(blk) * constraints.W[i] / total
    return w


@dataclass(frozen=True)
class BarrierProblem:
    """Condensed barrier MPC instance.

    The controller map is ``phi(theta) = argmin_U 1/2 U'HU - theta'U
    + mu B(U)`` with ``theta = -S x``.

    Parameters
    ----------
    H : (n_U, n_U) symmetric positive-definite matrix.
    S : (n_U, n_x) matrix mapping state to ``theta = -S x``.
    constraints : ConstraintSet
    barrier_kind : {"gradient-recentered", "weight-recentered", "relaxed"}
    mu : positive barrier weight.
    delta : per-constraint relaxation thresholds (relaxed kind only);
        defaults to ``0.1 W_i``.
    weights : per-constraint recentering weights (weighted kind only).
    """

    H: np.ndarray
    S: np.ndarray
    constraints: ConstraintSet
    barrier_kind: str = "gradient-recentered"
    mu: float = 1.0
    delta: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        H = _as_matrix(self.H, "H")
        S = _as_matrix(self.S, "S")
        if not np.allclose(H, H.T, atol=1e-12):
            raise ValueError("H must be symmetric")
        if np.min(np.linalg.eigvalsh(H)) <= 0:
            raise ValueError("H must be positive definite")
        if self.barrier_kind not in (
            "gradient-recentered", "weight-recentered", "relaxed"
        ):
            raise ValueError(f"unknown barrier kind {self.barrier_kind!r}")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if H.shape[0] != self.constraints.n_inputs:
            raise ValueError("H dimension must match the constraint set")
        H.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "S", S)

        if self.barrier_kind == "relaxed":
            delta = (0.1 * self.constraints.W if self.delta is None
                     else np.asarray(self.delta, dtype=float).reshape(-1))
            if delta.shape[0] != self.constraints.n_constraints:
                raise ValueError("delta length must match the constraints")
            if np.any(delta <= 0) or np.any(delta >= self.constraints.W):
                raise ValueError("need 0 < delta_i < W_i")
            delta.setflags(write=False)
            object.__setattr__(self, "delta", delta)
        if self.barrier_kind == "weight-recentered":
            w = (recentering_weights(self.constraints) if self.weights is None
                 else np.asarray(self.weights, dtype=float).reshape(-1))
            if w.shape[0] != self.constraints.n_constraints or np.any(w <= 0):
                raise ValueError("weights must be positive per constraint")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

        # Recentering sanity: B(0) = 0 and grad B(0) = 0 by construction.
        value, grad, _ = barrier_eval(self, np.zeros(H.shape[0]))
        if abs(value) > RECENTER_TOL or np.max(np.abs(grad)) > RECENTER_TOL:
            raise ValueError(
                "barrier is not recentered: "
                f"B(0)={value:.2e}, |grad B(0)|={np.max(np.abs(grad)):.2e}"
            )

    @property
    def n_inputs(self) -> int:
        return self.H.shape[0]


def condense(A, B_u, Q, R, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Condense an output/state-weighted MPC cost over horizon ``N``.

    The stage cost ``|x_{k+i}|_Q^2 + |u_{k+i-1}|_R^2`` summed over
    ``i = 1..N`` condenses to ``U'(Gam'Qbar Gam + Rbar)U +
    2 U'Gam'Qbar Om x`` so the controller QP reads
    ``min 1/2 U'HU - theta'U`` with::

        H = Gam' Qbar Gam + Rbar,   theta = -S x,   S = Gam' Qbar Om

    and stationarity ``H U - theta = 0``.  (Conventions are fixed by
    this stationarity identity; no factor 2 is carried on H and S, so a
    stated barrier weight ``mu`` acts against this H.)

    Parameters
    ----------
    A, B_u : plant matrices.
    Q : (n_x, n_x) state-space stage weight, positive semidefinite.
        For an output-weighted cost pass ``C' Q_y C``.
    R : (n_u, n_u) input weight, positive definite.
    N : horizon (control = prediction).

    Returns
    -------
    (H, S) : condensed Hessian and state map.
    """
    A = _as_matrix(A, "A")
    B_u = _as_matrix(B_u, "B_u")
    Q = _as_matrix(Q, "Q")
    R = _as_matrix(R, "R")
    if N < 1:
        raise ValueError("horizon must be at least 1")
    if np.min(np.linalg.eigvalsh(0.5 * (R + R.T))) <= 0:
        raise ValueError("R must be positive definite")
    if np.min(np.linalg.eigvalsh(0.5 * (Q + Q.T))) < -1e-12:
        raise ValueError("Q must be positive semidefinite")
    n_x, n_u = B_u.shape
    Gam = np.zeros((N * n_x, N * n_u))
    Om = np.zeros((N * n_x, n_x))
    powers = [np.eye(n_x)]
    for _ in range(N):
        powers.append(A @ powers[-1])
    for i in range(N):          # block row: prediction x_{k+i+1}
        Om[i * n_x:(i + 1) * n_x] = powers[i + 1]
        for j in range(i + 1):  # block col: input u_{k+j}
            Gam[i * n_x:(i + 1) * n_x, j * n_u:(j + 1) * n_u] = (
                powers[i - j] @ B_u
            )
    Qbar = np.kron(np.eye(N), Q)
    Rbar = np.kron(np.eye(N), R)
    H = Gam.T @ Qbar @ Gam + Rbar
    S = Gam.T @ Qbar @ Om
    return 0.5 * (H + H.T), S


def _log_terms(p: BarrierProblem, slack: np.ndarray):
    """Per-constraint value/first/second derivatives w.r.t. the slack.

    For hard kinds this is ``-ln s`` (with a domain error at the
    boundary); the relaxed kind splices the quadratic continuation of
    ``-ln`` below the threshold ``delta_i`` with matching value, slope
    and curvature.
    """
    if p.barrier_kind == "relaxed":
        d = p.delta
        smooth = slack >= d
        v = np.empty_like(slack)
        g1 = np.empty_like(slack)
        g2 = np.empty_like(slack)
        s_ok = np.where(smooth, slack, 1.0)
        v[smooth] = -np.log(s_ok[smooth])
        g1[smooth] = -1.0 / s_ok[smooth]
        g2[smooth] = 1.0 / s_ok[smooth] ** 2
        t = slack - d
        v[~smooth] = (-np.log(d) - t / d + 0.5 * (t / d) ** 2)[~smooth]
        g1[~smooth] = (-1.0 / d + t / d ** 2)[~smooth]
        g2[~smooth] = (np.ones_like(t) / d ** 2)[~smooth]
        return v, g1, g2
    if np.any(slack <= 0):
        raise ValueError("barrier evaluated on or outside the boundary")
    return -np.log(slack), -1.0 / slack, 1.0 / slack ** 2


def barrier_eval(p: BarrierProblem, U) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian of the recentered barrier at ``U``.

    All three kinds are normalized so ``B(0) = 0`` and
    ``grad B(0) = 0``:

    - gradient-recentered: ``sum_i [-ln s_i + ln W_i] - g0'U`` with
      ``g0 = sum_i L_i'/W_i``;
    - weight-recentered: ``sum_i w_i [-ln s_i + ln W_i]`` with weights
      satisfying ``sum_i w_i L_i'/W_i = 0``;
    - relaxed: gradient-recentered with the quadratic splice below the
      thresholds, defined for every ``U``.

    Returns
    -------
    (value, gradient, hessian)
    """
    U = np.asarray(U, dtype=float).reshape(-1)
    cs = p.constraints
    slack = cs.slack(U)
    v, g1, g2 = _log_terms(p, slack)
    w = p.weights if p.barrier_kind == "weight-recentered" else np.ones_like(v)

    value = float(w @ (v + np.log(cs.W)))
    # s = W - L U, so d v_i / dU = -g1_i L_i.
    grad = -cs.L.T @ (w * g1)
    hess = (cs.L.T * (w * g2)) @ cs.L
    if p.barrier_kind != "weight-recentered":
        g0 = cs.L.T @ (1.0 / cs.W)
        value -= float(g0 @ U)
        grad = grad - g0
    return value, grad, hess


def _newton(p: BarrierProblem, H_eff: np.ndarray, theta: np.ndarray,
            U0: np.ndarray | None = None,
            tol: float = TOL_NEWTON) -> np.ndarray:
    """Damped Newton for ``min 1/2 U'H_eff U - theta'U + mu B(U)``.

    Line search backtracks on the objective; for hard barriers the step
    is first clipped by the fraction-to-boundary rule so every iterate
    keeps at least ``BOUNDARY_KEEP`` of the current slack.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    U = np.zeros_like(theta) if U0 is None else np.array(U0, dtype=float)
    hard = p.barrier_kind != "relaxed"

    def objective(Uv):
        val, _, _ = barrier_eval(p, Uv)
        return 0.5 * Uv @ H_eff @ Uv - theta @ Uv + p.mu * val

    f = objective(U)
    residual = np.inf
    for _ in range(MAX_NEWTON_ITER):
        _, grad_B, hess_B = barrier_eval(p, U)
        F = H_eff @ U - theta + p.mu * grad_B
        residual = float(np.linalg.norm(F))
        if residual <= tol:
            return U
        step = -np.linalg.solve(H_eff + p.mu * hess_B, F)
        alpha = 1.0
        if hard:
            s = p.constraints.slack(U)
            drop = p.constraints.L @ step      # slack decrease per unit step
            with np.errstate(divide="ignore"):
                caps = np.where(drop > 0, (1.0 - BOUNDARY_KEEP) * s / drop,
                                np.inf)
            alpha = min(1.0, float(np.min(caps)))
        slope = float(F @ step)
        # absolute guard: near the minimizer the predicted decrease falls
        # below rounding noise in the objective, which must not be read
        # as a failed step
        noise = 1e-12 * (1.0 + abs(f))
        for _ in range(60):
            U_try = U + alpha * step
            f_try = objective(U_try)
            if f_try <= f + 1e-4 * alpha * slope + noise:
                break
            alpha *= 0.5
        else:
            raise NewtonError("line search stalled", residual)
        U, f = U_try, f_try
    raise NewtonError(
        f"Newton did not converge in {MAX_NEWTON_ITER} iterations", residual
    )


def phi_solve(p: BarrierProblem, theta, tol: float = TOL_NEWTON) -> np.ndarray:
    """Controller map ``U = phi(theta)``.

    Solves the barrier program to the stationarity residual
    ``|H U - theta + mu grad B(U)| <= tol``; hard-barrier solutions are
    strictly interior by construction of the iteration.
    """
    return _newton(p, p.H, theta, tol=tol)


def psi_solve(p: BarrierProblem, theta_prime,
              tol: float = TOL_NEWTON) -> np.ndarray:
    """Transformed map ``U = psi(theta')`` with identity quadratic term.

    Satisfies ``psi(theta + (I - H) phi(theta)) = phi(theta)``: the loop
    transformation that exposes the decoupled structure used by the
    C-ZF multiplier class.
    """
    return _newton(p, np.eye(p.n_inputs), theta_prime, tol=tol)


def box_qp_solve(H, theta, constraints: ConstraintSet,
                 tol: float = 1e-10) -> np.ndarray:
    """Exact solution of ``min 1/2 U'HU - theta'U`` over a box.

    Enumerates active sets (each coordinate free, at its lower bound, or
    at its upper bound) and returns the unique KKT point.  This is the
    saturating controller that the barrier program approximates from the
    interior; simulation of the unbarriered loop needs the exact
    projection rather than a vanishing-``mu`` limit.

    Only axis-aligned constraint rows are supported; the combinatorial
    enumeration limits the dimension to 8.
    """
    H = np.asarray(H, dtype=float)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    n = H.shape[0]
    if n > 8:
        raise ValueError("active-set enumeration limited to 8 inputs")
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    for row, w in zip(constraints.L, constraints.W):
        i = int(np.argmax(np.abs(row)))
        e = np.zeros(n)
        e[i] = np.sign(row[i])
        if not np.allclose(row, e, atol=1e-12):
            raise ValueError("box_qp_solve requires axis-aligned rows")
        if e[i] > 0:
            upper[i] = min(upper[i], w)
        else:
            lower[i] = max(lower[i], -w)

    for combo in itertools.product((0, 1, 2), repeat=n):
        free = [i for i, c in enumerate(combo) if c == 0]
        U = np.where(np.equal(combo, 1), lower, 0.0)
        U = np.where(np.equal(combo, 2), upper, U)
        if free:
            rhs = theta[free] - H[np.ix_(free, [i for i in range(n)
                                                if i not in free])] @ U[
                [i for i in range(n) if i not in free]]
            U[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
        grad = H @ U - theta
        ok = True
        for i, c in enumerate(combo):
            if c == 0:
                ok = lower[i] - tol <= U[i] <= upper[i] + tol
            elif c == 1:
                ok = np.isfinite(lower[i]) and grad[i] >= -tol
            else:
                ok = np.isfinite(upper[i]) and grad[i] <= tol
            if not ok:
                break
        if ok:
            return U
    raise RuntimeError("no active set satisfied the KKT conditions")


def parallel_decompose_solve(p: BarrierProblem, theta_prime,
                             tol: float = TOL_NEWTON) -> np.ndarray:
    """Solve ``psi`` as parallel per-block programs ``nu_i``.

    For staged (and box) constraint structure the identity-Hessian
    program separates across the orthogonal block row spaces.  Each
    reduced program

        ``nu_i(q) = argmin 1/2 q'q - q'p + mu B_i(L_bar_i' q)``

    is solved independently and recombined as
    ``U = sum_i L_bar_i' nu_i(L_bar_i theta') + P_perp theta'`` where
    ``P_perp`` projects onto the unconstrained complement (zero for a
    full box).  Agrees with :func:`psi_solve` to solver tolerance.
    """
    if p.constraints.kind not in ("box", "staged"):
        raise ValueError("parallel decomposition needs staged/box structure")
    theta_prime = np.asarray(theta_prime, dtype=float).reshape(-1)
    cs = p.constraints
    U = np.zeros_like(theta_prime)
    covered = np.zeros((cs.n_inputs, cs.n_inputs))
    for b_idx, blk in enumerate(cs.blocks):
        basis = cs.block_basis(b_idx)                 # (d_i, n_U)
        rows = list(blk)
        # Reduced constraint set in the block coordinates q = basis @ U.
        L_red = cs.L[rows] @ basis.T
        red = ConstraintSet(kind="polytope", L=L_red, W=cs.W[rows])
        red_p = BarrierProblem(
            H=np.eye(basis.shape[0]), S=np.zeros((basis.shape[0], 1)),
            constraints=red, barrier_kind=p.barrier_kind, mu=p.mu,
            delta=None if p.delta is None else p.delta[rows],
            weights=None if p.weights is None else p.weights[rows],
        )
        q = _newton(red_p, np.eye(basis.shape[0]), basis @ theta_prime,
                    tol=tol)
        U += basis.T @ q
        covered += basis.T @ basis
    U += (np.eye(cs.n_inputs) - covered) @ theta_prime
    return U


@dataclass(frozen=True)
class Trajectory:
    """Closed-loop simulation record (time along the first axis)."""

    x: np.ndarray
    x_hat: np.ndarray
    u: np.ndarray
    y: np.ndarray
    step_failed: int = -1


def closed_loop_simulate(plant: StateSpace, observer: ObserverPair,
                         p: BarrierProblem, delta: StateSpace | None,
                         x0, steps: int, seed: int | None = None,
                         newton_tol: float = 1e-9) -> Trajectory:
    """Simulate observer-based barrier MPC on ``plant``.

    Per step: form ``theta_k = -S x_hat_k``, solve ``U_k = phi(theta)``,
    apply the first move ``u_k``, update the plant, and run the
    predictor observer ``x_hat+ = A x_hat + B u + A L (y_meas - C x_hat)``.
    A strictly proper uncertainty realization ``delta`` acts on the
    measured output: ``y_meas = y + delta(y_meas)`` (well posed since
    ``delta.D = 0``).

    Parameters
    ----------
    plant : StateSpace
    observer : ObserverPair
        As from :func:`barriercert.lti.dare_kalman` with the input
        matrix attached.
    p : BarrierProblem
    delta : StateSpace or None
        Uncertainty realization; must have zero feedthrough.
    x0 : initial plant state.
    steps : number of simulation steps.
    seed : unused placeholder for deterministic uncertainty sampling
        performed by the caller; recorded for bookkeeping only.

    Returns
    -------
    Trajectory
        With ``step_failed >= 0`` when the Newton solve failed at that
        step (remaining entries are zero-filled).
    """
    if steps < 1:
        raise ValueError("need at least one step")
    if delta is not None and np.max(np.abs(delta.D)) > 0:
        raise ValueError("uncertainty realization must be strictly proper")
    n_x = plant.n_states
    n_u = plant.n_inputs
    x = np.zeros((steps + 1, n_x))
    xh = np.zeros((steps + 1, n_x))
    u_log = np.zeros((steps, n_u))
    y_log = np.zeros((steps, plant.n_outputs))
    x[0] = np.asarray(x0, dtype=float).reshape(-1)

    A, B, C = plant.A, plant.B, plant.C
    AL = A @ observer.L
    xd = np.zeros(delta.n_states) if delta is not None else None

    for k in range(steps):
        y = C @ x[k]
        if delta is not None:
            d_out = delta.C @ xd
            y_meas = y + d_out
            xd = delta.A @ xd + delta.B @ y_meas
        else:
            y_meas = y
        theta = -p.S @ xh[k]
        try:
            U = phi_solve(p, theta, tol=newton_tol)
        except NewtonError:
            return Trajectory(x=x, x_hat=xh, u=u_log, y=y_log, step_failed=k)
        u = U[:n_u]
        x[k + 1] = A @ x[k] + B @ u
        xh[k + 1] = A @ xh[k] + B @ u + AL @ (y_meas - C @ xh[k])
        u_log[k] = u
        y_log[k] = y
    return Trajectory(x=x, x_hat=xh, u=u_log, y=y_log)
