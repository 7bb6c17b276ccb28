"""Discrete-time LTI state-space algebra.

Stability tests, frequency response, interconnection, and Riccati-based
steady-state Kalman observer synthesis.  All realizations are immutable
after construction and every operation is a pure function, so the module
is safe to use concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StateSpace",
    "ObserverPair",
    "schur_stable",
    "freq_response",
    "series",
    "diagonal_augment",
    "output_gain",
    "interconnect",
    "dare_kalman",
]

#: Margin used by Schur stability tests to avoid boundary ambiguity.
EPS_STAB = 1e-10

#: Fixed-point Riccati iteration tolerance and iteration cap.
RICCATI_TOL = 1e-12
RICCATI_MAX_ITER = 10_000


def _as_matrix(M, name: str) -> np.ndarray:
    """Coerce ``M`` to a 2-D float array, rejecting non-finite entries."""
    A = np.atleast_2d(np.asarray(M, dtype=float))
    if A.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got ndim={A.ndim}")
    if A.size and not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


@dataclass(frozen=True)
class StateSpace:
    """Discrete-time LTI realization ``x+ = Ax + Bu, y = Cx + Du``.

    Parameters
    ----------
    A : (n, n) array_like
        State matrix.
    B : (n, m) array_like
        Input matrix.
    C : (p, n) array_like
        Output matrix.
    D : (p, m) array_like
        Feedthrough matrix.

    Notes
    -----
    The realization is frozen after construction; all dimensions are
    validated eagerly so downstream interconnection code can rely on
    consistency.  A static (state-free) system is represented with
    ``n = 0`` and an empty ``A``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        D = _as_matrix(self.D, "D")
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        n = A.shape[0]
        # Normalize empty blocks so a pure-gain system can be written
        # StateSpace([], [], [], D) without fussing over shapes.
        p, m = D.shape
        if B.size == 0:
            B = np.zeros((n, m))
        if C.size == 0:
            C = np.zeros((p, n))
        if B.shape[0] != n:
            raise ValueError(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise ValueError(f"C has {C.shape[1]} columns, expected {n}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValueError(
                f"D must be {(C.shape[0], B.shape[1])}, got {D.shape}"
            )
        for name, M in (("A", A), ("B", B), ("C", C), ("D", D)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]

    @property
    def is_stable(self) -> bool:
        """True when the state matrix is Schur stable."""
        return schur_stable(self.A) if self.n_states else True

    @staticmethod
    def static_gain(D) -> "StateSpace":
        """State-free realization of a constant gain matrix."""
        D = _as_matrix(D, "D")
        return StateSpace(np.zeros((0, 0)), np.zeros((0, D.shape[1])),
                          np.zeros((D.shape[0], 0)), D)

    @staticmethod
    def identity(k: int) -> "StateSpace":
        """State-free identity pass-through of width ``k``."""
        return StateSpace.static_gain(np.eye(k))


def schur_stable(A) -> bool:
    """Return True iff ``A`` has spectral radius < 1 - EPS_STAB.

    Parameters
    ----------
    A : array_like
        Square matrix with finite entries.

    Raises
    ------
    ValueError
        If ``A`` is not square or contains non-finite entries.
    """
    A = _as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got {A.shape}")
    if A.size == 0:
        return True
    rho = max(abs(np.linalg.eigvals(A)))
    return bool(rho < 1.0 - EPS_STAB)


def freq_response(G: StateSpace, omega: float) -> np.ndarray:
    """Evaluate ``G(e^{j omega}) = C (e^{j omega} I - A)^{-1} B + D``.

    Parameters
    ----------
    G : StateSpace
        Realization to evaluate.
    omega : float
        Frequency in radians/sample.

    Returns
    -------
    (p, m) complex ndarray

    Raises
    ------
    np.linalg.LinAlgError
        If ``e^{j omega}`` is an eigenvalue of ``A`` (singular resolvent).
    """
    if G.n_states == 0:
        return G.D.astype(complex)
    z = np.exp(1j * float(omega))
    resolvent = np.linalg.solve(z * np.eye(G.n_states) - G.A, G.B)
    return G.C @ resolvent + G.D


def series(first: StateSpace, second: StateSpace) -> StateSpace:
    """Realization of ``second . first`` (``first`` drives ``second``).

    The frequency response of the result is
    ``second(z) @ first(z)`` and the state dimension is the sum of the
    two parts (no minimization is attempted).
    """
    if second.n_inputs != first.n_outputs:
        raise ValueError(
            f"series: output width {first.n_outputs} does not match "
            f"downstream input width {second.n_inputs}"
        )
    n1, n2 = first.n_states, second.n_states
    A = np.block([
        [first.A, np.zeros((n1, n2))],
        [second.B @ first.C, second.A],
    ]) if n1 + n2 else np.zeros((0, 0))
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    D = second.D @ first.D
    return StateSpace(A, B, C, D)


def diagonal_augment(*parts: StateSpace) -> StateSpace:
    """Block-diagonal stack ``diag(G_1, ..., G_k)`` of realizations."""
    if not parts:
        raise ValueError("diagonal_augment requires at least one system")
    from scipy.linalg import block_diag

    A = block_diag(*[G.A for G in parts])
    B = block_diag(*[G.B for G in parts])
    C = block_diag(*[G.C for G in parts])
    D = block_diag(*[G.D for G in parts])
    return StateSpace(A, B, C, D)


def output_gain(G: StateSpace, kappa: float) -> StateSpace:
    """Scale all outputs of ``G`` by the scalar gain ``kappa``."""
    return StateSpace(G.A, G.B, kappa * G.C, kappa * G.D)


def interconnect(mode: str, parts, scalars=None) -> StateSpace:
    """Dispatch interconnection by mode name.

    Parameters
    ----------
    mode : {"series", "diagonal-augment", "output-gain"}
        Interconnection topology.
    parts : list of StateSpace
        Systems to combine.  ``series`` composes left to right: the
        first element feeds the second, and so on.
    scalars : list of float, optional
        Gains for ``output-gain`` mode (one per part).

    Returns
    -------
    StateSpace
    """
    parts = list(parts)
    if mode == "series":
        if not parts:
            raise ValueError("series interconnection requires systems")
        out = parts[0]
        for G in parts[1:]:
            out = series(out, G)
        return out
    if mode == "diagonal-augment":
        return diagonal_augment(*parts)
    if mode == "output-gain":
        if scalars is None or len(scalars) != len(parts):
            raise ValueError("output-gain requires one scalar per system")
        gained = [output_gain(G, k) for G, k in zip(parts, scalars)]
        return gained[0] if len(gained) == 1 else diagonal_augment(*gained)
    raise ValueError(f"unknown interconnection mode {mode!r}")


@dataclass(frozen=True)
class ObserverPair:
    """Steady-state Kalman observer transfer pair.

    The state estimate is ``xhat = J_u u + J_y y`` with
    ``J_u(z) = (zI - A + ALC)^{-1} B`` and
    ``J_y(z) = (zI - A + ALC)^{-1} A L``; both share the observer state
    matrix ``A - ALC``.
    """

    J_u: StateSpace
    J_y: StateSpace
    L: np.ndarray
    riccati_residual: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if not np.allclose(self.J_u.A, self.J_y.A, atol=1e-12):
            raise ValueError("J_u and J_y must share the observer state matrix")


def dare_kalman(A, C, Q_n, R_n) -> ObserverPair:
    """Synthesize the steady-state Kalman observer for ``(A, C)``.

    Solves the filter-form discrete algebraic Riccati equation by
    fixed-point iteration (tolerance ``RICCATI_TOL``, at most
    ``RICCATI_MAX_ITER`` sweeps)::

        P <- A (P - P C' (C P C' + R_n)^{-1} C P) A' + Q_n

    and returns the observer gain ``L = P C' (C P C' + R_n)^{-1}``
    together with the transfer pair ``(J_u, J_y)``.

    Parameters
    ----------
    A : (n, n) array_like
        Plant state matrix.
    C : (p, n) array_like
        Plant output matrix.
    Q_n : (n, n) array_like
        State noise weight, symmetric positive definite.
    R_n : (p, p) array_like
        Output noise weight, symmetric positive definite.

    Returns
    -------
    ObserverPair

    Notes
    -----
    ``J_u`` is returned with a plant-input port of width equal to the
    columns of a unit input matrix ``B`` supplied at interconnection
    time; this function does not need ``B`` itself, so ``J_u`` is built
    lazily by :func:`observer_transfers`.

    Raises
    ------
    ValueError
        If weights are not symmetric positive definite.
    RuntimeError
        If the iteration does not converge.
    """
    A = _as_matrix(A, "A")
    C = _as_matrix(C, "C")
    # scalar weights mean identity scaling at the appropriate width
    if np.ndim(Q_n) == 0:
        Q_n = float(Q_n) * np.eye(A.shape[0])
    if np.ndim(R_n) == 0:
        R_n = float(R_n) * np.eye(C.shape[0])
    Q_n = _as_matrix(Q_n, "Q_n")
    R_n = _as_matrix(R_n, "R_n")
    for name, M in (("Q_n", Q_n), ("R_n", R_n)):
        if M.shape[0] != M.shape[1]:
            raise ValueError(f"{name} must be square")
    if Q_n.shape[0] != A.shape[0] or R_n.shape[0] != C.shape[0]:
        raise ValueError("noise weight dimensions must match (A, C)")
    for name, M in (("Q_n", Q_n), ("R_n", R_n)):
        if not np.allclose(M, M.T, atol=1e-12):
            raise ValueError(f"{name} must be symmetric")
        if np.min(np.linalg.eigvalsh(M)) <= 0:
            raise ValueError(f"{name} must be positive definite")

    P = np.eye(A.shape[0])
    for _ in range(RICCATI_MAX_ITER):
        gain = np.linalg.solve(C @ P @ C.T + R_n, C @ P @ A.T).T
        P_next = A @ P @ A.T - gain @ C @ P @ A.T + Q_n
        P_next = 0.5 * (P_next + P_next.T)
        if np.max(np.abs(P_next - P)) < RICCATI_TOL:
            P = P_next
            break
        P = P_next
    else:
        raise RuntimeError(
            f"Riccati iteration did not converge in {RICCATI_MAX_ITER} sweeps"
        )

    innovation = C @ P @ C.T + R_n
    L = P @ C.T @ np.linalg.inv(innovation)
    residual = float(np.max(np.abs(
        A @ (P - P @ C.T @ np.linalg.solve(innovation, C @ P)) @ A.T + Q_n - P
    )))
    A_obs = A - A @ L @ C
    n = A.shape[0]
    J_u = StateSpace(A_obs, np.eye(n), np.eye(n), np.zeros((n, n)))
    J_y = StateSpace(A_obs, A @ L, np.eye(n), np.zeros((n, C.shape[0])))
    return ObserverPair(J_u=J_u, J_y=J_y, L=L, riccati_residual=residual)


def observer_with_input(pair: ObserverPair, B) -> ObserverPair:
    """Attach the plant input matrix ``B`` to an observer pair.

    ``dare_kalman`` returns ``J_u`` with an identity input map (state
    width); this helper composes it with ``B`` so that
    ``J_u(z) = (zI - A + ALC)^{-1} B``.
    """
    B = _as_matrix(B, "B")
    J_u = series(StateSpace.static_gain(B), pair.J_u)
    return ObserverPair(J_u=J_u, J_y=pair.J_y, L=pair.L,
                        riccati_residual=pair.riccati_residual)
