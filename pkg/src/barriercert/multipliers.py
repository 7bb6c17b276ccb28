"""IQC multiplier classes for the barrier controller map.

Three parameterized classes share one FIR backbone
``M(z) = R_0 + sum_{j != 0} R_j (1 - z^j)`` with ``R_j >= 0`` for
``j != 0`` and ``R_0`` positive definite:

- ``static-sector``: a single scalar tap ``R_0 = sigma I`` (the
  sector multiplier for the controller map);
- ``zf-siso``: scalar taps ``R_j = r_j I`` repeating one SISO
  Zames-Falb multiplier across the loop channels;
- ``czf-diagonal``: diagonal taps, one independent SISO multiplier per
  decoupled channel of the transformed map ``psi``.

The ``(1 - z^j)`` basis makes the l1 dominance constraint structural:
every admissible parameter choice has dominance margin ``R_0``.  The
frequency-domain multiplier is

    ``Pi(z) = [[0, M(z)^*], [M(z), -M(z) Htilde - Htilde M(z)^*]]``

and :func:`assemble_K` produces the constant middle matrix of the
factorization ``Psi(z)^* K Psi(z) = Pi(z)`` over the delay-line outer
factor built by :func:`psi_realize`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lti import StateSpace

__all__ = [
    "MultiplierSpec",
    "EPS_POS",
    "multiplier_constraint_set",
    "validate_params",
    "params_to_matrices",
    "m_frequency",
    "pi_frequency",
    "static_multiplier",
    "psi_realize",
    "assemble_K",
    "dominance_margin",
]

#: Positivity floor for the center tap ``R_0``.
EPS_POS = 1e-6

_CLASSES = ("static-sector", "zf-siso", "czf-diagonal")


@dataclass(frozen=True)
class MultiplierSpec:
    """Shape of a multiplier search class.

    Parameters
    ----------
    mclass : {"static-sector", "zf-siso", "czf-diagonal"}
    n_minus, n_plus : number of causal (``z^{-k}``) and anticausal
        (``z^{+k}``) FIR taps; both zero for the static class.
    dim : loop channel dimension (the width of ``phi``).
    """

    mclass: str
    n_minus: int = 0
    n_plus: int = 0
    dim: int = 1

    def __post_init__(self):
        if self.mclass not in _CLASSES:
            raise ValueError(f"unknown multiplier class {self.mclass!r}")
        if self.n_minus < 0 or self.n_plus < 0:
            raise ValueError("tap counts must be nonnegative")
        if self.mclass == "static-sector" and (self.n_minus or self.n_plus):
            raise ValueError("static-sector has no FIR taps")
        if self.dim < 1:
            raise ValueError("dim must be at least 1")

    @property
    def depth(self) -> int:
        """Delay-line depth of the outer factor."""
        return max(self.n_minus, self.n_plus)

    @property
    def taps(self) -> tuple[int, ...]:
        """All tap indices including 0, sorted ascending."""
        return tuple(range(-self.n_minus, 0)) + (0,) + tuple(
            range(1, self.n_plus + 1))


def multiplier_constraint_set(spec: MultiplierSpec) -> tuple[dict, ...]:
    """Machine-readable constraint descriptors for the parameter search.

    Returns one descriptor per tap with keys ``tap`` (index), ``form``
    (``"scalar"`` or ``"diag"``) and ``lower`` (elementwise bound:
    :data:`EPS_POS` for the center tap, 0 otherwise).
    """
    form = "diag" if spec.mclass == "czf-diagonal" else "scalar"
    return tuple(
        {"tap": j, "form": form, "lower": EPS_POS if j == 0 else 0.0}
        for j in spec.taps
    )


def _param_shape(spec: MultiplierSpec) -> int:
    return spec.dim if spec.mclass == "czf-diagonal" else 1


def validate_params(spec: MultiplierSpec, params: dict,
                    tol: float = 0.0) -> None:
    """Raise ``ValueError`` unless ``params`` sits in the class cone.

    ``params`` maps tap index to a scalar (scalar classes) or a length
    ``dim`` vector of diagonal entries (``czf-diagonal``).
    """
    expected = set(spec.taps)
    if set(params) != expected:
        raise ValueError(f"parameter taps {sorted(params)} != {sorted(expected)}")
    width = _param_shape(spec)
    for j, val in params.items():
        v = np.atleast_1d(np.asarray(val, dtype=float))
        if v.shape != (width,):
            raise ValueError(f"tap {j}: expected shape ({width},), got {v.shape}")
        bound = EPS_POS if j == 0 else 0.0
        if np.any(v < bound - tol):
            raise ValueError(f"tap {j} violates its lower bound {bound}")


def params_to_matrices(spec: MultiplierSpec, params: dict) -> dict:
    """Expand tap parameters to full ``(dim, dim)`` matrices ``R_j``."""
    out = {}
    for j in spec.taps:
        v = np.atleast_1d(np.asarray(params[j], dtype=float))
        if spec.mclass == "czf-diagonal":
            out[j] = np.diag(v)
        else:
            out[j] = float(v[0]) * np.eye(spec.dim)
    return out


def m_frequency(spec: MultiplierSpec, params: dict, omegas) -> np.ndarray:
    """Evaluate ``M(e^{j w}) = R_0 + sum_{j != 0} R_j (1 - e^{i w j})``.

    Returns an ``(n_w, dim, dim)`` complex array.
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    R = params_to_matrices(spec, params)
    M = np.broadcast_to(R[0].astype(complex),
                        (omegas.size, spec.dim, spec.dim)).copy()
    for j in spec.taps:
        if j == 0:
            continue
        basis = 1.0 - np.exp(1j * omegas * j)
        M += basis[:, None, None] * R[j]
    return M


def pi_frequency(spec: MultiplierSpec, params: dict, H_tilde,
                 omegas) -> np.ndarray:
    """Frequency samples of the controller multiplier ``Pi``.

    ``Pi = [[0, M^*], [M, -M Htilde - Htilde M^*]]`` on the signal
    stack ``[theta; U]``; returns ``(n_w, 2 dim, 2 dim)`` complex.
    """
    H_tilde = np.asarray(H_tilde, dtype=float)
    n = spec.dim
    M = m_frequency(spec, params, omegas)
    Mh = np.conjugate(np.transpose(M, (0, 2, 1)))
    Pi = np.zeros((M.shape[0], 2 * n, 2 * n), dtype=complex)
    Pi[:, :n, n:] = Mh
    Pi[:, n:, :n] = M
    Pi[:, n:, n:] = -(M @ H_tilde + H_tilde @ Mh)
    return Pi


def static_multiplier(H_tilde, sigma: float = 1.0) -> np.ndarray:
    """Constant sector multiplier ``[[0, sI], [sI, -2 s Htilde]]``."""
    H_tilde = np.asarray(H_tilde, dtype=float)
    n = H_tilde.shape[0]
    Pi = np.zeros((2 * n, 2 * n))
    Pi[:n, n:] = sigma * np.eye(n)
    Pi[n:, :n] = sigma * np.eye(n)
    Pi[n:, n:] = -2.0 * sigma * H_tilde
    return Pi


def psi_realize(spec: MultiplierSpec) -> StateSpace:
    """Delay-line outer factor ``Psi11`` for one signal of width ``dim``.

    Outputs the current input followed by the difference taps
    ``(1 - z^{-k}) u`` for ``k = 1..depth``; the full outer factor for
    the stacked signals is the block diagonal of one copy per signal.
    """
    n, q = spec.dim, spec.depth
    if q == 0:
        return StateSpace.identity(n)
    A = np.zeros((q * n, q * n))
    for k in range(1, q):
        A[k * n:(k + 1) * n, (k - 1) * n:k * n] = np.eye(n)
    B = np.zeros((q * n, n))
    B[:n] = np.eye(n)
    C = np.zeros(((q + 1) * n, q * n))
    D = np.zeros(((q + 1) * n, n))
    D[:n] = np.eye(n)
    for k in range(1, q + 1):
        C[k * n:(k + 1) * n, (k - 1) * n:k * n] = -np.eye(n)
        D[k * n:(k + 1) * n] = np.eye(n)
    return StateSpace(A, B, C, D)


def assemble_K(spec: MultiplierSpec, params: dict, H_tilde) -> np.ndarray:
    """Constant middle matrix with ``Psi^* K Psi = Pi`` exactly.

    The outer factor is ``diag(Psi11, Psi11)`` applied to ``[theta; U]``
    with ``Psi11`` from :func:`psi_realize`; writing ``psi_k = 1 -
    z^{-k}`` for its difference outputs, matching coefficients of the
    basis ``{1, psi_k, psi_k^*}`` in ``Pi`` gives the nonzero blocks

    - ``K[theta_0, U_0] = R_0``, ``K[theta_0, U_k] = R_k``,
      ``K[theta_k, U_0] = R_{-k}``,
    - ``K[U_0, U_0] = -(R_0 Ht + Ht R_0)``,
      ``K[U_0, U_k] = -(R_{-k} Ht + Ht R_k)`` and its transpose at
      ``[U_k, U_0]``,

    plus the symmetric images in the lower triangle.
    """
    H_tilde = np.asarray(H_tilde, dtype=float)
    n, q = spec.dim, spec.depth
    R = params_to_matrices(spec, params)
    blocks = q + 1
    width = blocks * n

    def Rj(j):
        return R.get(j, np.zeros((n, n)))

    K12 = np.zeros((width, width))
    K22 = np.zeros((width, width))
    K12[:n, :n] = Rj(0)
    for k in range(1, q + 1):
        K12[:n, k * n:(k + 1) * n] = Rj(k)
        K12[k * n:(k + 1) * n, :n] = Rj(-k)
    K22[:n, :n] = -(Rj(0) @ H_tilde + H_tilde @ Rj(0))
    for k in range(1, q + 1):
        blk = -(Rj(-k) @ H_tilde + H_tilde @ Rj(k))
        K22[:n, k * n:(k + 1) * n] = blk
        K22[k * n:(k + 1) * n, :n] = blk.T
    K = np.zeros((2 * width, 2 * width))
    K[:width, width:] = K12
    K[width:, :width] = K12.T
    K[width:, width:] = K22
    return K


def dominance_margin(spec: MultiplierSpec, params: dict) -> float:
    """l1 dominance margin of the FIR multiplier (= smallest ``R_0`` entry)."""
    v = np.atleast_1d(np.asarray(params[0], dtype=float))
    return float(np.min(v))
