"""Condensed QP construction, barrier evaluation, controller maps.

Frozen oracles: condensation against an explicitly assembled prediction
matrix; scalar barrier values/derivatives from closed forms; stationary
points from scipy.optimize.brentq; box QP solutions from a bounded
L-BFGS-B reference run.
"""

import numpy as np
import pytest

from barriercert import (
    BarrierProblem,
    ConstraintSet,
    StateSpace,
    barrier_eval,
    box_qp_solve,
    closed_loop_simulate,
    condense,
    dare_kalman,
    observer_with_input,
    parallel_decompose_solve,
    phi_solve,
    psi_solve,
    recentering_weights,
)

A = np.array([[0.7, 0.3], [0.8, 0.01]])
B = np.array([[1.0], [0.0]])
C = np.array([[1.0, 1.5]])


def brute_force_condense(A, B, Q, R, N):
    """Independent oracle: assemble Gamma and Omega by matrix powers."""
    n_x, n_u = A.shape[0], B.shape[1]
    Gam = np.zeros((N * n_x, N * n_u))
    Om = np.zeros((N * n_x, n_x))
    for i in range(N):
        Om[i * n_x:(i + 1) * n_x] = np.linalg.matrix_power(A, i + 1)
        for j in range(i + 1):
            Gam[i * n_x:(i + 1) * n_x, j * n_u:(j + 1) * n_u] = (
                np.linalg.matrix_power(A, i - j) @ B)
    Qb = np.kron(np.eye(N), Q)
    Rb = np.kron(np.eye(N), R)
    return Gam.T @ Qb @ Gam + Rb, Gam.T @ Qb @ Om


class TestCondense:
    def test_identity_state_weight_frozen(self):
        H, S = condense(A, B, np.eye(2), 0.1 * np.eye(1), 2)
        assert np.allclose(H, [[2.23, 0.7], [0.7, 1.1]], atol=1e-12)
        assert np.allclose(S, [[1.6654, 0.64118], [0.73, 0.213]], atol=1e-12)

    def test_matches_brute_force(self):
        for Q, N in ((np.eye(2), 3), (C.T @ C, 2), (C.T @ C, 4)):
            H, S = condense(A, B, Q, 0.1 * np.eye(1), N)
            H0, S0 = brute_force_condense(A, B, Q, 0.1 * np.eye(1), N)
            assert np.allclose(H, H0, atol=1e-12)
            assert np.allclose(S, S0, atol=1e-12)

    def test_H_symmetric_pd(self):
        H, _ = condense(A, B, C.T @ C, 0.1 * np.eye(1), 2)
        assert np.allclose(H, H.T)
        assert np.linalg.eigvalsh(H).min() > 0


def scalar_box():
    return ConstraintSet.box([-0.5], [1.0])


class TestConstraintSet:
    def test_box_rows(self):
        cs = scalar_box()
        assert np.allclose(cs.L, [[1.0], [-1.0]])
        assert np.allclose(cs.W, [1.0, 0.5])
        assert cs.blocks == ((0, 1),)

    def test_box_horizon_tiles(self):
        cs = ConstraintSet.box_horizon([-0.5], [1.0], 1, 2)
        assert cs.L.shape == (4, 2)
        assert cs.blocks == ((0, 1), (2, 3))
        assert np.allclose(cs.slack(np.zeros(2)), [1.0, 0.5, 1.0, 0.5])

    def test_positive_width_required(self):
        with pytest.raises(ValueError):
            ConstraintSet.box([1.0], [1.0])

    def test_cross_block_orthogonality_enforced(self):
        L = np.array([[1.0, 0.0], [1.0, 1.0]])
        with pytest.raises(ValueError):
            ConstraintSet(kind="staged", L=L, W=np.ones(2),
                          blocks=((0,), (1,)))

    def test_slack(self):
        cs = scalar_box()
        assert np.allclose(cs.slack(np.array([0.3])), [0.7, 0.8])

    def test_canonical_weights(self):
        w = recentering_weights(scalar_box())
        # 2 rows, widths (1.0, 0.5): w = 2 W_i / 1.5
        assert np.allclose(w, [4.0 / 3.0, 2.0 / 3.0])


def scalar_problem(kind="gradient-recentered", mu=0.8):
    return BarrierProblem(H=np.eye(1), S=np.zeros((1, 2)),
                          constraints=scalar_box(), barrier_kind=kind, mu=mu)


class TestBarrierEval:
    def test_gradient_recentered_frozen(self):
        p = scalar_problem()
        v, g, h = barrier_eval(p, [0.3])
        assert v == pytest.approx(0.186671314692997, abs=1e-12)
        assert g[0] == pytest.approx(1.178571428571429, abs=1e-12)
        assert h[0, 0] == pytest.approx(3.603316326530613, abs=1e-12)
        v, g, h = barrier_eval(p, [-0.2])
        assert v == pytest.approx(0.128504066972036, abs=1e-12)
        assert g[0] == pytest.approx(-1.5, abs=1e-12)
        assert h[0, 0] == pytest.approx(11.805555555555555, abs=1e-10)

    def test_weight_recentered_frozen(self):
        p = scalar_problem("weight-recentered")
        v, g, _ = barrier_eval(p, [0.3])
        assert v == pytest.approx(0.162230839087819, abs=1e-12)
        assert g[0] == pytest.approx(1.071428571428572, abs=1e-12)

    def test_all_kinds_recentered_at_origin(self):
        for kind in ("gradient-recentered", "weight-recentered", "relaxed"):
            v, g, _ = barrier_eval(scalar_problem(kind), [0.0])
            assert abs(v) < 1e-12 and np.abs(g).max() < 1e-12

    def test_relaxed_splice_frozen(self):
        # upper-row threshold delta = 0.1 W = 0.1; slack 0.05 is inside
        p = scalar_problem("relaxed")
        U = np.array([0.95])
        v, g, h = barrier_eval(p, U)
        # row terms: spliced upper at t=0.05, smooth lower at s=1.45
        v_up = 2.927585092994045          # -ln(0.1) - t/d + t^2/(2 d^2)
        v_lo = -np.log(1.45 / 0.5)
        g0 = -1.0                          # L'(1/W)
        assert v == pytest.approx(v_up + v_lo - g0 * 0.95, abs=1e-12)
        assert g[0] == pytest.approx(15.0 - 1.0 / 1.45 - g0, abs=1e-12)

    def test_relaxed_defined_outside_box(self):
        v, g, h = barrier_eval(scalar_problem("relaxed"), [2.0])
        assert np.isfinite(v) and np.isfinite(g).all()

    def test_hard_barrier_domain_error(self):
        with pytest.raises(ValueError):
            barrier_eval(scalar_problem(), [1.0])

    def test_construction_rejects_uncentered(self):
        # hand weights breaking grad B(0) = 0 for weight-recentered
        with pytest.raises(ValueError):
            BarrierProblem(H=np.eye(1), S=np.zeros((1, 2)),
                           constraints=scalar_box(),
                           barrier_kind="weight-recentered", mu=0.8,
                           weights=np.array([1.0, 1.0]))


class TestSolvers:
    def test_phi_scalar_frozen(self):
        # brentq oracle on u - theta + mu B'(u) = 0
        p = scalar_problem()
        assert phi_solve(p, [2.0])[0] == pytest.approx(0.479554223305896,
                                                       abs=1e-9)
        assert phi_solve(p, [-1.0])[0] == pytest.approx(-0.157247774275428,
                                                        abs=1e-9)

    def test_phi_stationarity_and_interiority(self):
        H, S = condense(A, B, C.T @ C, 0.1 * np.eye(1), 2)
        p = BarrierProblem(H=H, S=S,
                           constraints=ConstraintSet.box_horizon(
                               [-0.5], [1.0], 1, 2),
                           barrier_kind="gradient-recentered", mu=0.8)
        rng = np.random.default_rng(3)
        for _ in range(25):
            theta = rng.uniform(-8, 8, size=2)
            U = phi_solve(p, theta)
            assert (p.constraints.slack(U) > 0).all()
            _, g, _ = barrier_eval(p, U)
            resid = H @ U - theta + p.mu * g
            assert np.abs(resid).max() < 1e-8

    def test_psi_phi_identity(self):
        H, S = condense(A, B, C.T @ C, 0.1 * np.eye(1), 2)
        p = BarrierProblem(H=H, S=S,
                           constraints=ConstraintSet.box_horizon(
                               [-0.5], [1.0], 1, 2),
                           barrier_kind="gradient-recentered", mu=0.8)
        rng = np.random.default_rng(5)
        for _ in range(10):
            theta = rng.uniform(-5, 5, size=2)
            U = phi_solve(p, theta)
            U2 = psi_solve(p, theta + (np.eye(2) - H) @ U)
            assert np.abs(U - U2).max() < 1e-8

    def test_parallel_equals_monolithic(self):
        p = BarrierProblem(H=np.eye(2), S=np.zeros((2, 2)),
                           constraints=ConstraintSet.box_horizon(
                               [-0.5], [1.0], 1, 2),
                           barrier_kind="gradient-recentered", mu=0.8)
        rng = np.random.default_rng(11)
        for _ in range(10):
            tp = rng.uniform(-4, 4, size=2)
            assert np.abs(psi_solve(p, tp)
                          - parallel_decompose_solve(p, tp)).max() < 1e-8


class TestBoxQp:
    H2 = np.array([[2.23, 0.7], [0.7, 1.1]])
    CS = ConstraintSet.box_horizon([-0.5], [1.0], 1, 2)

    def cases(self):
        # L-BFGS-B reference solutions
        return [
            ([0.5, 0.3], [0.173204273883556, 0.162506370393469]),
            ([5.0, 5.0], [1.0, 1.0]),
            ([-3.0, 0.2], [-0.5, 0.5]),
            ([4.0, -3.0], [1.0, -0.5]),
        ]

    def test_frozen_cases(self):
        for theta, want in self.cases():
            U = box_qp_solve(self.H2, np.array(theta), self.CS)
            assert np.allclose(U, want, atol=1e-9)

    def test_kkt_randomized(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            theta = rng.uniform(-6, 6, size=2)
            U = box_qp_solve(self.H2, theta, self.CS)
            g = self.H2 @ U - theta
            for i in range(2):
                if U[i] >= 1.0 - 1e-9:
                    assert g[i] <= 1e-8
                elif U[i] <= -0.5 + 1e-9:
                    assert g[i] >= -1e-8
                else:
                    assert abs(g[i]) < 1e-8

    def test_rejects_non_axis_aligned(self):
        L = np.array([[1.0, 1.0], [-1.0, -1.0]]) / np.sqrt(2)
        cs = ConstraintSet(kind="polytope", L=L, W=np.ones(2),
                           blocks=((0, 1),))
        with pytest.raises(ValueError):
            box_qp_solve(self.H2, np.zeros(2), cs)


class TestClosedLoop:
    def loop(self):
        H, S = condense(A, B, C.T @ C, 0.1 * np.eye(1), 2)
        p = BarrierProblem(H=H, S=S,
                           constraints=ConstraintSet.box_horizon(
                               [-0.5], [1.0], 1, 2),
                           barrier_kind="gradient-recentered", mu=0.8)
        obs = observer_with_input(dare_kalman(A, C, 1.0, 1.0), B)
        plant = StateSpace(A, B, C, np.zeros((1, 1)))
        return plant, obs, p

    def test_nominal_plant_converges(self):
        plant, obs, p = self.loop()
        traj = closed_loop_simulate(plant, obs, p, None, [1.0, -0.5], 300)
        assert traj.step_failed == -1
        assert np.abs(traj.x[-1]).max() < 1e-4
        assert np.abs(traj.u).max() <= 1.0

    def test_inputs_stay_in_box(self):
        plant, obs, p = self.loop()
        traj = closed_loop_simulate(plant, obs, p, None, [3.0, 2.0], 100)
        assert traj.u.max() < 1.0 + 1e-9
        assert traj.u.min() > -0.5 - 1e-9

    def test_deterministic(self):
        plant, obs, p = self.loop()
        t1 = closed_loop_simulate(plant, obs, p, None, [1.0, 1.0], 50, seed=4)
        t2 = closed_loop_simulate(plant, obs, p, None, [1.0, 1.0], 50, seed=4)
        assert np.array_equal(t1.x, t2.x) and np.array_equal(t1.u, t2.u)

    def test_output_disturbance_enters(self):
        plant, obs, p = self.loop()
        delta = StateSpace(np.array([[0.5]]), np.array([[1.0]]),
                           np.array([[0.2]]), np.zeros((1, 1)))
        t_free = closed_loop_simulate(plant, obs, p, None, [1.0, 0.0], 60)
        t_dist = closed_loop_simulate(plant, obs, p, delta, [1.0, 0.0], 60)
        assert not np.allclose(t_free.x_hat, t_dist.x_hat)
