"""Slope lower bound for the barrier Hessian.

Closed forms: a symmetric-weight box of width W has minimal curvature
8/W^2 at the center-of-slack point; uneven weights give the minimum of
w_a/s^2 + w_b/(W-s)^2 at s = W/(1+(w_b/w_a)^{1/3}).  The grid oracle
only ever reports at or above the certified bound minus its margin.
"""

import numpy as np
import pytest

from barriercert import (
    BarrierProblem,
    ConstraintSet,
    SlopeCertificate,
    barrier_eval,
    compute_m,
    m_grid_oracle,
)


class TestBoxClosedForm:
    def test_example_box(self):
        cs = ConstraintSet.box([-0.5], [1.0])
        cert = compute_m(cs)
        assert cert.m == pytest.approx(8.0 / 1.5 ** 2, abs=1e-12)
        assert cert.method == "box-closed-form"

    def test_scalar_example_box(self):
        # box [-2, 1]: width 3, m = 8/9
        cert = compute_m(ConstraintSet.box([-2.0], [1.0]))
        assert cert.m == pytest.approx(8.0 / 9.0, abs=1e-12)

    def test_uneven_box(self):
        cert = compute_m(ConstraintSet.box([-0.2], [1.0]))
        assert cert.m == pytest.approx(8.0 / 1.2 ** 2, abs=1e-12)

    def test_horizon_takes_worst_block(self):
        cs = ConstraintSet.box_horizon([-0.5], [1.0], 1, 3)
        assert compute_m(cs).m == pytest.approx(8.0 / 2.25, abs=1e-12)

    def test_weighted_closed_form(self):
        # canonical weights of the example box: (4/3, 2/3); numeric oracle
        cs = ConstraintSet.box([-0.5], [1.0])
        cert = compute_m(cs, weights=np.array([4.0 / 3.0, 2.0 / 3.0]))
        assert cert.m == pytest.approx(3.419841868322731, abs=1e-10)

    def test_mu_scales_shift_not_m(self):
        cs = ConstraintSet.box([-0.5], [1.0])
        assert compute_m(cs, mu=0.8).m == pytest.approx(compute_m(cs).m,
                                                        abs=1e-14)


class TestFallbacks:
    def test_polytope_falls_back_to_zero(self):
        L = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
        cs = ConstraintSet(kind="polytope", L=L / np.sqrt(2),
                           W=np.ones(4), blocks=((0, 1, 2, 3),))
        cert = compute_m(cs)
        assert cert.m == 0.0
        assert cert.method == "fallback-zero"


class TestGridOracle:
    def test_bounds_certified_m_scalar(self):
        cs = ConstraintSet.box([-0.5], [1.0])
        cert = compute_m(cs)
        grid = m_grid_oracle(cs, resolution=201)
        assert grid >= cert.m - 1e-6
        # the closed form is tight: a dense grid approaches it
        assert grid == pytest.approx(cert.m, rel=1e-3)

    def test_bounds_certified_m_two_dim(self):
        cs = ConstraintSet.box_horizon([-0.5], [1.0], 1, 2)
        cert = compute_m(cs)
        assert m_grid_oracle(cs, resolution=61) >= cert.m - 1e-6

    def test_grid_matches_hessian_eval(self):
        # oracle must agree with barrier_eval curvature at the center
        cs = ConstraintSet.box([-1.0], [1.0])
        p = BarrierProblem(H=np.eye(1), S=np.zeros((1, 1)), constraints=cs,
                           barrier_kind="gradient-recentered", mu=1.0)
        _, _, h = barrier_eval(p, [0.0])
        assert h[0, 0] == pytest.approx(2.0, abs=1e-12)
        assert m_grid_oracle(cs, resolution=101) <= 2.0 + 1e-9

    def test_dimension_guard(self):
        cs = ConstraintSet.box_horizon([-0.5] * 2, [1.0] * 2, 2, 2)
        with pytest.raises(ValueError):
            m_grid_oracle(cs)


class TestCertificate:
    def test_h_tilde_shift(self):
        cs = ConstraintSet.box_horizon([-0.5], [1.0], 1, 2)
        H = np.array([[4.71, 1.9], [1.9, 1.1]])
        cert = compute_m(cs, H=H, mu=0.8)
        shift = 0.8 * 8.0 / 2.25
        assert np.allclose(cert.H_tilde, H + shift * np.eye(2), atol=1e-12)
        assert isinstance(cert, SlopeCertificate)
