"""KYP LMI assembly, solving, and the two-stage certificate gates.

The independent oracle here is structural: a state-space certificate
accepted by :func:`solve_kyp_lmi` must also satisfy the frequency-domain
inequality it encodes, evaluated from scratch on a dense grid with a
margin.  The tests re-run both gates outside the solver path.
"""

import dataclasses

import numpy as np
import pytest

from barriercert import (
    LmiProblem,
    MultiplierSpec,
    StateSpace,
    build_G_psi,
    dump_lmi,
    freq_response,
    frequency_check,
    lmi_residual,
    solve_kyp_lmi,
    synthesize,
    task_config,
)
from barriercert.kyp import LAMBDA_MIN
from barriercert.multipliers import EPS_POS


@pytest.fixture(scope="module")
def nominal_loop():
    # barrier controller, static sector, kappa = 1: comfortably certifiable
    return synthesize(task_config("task1"))


@pytest.fixture(scope="module")
def nominal_report(nominal_loop):
    return solve_kyp_lmi(nominal_loop.lmi)


@pytest.fixture(scope="module")
def uncertain_loop():
    cfg = task_config("task2a", mode="barrier", mclass="static-sector")
    cfg = dataclasses.replace(cfg, r_weight=2.0, b=0.25)
    return synthesize(cfg)


class TestProblemValidation:
    def test_port_mismatch_rejected(self, nominal_loop):
        lmi = nominal_loop.lmi
        bad = StateSpace(lmi.Ms.A, lmi.Ms.B[:, :1], lmi.Ms.C, lmi.Ms.D[:, :1])
        with pytest.raises(ValueError, match="inputs"):
            LmiProblem(bad, lmi.spec, lmi.H_tilde)

    def test_h_tilde_dim_checked(self, nominal_loop):
        lmi = nominal_loop.lmi
        with pytest.raises(ValueError, match="H_tilde"):
            LmiProblem(lmi.Ms, lmi.spec, np.eye(3))

    def test_unpaired_uncertainty_rejected(self, uncertain_loop):
        lmi = uncertain_loop.lmi
        with pytest.raises(ValueError):
            LmiProblem(lmi.Ms, lmi.spec, lmi.H_tilde, n_w=lmi.n_w, n_v=0)


class TestBuildGPsi:
    def test_static_stack_is_G_over_I(self, nominal_loop):
        lmi = nominal_loop.lmi
        G_psi = build_G_psi(lmi)
        m = lmi.Ms.n_inputs
        for om in (0.0, 0.4, 2.2):
            got = freq_response(G_psi, om)
            want = np.vstack([freq_response(lmi.Ms, om), np.eye(m)])
            assert np.abs(got - want).max() < 1e-10

    def test_augmented_widths(self, nominal_loop):
        lmi = nominal_loop.lmi
        spec = MultiplierSpec("czf-diagonal", n_minus=2, n_plus=2,
                              dim=lmi.spec.dim)
        deep = LmiProblem(lmi.Ms, spec, lmi.H_tilde)
        G_psi = build_G_psi(deep)
        assert G_psi.n_outputs == deep.stack_width
        assert G_psi.n_inputs == lmi.Ms.n_inputs

    def test_uncertain_passthrough(self, uncertain_loop):
        lmi = uncertain_loop.lmi
        assert lmi.n_w == 1 and lmi.n_v == 1
        G_psi = build_G_psi(lmi)
        om = 0.7
        got = freq_response(G_psi, om)
        want = np.vstack([freq_response(lmi.Ms, om),
                          np.eye(lmi.Ms.n_inputs)])
        assert np.abs(got - want).max() < 1e-10


class TestResidual:
    def test_homogeneity(self, nominal_loop):
        lmi = nominal_loop.lmi
        rng = np.random.default_rng(0)
        n = build_G_psi(lmi).n_states
        P = rng.standard_normal((n, n))
        P = P + P.T
        params = {0: np.array([0.3])}
        r1 = lmi_residual(lmi, P, params)
        r2 = lmi_residual(lmi, 2.5 * P, {0: np.array([0.75])})
        assert np.abs(r2 - 2.5 * r1).max() < 1e-9
        assert np.abs(r1 - r1.T).max() < 1e-12


class TestSolveNominal:
    def test_certified(self, nominal_report):
        assert nominal_report.feasible
        assert nominal_report.status == "certified"
        assert nominal_report.lam >= LAMBDA_MIN

    def test_gates_reproduce(self, nominal_loop, nominal_report):
        res = lmi_residual(nominal_loop.lmi, nominal_report.P,
                           nominal_report.params)
        gate = np.max(np.linalg.eigvalsh(0.5 * (res + res.T)))
        assert gate <= -LAMBDA_MIN / 2
        margin = frequency_check(nominal_loop.lmi, nominal_report.params)
        assert margin <= -nominal_report.lam / 2
        assert nominal_report.freq_margin == pytest.approx(margin, abs=1e-12)

    def test_params_in_cone_and_normalized(self, nominal_report):
        mass = 0.0
        for j, v in nominal_report.params.items():
            lo = EPS_POS if j == 0 else 0.0
            assert np.all(v >= lo)
            mass += float(np.sum(v))
        # b = 0 gauge: total tap mass capped at one, lambda capped at one
        assert mass <= 1.0 + 1e-6
        assert nominal_report.lam <= 1.0 + 1e-9

    def test_large_gain_not_certified(self):
        cfg = task_config("task1", kappa=8.0)
        report = solve_kyp_lmi(synthesize(cfg).lmi)
        assert not report.feasible
        assert report.status in ("infeasible", "unknown")


class TestSolveUncertain:
    def test_certified_with_channel(self, uncertain_loop):
        report = solve_kyp_lmi(uncertain_loop.lmi)
        assert report.feasible
        margin = frequency_check(uncertain_loop.lmi, report.params)
        assert margin <= -report.lam / 2

    def test_sigma_delta_enters_embedding(self, uncertain_loop):
        lmi = uncertain_loop.lmi
        assert lmi.sigma_delta == 1.0
        from barriercert.kyp import embed_pi
        dim = lmi.spec.dim
        pi0 = np.zeros((1, 2 * dim, 2 * dim))
        full = embed_pi(lmi, pi0)[0]
        assert full[0, 0] == pytest.approx(1.0)       # +sigma on w
        v0 = lmi.n_w + dim
        assert full[v0, v0] == pytest.approx(-1.0)    # -sigma on v


class TestDump:
    def test_dump_contains_problem_data(self, nominal_loop, nominal_report):
        text = dump_lmi(nominal_loop.lmi, nominal_report)
        assert "KYP feasibility problem" in text
        assert "static-sector" in text
        assert "lambda:" in text
        assert "H_tilde" in text
        # matrices are printed as parseable floats
        row = next(ln for ln in text.splitlines()
                   if ln.startswith("  ") and "e" in ln)
        [float(tok) for tok in row.split()]

    def test_dump_without_report(self, nominal_loop):
        text = dump_lmi(nominal_loop.lmi)
        assert "lambda:" not in text
        assert "A (" in text
