"""Executable property suite tying the modules to their defining identities.

Each registered case draws seeded random data, checks one mathematical
property (sector/slope bounds, map equivalences, factorization and
KYP consistency, oracle bounds), and reports pass/fail with the first
counterexample.  A meta-case verifies that every module invariant
declared in :data:`REQUIRED_INVARIANTS` is covered by some case, so a
forgotten check fails loudly.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import lti, mpc, slope, multipliers, kyp, analysis

__all__ = ["PropertyCase", "CaseResult", "SuiteReport", "REGISTRY",
           "REQUIRED_INVARIANTS", "run_suite", "run_case"]

#: Samples per statistical case.
N_SAMPLES = 1000

#: Default tolerance for the pointwise nonlinearity inequalities.
TOL_INEQ = 1e-7

#: Default tolerance for map equivalences.
TOL_MAP = 1e-8


@dataclass(frozen=True)
class CaseResult:
    name: str
    passed: bool
    n_samples: int
    counterexample: object = None
    detail: str = ""


@dataclass(frozen=True)
class PropertyCase:
    """One registered property.

    ``fn(rng, **overrides) -> CaseResult``; overrides allow
    deliberate-fault injection in tests (e.g. inflating ``m``).
    """

    name: str
    fn: object
    tolerance: float
    modules: tuple
    invariants: tuple


#: Module invariants that the suite must cover (meta-checked).
REQUIRED_INVARIANTS = {
    "lti-core": ("interconnection-frequency-response",),
    "barrier-mpc": ("barrier-recentering", "newton-stationarity",
                    "relaxed-c2-splice"),
    "slope-bound": ("m-lower-bounds-hessian", "shifted-hessian-definition"),
    "iqc-multipliers": ("factorization-identity", "dominance-margin"),
    "kyp-lmi": ("lmi-homogeneity", "feasible-implies-frequency",
                "unknown-never-stable"),
    "robust-analysis": ("class-ordering", "barrier-beats-nominal"),
    "property-suite": ("determinism",),
    "cli": ("output-determinism", "csv-header-hash"),
}

REGISTRY: list[PropertyCase] = []


def _register(name, tolerance, modules, invariants):
    def wrap(fn):
        REGISTRY.append(PropertyCase(name=name, fn=fn, tolerance=tolerance,
                                     modules=tuple(modules),
                                     invariants=tuple(invariants)))
        return fn
    return wrap


def _default_problem() -> mpc.BarrierProblem:
    """The running example's condensed barrier program."""
    return analysis.synthesize(analysis.task_config("task1")).problem


def _theta_sampler(rng, problem, n):
    """theta samples from a ball of radius 10 max(W)."""
    radius = 10.0 * float(np.max(problem.constraints.W))
    dim = problem.n_inputs
    raw = rng.standard_normal((n, dim))
    raw /= np.maximum(np.linalg.norm(raw, axis=1, keepdims=True), 1e-12)
    scales = radius * rng.uniform(0, 1, size=(n, 1)) ** (1.0 / dim)
    return raw * scales


@_register("sector", TOL_INEQ, ("barrier-mpc", "slope-bound"),
           ("barrier-recentering", "newton-stationarity"))
def _case_sector(rng, m_override=None, n_samples=N_SAMPLES):
    """phi lies in the sector [0, Htilde^{-1}]:
    phi'(theta - Htilde phi) >= 0."""
    p = _default_problem()
    cert = slope.compute_m(p.constraints, H=p.H, mu=p.mu)
    m = cert.m if m_override is None else m_override
    Ht = p.H + p.mu * m * np.eye(p.n_inputs)
    for i, theta in enumerate(_theta_sampler(rng, p, n_samples)):
        U = mpc.phi_solve(p, theta)
        gap = float(U @ (theta - Ht @ U))
        if gap < -TOL_INEQ:
            return CaseResult("sector", False, i + 1, counterexample=theta,
                              detail=f"sector gap {gap:.3e}")
    return CaseResult("sector", True, n_samples)


@_register("slope", TOL_INEQ, ("barrier-mpc", "slope-bound"),
           ("m-lower-bounds-hessian", "shifted-hessian-definition"))
def _case_slope(rng, m_override=None, n_samples=N_SAMPLES):
    """Incremental sector (slope) bound with the shifted Hessian."""
    p = _default_problem()
    cert = slope.compute_m(p.constraints, H=p.H, mu=p.mu)
    m = cert.m if m_override is None else m_override
    Ht = p.H + p.mu * m * np.eye(p.n_inputs)
    thetas = _theta_sampler(rng, p, 2 * n_samples)
    for i in range(n_samples):
        t1, t2 = thetas[2 * i], thetas[2 * i + 1]
        d_u = mpc.phi_solve(p, t1) - mpc.phi_solve(p, t2)
        gap = float(d_u @ ((t1 - t2) - Ht @ d_u))
        if gap < -TOL_INEQ:
            return CaseResult("slope", False, i + 1,
                              counterexample=(t1, t2),
                              detail=f"slope gap {gap:.3e}")
    return CaseResult("slope", True, n_samples)


@_register("cyclic-monotone", TOL_INEQ, ("barrier-mpc",),
           ("newton-stationarity",))
def _case_cyclic(rng, n_samples=N_SAMPLES // 5, max_cycle=5):
    """psi is cyclically monotone: sum psi(t_i)'(t_{i+1} - t_i) <= 0."""
    p = _default_problem()
    for i in range(n_samples):
        length = int(rng.integers(1, max_cycle + 1))
        pts = _theta_sampler(rng, p, length)
        vals = [mpc.psi_solve(p, t) for t in pts]
        total = sum(float(vals[k] @ (pts[(k + 1) % length] - pts[k]))
                    for k in range(length))
        if total > TOL_INEQ:
            return CaseResult("cyclic-monotone", False, i + 1,
                              counterexample=pts,
                              detail=f"cycle sum {total:.3e}")
    return CaseResult("cyclic-monotone", True, n_samples)


@_register("psi-phi-equivalence", TOL_MAP, ("barrier-mpc",),
           ("newton-stationarity", "barrier-recentering"))
def _case_psi_phi(rng, n_samples=200):
    """psi(theta + (I - H) phi(theta)) = phi(theta)."""
    p = _default_problem()
    I = np.eye(p.n_inputs)
    for i, theta in enumerate(_theta_sampler(rng, p, n_samples)):
        U = mpc.phi_solve(p, theta)
        U2 = mpc.psi_solve(p, theta + (I - p.H) @ U)
        err = float(np.max(np.abs(U - U2)))
        if err > TOL_MAP:
            return CaseResult("psi-phi-equivalence", False, i + 1,
                              counterexample=theta,
                              detail=f"map deviation {err:.3e}")
    return CaseResult("psi-phi-equivalence", True, n_samples)


@_register("parallel-decomposition", TOL_MAP, ("barrier-mpc",),
           ("newton-stationarity",))
def _case_parallel(rng, n_samples=200):
    """Blockwise nu-programs recombine to psi."""
    p = _default_problem()
    for i, theta in enumerate(_theta_sampler(rng, p, n_samples)):
        U1 = mpc.psi_solve(p, theta)
        U2 = mpc.parallel_decompose_solve(p, theta)
        err = float(np.max(np.abs(U1 - U2)))
        if err > TOL_MAP:
            return CaseResult("parallel-decomposition", False, i + 1,
                              counterexample=theta,
                              detail=f"deviation {err:.3e}")
    return CaseResult("parallel-decomposition", True, n_samples)


@_register("relaxed-c2-splice", 1e-5, ("barrier-mpc",),
           ("relaxed-c2-splice",))
def _case_c2(rng, n_samples=50):
    """Relaxed barrier is C^2 across the splice threshold."""
    p0 = _default_problem()
    p = mpc.BarrierProblem(H=p0.H, S=p0.S, constraints=p0.constraints,
                           barrier_kind="relaxed", mu=p0.mu)
    cs = p.constraints
    h = 1e-6
    for i in range(n_samples):
        row = int(rng.integers(cs.n_constraints))
        # Move along the constraint normal so slack_row crosses delta.
        direction = cs.L[row] / np.linalg.norm(cs.L[row]) ** 2
        U_at = (cs.W[row] - p.delta[row]) * direction
        for shift in (-h, h):
            U = U_at + shift * direction
            v, g, He = mpc.barrier_eval(p, U)
            v0, g0, H0 = mpc.barrier_eval(p, U_at)
            # value/grad/hess continuity: differences vanish with h
            if (abs(v - v0) > 1e-4 or np.max(np.abs(g - g0)) > 1e-3
                    or np.max(np.abs(He - H0)) > 1e-1):
                return CaseResult("relaxed-c2-splice", False, i + 1,
                                  counterexample=U_at,
                                  detail="discontinuity at splice")
    return CaseResult("relaxed-c2-splice", True, n_samples)


@_register("factorization-identity", TOL_MAP, ("iqc-multipliers",),
           ("factorization-identity", "dominance-margin"))
def _case_factorization(rng, n_samples=6, n_freq=64):
    """Psi^* K Psi = Pi on a frequency grid for random class members."""
    for i in range(n_samples):
        mclass = ("static-sector", "zf-siso", "czf-diagonal")[i % 3]
        taps = 0 if mclass == "static-sector" else int(rng.integers(1, 4))
        dim = int(rng.integers(1, 4))
        spec = multipliers.MultiplierSpec(mclass, taps, taps, dim)
        width = dim if mclass == "czf-diagonal" else 1
        params = {j: (rng.uniform(0.1, 1.0, width) if j
                      else rng.uniform(0.5, 1.5, width))
                  for j in spec.taps}
        margin = multipliers.dominance_margin(spec, params)
        if not np.isclose(margin, np.min(np.atleast_1d(params[0]))):
            return CaseResult("factorization-identity", False, i + 1,
                              detail="dominance margin mismatch")
        X = rng.standard_normal((dim, dim))
        Ht = X @ X.T + dim * np.eye(dim)
        K = multipliers.assemble_K(spec, params, Ht)
        psi11 = multipliers.psi_realize(spec)
        psi = lti.diagonal_augment(psi11, psi11)
        omegas = np.linspace(0, np.pi, n_freq)
        pis = multipliers.pi_frequency(spec, params, Ht, omegas)
        for k, w in enumerate(omegas):
            Pw = lti.freq_response(psi, w)
            err = float(np.max(np.abs(Pw.conj().T @ K @ Pw - pis[k])))
            if err > TOL_MAP:
                return CaseResult("factorization-identity", False, i + 1,
                                  counterexample=(mclass, w),
                                  detail=f"factorization error {err:.3e}")
    return CaseResult("factorization-identity", True, n_samples)


@_register("interconnection-response", 1e-10, ("lti-core",),
           ("interconnection-frequency-response",))
def _case_interconnect(rng, n_samples=20):
    """series/diag responses match the product/block of the parts."""
    for i in range(n_samples):
        n1, n2, k = (int(rng.integers(1, 4)) for _ in range(3))
        G1 = _random_stable(rng, n1, k, k)
        G2 = _random_stable(rng, n2, k, k)
        w = float(rng.uniform(0, np.pi))
        F1, F2 = lti.freq_response(G1, w), lti.freq_response(G2, w)
        Fs = lti.freq_response(lti.series(G1, G2), w)
        if np.max(np.abs(Fs - F2 @ F1)) > 1e-10:
            return CaseResult("interconnection-response", False, i + 1,
                              detail="series response mismatch")
        Fd = lti.freq_response(lti.diagonal_augment(G1, G2), w)
        expect = np.zeros((2 * k, 2 * k), dtype=complex)
        expect[:k, :k], expect[k:, k:] = F1, F2
        if np.max(np.abs(Fd - expect)) > 1e-10:
            return CaseResult("interconnection-response", False, i + 1,
                              detail="diagonal response mismatch")
    return CaseResult("interconnection-response", True, n_samples)


def _random_stable(rng, n, p, m):
    A = rng.standard_normal((n, n))
    A *= 0.9 / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-6)
    return lti.StateSpace(A, rng.standard_normal((n, m)),
                          rng.standard_normal((p, n)),
                          rng.standard_normal((p, m)))


@_register("m-oracle-bound", 1e-9, ("slope-bound",),
           ("m-lower-bounds-hessian",))
def _case_m_oracle(rng, n_samples=6, inflate=1.0):
    """compute_m lower-bounds the dense grid minimum (n_U <= 3)."""
    for i in range(n_samples):
        dim = int(rng.integers(1, 4))
        lower = -rng.uniform(0.2, 2.0, dim)
        upper = rng.uniform(0.2, 2.0, dim)
        cs = mpc.ConstraintSet.box(lower, upper)
        m = slope.compute_m(cs).m * inflate
        grid = slope.m_grid_oracle(cs, resolution=31)
        if m > grid + 1e-9:
            return CaseResult("m-oracle-bound", False, i + 1,
                              counterexample=(lower, upper),
                              detail=f"m={m:.6f} exceeds grid {grid:.6f}")
    return CaseResult("m-oracle-bound", True, n_samples)


@_register("lmi-homogeneity", 1e-8, ("kyp-lmi",), ("lmi-homogeneity",))
def _case_homogeneity(rng, n_samples=4):
    """The nominal LMI residual is linear in (P, params)."""
    loop = analysis.synthesize(analysis.task_config(
        "task1", mclass="zf-siso", n_zf=1))
    prob = loop.lmi
    G_psi = kyp.build_G_psi(prob)
    n = G_psi.n_states
    for i in range(n_samples):
        P = rng.standard_normal((n, n))
        P = 0.5 * (P + P.T)
        params = {j: rng.uniform(0.1, 1.0, 1) for j in prob.spec.taps}
        alpha = float(rng.uniform(0.5, 3.0))
        r1 = kyp.lmi_residual(prob, alpha * P,
                              {j: alpha * v for j, v in params.items()},
                              G_psi=G_psi)
        r0 = kyp.lmi_residual(prob, P, params, G_psi=G_psi)
        err = float(np.max(np.abs(r1 - alpha * r0)))
        if err > 1e-8:
            return CaseResult("lmi-homogeneity", False, i + 1,
                              detail=f"nonlinearity {err:.3e}")
    return CaseResult("lmi-homogeneity", True, n_samples)


@_register("kyp-frequency-consistency", 0.0, ("kyp-lmi",),
           ("feasible-implies-frequency", "unknown-never-stable"))
def _case_kyp_freq(rng):
    """A feasible KYP solve passes the dense frequency check with margin."""
    report = analysis.certify(analysis.task_config("task1"))
    if not report.feasible:
        return CaseResult("kyp-frequency-consistency", False, 1,
                          detail=f"baseline certification failed: "
                                 f"{report.status}")
    loop = analysis.synthesize(analysis.task_config("task1"))
    worst = kyp.frequency_check(loop.lmi, report.params)
    if worst > -report.lam / 2:
        return CaseResult("kyp-frequency-consistency", False, 1,
                          detail=f"frequency margin {worst:.3e} vs "
                                 f"-lambda/2 = {-report.lam / 2:.3e}")
    # report-semantics invariant: only "certified" may claim stability
    if report.status != "certified":
        return CaseResult("kyp-frequency-consistency", False, 1,
                          detail="feasible report without certified status")
    return CaseResult("kyp-frequency-consistency", True, 1)


@_register("class-ordering", 0.0, ("robust-analysis",),
           ("class-ordering",))
def _case_ordering(rng, kappas=(1.05, 1.5, 2.5)):
    """Richer multiplier classes never lose a certification."""
    for kappa in kappas:
        verdicts = []
        for mclass, nzf in (("static-sector", 0), ("zf-siso", 1),
                            ("czf-diagonal", 1)):
            cfg = analysis.task_config("task1", mclass=mclass, n_zf=nzf,
                                       kappa=kappa)
            verdicts.append(analysis.certify(cfg).feasible)
        for weak, strong in ((0, 1), (1, 2)):
            if verdicts[weak] and not verdicts[strong]:
                return CaseResult("class-ordering", False, 1,
                                  counterexample=kappa,
                                  detail=f"verdicts {verdicts} at "
                                         f"kappa={kappa}")
    return CaseResult("class-ordering", True, len(kappas))


@_register("barrier-beats-nominal", 0.0, ("robust-analysis",),
           ("barrier-beats-nominal",))
def _case_barrier_nominal(rng, kappas=(1.05, 2.0)):
    """Whenever the nominal loop certifies, the barrier loop does too."""
    for kappa in kappas:
        nom = analysis.certify(analysis.task_config(
            "task1", mode="nominal", mclass="czf-diagonal", n_zf=1,
            kappa=kappa))
        bar = analysis.certify(analysis.task_config(
            "task1", mode="barrier", mclass="czf-diagonal", n_zf=1,
            kappa=kappa))
        if nom.feasible and not bar.feasible:
            return CaseResult("barrier-beats-nominal", False, 1,
                              counterexample=kappa,
                              detail=f"nominal certified, barrier not at "
                                     f"kappa={kappa}")
    return CaseResult("barrier-beats-nominal", True, len(kappas))


@_register("suite-determinism", 0.0, ("property-suite",),
           ("determinism",))
def _case_determinism(rng):
    """Same seed, same sampler output."""
    p = _default_problem()
    a = _theta_sampler(np.random.default_rng(1234), p, 16)
    b = _theta_sampler(np.random.default_rng(1234), p, 16)
    if not np.array_equal(a, b):
        return CaseResult("suite-determinism", False, 1,
                          detail="sampler is not deterministic")
    return CaseResult("suite-determinism", True, 1)


@_register("cli-determinism", 0.0, ("cli",),
           ("output-determinism", "csv-header-hash"))
def _case_cli(rng):
    """Identical config + seed produce byte-identical CSV with hash header."""
    import json
    import tempfile
    from pathlib import Path
    from . import cli

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        config = cli.example_config("simulate")
        config["simulate"]["steps"] = 5
        config["simulate"]["n_initial"] = 2
        path = tmp / "cfg.json"
        path.write_text(json.dumps(config))
        outs = []
        for sub in ("a", "b"):
            out = tmp / sub
            code = cli.main(["simulate", "--config", str(path),
                             "--out", str(out)])
            if code != 0:
                return CaseResult("cli-determinism", False, 1,
                                  detail=f"simulate exited {code}")
            outs.append((out / "trajectories.csv").read_bytes())
        if outs[0] != outs[1]:
            return CaseResult("cli-determinism", False, 1,
                              detail="CSV output not deterministic")
        head = outs[0].decode().splitlines()
        if not head[0].startswith("#") or "config-hash" not in "".join(
                head[:6]):
            return CaseResult("cli-determinism", False, 1,
                              detail="missing config hash header")
    return CaseResult("cli-determinism", True, 2)


@_register("meta-coverage", 0.0, ("property-suite",), ())
def _case_meta(rng):
    """Every declared module invariant has a registered case."""
    covered = set()
    for case in REGISTRY:
        covered.update(case.invariants)
    missing = [
        (module, inv)
        for module, invs in REQUIRED_INVARIANTS.items()
        for inv in invs if inv not in covered
    ]
    if missing:
        return CaseResult("meta-coverage", False, 1, counterexample=missing,
                          detail=f"uncovered invariants: {missing}")
    return CaseResult("meta-coverage", True, 1)


@dataclass(frozen=True)
class SuiteReport:
    seed: int
    results: tuple

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_text(self) -> str:
        lines = []
        for r in self.results:
            mark = "PASS" if r.passed else "FAIL"
            extra = f"  [{r.detail}]" if r.detail and not r.passed else ""
            lines.append(f"{mark}  {r.name}  ({r.n_samples} samples){extra}")
        lines.append(f"{'PASS' if self.passed else 'FAIL'}  suite "
                     f"({len(self.results)} cases, seed {self.seed})")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "passed": self.passed,
            "cases": [
                {"name": r.name, "passed": r.passed,
                 "n_samples": r.n_samples, "detail": r.detail}
                for r in self.results
            ],
        }


def _case_rng(seed: int, name: str):
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


def run_case(name: str, seed: int = 0, **overrides) -> CaseResult:
    """Run one registered case by name (overrides enable fault injection)."""
    for case in REGISTRY:
        if case.name == name:
            return case.fn(_case_rng(seed, name), **overrides)
    raise KeyError(f"no registered case {name!r}")


def run_suite(seed: int = 0, case_filter=None) -> SuiteReport:
    """Run all (or a filtered subset of) registered property cases."""
    results = []
    for case in REGISTRY:
        if case_filter and case.name not in case_filter:
            continue
        results.append(case.fn(_case_rng(seed, case.name)))
    return SuiteReport(seed=seed, results=tuple(results))
