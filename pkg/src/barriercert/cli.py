"""Batch command-line front-end.

Four subcommands drive the library from JSON configs:

- ``certify``: one KYP certification, plain-text report, exit code is
  the verdict (0 certified / 1 not / 2 unknown / 3 config error);
- ``sweep``: margin bisection over table cells, CSV + SVG output;
- ``simulate``: seeded closed-loop trajectories, CSV + envelope SVG;
- ``suite``: the property suite, text + JSON report.

Configs are schema-validated up front (unknown keys rejected) and every
emitted CSV records the SHA-256 of the canonical config serialization,
so outputs are traceable and byte-reproducible.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .lti import StateSpace
from .mpc import box_qp_solve, closed_loop_simulate
from .analysis import (
    AnalysisConfig,
    BracketError,
    bisect_margin,
    certify,
    example_plant,
    synthesize,
)
from .properties import run_suite

__all__ = ["main", "build_schema", "config_from_dict", "example_config"]

EXIT_CERTIFIED = 0
EXIT_NOT_CERTIFIED = 1
EXIT_UNKNOWN = 2
EXIT_CONFIG = 3

#: CLI names for the multiplier classes.
MCLASS_BY_NAME = {
    "general": "static-sector",
    "zf": "zf-siso",
    "czf": "czf-diagonal",
}

TARGET_BY_NAME = {"kappa": "max-kappa", "r": "min-r", "b": "max-b"}


def build_schema() -> dict:
    """JSON schema (draft 2020-12 subset) for run configs."""
    matrix = {"type": "array",
              "items": {"type": "array", "items": {"type": "number"}}}
    vector = {"type": "array", "items": {"type": "number"}}
    cell = {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "mode": {"enum": ["barrier", "nominal"]},
            "multiplier": {"enum": list(MCLASS_BY_NAME)},
            "n_zf": {"type": "integer", "minimum": 0},
        },
    }
    return {
        "type": "object",
        "additionalProperties": False,
        "required": ["schema_version"],
        "properties": {
            "schema_version": {"const": 1},
            "plant": {
                "type": "object",
                "additionalProperties": False,
                "required": ["A", "B", "C"],
                "properties": {"A": matrix, "B": matrix, "C": matrix},
            },
            "observer": {
                "type": "object",
                "additionalProperties": False,
                "properties": {"Qn": {"type": "number"},
                               "Rn": {"type": "number"}},
            },
            "horizon": {"type": "integer", "minimum": 1},
            "q_weight": {"type": "number", "exclusiveMinimum": 0},
            "r_weight": {"type": "number", "exclusiveMinimum": 0},
            "mu": {"type": "number", "exclusiveMinimum": 0},
            "barrier_kind": {"enum": ["gradient-recentered",
                                      "weight-recentered", "relaxed"]},
            "bounds": {
                "type": "object",
                "additionalProperties": False,
                "required": ["lower", "upper"],
                "properties": {"lower": vector, "upper": vector},
            },
            "mode": {"enum": ["barrier", "nominal"]},
            "multiplier": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "class": {"enum": list(MCLASS_BY_NAME)},
                    "n_zf": {"type": "integer", "minimum": 0},
                },
            },
            "uncertainty": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "b": {"type": "number", "minimum": 0},
                    "tap": {"enum": ["auto", "measured", "nominal"]},
                },
            },
            "kappa": {"type": "number", "exclusiveMinimum": 0},
            "tol_bisect": {"type": "number", "exclusiveMinimum": 0},
            "task": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "kind": {"enum": list(TARGET_BY_NAME.values())},
                    "bracket": {"type": "array", "items": {"type": "number"},
                                "minItems": 2, "maxItems": 2},
                },
            },
            "sweep": {
                "type": "object",
                "additionalProperties": False,
                "properties": {"cells": {"type": "array", "items": cell}},
            },
            "simulate": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "steps": {"type": "integer", "minimum": 1},
                    "seed": {"type": "integer", "minimum": 0},
                    "n_initial": {"type": "integer", "minimum": 1},
                    "x0_scale": {"type": "number", "exclusiveMinimum": 0},
                    "controller": {"enum": ["barrier", "nominal", "both"]},
                },
            },
        },
    }


def example_config(kind: str = "certify") -> dict:
    """Ready-to-run config documents for the running example."""
    plant = example_plant()
    base = {
        "schema_version": 1,
        "plant": {"A": plant.A.tolist(), "B": plant.B.tolist(),
                  "C": plant.C.tolist()},
        "observer": {"Qn": 1.0, "Rn": 1.0},
        "horizon": 2,
        "q_weight": 1.0,
        "r_weight": 0.1,
        "mu": 0.8,
        "barrier_kind": "gradient-recentered",
        "bounds": {"lower": [-0.5], "upper": [1.0]},
        "mode": "barrier",
        "multiplier": {"class": "general", "n_zf": 0},
        "uncertainty": {"b": 0.0, "tap": "auto"},
        "kappa": 1.0,
    }
    if kind == "sweep":
        base["task"] = {"kind": "max-kappa"}
        base["sweep"] = {"cells": [
            {"mode": "barrier", "multiplier": "general", "n_zf": 0},
            {"mode": "barrier", "multiplier": "czf", "n_zf": 1},
            {"mode": "nominal", "multiplier": "czf", "n_zf": 1},
        ]}
    elif kind == "simulate":
        base["simulate"] = {"steps": 500, "seed": 0, "n_initial": 20,
                            "x0_scale": 1.0, "controller": "barrier"}
    elif kind != "certify":
        raise ValueError(f"unknown example kind {kind!r}")
    return base


class ConfigError(ValueError):
    pass


def _load_config(path: str) -> dict:
    import jsonschema

    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(raw, build_schema())
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config rejected by schema: {exc.message}") from exc
    return raw


def config_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def config_from_dict(raw: dict, mode=None, mclass=None, n_zf=None,
                     ) -> AnalysisConfig:
    """Convert a validated config document to an :class:`AnalysisConfig`."""
    if "plant" in raw:
        p = raw["plant"]
        plant = StateSpace(np.array(p["A"], dtype=float),
                           np.array(p["B"], dtype=float),
                           np.array(p["C"], dtype=float),
                           np.zeros((len(p["C"]), len(p["B"][0]))))
    else:
        plant = example_plant()
    mult = raw.get("multiplier", {})
    unc = raw.get("uncertainty", {})
    kwargs = dict(
        plant=plant,
        observer_Qn=raw.get("observer", {}).get("Qn", 1.0),
        observer_Rn=raw.get("observer", {}).get("Rn", 1.0),
        N=raw.get("horizon", 2),
        q_weight=raw.get("q_weight", 1.0),
        r_weight=raw.get("r_weight", 0.1),
        mu=raw.get("mu", 0.8),
        barrier_kind=raw.get("barrier_kind", "gradient-recentered"),
        lower=tuple(raw.get("bounds", {}).get("lower", (-0.5,))),
        upper=tuple(raw.get("bounds", {}).get("upper", (1.0,))),
        mode=mode or raw.get("mode", "barrier"),
        mclass=MCLASS_BY_NAME[mclass or mult.get("class", "general")],
        n_zf=n_zf if n_zf is not None else mult.get("n_zf", 0),
        b=unc.get("b", 0.0),
        kappa=raw.get("kappa", 1.0),
        uncertainty_tap=unc.get("tap", "auto"),
        tol_bisect=raw.get("tol_bisect", 1e-3),
    )
    try:
        return AnalysisConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _csv_header(kind: str, raw: dict, columns: str, units: str) -> str:
    return (f"# barriercert {kind} schema-version 1\n"
            f"# config-hash: sha256:{config_hash(raw)}\n"
            f"# units: {units}\n"
            f"# columns: {columns}\n")


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def cmd_certify(args) -> int:
    raw = _load_config(args.config)
    config = config_from_dict(raw, mclass=args.multiplier, n_zf=args.nzf)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    report = certify(config)
    lines = [
        "barriercert certification report",
        f"config-hash: sha256:{config_hash(raw)}",
        f"verdict: {report.status}",
        f"lambda: {report.lam:.6e}",
        f"solver: {report.solver or '-'}",
        f"runtime_s: {time.monotonic() - t0:.3f}",
    ]
    if report.freq_margin is not None:
        lines.append(f"frequency-margin: {report.freq_margin:.6e}")
    for j in sorted(report.params):
        vals = " ".join(f"{v:.9e}" for v in np.atleast_1d(report.params[j]))
        lines.append(f"multiplier R[{j:+d}]: {vals}")
    if report.detail:
        lines.append(f"detail: {report.detail}")
    (out / "certify_report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    if report.feasible:
        return EXIT_CERTIFIED
    return EXIT_NOT_CERTIFIED if report.status == "infeasible" else EXIT_UNKNOWN


def _sweep_cell(payload):
    """Worker for one sweep cell; returns a result row dict."""
    config, target, bracket = payload
    t0 = time.monotonic()
    try:
        res = bisect_margin(config, target, interval=bracket)
        return {"margin": res.margin, "at_floor": res.at_floor,
                "n_probes": len(res.trace), "error": "",
                "trace": [(v, ok, lam) for v, ok, lam in res.trace],
                "runtime": time.monotonic() - t0}
    except BracketError as exc:
        return {"margin": None, "at_floor": False,
                "n_probes": len(exc.trace), "error": str(exc),
                "trace": [(v, ok, lam) for v, ok, lam in exc.trace],
                "runtime": time.monotonic() - t0}


def cmd_sweep(args) -> int:
    raw = _load_config(args.config)
    target = TARGET_BY_NAME.get(args.target) or raw.get("task", {}).get(
        "kind", "max-kappa")
    bracket = raw.get("task", {}).get("bracket")
    bracket = tuple(bracket) if bracket else None
    cells = raw.get("sweep", {}).get("cells") or [{
        "mode": raw.get("mode", "barrier"),
        "multiplier": raw.get("multiplier", {}).get("class", "general"),
        "n_zf": raw.get("multiplier", {}).get("n_zf", 0),
    }]
    if args.multiplier or args.nzf is not None:
        for cell in cells:
            if args.multiplier:
                cell["multiplier"] = args.multiplier
            if args.nzf is not None:
                cell["n_zf"] = args.nzf
    jobs = []
    for cell in cells:
        config = config_from_dict(raw, mode=cell.get("mode"),
                                  mclass=cell.get("multiplier"),
                                  n_zf=cell.get("n_zf"))
        jobs.append((config, target, bracket))

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_cell, jobs))
    else:
        rows = [_sweep_cell(job) for job in jobs]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    units = {"max-kappa": "margin[output gain]",
             "min-r": "margin[control weight]",
             "max-b": "margin[uncertainty norm bound]"}[target]
    csv = [_csv_header("sweep", raw,
                       "mode,multiplier_class,n_zf,target,margin,at_floor,"
                       "n_probes,runtime_s", units + " runtime[s]")]
    for cell, row in zip(cells, rows):
        csv.append(",".join([
            cell.get("mode", "barrier"), cell.get("multiplier", "general"),
            str(cell.get("n_zf", 0)), target, _fmt(row["margin"]),
            str(row["at_floor"]).lower(), str(row["n_probes"]),
            f"{row['runtime']:.3f}"]) + "\n")
    (out / "sweep.csv").write_text("".join(csv))
    _sweep_plot(out / "sweep.svg", cells, rows, target)
    for cell, row in zip(cells, rows):
        label = (f"{cell.get('mode', 'barrier')}/"
                 f"{cell.get('multiplier', 'general')}/N_ZF="
                 f"{cell.get('n_zf', 0)}")
        print(f"{label}: {target} margin = {_fmt(row['margin'])}"
              + (f"  [{row['error']}]" if row["error"] else ""))
    if all(row["margin"] is None for row in rows):
        return EXIT_NOT_CERTIFIED
    return EXIT_CERTIFIED


def _sweep_plot(path: Path, cells, rows, target):
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.fonttype"] = "path"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for cell, row in zip(cells, rows):
        pts = sorted((v, lam) for v, ok, lam in row["trace"] if ok)
        if not pts:
            continue
        label = (f"{cell.get('mode', 'barrier')}/"
                 f"{cell.get('multiplier', 'general')}/"
                 f"{cell.get('n_zf', 0)}")
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                marker="o", label=label)
    ax.set_xlabel(f"swept parameter ({target})")
    ax.set_ylabel("certified lambda")
    ax.set_yscale("symlog", linthresh=1e-9)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _first_order_delta(rng, bound: float) -> StateSpace:
    """Random stable first-order filter with H-infinity norm ``bound``."""
    a = float(rng.uniform(-0.9, 0.9))
    sign = 1.0 if rng.uniform() < 0.5 else -1.0
    c = sign * bound * (1.0 - abs(a))
    return StateSpace(np.array([[a]]), np.array([[1.0]]),
                      np.array([[c]]), np.zeros((1, 1)))


def cmd_simulate(args) -> int:
    raw = _load_config(args.config)
    config = config_from_dict(raw, mclass=args.multiplier, n_zf=args.nzf)
    sim = raw.get("simulate", {})
    steps = args.steps or sim.get("steps", 500)
    seed = args.seed if args.seed is not None else sim.get("seed", 0)
    n_initial = sim.get("n_initial", 1)
    x0_scale = sim.get("x0_scale", 1.0)
    controller = sim.get("controller", "barrier")

    loop = synthesize(config)
    rng = np.random.default_rng(seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    controllers = [controller] if controller != "both" else ["barrier",
                                                             "nominal"]
    records = []
    envelopes = {}
    for name in controllers:
        envelopes[name] = []
        for ic in range(n_initial):
            x0 = x0_scale * rng.standard_normal(config.plant.n_states)
            delta = (_first_order_delta(rng, config.b)
                     if config.b > 0 else None)
            if name == "barrier":
                traj = closed_loop_simulate(
                    _sim_plant(config), loop.observer, loop.problem,
                    delta, x0, steps)
            else:
                traj = _simulate_nominal(config, loop, delta, x0, steps)
            if traj.step_failed >= 0:
                print(f"solver failure at step {traj.step_failed} "
                      f"(controller={name}, ic={ic})", file=sys.stderr)
                return EXIT_UNKNOWN
            envelopes[name].append(traj)
            for k in range(steps):
                records.append((name, ic, k, *traj.x[k], *traj.x_hat[k],
                                *traj.u[k], *traj.y[k]))

    n_x = config.plant.n_states
    cols = (["controller", "ic", "k"]
            + [f"x{i + 1}" for i in range(n_x)]
            + [f"xhat{i + 1}" for i in range(n_x)]
            + [f"u{i + 1}" for i in range(config.plant.n_inputs)]
            + [f"y{i + 1}" for i in range(config.plant.n_outputs)])
    csv = [_csv_header("simulate", raw, ",".join(cols),
                       "x,xhat[state] u[input] y[output] k[steps]")]
    for rec in records:
        csv.append(",".join(_fmt(v) for v in rec) + "\n")
    (out / "trajectories.csv").write_text("".join(csv))
    _simulate_plot(out / "trajectories.svg", envelopes, steps)
    print(f"wrote {len(records)} rows for {len(controllers)} controller(s), "
          f"{n_initial} initial condition(s)")
    return EXIT_CERTIFIED


def _sim_plant(config: AnalysisConfig) -> StateSpace:
    """Plant with the Task-1 output gain applied."""
    p = config.plant
    return StateSpace(p.A, p.B, config.kappa * p.C, p.D)


def _simulate_nominal(config, loop, delta, x0, steps):
    """Closed loop under the exact-projection (unbarriered) QP controller."""
    from .mpc import Trajectory

    plant = _sim_plant(config)
    observer = loop.observer
    p = loop.problem
    n_x, n_u = plant.n_states, plant.n_inputs
    x = np.zeros((steps + 1, n_x))
    xh = np.zeros((steps + 1, n_x))
    u_log = np.zeros((steps, n_u))
    y_log = np.zeros((steps, plant.n_outputs))
    x[0] = np.asarray(x0, dtype=float).reshape(-1)
    A, B, C = plant.A, plant.B, plant.C
    AL = config.plant.A @ observer.L
    Cn = config.plant.C
    xd = np.zeros(delta.n_states) if delta is not None else None
    for k in range(steps):
        y = C @ x[k]
        if delta is not None:
            y_meas = y + delta.C @ xd
            xd = delta.A @ xd + delta.B @ y_meas
        else:
            y_meas = y
        theta = -p.S @ xh[k]
        U = box_qp_solve(p.H, theta, p.constraints)
        u = U[:n_u]
        x[k + 1] = A @ x[k] + B @ u
        xh[k + 1] = (config.plant.A @ xh[k] + config.plant.B @ u
                     + AL @ (y_meas - Cn @ xh[k]))
        u_log[k] = u
        y_log[k] = y
    return Trajectory(x=x, x_hat=xh, u=u_log, y=y_log)


def _simulate_plot(path: Path, envelopes, steps):
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.fonttype"] = "path"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    t = np.arange(steps)
    for name, trajs in envelopes.items():
        ys = np.stack([traj.y[:, 0] for traj in trajs])
        ax.fill_between(t, ys.min(axis=0), ys.max(axis=0), alpha=0.3,
                        label=f"{name} envelope")
        ax.plot(t, ys.mean(axis=0), lw=1.0, label=f"{name} mean")
    ax.set_xlabel("step k")
    ax.set_ylabel("output y")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_suite(args) -> int:
    report = run_suite(seed=args.seed or 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "suite.txt").write_text(report.to_text() + "\n")
    (out / "suite.json").write_text(json.dumps(report.to_dict(), indent=2)
                                    + "\n")
    print(report.to_text())
    return EXIT_CERTIFIED if report.passed else EXIT_NOT_CERTIFIED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="barriercert",
        description="IQC robustness certificates for barrier MPC loops")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--nzf", type=int, default=None,
                        help="override FIR tap count")
        sp.add_argument("--multiplier", choices=sorted(MCLASS_BY_NAME),
                        default=None, help="override multiplier class")

    sp = sub.add_parser("certify", help="single certification")
    sp.add_argument("--config", required=True)
    common(sp)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("sweep", help="margin bisection over cells")
    sp.add_argument("--config", required=True)
    sp.add_argument("--target", choices=sorted(TARGET_BY_NAME), default=None)
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("simulate", help="closed-loop simulation")
    sp.add_argument("--config", required=True)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("suite", help="property suite")
    sp.add_argument("--seed", type=int, default=0)
    common(sp)
    sp.set_defaults(func=cmd_suite)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
