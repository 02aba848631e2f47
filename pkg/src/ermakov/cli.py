"""Command-line entry point.

Subcommands:

    simulate   integrate a scenario, emit trajectory.csv + report.json
    check      simulate and gate on invariant drift (exit 1 on excess)
    map        physical trajectory mapped to the transformed frame vs a
               direct transformed-frame integration; emit the gap
    convert    print one coupling representation converted to another
    bench      drift/cost table over a method x (dt|tol) grid

Exit codes: 0 success, 1 drift threshold exceeded (check), 2 config
error, 3 singularity abort (partial data still written), 4 integrator
failure.  Every run with an output directory writes manifest.json.
Simulation data files never contain timestamps or timings, so identical
inputs give bit-identical output; run timing lives in the manifest (and,
for bench, in the per-row wall_ms cost column).

The environment variable ERMAKOV_SEED is reserved for future use; the
core is randomness-free and does not read it.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import dynamics, integrators, invariants, model
from .errors import ConfigError, ErmakovError, ExprSyntaxError, SingularityError
from .expr import compile_func, to_source
from .model import ConfigDocument, QFrameState, Scenario

EXIT_OK = 0
EXIT_DRIFT = 1
EXIT_CONFIG = 2
EXIT_SINGULAR = 3
EXIT_INTEGRATOR = 4

TRAJECTORY_HEADER = "t,tau,q,q_dot,f,f_dot,Q,Q_prime,E_phys,E_Q"
QFRAME_HEADER = "tau,Q,Q_prime"
BENCH_HEADER = "method,dt_or_tol,max_rel_drift,steps,wall_ms,status"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _exit_code_for(err: ErmakovError) -> int:
    if isinstance(err, (ConfigError, ExprSyntaxError)):
        return EXIT_CONFIG
    if isinstance(err, SingularityError):
        return EXIT_SINGULAR
    return EXIT_INTEGRATOR


# --- shared plumbing ---------------------------------------------------------

def _load(args) -> tuple[ConfigDocument, Scenario]:
    doc = model.load_config(args.config)
    if args.set:
        doc = model.apply_overrides(doc, args.set)
    return doc, model.build_scenario(doc)


def _integrate_phys(scn: Scenario) -> integrators.Trajectory:
    plan = scn.plan
    st = scn.initial
    y0 = np.array([st.q, st.q_dot, st.f, st.f_dot, st.tau])
    rhs = dynamics.phys_ode(scn)
    if plan.method == "rk4":
        return integrators.integrate_fixed_rk4(rhs, y0, st.t, plan.t_end,
                                               plan.dt, plan.output_stride)
    if plan.method == "adaptive54":
        return integrators.integrate_adaptive54(rhs, y0, st.t, plan.t_end,
                                                plan.tol, plan.output_stride)
    raise ConfigError(
        "method 'verlet' integrates the transformed frame only and cannot "
        "produce a physical trajectory; use rk4 or adaptive54 (verlet is "
        "available through the bench subcommand)")


def _scenario_echo(doc: ConfigDocument, scn: Scenario) -> dict:
    return {
        "config": {sec: dict(kv) for sec, kv in doc.sections.items()},
        "resolved": {
            "m": scn.m.source,
            "omega_tilde_sq": scn.omega_tilde_sq.source,
            "F": scn.coupling_F.source,
            "G": scn.coupling_G.source,
            "V": scn.potential_V.source if scn.potential_V else None,
            "W": scn.potential_W.source if scn.potential_W else None,
            "t0": scn.initial.t,
            "method": scn.plan.method,
        },
    }


def _write_manifest(out_dir: Path, payload: dict, t_start: float) -> None:
    payload = dict(payload)
    payload["wall_ms"] = (time.perf_counter() - t_start) * 1e3
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _singularity_info(err: ErmakovError) -> dict | None:
    last_state = getattr(err, "last_state", None)
    if last_state is None:
        return {"message": str(err)}
    names = ("q", "q_dot", "f", "f_dot", "tau")[: len(last_state)]
    return {
        "message": str(err),
        "last_t": getattr(err, "last_t", None),
        "last_state": dict(zip(names, map(float, last_state))),
    }


def _energy_columns(traj, scn, tol):
    """Invariant series, or NaN columns if evaluation fails (possible on
    a partial trajectory that stopped close to a singularity)."""
    try:
        e_phys, e_q, meta = invariants.invariant_series(traj, scn, tol)
        return e_phys, e_q, meta, None
    except ErmakovError as err:
        n = len(traj)
        return np.full(n, np.nan), np.full(n, np.nan), None, str(err)


def _write_trajectory_csv(path: Path, traj, scn, e_phys, e_q) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for i in range(len(traj)):
            t = traj.t[i]
            q, q_dot, f, f_dot, tau = traj.y[i]
            mv = scn.m(t)
            Q = q / f
            Q_prime = mv * (q_dot * f - q * f_dot)
            row = (t, tau, q, q_dot, f, f_dot, Q, Q_prime, e_phys[i], e_q[i])
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _report_payload(report: invariants.InvariantReport | None, meta: dict | None,
                    error: str | None) -> dict:
    if report is None:
        return {"error": error or "invariant evaluation failed"}
    payload = {
        "e0": report.e0,
        "max_abs_drift": report.max_abs_drift,
        "max_rel_drift": report.max_rel_drift,
        "samples": report.samples,
        "frame_gap": report.frame_gap,
    }
    if meta:
        payload["convention"] = meta
    return payload


def _run_and_write(args, command: str) -> tuple[int, invariants.InvariantReport | None]:
    """Shared body of simulate/check: integrate, write the three files,
    map errors to exit codes."""
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    manifest = {"command": command, "config_path": args.config,
                "overrides": list(args.set or []), "outputs": {}}

    try:
        doc, scn = _load(args)
    except ErmakovError as err:
        print(f"error: {err}", file=sys.stderr)
        manifest.update(error=str(err), exit_status=EXIT_CONFIG)
        _write_manifest(out_dir, manifest, t_start)
        return EXIT_CONFIG, None

    manifest.update(_scenario_echo(doc, scn), config_text=doc.text)
    exit_status = EXIT_OK
    traj = None
    try:
        traj = _integrate_phys(scn)
    except ErmakovError as err:
        exit_status = _exit_code_for(err)
        print(f"error: {err}", file=sys.stderr)
        manifest["error"] = str(err)
        manifest["singularity"] = _singularity_info(err)
        traj = getattr(err, "partial", None)
        if exit_status == EXIT_CONFIG or traj is None:
            manifest["exit_status"] = exit_status or EXIT_INTEGRATOR
            _write_manifest(out_dir, manifest, t_start)
            return manifest["exit_status"], None

    e_phys, e_q, meta, series_err = _energy_columns(traj, scn, args.quad_tol)
    report = None
    if series_err is None:
        report = invariants.report_from_series(e_phys, e_q)

    traj_path = out_dir / "trajectory.csv"
    _write_trajectory_csv(traj_path, traj, scn, e_phys, e_q)
    report_path = out_dir / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(_report_payload(report, meta, series_err), fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    manifest["outputs"] = {"trajectory": str(traj_path), "report": str(report_path)}
    manifest["metadata"] = {"method": traj.method, "step_count": traj.step_count,
                            "rejected_steps": traj.rejected_steps}
    manifest["exit_status"] = exit_status
    _write_manifest(out_dir, manifest, t_start)
    return exit_status, report


# --- subcommands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    code, _report = _run_and_write(args, "simulate")
    return code


def cmd_check(args) -> int:
    code, report = _run_and_write(args, "check")
    if code != EXIT_OK:
        return code
    if report is None:
        return EXIT_INTEGRATOR
    if report.max_rel_drift > args.max_drift:
        print(f"drift check failed: max_rel_drift = {report.max_rel_drift:.3e} "
              f"> {args.max_drift:.3e}", file=sys.stderr)
        return EXIT_DRIFT
    return EXIT_OK


def cmd_map(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    manifest = {"command": "map", "config_path": args.config,
                "overrides": list(args.set or []), "outputs": {}}

    try:
        doc, scn = _load(args)
    except ErmakovError as err:
        print(f"error: {err}", file=sys.stderr)
        manifest.update(error=str(err), exit_status=EXIT_CONFIG)
        _write_manifest(out_dir, manifest, t_start)
        return EXIT_CONFIG

    manifest.update(_scenario_echo(doc, scn), config_text=doc.text)
    try:
        traj = _integrate_phys(scn)
    except ErmakovError as err:
        code = _exit_code_for(err)
        print(f"error: {err}", file=sys.stderr)
        manifest.update(error=str(err), exit_status=code,
                        singularity=_singularity_info(err))
        _write_manifest(out_dir, manifest, t_start)
        return code

    tau = traj.y[:, 4]
    q, q_dot, f, f_dot = traj.y[:, 0], traj.y[:, 1], traj.y[:, 2], traj.y[:, 3]
    m_vals = np.array([scn.m(t) for t in traj.t])
    Q_mapped = q / f
    Qp_mapped = m_vals * (q_dot * f - q * f_dot)

    mapped_path = out_dir / "qframe_mapped.csv"
    with open(mapped_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(QFRAME_HEADER + "\n")
        for i in range(len(traj)):
            fh.write(",".join(_fmt(v) for v in (tau[i], Q_mapped[i], Qp_mapped[i])) + "\n")

    # direct transformed-frame run over the same tau span
    tau_end = float(tau[-1])
    init = QFrameState(tau=float(tau[0]), Q=float(Q_mapped[0]),
                       Q_prime=float(Qp_mapped[0]))
    tol = scn.plan.tol if scn.plan.tol is not None else 1e-10
    try:
        direct = integrators.integrate_adaptive54(
            dynamics.qframe_ode_from_scenario(scn),
            np.array([init.Q, init.Q_prime]), init.tau, tau_end,
            tol, scn.plan.output_stride)
    except ErmakovError as err:
        code = _exit_code_for(err)
        print(f"error: {err}", file=sys.stderr)
        manifest.update(error=str(err), exit_status=code,
                        singularity=_singularity_info(err))
        _write_manifest(out_dir, manifest, t_start)
        return code

    direct_path = out_dir / "qframe_direct.csv"
    with open(direct_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(QFRAME_HEADER + "\n")
        for i in range(len(direct)):
            fh.write(",".join(_fmt(v) for v in
                              (direct.t[i], direct.y[i, 0], direct.y[i, 1])) + "\n")

    gap = 0.0
    compared = 0
    for i in range(len(traj)):
        if tau[i] > direct.t[-1]:
            break
        Qd = integrators.interpolate(direct, float(tau[i]))[0]
        gap = max(gap, abs(Qd - Q_mapped[i]))
        compared += 1
    gap_path = out_dir / "gap.json"
    with open(gap_path, "w", encoding="utf-8") as fh:
        json.dump({"max_abs_dQ": gap, "samples_compared": compared,
                   "tau_end": tau_end}, fh, indent=2, sort_keys=True)
        fh.write("\n")

    manifest["outputs"] = {"qframe_mapped": str(mapped_path),
                           "qframe_direct": str(direct_path),
                           "gap": str(gap_path)}
    manifest["exit_status"] = EXIT_OK
    _write_manifest(out_dir, manifest, t_start)
    return EXIT_OK


def cmd_convert(args) -> int:
    requested = []
    if args.V is not None:
        requested.append("V")
    if args.W is not None:
        requested.append("W")
    if args.F is not None:
        requested.append("F")
    if args.G is not None:
        requested.append("G")
    if len(requested) != 1:
        print("error: give exactly one of --V, --W, --F, --G", file=sys.stderr)
        return EXIT_CONFIG
    if (args.F is not None) != args.h_from_F:
        print("error: --F and --h-from-F go together", file=sys.stderr)
        return EXIT_CONFIG
    if (args.G is not None) != args.g_from_G:
        print("error: --G and --g-from-G go together", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.V is not None:
            out = model.F_from_V(compile_func(args.V, "Q"))
        elif args.W is not None:
            out = model.G_from_W(compile_func(args.W, "s"))
        elif args.F is not None:
            out = model.h_from_F(compile_func(args.F, "u"))
        else:
            out = model.g_from_G(compile_func(args.G, "v"))
    except ErmakovError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    print(to_source(out.expr))
    return EXIT_OK


def _bench_grid(args) -> list[tuple[str, float]]:
    methods = [m.strip() for m in (args.methods or "").split(",") if m.strip()]
    dts = [float(v) for v in (args.dt or "").split(",") if v.strip()]
    tols = [float(v) for v in (args.tol or "").split(",") if v.strip()]
    grid: list[tuple[str, float]] = []
    for method in methods:
        if method not in model.METHODS:
            raise ConfigError(f"unknown method {method!r} in --methods")
        values = tols if method == "adaptive54" else dts
        grid.extend((method, v) for v in values)
    if not grid:
        raise ConfigError("empty bench grid: give --methods plus --dt and/or --tol")
    return grid


def _bench_row(scn: Scenario, method: str, value: float, quad_tol: float) -> tuple[float, int]:
    """One bench run; returns (max_rel_drift, steps)."""
    st = scn.initial
    plan = scn.plan
    if method == "verlet":
        if scn.potential_V is None and scn.potential_W is None:
            raise ConfigError("verlet bench rows need V/W potentials to "
                              "evaluate the transformed-frame energy")
        accel = dynamics.qframe_accel_from_scenario(scn)
        m0 = scn.m(st.t)
        init = QFrameState(tau=0.0, Q=st.q / st.f,
                           Q_prime=m0 * (st.q_dot * st.f - st.q * st.f_dot))
        traj = integrators.integrate_verlet(accel, init, value,
                                            plan.t_end - st.t, plan.output_stride)
        e = np.array([invariants.energy_Q(
            QFrameState(tau=t, Q=y[0], Q_prime=y[1]),
            scn.potential_V, scn.potential_W) for t, y in zip(traj.t, traj.y)])
        drift = float(np.max(np.abs(e - e[0])))
        rel = drift / abs(e[0]) if abs(e[0]) >= 1e-12 else 0.0
        return rel, traj.step_count

    y0 = np.array([st.q, st.q_dot, st.f, st.f_dot, st.tau])
    rhs = dynamics.phys_ode(scn)
    if method == "rk4":
        traj = integrators.integrate_fixed_rk4(rhs, y0, st.t, plan.t_end,
                                               value, plan.output_stride)
    else:
        traj = integrators.integrate_adaptive54(rhs, y0, st.t, plan.t_end,
                                                value, plan.output_stride)
    report = invariants.drift_report(traj, scn, quad_tol)
    return report.max_rel_drift, traj.step_count


def cmd_bench(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    manifest = {"command": "bench", "config_path": args.config,
                "overrides": list(args.set or []), "outputs": {}}
    try:
        doc, scn = _load(args)
        grid = _bench_grid(args)
    except ErmakovError as err:
        print(f"error: {err}", file=sys.stderr)
        manifest.update(error=str(err), exit_status=EXIT_CONFIG)
        _write_manifest(out_dir, manifest, t_start)
        return EXIT_CONFIG

    manifest.update(_scenario_echo(doc, scn), config_text=doc.text)
    rows = []
    ok_count = 0
    for method, value in grid:
        row_start = time.perf_counter()
        try:
            drift, steps = _bench_row(scn, method, value, args.quad_tol)
            wall = (time.perf_counter() - row_start) * 1e3
            rows.append((method, value, _fmt(drift), str(steps), f"{wall:.3f}", "ok"))
            ok_count += 1
        except ErmakovError as err:
            wall = (time.perf_counter() - row_start) * 1e3
            rows.append((method, value, "", "", f"{wall:.3f}",
                         f"error: {type(err).__name__}"))
            print(f"bench row {method} {value}: {err}", file=sys.stderr)

    bench_path = out_dir / "bench.csv"
    with open(bench_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(BENCH_HEADER + "\n")
        for method, value, drift, steps, wall, status in rows:
            fh.write(f"{method},{_fmt(value)},{drift},{steps},{wall},{status}\n")
    manifest["outputs"] = {"bench": str(bench_path)}
    code = EXIT_OK if ok_count > 0 else EXIT_INTEGRATOR
    manifest["exit_status"] = code
    _write_manifest(out_dir, manifest, t_start)
    return code


# --- parser ------------------------------------------------------------------

def _add_common(sub) -> None:
    sub.add_argument("--config", required=True, help="scenario config file")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                     help="override a config value (repeatable)")
    sub.add_argument("--quad-tol", type=float, default=1e-10,
                     help="quadrature tolerance for invariant evaluation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ermakov",
        description="Integrate coupled parametric-oscillator pairs and "
                    "certify their conserved invariant.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("simulate", help="integrate and write trajectory + report")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("check", help="simulate and gate on invariant drift")
    _add_common(p)
    p.add_argument("--max-drift", type=float, default=1e-6,
                   help="maximum tolerated relative drift (default 1e-6)")
    p.set_defaults(func=cmd_check)

    p = subs.add_parser("map", help="compare mapped vs direct transformed-frame runs")
    _add_common(p)
    p.set_defaults(func=cmd_map)

    p = subs.add_parser("convert", help="convert coupling representations")
    p.add_argument("--V", help="potential V(Q); prints F(u) = V'(u)/u")
    p.add_argument("--W", help="potential W(s); prints G(v) = W'(v)/v")
    p.add_argument("--F", help="coupling F(u); use with --h-from-F")
    p.add_argument("--G", help="coupling G(v); use with --g-from-G")
    p.add_argument("--h-from-F", action="store_true", dest="h_from_F",
                   help="print h(u) = u F(u)")
    p.add_argument("--g-from-G", action="store_true", dest="g_from_G",
                   help="print g(v) = v G(v)")
    p.set_defaults(func=cmd_convert)

    p = subs.add_parser("bench", help="drift/cost table over a method grid")
    _add_common(p)
    p.add_argument("--methods", help="comma-separated: rk4,adaptive54,verlet")
    p.add_argument("--dt", help="comma-separated dt values for fixed-step methods")
    p.add_argument("--tol", help="comma-separated tolerances for adaptive54")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
