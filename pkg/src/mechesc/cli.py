"""Command-line runner: simulate, average, compare, stability-scan, linearize,
signals-check and scenarios.

Every run writes its artifacts into ``--out``; failures exit nonzero and
leave an ``error.json`` record there.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import analysis
from .averaging import AveragedFlow, omega_ladder_errors, tilde_series
from .controller import GainError, to_tilde
from .plant import kinetic_energy
from .scenarios import Runtime, Scenario, StabilitySpec, build, builtin_scenarios, get_builtin
from .signals import BANK_VARIANTS, gram_matrix, lambda_matrix, make_harmonic_bank
from .sim import Trajectory, integrate

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2
EXIT_FAULT = 3
EXIT_CHECK_FAILED = 4


class CliFailure(Exception):
    def __init__(self, code: int, kind: str, message: str, fields=None):
        super().__init__(message)
        self.code = code
        self.kind = kind
        self.fields = fields or []


# --------------------------------------------------------------------------
# serialization


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not serializable: {type(x)}")


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, default=_json_default) + "\n")


def trajectory_columns(runtime: Runtime) -> list:
    n = runtime.plant.n
    D = runtime.plant.model.embed_dim
    return (["t"] + [f"g{i + 1}" for i in range(D)] + [f"v{i + 1}" for i in range(n)]
            + [f"w{i + 1}" for i in range(n)] + ["eta", "y", "V", "defect"])


def write_trajectory_csv(path: Path, columns: list, table: np.ndarray) -> None:
    np.savetxt(path, table, delimiter=",", header=",".join(columns), comments="", fmt="%.17g")


def read_trajectory_csv(path) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}


# --------------------------------------------------------------------------
# helpers


def load_scenario(args) -> Scenario:
    if args.config and args.scenario:
        raise CliFailure(EXIT_INVALID, "usage", "pass either --config or --scenario, not both")
    try:
        if args.config:
            sc = Scenario.model_validate_json(Path(args.config).read_text())
        elif args.scenario:
            sc = get_builtin(args.scenario)
        else:
            raise CliFailure(EXIT_INVALID, "usage", "a scenario is required: --config <path> or --scenario <name>")
        if args.omega is not None:
            sc = sc.with_omega(args.omega)
        if args.thin is not None:
            sc = Scenario.model_validate({**sc.model_dump(by_alias=True), "thin": args.thin})
    except ValidationError as exc:
        fields = [{"field": ".".join(str(p) for p in e["loc"]), "message": e["msg"]} for e in exc.errors()]
        raise CliFailure(EXIT_INVALID, "validation", "scenario failed validation", fields) from exc
    except (OSError, KeyError) as exc:
        raise CliFailure(EXIT_INVALID, "config", str(exc)) from exc
    return sc


def _build(sc: Scenario) -> Runtime:
    try:
        return build(sc)
    except (ValueError, GainError) as exc:
        raise CliFailure(EXIT_INVALID, "validation", str(exc)) from exc


def _energy_series(rt: Runtime, traj: Trajectory, transformed_z) -> np.ndarray:
    if rt.scenario.control == "open":
        return kinetic_energy(rt.plant, traj.z[:, :rt.plant.n])
    if rt.plant.objective.minimizer is None:
        return np.full(len(traj.times), np.nan)
    params = analysis.energy_params(rt.plant, rt.gains, rt.shaping)
    return analysis.lyapunov_V(params, rt.plant, (traj.g, transformed_z))


def _emit_trajectory(rt: Runtime, traj: Trajectory, out: Path, transformed_z) -> dict:
    y = rt.plant.output(traj.g)
    outputs = rt.scenario.outputs
    V = _energy_series(rt, traj, transformed_z) if "energy" in outputs else np.full(len(traj.times), np.nan)
    defect = traj.defect if "defect" in outputs else np.full(len(traj.times), np.nan)
    if "trajectory" in outputs:
        table = np.column_stack([traj.times, traj.g, traj.z, y, V, defect])
        write_trajectory_csv(out / "trajectory.csv", trajectory_columns(rt), table)
    n = rt.plant.n
    summary = {
        "scenario": rt.scenario.name,
        "control": rt.scenario.control,
        "t0": float(traj.times[0]),
        "t_final": float(traj.times[-1]),
        "records": len(traj.times),
        "step": rt.step,
        "final_state": {
            "g": traj.g[-1], "v": traj.z[-1, :n], "w": traj.z[-1, n:2 * n], "eta": float(traj.z[-1, 2 * n]),
        },
        "y_initial": float(y[0]),
        "y_final": float(y[-1]),
        "max_defect": float(np.max(traj.defect)),
        "faulted": traj.any_fault,
        "fault_time": _finite(traj.fault_time) if traj.any_fault else None,
    }
    if rt.scenario.control == "closed" and rt.plant.objective.minimizer is not None:
        g_star, z_star = analysis.equilibrium_state(rt.plant)
        dev = analysis.deviation_from(rt.plant, g_star, z_star, traj.g, transformed_z)
        summary["sup_deviation"] = float(np.max(dev))
        summary["final_deviation"] = float(dev[-1])
        summary["V_initial"] = _finite(V[0])
        summary["V_final"] = _finite(V[-1])
    if rt.scenario.control == "open":
        summary["kinetic_energy_relative_drift"] = float(np.max(np.abs(V - V[0])) / V[0])
    if rt.plant.model.name == "rn" and rt.gains is not None:
        window = rt.bank.period / rt.gains.omega
        summary["g1_sign_changes"] = analysis.sign_changes(traj.times, traj.g[:, 0], window, 0.02)
        summary["g1_dominant_period"] = _finite(analysis.dominant_period(traj.times, traj.g[:, 0], window, 0.02))
    return summary


def _check_fault(traj: Trajectory, out: Path):
    if traj.any_fault:
        raise CliFailure(EXIT_FAULT, "integration-fault",
                         f"integration faulted at t = {float(traj.fault_time):.6g}; partial trajectory kept in {out}")


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, out: Path) -> int:
    sc = load_scenario(args)
    rt = _build(sc)
    traj = integrate(rt.vector_field(), rt.plant.model, rt.g0, rt.z0, sc.t0, sc.t_end, rt.step, sc.thin)
    zt = tilde_series(rt.plant, rt.gains, rt.shaping, rt.bank, traj) if sc.control == "closed" else traj.z
    write_json(out / "summary.json", _emit_trajectory(rt, traj, out, zt))
    _check_fault(traj, out)
    return EXIT_OK


def cmd_average(args, out: Path) -> int:
    sc = load_scenario(args)
    if sc.control != "closed":
        raise CliFailure(EXIT_INVALID, "validation", "the averaged system needs a closed-loop scenario")
    rt = _build(sc)
    zt0 = to_tilde(rt.plant, rt.gains, rt.shaping, rt.bank, sc.t0, rt.g0, rt.z0)
    traj = integrate(AveragedFlow(rt.plant, rt.gains, rt.shaping), rt.plant.model, rt.g0, zt0,
                     sc.t0, sc.t_end, rt.step, sc.thin)
    summary = _emit_trajectory(rt, traj, out, traj.z)
    summary["flow"] = "averaged"
    write_json(out / "summary.json", summary)
    _check_fault(traj, out)
    return EXIT_OK


def cmd_compare(args, out: Path) -> int:
    sc = load_scenario(args)
    if sc.control != "closed":
        raise CliFailure(EXIT_INVALID, "validation", "compare needs a closed-loop scenario")
    rt = _build(sc)
    if sc.ladder is not None and args.omega is None:
        omegas, horizon = sc.ladder.omegas, sc.ladder.horizon
    else:
        w = rt.gains.omega
        omegas, horizon = [w, 2 * w, 4 * w], sc.t_end - sc.t0
    rows = omega_ladder_errors(rt.plant, rt.gains, rt.shaping, rt.bank, rt.g0, rt.z0, omegas,
                               sc.t0 + horizon, t0=sc.t0, steps_per_cycle=sc.steps_per_cycle)
    errs = [r["sup_error"] for r in rows]
    result = {
        "scenario": sc.name,
        "horizon": horizon,
        "omega": [r["omega"] for r in rows],
        "sup_error": [_finite(e) for e in errs],
        "ratio": [_finite(b / a) if a > 0 else None for a, b in zip(errs, errs[1:])],
    }
    write_json(out / "compare.json", result)
    if not all(math.isfinite(e) for e in errs):
        raise CliFailure(EXIT_FAULT, "integration-fault", "an integration on the ladder faulted")
    return EXIT_OK


def cmd_stability_scan(args, out: Path) -> int:
    sc = load_scenario(args)
    if sc.control != "closed":
        raise CliFailure(EXIT_INVALID, "validation", "stability-scan needs a closed-loop scenario")
    rt = _build(sc)
    spec = sc.stability or StabilitySpec(eps_grid=[0.01, 0.02, 0.05, 0.1, 0.2, 0.5],
                                         omega_ladder=[rt.gains.omega])
    if args.flow is not None:
        spec = spec.model_copy(update={"flow": args.flow})
    report = analysis.practical_stability_scan(
        rt.plant, rt.gains, rt.shaping, rt.bank, spec.eps_grid, spec.omega_ladder,
        init_samples=spec.init_samples, horizon=spec.horizon, delta=spec.delta, n_phases=spec.n_phases,
        seed=args.seed, flow=spec.flow, steps_per_cycle=spec.steps_per_cycle, tail_fraction=spec.tail_fraction,
    )
    data = report.to_dict()
    data["scenario"] = sc.name
    data["seed"] = args.seed
    write_json(out / "stability.json", data)
    return EXIT_OK


def cmd_linearize(args, out: Path) -> int:
    sc = load_scenario(args)
    if sc.control != "closed":
        raise CliFailure(EXIT_INVALID, "validation", "linearize needs a closed-loop scenario")
    rt = _build(sc)
    try:
        jac, ev = analysis.linearize_averaged(rt.plant, rt.gains, rt.shaping)
    except analysis.AnalysisError as exc:
        raise CliFailure(EXIT_INVALID, "not-an-equilibrium", str(exc)) from exc
    hess = analysis.hessian_check(rt.plant)
    result = {
        "scenario": sc.name,
        "eigenvalues": [[float(e.real), float(e.imag)] for e in ev],
        "max_real_part": float(np.max(ev.real)),
        "max_imag_over_real": analysis.max_imag_ratio(ev),
        "hurwitz": bool(np.all(ev.real < 0)),
        "hessian_eigenvalues": hess,
        "jacobian": jac,
    }
    write_json(out / "linearize.json", result)
    return EXIT_OK


def _parse_signal_tokens(tokens, variant, m):
    for tok in tokens:
        if tok.startswith("m="):
            tok = tok[2:]
        if tok.isdigit():
            m = int(tok)
        else:
            variant = tok
    return variant, m


def cmd_signals_check(args, out: Path) -> int:
    variant, m = _parse_signal_tokens(args.tokens, args.variant, args.m)
    if variant not in BANK_VARIANTS or variant == "custom":
        raise CliFailure(EXIT_INVALID, "validation", f"unknown bank variant {variant!r}")
    if m is None:
        m = {"fig1": 2, "fig2": 6}.get(variant, 6)
    try:
        bank = make_harmonic_bank(m, variant)
    except ValueError as exc:
        raise CliFailure(EXIT_INVALID, "validation", str(exc)) from exc
    gram = gram_matrix(bank)
    lam = lambda_matrix(bank)
    gram_err = float(np.max(np.abs(gram - np.eye(m))))
    lam_err = float(np.max(np.abs(lam - 0.5 * np.eye(m))))
    ok = gram_err <= 1e-8 and lam_err <= 1e-8
    write_json(out / "signals.json", {
        "variant": variant, "m": m, "gram": gram, "gram_max_error": gram_err,
        "lambda": lam, "lambda_max_error": lam_err, "pass": ok,
    })
    print(f"{variant} m={m}: Gram = I within {gram_err:.2e}, Lambda = I/2 within {lam_err:.2e}: "
          f"{'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_scenarios(args, out: Path) -> int:
    for sc in builtin_scenarios():
        (out / f"{sc.name}.json").write_text(sc.model_dump_json(indent=2, by_alias=True) + "\n")
        print(f"{sc.name}: {sc.description}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "average": cmd_average,
    "compare": cmd_compare,
    "stability-scan": cmd_stability_scan,
    "linearize": cmd_linearize,
    "signals-check": cmd_signals_check,
    "scenarios": cmd_scenarios,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mechesc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        p.add_argument("--out", default="out", help="output directory (created if missing)")
        if scenario:
            p.add_argument("--config", help="scenario JSON file")
            p.add_argument("--scenario", help="name of a built-in scenario")
            p.add_argument("--omega", type=float, help="override the dither frequency")
            p.add_argument("--thin", type=int, help="record every k-th step")
            p.add_argument("--seed", type=int, default=0, help="seed for initial-condition sampling")
        return p

    for name in ("simulate", "average", "compare", "linearize"):
        common(sub.add_parser(name))
    scan = common(sub.add_parser("stability-scan"))
    scan.add_argument("--flow", choices=["closed", "averaged"], help="override the scanned flow")
    sig = common(sub.add_parser("signals-check"), scenario=False)
    sig.add_argument("tokens", nargs="*", help="bank variant and channel count, e.g. 'canonical m=6'")
    sig.add_argument("--variant", default="canonical")
    sig.add_argument("--m", type=int)
    common(sub.add_parser("scenarios", help="write the built-in scenarios as JSON files"), scenario=False)
    return parser


def run_subcommand(name: str, argv: list) -> int:
    return main([name] + list(argv))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](args, out)
    except CliFailure as exc:
        code = exc.code
        record = {"command": args.command, "error": exc.kind, "message": str(exc), "fields": exc.fields}
    except Exception as exc:  # noqa: BLE001 - every failure must leave a record
        code = EXIT_ERROR
        record = {"command": args.command, "error": type(exc).__name__, "message": str(exc), "fields": []}
    write_json(out / "error.json", record)
    print(json.dumps(record), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
