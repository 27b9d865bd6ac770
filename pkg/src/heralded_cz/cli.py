"""Command-line entry point.

Subcommands: simulate, herald, sweep, optimize, pt-check, dress-check.
Exit status 0 on success, 2 on validation errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, code_version, config_hash, format_config, load_config
from .errors import ConfigError, HeraldStarvedError, IntegrationError, NoHeraldError, UndefinedPhaseError
from .gate import (
    dressing_phase,
    error_branch_fidelity,
    evaluate,
    pt_check,
    readout_adjusted,
)
from .model import REGISTER_STATES, SystemConfig, basis_report, build_block
from .optimizer import CostSpec, optimize
from .propagator import IntegratorSettings, evolve, trajectory
from .report import dumps, herald_report
from .sweep import AXIS_KINDS, SweepAxis, SweepSpec, calibrated_eta, run_sweep
from .waveform import PulsePair

log = logging.getLogger("heralded_cz")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
TWO_PI = 2 * math.pi
THREADS_ENV = "HERALDED_CZ_THREADS"

# axis kinds whose values are frequencies given in 2π×MHz on the command line
_FREQ_AXES = ("detuning_offset", "blockade", "blockade_b0", "blockade_b1")


def _float_or_inf(text: str) -> float:
    if text.strip().lower() in ("inf", "infinite"):
        return math.inf
    return float(text)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _load(args) -> RunConfig:
    rc = load_config(args.config)
    sysc = rc.system
    changes = {}
    if getattr(args, "B0", None) is not None:
        changes["B0"] = TWO_PI * args.B0
    if getattr(args, "B1", None) is not None:
        changes["B1"] = TWO_PI * args.B1
    if getattr(args, "layout", None):
        changes["layout"] = args.layout
    if getattr(args, "mode", None):
        changes["mode"] = args.mode
    if changes:
        rc = rc.replace(system=sysc.replace(**changes))
    if getattr(args, "method", None):
        st = rc.settings
        rc = rc.replace(settings=IntegratorSettings(args.method, st.rtol, st.atol, st.max_step, args.steps or st.steps))
    if getattr(args, "eta", None) is not None:
        eta = args.eta
        rc = rc.replace(eta=eta if eta in ("auto", "calibrated") else float(eta))
    if getattr(args, "compensate", None):
        rc = rc.replace(compensate=True)
    return rc


def _eta_for(rc: RunConfig):
    if rc.eta == "calibrated":
        return calibrated_eta(rc.system, rc.settings)
    return rc.eta


def _out_dir(args, rc: RunConfig) -> Path:
    return Path(args.out) if getattr(args, "out", None) else Path(rc.output_dir)


def cmd_simulate(args) -> int:
    rc = _load(args)
    out = _out_dir(args, rc)
    h = config_hash(rc)
    for rail in (0, 1):
        for q in REGISTER_STATES:
            block = build_block(rc.system, q, rail)
            t0, t1 = block.window
            times = np.linspace(t0, t1, args.points)
            psi0 = np.zeros(block.dim, dtype=complex)
            psi0[0] = 1.0
            states = trajectory(block, psi0, times, rc.settings)
            labels = ["".join(lab) for lab in block.basis.labels]
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["t"] + [f"pop_{lab}" for lab in labels] + [f"phase_{lab}" for lab in labels])
            for t, psi in zip(times, states):
                row = [t] + list(np.abs(psi) ** 2) + list(np.angle(psi))
                w.writerow([f"{float(v):.11e}" for v in row])
            _write(out / f"trajectory_rail{rail}_q{q}.csv", buf.getvalue())
    _write(out / "basis.json", dumps({"config_hash": h, "basis": basis_report(rc.system)}))
    print(f"wrote trajectories to {out}")
    return EXIT_OK


def cmd_herald(args) -> int:
    rc = _load(args)
    hr = evaluate(rc.system, _eta_for(rc), (), rc.settings, rc.compensate)
    f_err = error_branch_fidelity(hr)
    extra = {
        "config_hash": config_hash(rc),
        "version": code_version(),
        "F_error_branch": f_err,
        "F_readout_adjusted": readout_adjusted(hr.F_herald, hr.p_herald, f_err, rc.readout),
        "err_raw": 1 - hr.F_raw,
        "err_herald": 1 - hr.F_herald,
    }
    text = dumps(herald_report(hr, **extra))
    if args.out:
        _write(Path(args.out), text)
    sys.stdout.write(text)
    return EXIT_OK


def _axis(kind, lo, hi, points, spacing, target) -> SweepAxis:
    scale = TWO_PI if kind in _FREQ_AXES else 1.0
    return SweepAxis(kind, scale * lo, scale * hi, points, spacing, target)


def cmd_sweep(args) -> int:
    rc = _load(args)
    axes = [_axis(args.param, args.min, args.max, args.points, args.spacing, args.target)]
    if args.param2:
        if args.min2 is None or args.max2 is None:
            raise ConfigError("--param2 needs --min2 and --max2")
        axes.append(_axis(args.param2, args.min2, args.max2, args.points2, args.spacing2, args.target2))
    workers = int(os.environ.get(THREADS_ENV, "1"))
    spec = SweepSpec(rc.system, tuple(axes), rc.eta, rc.compensate, rc.settings, workers)
    table = run_sweep(spec)
    out = Path(args.out)
    _write(out, table.to_csv())
    meta = {
        "config_hash": config_hash(rc),
        "version": code_version(),
        "integrator": {
            "method": rc.settings.method,
            "rtol": rc.settings.rtol,
            "atol": rc.settings.atol,
            "max_step": rc.settings.max_step,
            "steps": rc.settings.steps,
        },
        "axes": [
            {"kind": a.kind, "target": a.target, "min": a.min, "max": a.max, "points": a.points, "spacing": a.spacing}
            for a in axes
        ],
        "eta": rc.eta,
        "compensate": rc.compensate,
        "rows": len(table),
        "units": "frequencies in rad/us",
    }
    _write(out.with_suffix(".json"), dumps(meta))
    print(f"wrote {len(table)} rows to {out}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    rc = _load(args)
    spec = CostSpec(
        base=rc.system,
        n_harmonics=args.harmonics,
        w_fid=args.w_fid,
        w_leak=args.w_leak,
        w_power=args.w_power,
        power_cap=TWO_PI * args.power_cap if args.power_cap is not None else math.inf,
        compensation=args.compensation,
        settings=IntegratorSettings("magnus4", steps=args.steps_opt),
    )
    initial = None
    if args.warm_start:
        initial = {}
        for name, pulse in (("buffer_rabi", rc.system.buffer_pulse.rabi), ("buffer_detuning", rc.system.buffer_pulse.detuning), ("qubit_rabi", rc.system.qubit_pulse.rabi)):
            c = list(pulse.coeffs)[: args.harmonics + 1]
            initial[name] = c + [0.0] * (args.harmonics + 1 - len(c))
    res = optimize(spec, seed=args.seed, max_evals=args.evals, initial=initial, restart_evals=args.restart_evals)
    found = res.config(rc.system)
    # found waveforms realize CZ up to local flips, so herald with compensation
    out_rc = rc.replace(system=found, eta="calibrated", compensate=True)
    _write(Path(args.out_config), format_config(out_rc))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["evaluation", "best_cost"])
    for n, c in res.history:
        w.writerow([n, f"{c:.11e}"])
    _write(Path(args.out_history), buf.getvalue())
    summary = {
        "best_cost": res.cost,
        "evaluations": res.evaluations,
        "restarts": res.restarts,
        "seed": res.seed,
        "config_hash": config_hash(out_rc),
        "version": code_version(),
        "coeffs": res.coeffs,
    }
    sys.stdout.write(dumps(summary))
    return EXIT_OK


def cmd_pt_check(args) -> int:
    rc = _load(args)
    report = pt_check(rc.system, rc.settings)
    report["config_hash"] = config_hash(rc)
    report["version"] = code_version()
    text = dumps(report)
    if args.out:
        _write(Path(args.out), text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_dress_check(args) -> int:
    """Omega/delta in rad/us, time in us."""
    amp = dressing_phase(args.omega, args.delta, args.time)
    out = {"amplitude": amp, "phase": float(np.angle(amp)), "population": abs(amp) ** 2}
    if args.integrate:
        cfg = SystemConfig(
            PulsePair.from_coeffs([args.omega / TWO_PI], [args.delta / TWO_PI], tau=args.time),
            PulsePair.from_coeffs([0.0], tau=args.time),
            B0=math.inf,
            B1=math.inf,
        )
        block = build_block(cfg, "00", 1)
        settings = IntegratorSettings(max_step=args.time / 100)
        out["amplitude_integrated"] = complex(evolve(block, [1.0, 0.0], None, settings)[0])
    sys.stdout.write(dumps(out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heralded-cz", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help="output path"):
        sp.add_argument("--config", required=True, help="config file or bundled name (fig2, fig4)")
        sp.add_argument("--B0", type=_float_or_inf, help="blockade B0 in 2pi x MHz (or inf)")
        sp.add_argument("--B1", type=_float_or_inf, help="blockade B1 in 2pi x MHz (or inf)")
        sp.add_argument("--layout", choices=["chain_no_qq", "all_blockade_ideal"])
        sp.add_argument("--mode", choices=["simultaneous", "sequential"])
        sp.add_argument("--method", choices=["dop853", "rk4", "magnus4"])
        sp.add_argument("--steps", type=int)
        sp.add_argument("--eta", help="radians, 'auto' or 'calibrated'")
        sp.add_argument("--compensate", action="store_true", help="apply local phase compensation")
        sp.add_argument("--out", help=out_help)

    sp = sub.add_parser("simulate", help="trajectory CSV per rail and block")
    common(sp, "output directory")
    sp.add_argument("--points", type=int, default=201)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("herald", help="heralded gate metrics as JSON")
    common(sp)
    sp.set_defaults(func=cmd_herald)

    sp = sub.add_parser("sweep", help="perturbation sweep to CSV")
    common(sp, "CSV path (metadata goes next to it as .json)")
    sp.set_defaults(out="sweep.csv")
    for suffix in ("", "2"):
        sp.add_argument(f"--param{suffix}", required=(suffix == ""), choices=list(AXIS_KINDS))
        sp.add_argument(f"--min{suffix}", type=float, required=(suffix == ""))
        sp.add_argument(f"--max{suffix}", type=float, required=(suffix == ""))
        sp.add_argument(f"--points{suffix}", type=int, default=21)
        sp.add_argument(f"--spacing{suffix}", choices=["linear", "log"], default="linear")
        sp.add_argument(f"--target{suffix}", choices=["buffer", "qubits", "both"], default="both")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("optimize", help="waveform search")
    common(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--evals", type=int, default=20000)
    sp.add_argument("--restart-evals", type=int, default=4000)
    sp.add_argument("--harmonics", type=int, default=8)
    sp.add_argument("--w-fid", type=float, default=1.0)
    sp.add_argument("--w-leak", type=float, default=0.0)
    sp.add_argument("--w-power", type=float, default=0.0)
    sp.add_argument("--power-cap", type=float, help="peak Rabi cap in 2pi x MHz")
    sp.add_argument("--compensation", choices=["flips", "continuous", "none"], default="flips")
    sp.add_argument("--steps-opt", type=int, default=1000, help="Magnus steps per cost evaluation")
    sp.add_argument("--warm-start", action=argparse.BooleanOptionalAction, default=True)
    sp.add_argument("--out-config", default="optimized.toml")
    sp.add_argument("--out-history", default="history.csv")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("pt-check", help="CZ diagnostics for both detuning orientations")
    common(sp)
    sp.set_defaults(func=cmd_pt_check)

    sp = sub.add_parser("dress-check", help="dressing-patch return amplitude")
    sp.add_argument("--omega", type=float, required=True, help="rad/us")
    sp.add_argument("--delta", type=float, required=True, help="rad/us")
    sp.add_argument("--time", type=float, required=True, help="us")
    sp.add_argument("--integrate", action="store_true", help="cross-check by numerical integration")
    sp.set_defaults(func=cmd_dress_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (IntegrationError, HeraldStarvedError, NoHeraldError, UndefinedPhaseError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
