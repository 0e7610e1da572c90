"""Command-line entry point.

Subcommands: ``selftest``, ``preint-by-prop``, ``prop-by-preint``,
``simulate``, ``preintegrate`` and ``propagate``.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .experiments import (
    PREINT_BY_PROP,
    PROP_BY_PREINT,
    DiffMatrix,
    ExperimentConfig,
    entrywise_diff,
    format_report,
    load_config,
    run_experiment,
    write_outputs,
)
from .imu_model import FullState, ImuBias, NoiseParams
from .preintegration import Convention, preintegrate
from .propagation import propagate
from .selftest import FAULTS, main_selftest
from .synth import TrialSpec, add_noise, generate, read_csv, write_csv

__all__ = ["DiffMatrix", "entrywise_diff", "main", "build_parser"]

CONVENTIONS = [c.value for c in Convention]


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI file with key = value settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--rate", type=float, help="sample rate [Hz]")
    p.add_argument("--duration", type=float, help="trial length [s]")
    p.add_argument("--convention", choices=CONVENTIONS, action="append", help="repeatable; default tangent and manifold")
    p.add_argument("--threshold", type=float, help="max allowed mean entrywise difference")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--per-trial", action="store_true", default=None, help="also write per-trial CSVs")
    p.add_argument("--workers", type=int, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imubridge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("selftest", help="fast invariant checks")
    p.add_argument("--inject-fault", choices=FAULTS, help="deliberately break the bridge to exercise the checks")

    for name, help_ in (
        ("preint-by-prop", "preintegration synthesized from propagation vs direct preintegration"),
        ("prop-by-preint", "propagation recovered from preintegration vs RK4 propagation"),
    ):
        _add_experiment_flags(sub.add_parser(name, help=help_))

    p = sub.add_parser("simulate", help="write a random IMU sequence as CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rate", type=float, default=200.0)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--noise", action="store_true", help="add white measurement noise")
    p.add_argument("--out", type=Path, required=True, help="CSV path")
    p.add_argument("--state-out", type=Path, help="JSON file for the start state and bias")

    p = sub.add_parser("preintegrate", help="preintegrate a CSV sequence")
    p.add_argument("input", type=Path)
    p.add_argument("--convention", choices=CONVENTIONS, default="tangent")
    p.add_argument("--bias", type=float, nargs=6, metavar="B", default=[0.0] * 6, help="bg then ba")
    p.add_argument("--out", type=Path, help="JSON output (stdout if omitted)")

    p = sub.add_parser("propagate", help="propagate a CSV sequence from a start state")
    p.add_argument("input", type=Path)
    p.add_argument("--state", type=Path, help="JSON start state as written by simulate")
    p.add_argument("--init-sigma", type=float, default=0.0, help="isotropic initial std")
    p.add_argument("--out", type=Path, help="JSON output (stdout if omitted)")
    return parser


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(
        seed=args.seed,
        trials=args.trials,
        rate=args.rate,
        duration=args.duration,
        conventions=tuple(args.convention) if args.convention else None,
        threshold=args.threshold,
        per_trial=args.per_trial,
        workers=args.workers,
    )


def _run_experiment(name: str, args) -> int:
    cfg = _experiment_config(args)
    result = run_experiment(name, cfg)
    write_outputs(result, args.out)
    sys.stdout.write(format_report(result))
    return 0 if result.passed else 1


def _state_to_json(x: FullState) -> dict:
    return {
        "R": x.R.tolist(),
        "p": x.p.tolist(),
        "v": x.v.tolist(),
        "bg": x.bias.bg.tolist(),
        "ba": x.bias.ba.tolist(),
    }


def _state_from_json(d: dict) -> FullState:
    return FullState.make(
        np.array(d["R"]), np.array(d["p"]), np.array(d["v"]), np.array(d["bg"]), np.array(d["ba"])
    )


def _emit(obj: dict, out: Path | None) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _simulate(args) -> int:
    spec = TrialSpec(seed=args.seed, rate=args.rate, duration=args.duration)
    seq, x0, _ = generate(spec)
    if args.noise:
        seq = add_noise(seq, spec.noise, spec.seed)
    write_csv(args.out, seq)
    if args.state_out is not None:
        _emit(_state_to_json(x0), args.state_out)
    print(f"wrote {len(seq)} samples to {args.out}")
    return 0


def _preintegrate(args) -> int:
    seq = read_csv(args.input)
    pm = preintegrate(ImuBias.from_vector(args.bias), seq, NoiseParams(), args.convention)
    _emit(
        {
            "convention": pm.convention.value,
            "dt": pm.dt_total,
            "dR": pm.dR.tolist(),
            "dp": pm.dp.tolist(),
            "dv": pm.dv.tolist(),
            "J_b": pm.J_b.tolist(),
            "cov": pm.cov.tolist(),
        },
        args.out,
    )
    return 0


def _propagate(args) -> int:
    seq = read_csv(args.input)
    x0 = FullState() if args.state is None else _state_from_json(json.loads(args.state.read_text()))
    res = propagate(x0, np.eye(15) * args.init_sigma**2, seq, NoiseParams())
    _emit({"state": _state_to_json(res.state), "phi": res.phi.tolist(), "cov": res.cov.tolist()}, args.out)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return main_selftest(args.inject_fault)
        if args.command == "preint-by-prop":
            return _run_experiment(PREINT_BY_PROP, args)
        if args.command == "prop-by-preint":
            return _run_experiment(PROP_BY_PREINT, args)
        if args.command == "simulate":
            return _simulate(args)
        if args.command == "preintegrate":
            return _preintegrate(args)
        return _propagate(args)
    except (ValueError, OSError) as exc:
        print(f"imubridge: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
