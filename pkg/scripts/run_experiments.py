"""Run the selftest and both equivalence experiments, writing CSVs and reports.

    python3 scripts/run_experiments.py --config configs/default.ini --out results
"""
import argparse
import sys
import time

from imubridge.experiments import PREINT_BY_PROP, PROP_BY_PREINT, format_report, load_config, run_experiment, write_outputs
from imubridge.selftest import main_selftest


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="INI file")
    ap.add_argument("--out", default="results")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--trials", type=int)
    ap.add_argument("--skip-selftest", action="store_true")
    args = ap.parse_args(argv)

    if not args.skip_selftest and main_selftest() != 0:
        return 1
    cfg = load_config(args.config).with_overrides(workers=args.workers, trials=args.trials)
    ok = True
    for experiment in (PREINT_BY_PROP, PROP_BY_PREINT):
        start = time.perf_counter()
        res = run_experiment(experiment, cfg)
        paths = write_outputs(res, args.out)
        print(format_report(res))
        print(f"{experiment}: {len(paths)} files in {args.out} ({time.perf_counter() - start:.1f} s)\n")
        ok &= res.passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
