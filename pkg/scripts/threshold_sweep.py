"""Worst mean entrywise difference as a function of trial duration.

    python3 scripts/threshold_sweep.py --trials 10 --durations 1 2 5 10
"""
import argparse
import sys

from imubridge.experiments import PREINT_BY_PROP, PROP_BY_PREINT, ExperimentConfig, run_experiment


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--durations", type=float, nargs="+", default=[1.0, 2.0, 5.0, 10.0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    print(f"{'experiment':<16}{'duration':>10}  {'convention':<11}{'quantity':<9}{'max':>12}{'mean':>12}")
    for experiment in (PREINT_BY_PROP, PROP_BY_PREINT):
        for duration in args.durations:
            cfg = ExperimentConfig(seed=args.seed, trials=args.trials, duration=duration)
            res = run_experiment(experiment, cfg)
            for (conv, qty), dm in res.means.items():
                print(f"{experiment:<16}{duration:>10g}  {conv:<11}{qty:<9}{dm.max:>12.3e}{dm.mean:>12.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
