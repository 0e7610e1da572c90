"""The two equivalence experiments: trial runners, aggregation and output."""
from __future__ import annotations

import configparser
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .bridge import canonical_start, preint_from_propagation, prop_by_preint
from .imu_model import NAV, NoiseParams
from .preintegration import Convention, preintegrate
from .propagation import propagate
from .synth import TrialSpec, add_noise, generate

PREINT_BY_PROP = "preint_by_prop"
PROP_BY_PREINT = "prop_by_preint"
EXPERIMENTS = (PREINT_BY_PROP, PROP_BY_PREINT)
REL_FLOOR = 1e-4


@dataclass(frozen=True)
class DiffMatrix:
    values: np.ndarray
    quantity: str
    convention: str
    trials: int

    def __post_init__(self):
        if np.any(self.values < 0.0):
            raise ValueError("difference entries must be non-negative")

    @property
    def max(self) -> float:
        return float(np.max(self.values)) if self.values.size else 0.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if self.values.size else 0.0


def entrywise_diff(reference, estimate) -> np.ndarray:
    """Relative difference where ``|reference| > 1e-4``, absolute elsewhere."""
    r = np.asarray(reference, dtype=float)
    e = np.asarray(estimate, dtype=float)
    if r.shape != e.shape:
        raise ValueError(f"shape mismatch {r.shape} vs {e.shape}")
    d = np.abs(r - e)
    big = np.abs(r) > REL_FLOOR
    return np.where(big, d / np.where(big, np.abs(r), 1.0), d)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    trials: int = 100
    rate: float = 200.0
    duration: float = 10.0
    conventions: tuple[str, ...] = ("tangent", "manifold")
    threshold: float = 1e-4
    gyro_range: float = 1.0
    accel_range: float = 5.0
    measurement_noise: bool = False
    workers: int = 1
    per_trial: bool = False
    sigma_g: float = NoiseParams.sigma_g
    sigma_a: float = NoiseParams.sigma_a
    sigma_wg: float = NoiseParams.sigma_wg
    sigma_wa: float = NoiseParams.sigma_wa
    init_sigma_theta: float = 0.01
    init_sigma_p: float = 0.1
    init_sigma_v: float = 0.05
    init_sigma_bg: float = 0.001
    init_sigma_ba: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "conventions", tuple(Convention(c).value for c in self.conventions))
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @property
    def noise(self) -> NoiseParams:
        return NoiseParams(self.sigma_g, self.sigma_a, self.sigma_wg, self.sigma_wa)

    def initial_cov(self) -> np.ndarray:
        s = np.repeat(
            [self.init_sigma_theta, self.init_sigma_p, self.init_sigma_v, self.init_sigma_bg, self.init_sigma_ba], 3
        )
        return np.diag(s * s)

    def trial_spec(self, index: int) -> TrialSpec:
        return TrialSpec(
            seed=self.seed + index,
            rate=self.rate,
            duration=self.duration,
            gyro_range=self.gyro_range,
            accel_range=self.accel_range,
            noise=self.noise,
        )

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def describe(self) -> list[str]:
        return [f"{f.name} = {_fmt(getattr(self, f.name))}" for f in fields(self)]


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(name: str, raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(x.strip() for x in raw.split(",") if x.strip())
    return raw


def load_config(path: str | Path | None = None, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read ``key = value`` pairs from any section of an INI file over ``base``."""
    cfg = ExperimentConfig() if base is None else base
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    known = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    updates = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in known:
                raise ValueError(f"{path}: unknown key {key!r} in [{section}]")
            updates[key] = _parse(key, raw, known[key])
    return replace(cfg, **updates)


# ---------------------------------------------------------------- trials


def _trial_inputs(cfg: ExperimentConfig, index: int):
    spec = cfg.trial_spec(index)
    seq, x0, b0 = generate(spec)
    if cfg.measurement_noise:
        seq = add_noise(seq, spec.noise, spec.seed)
    return seq, x0, b0


def preint_by_prop_trial(cfg: ExperimentConfig, index: int) -> dict[tuple[str, str], np.ndarray]:
    """Entrywise diffs of bridge-derived against direct preintegration for one trial."""
    seq, _, b0 = _trial_inputs(cfg, index)
    noise = cfg.noise
    res = propagate(canonical_start(b0), np.zeros((15, 15)), seq, noise.without_gravity())
    dt_total = seq[-1].t - seq[0].t
    out = {}
    for conv in cfg.conventions:
        ref = preintegrate(b0, seq, noise, conv)
        est = preint_from_propagation(res, b0, dt_total, noise, conv)
        out[(conv, "J_b")] = entrywise_diff(ref.J_b[NAV], est.J_b[NAV])
        out[(conv, "Sigma")] = entrywise_diff(ref.cov, est.cov)
    return out


def prop_by_preint_trial(cfg: ExperimentConfig, index: int) -> dict[tuple[str, str], np.ndarray]:
    """Entrywise diffs of recovered against RK4-propagated transition and covariance."""
    seq, x0, b0 = _trial_inputs(cfg, index)
    noise = cfg.noise
    cov0 = cfg.initial_cov()
    ref = propagate(x0, cov0, seq, noise)
    out = {}
    for conv in cfg.conventions:
        pm = preintegrate(b0, seq, noise, conv)
        est = prop_by_preint(x0, cov0, pm, noise)
        out[(conv, "Phi")] = entrywise_diff(ref.phi, est.phi)
        out[(conv, "Sigma")] = entrywise_diff(ref.cov, est.cov)
    return out


_RUNNERS = {PREINT_BY_PROP: preint_by_prop_trial, PROP_BY_PREINT: prop_by_preint_trial}


def _run_one(args):
    experiment, cfg, index = args
    return _RUNNERS[experiment](cfg, index)


@dataclass
class ExperimentResult:
    experiment: str
    config: ExperimentConfig
    means: dict[tuple[str, str], DiffMatrix]
    per_trial: list[dict[tuple[str, str], np.ndarray]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(m.max <= self.config.threshold for m in self.means.values())


def run_experiment(experiment: str, cfg: ExperimentConfig) -> ExperimentResult:
    """Run all trials and average them in trial order.

    Worker processes only change where trials run; the reduction order is
    fixed, so outputs are identical for any ``workers``.
    """
    if experiment not in _RUNNERS:
        raise ValueError(f"unknown experiment {experiment!r}")
    jobs = [(experiment, cfg, i) for i in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            trials = list(pool.map(_run_one, jobs))
    else:
        trials = [_run_one(j) for j in jobs]
    sums: dict[tuple[str, str], np.ndarray] = {}
    for tr in trials:
        for key, d in tr.items():
            sums[key] = sums[key] + d if key in sums else d.copy()
    means = {
        key: DiffMatrix(total / cfg.trials, key[1], key[0], cfg.trials) for key, total in sums.items()
    }
    return ExperimentResult(experiment, cfg, means, trials if cfg.per_trial else [])


# ---------------------------------------------------------------- output


def write_matrix_csv(path: str | Path, m: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        for row in np.atleast_2d(m):
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def read_matrix_csv(path: str | Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def output_name(experiment: str, convention: str, quantity: str, trial: int | None = None) -> str:
    stem = f"{experiment}_{convention}_{quantity}"
    return f"{stem}_trial{trial:04d}.csv" if trial is not None else f"{stem}.csv"


def write_outputs(result: ExperimentResult, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for (conv, qty), dm in result.means.items():
        p = out / output_name(result.experiment, conv, qty)
        write_matrix_csv(p, dm.values)
        written.append(p)
    for i, tr in enumerate(result.per_trial):
        for (conv, qty), d in tr.items():
            p = out / output_name(result.experiment, conv, qty, i)
            write_matrix_csv(p, d)
            written.append(p)
    rep = out / f"{result.experiment}_report.txt"
    rep.write_text(format_report(result))
    written.append(rep)
    return written


def format_report(result: ExperimentResult) -> str:
    cfg = result.config
    lines = [f"experiment = {result.experiment}"]
    lines += cfg.describe()
    lines.append("")
    lines.append(f"{'convention':<10} {'quantity':<8} {'mean':>12} {'max':>12}  status")
    for (conv, qty), dm in result.means.items():
        status = "PASS" if dm.max <= cfg.threshold else "FAIL"
        lines.append(f"{conv:<10} {qty:<8} {dm.mean:12.4e} {dm.max:12.4e}  {status}")
    lines.append("")
    lines.append(f"overall = {'PASS' if result.passed else 'FAIL'}")
    return "\n".join(lines) + "\n"


def summary_rows(result: ExperimentResult) -> Iterable[tuple[str, str, float, float]]:
    for (conv, qty), dm in result.means.items():
        yield conv, qty, dm.mean, dm.max

