"""Seeded random IMU sequences and start states for the equivalence trials."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import so3
from .imu_model import FullState, ImuBias, ImuSample, NavState, NoiseParams
from .propagation import stack_samples

GRAVITY_REACTION = np.array([0.0, 0.0, 9.80665])
CSV_HEADER = ["t", "gx", "gy", "gz", "ax", "ay", "az"]


@dataclass(frozen=True)
class TrialSpec:
    """Random-trial settings.

    Gyro and accel are drawn uniformly in ``[-range, range]`` per axis at
    ``knot_interval`` spacing, held, then smoothed with a boxcar of
    ``smooth_window`` seconds.  Accel additionally carries the gravity
    reaction.
    """

    seed: int = 0
    rate: float = 200.0
    duration: float = 10.0
    gyro_range: float = 1.0
    accel_range: float = 5.0
    noise: NoiseParams = field(default_factory=NoiseParams)
    knot_interval: float = 0.1
    smooth_window: float = 0.1
    p_sigma: float = 1.0
    v_sigma: float = 1.0
    bg_sigma: float = 0.01
    ba_sigma: float = 0.1

    def __post_init__(self):
        if not self.rate > 0.0:
            raise ValueError("rate must be positive")
        if not self.duration >= 0.0:
            raise ValueError("duration must be non-negative")
        if self.gyro_range < 0.0 or self.accel_range < 0.0:
            raise ValueError("ranges must be non-negative")

    @property
    def n_samples(self) -> int:
        return int(round(self.rate * self.duration)) + 1


def _smooth_channel(rng: np.random.Generator, n: int, rate: float, knot: float, window: float, lim: float) -> np.ndarray:
    """Held uniform knots filtered by a centered moving average; stays in [-lim, lim]."""
    per_knot = max(1, int(round(knot * rate)))
    width = max(1, int(round(window * rate)))
    pad = width
    total = n + 2 * pad
    knots = rng.uniform(-lim, lim, size=(total // per_knot + 2, 3))
    raw = np.repeat(knots, per_knot, axis=0)[:total]
    kernel = np.full(width, 1.0 / width)
    out = np.stack([np.convolve(raw[:, i], kernel, mode="same") for i in range(3)], axis=1)
    return np.clip(out[pad : pad + n], -lim, lim)


def uniform_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform rotation from a normalized Gaussian quaternion."""
    q = rng.normal(size=4)
    return so3.quat_to_rot(q / np.linalg.norm(q))


def generate(spec: TrialSpec) -> tuple[list[ImuSample], FullState, ImuBias]:
    rng = np.random.default_rng(spec.seed)
    n = spec.n_samples
    gyro = _smooth_channel(rng, n, spec.rate, spec.knot_interval, spec.smooth_window, spec.gyro_range)
    accel = _smooth_channel(rng, n, spec.rate, spec.knot_interval, spec.smooth_window, spec.accel_range)
    accel = accel + GRAVITY_REACTION
    step = 1.0 / spec.rate
    seq = [ImuSample(k * step, gyro[k], accel[k]) for k in range(n)]
    b0 = ImuBias(rng.normal(0.0, spec.bg_sigma, 3), rng.normal(0.0, spec.ba_sigma, 3))
    R0 = uniform_rotation(rng)
    nav = NavState(R0, rng.normal(0.0, spec.p_sigma, 3), rng.normal(0.0, spec.v_sigma, 3))
    return seq, FullState(nav, b0), b0


def add_noise(seq: Sequence[ImuSample], noise: NoiseParams, seed: int) -> list[ImuSample]:
    """White measurement noise with per-sample std ``sigma / sqrt(dt)``.

    ``dt`` is the interval to the next sample (the last sample reuses the
    previous interval).
    """
    t, gyro, accel = stack_samples(seq, min_len=1)
    if len(t) == 1:
        return list(seq)
    dt = np.diff(t)
    dt = np.append(dt, dt[-1])[:, None]
    rng = np.random.default_rng(seed)
    ng = rng.standard_normal(gyro.shape) * (noise.sigma_g / np.sqrt(dt))
    na = rng.standard_normal(accel.shape) * (noise.sigma_a / np.sqrt(dt))
    return [ImuSample(t[k], gyro[k] + ng[k], accel[k] + na[k]) for k in range(len(t))]


def write_csv(path: str | Path, seq: Sequence[ImuSample]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for z in seq:
            w.writerow(["%.17g" % v for v in (z.t, *z.gyro, *z.accel)])


def read_csv(path: str | Path) -> list[ImuSample]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != CSV_HEADER:
        raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
    seq = []
    for row in rows[1:]:
        if not row:
            continue
        vals = [float(x) for x in row]
        seq.append(ImuSample(vals[0], vals[1:4], vals[4:7]))
    return seq
