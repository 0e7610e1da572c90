"""RK4 state propagation with left error-state transition matrix and covariance."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import so3
from .errors import InvalidSequenceError
from .imu_model import (
    FullState,
    ImuBias,
    ImuSample,
    NavState,
    NoiseParams,
    error_dynamics,
    left_error_matrices,
)

_I3 = np.eye(3)
_I15 = np.eye(15)


@dataclass(frozen=True)
class PropagationResult:
    state: FullState
    phi: np.ndarray
    cov: np.ndarray


def stack_samples(seq: Sequence[ImuSample], min_len: int = 1):
    """Timestamps and measurement arrays of a validated sample sequence."""
    if len(seq) < min_len:
        raise InvalidSequenceError(f"need at least {min_len} samples, got {len(seq)}")
    t = np.array([z.t for z in seq], dtype=float)
    gyro = np.array([z.gyro for z in seq], dtype=float).reshape(-1, 3)
    accel = np.array([z.accel for z in seq], dtype=float).reshape(-1, 3)
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(gyro)) and np.all(np.isfinite(accel))):
        raise InvalidSequenceError("non-finite IMU sample")
    if np.any(np.diff(t) <= 0.0):
        raise InvalidSequenceError("timestamps must be strictly increasing")
    return t, gyro, accel


def _rk4(R, p, v, w0, a0, w1, a1, wm, am, g, dt):
    """One classical RK4 step of (p, R, v) with inputs at start, middle and end."""

    def f(R_, v_, w, a):
        return v_, R_ @ so3.skew(w), g + R_ @ a

    h = 0.5 * dt
    dp1, dR1, dv1 = f(R, v, w0, a0)
    dp2, dR2, dv2 = f(R + h * dR1, v + h * dv1, wm, am)
    dp3, dR3, dv3 = f(R + h * dR2, v + h * dv2, wm, am)
    dp4, dR4, dv4 = f(R + dt * dR3, v + dt * dv3, w1, a1)
    s = dt / 6.0
    p_new = p + s * (dp1 + 2.0 * dp2 + 2.0 * dp3 + dp4)
    R_new = R + s * (dR1 + 2.0 * dR2 + 2.0 * dR3 + dR4)
    v_new = v + s * (dv1 + 2.0 * dv2 + 2.0 * dv3 + dv4)
    return so3.nearest_rotation(R_new), p_new, v_new


def _inputs(z_prev: ImuSample, z_next: ImuSample, bias: ImuBias, interp: str):
    w0, a0 = z_prev.gyro - bias.bg, z_prev.accel - bias.ba
    if interp == "hold":
        return w0, a0, w0, a0, w0, a0
    if interp == "linear":
        w1, a1 = z_next.gyro - bias.bg, z_next.accel - bias.ba
        return w0, a0, w1, a1, 0.5 * (w0 + w1), 0.5 * (a0 + a1)
    raise ValueError(f"unknown interpolation {interp!r}")


def _left_F(R, a):
    F = np.zeros((15, 15))
    F[0:3, 9:12] = -R
    F[3:6, 6:9] = _I3
    F[6:9, 0:3] = -so3.skew(R @ a)
    F[6:9, 12:15] = -R
    return F


def rk4_step(
    x: FullState,
    z_prev: ImuSample,
    z_next: ImuSample,
    noise: NoiseParams,
    interp: str = "hold",
) -> FullState:
    """Advance ``x`` from ``z_prev.t`` to ``z_next.t``.

    ``interp="hold"`` keeps ``z_prev`` constant over the interval (the scheme
    the preintegrator integrates exactly); ``"linear"`` interpolates between
    the two samples.
    """
    dt = z_next.t - z_prev.t
    if not dt > 0.0:
        raise InvalidSequenceError("timestamps must be strictly increasing")
    w0, a0, w1, a1, wm, am = _inputs(z_prev, z_next, x.bias, interp)
    R, p, v = _rk4(x.R, x.p, x.v, w0, a0, w1, a1, wm, am, noise.g, dt)
    return FullState(NavState(R, p, v), x.bias)


def transition_matrix(F: np.ndarray, dt: float) -> np.ndarray:
    """Second-order truncation of ``expm(F dt)``."""
    Fdt = F * dt
    return _I15 + Fdt + 0.5 * (Fdt @ Fdt)


def phi_step(x: FullState, sample: ImuSample, dt: float) -> np.ndarray:
    """Transition matrix over ``dt`` with ``F`` frozen at ``(x, sample)``."""
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    F, _ = error_dynamics(x, sample)
    return transition_matrix(F, dt)


def cov_step(cov, phi_k, G_prev, G_next, Q, dt) -> np.ndarray:
    """Trapezoidal discretization of the continuous noise integral."""
    A = phi_k @ G_prev
    out = phi_k @ cov @ phi_k.T + 0.5 * dt * (A @ Q @ A.T + G_next @ Q @ G_next.T)
    return 0.5 * (out + out.T)


def propagate(
    x_s: FullState,
    cov_s: np.ndarray,
    seq: Sequence[ImuSample],
    noise: NoiseParams,
    linearize: str = "mean",
    interp: str = "hold",
) -> PropagationResult:
    """Propagate state, transition matrix and covariance over ``seq``.

    The first sample only fixes the start time. ``linearize="mean"`` freezes
    ``F`` at the average of its values at the two ends of each step, which
    keeps the transition matrix second-order accurate; ``"start"`` uses the
    start-of-step value only.
    """
    if linearize not in ("mean", "start"):
        raise ValueError(f"unknown linearization {linearize!r}")
    t, gyro, accel = stack_samples(seq, min_len=1)
    bg, ba = x_s.bias.bg, x_s.bias.ba
    g = noise.g
    # isotropic densities: G Q G^T is the same for every orientation
    G = left_error_matrices(np.eye(3), np.zeros(3))[1]
    N = G @ noise.Q() @ G.T
    R, p, v = x_s.R, x_s.p, x_s.v
    phi = _I15.copy()
    cov = np.array(cov_s, dtype=float).reshape(15, 15)
    cov = 0.5 * (cov + cov.T)
    for k in range(1, len(t)):
        dt = t[k] - t[k - 1]
        w0, a0 = gyro[k - 1] - bg, accel[k - 1] - ba
        if interp == "hold":
            w1, a1, wm, am = w0, a0, w0, a0
        elif interp == "linear":
            w1, a1 = gyro[k] - bg, accel[k] - ba
            wm, am = 0.5 * (w0 + w1), 0.5 * (a0 + a1)
        else:
            raise ValueError(f"unknown interpolation {interp!r}")
        F = _left_F(R, a0)
        R, p, v = _rk4(R, p, v, w0, a0, w1, a1, wm, am, g, dt)
        if linearize == "mean":
            F = 0.5 * (F + _left_F(R, a1))
        phi_k = transition_matrix(F, dt)
        # cov_step with G_prev Q G_prev^T == G_next Q G_next^T == N
        half_noise = (0.5 * dt) * N
        cov = phi_k @ (cov + half_noise) @ phi_k.T + half_noise
        cov = 0.5 * (cov + cov.T)
        phi = phi_k @ phi
    return PropagationResult(FullState(NavState(R, p, v), x_s.bias), phi, cov)
