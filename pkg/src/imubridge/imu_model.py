"""IMU state, measurement and error-state types plus their dynamics.

Error-state vectors are always ordered ``[dtheta, dp, dv, dbg, dba]`` (15
entries) and noise vectors ``[n_g, n_a, n_wg, n_wa]`` (12 entries).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import so3

TH = slice(0, 3)
P = slice(3, 6)
V = slice(6, 9)
BG = slice(9, 12)
BA = slice(12, 15)
NAV = slice(0, 9)
BIAS = slice(9, 15)

DEFAULT_GRAVITY = (0.0, 0.0, -9.80665)


def _vec3(x) -> np.ndarray:
    a = np.asarray(x, dtype=float).reshape(3)
    return a


@dataclass(frozen=True)
class ImuSample:
    t: float
    gyro: np.ndarray
    accel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "gyro", _vec3(self.gyro))
        object.__setattr__(self, "accel", _vec3(self.accel))


@dataclass(frozen=True)
class ImuBias:
    bg: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ba: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "bg", _vec3(self.bg))
        object.__setattr__(self, "ba", _vec3(self.ba))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.bg, self.ba])

    @classmethod
    def from_vector(cls, b) -> "ImuBias":
        b = np.asarray(b, dtype=float)
        return cls(b[:3], b[3:6])

    def __add__(self, other: "ImuBias") -> "ImuBias":
        return ImuBias(self.bg + other.bg, self.ba + other.ba)

    def __sub__(self, other: "ImuBias") -> "ImuBias":
        return ImuBias(self.bg - other.bg, self.ba - other.ba)


@dataclass(frozen=True)
class NavState:
    """Orientation (world-from-sensor), position and velocity in the world frame."""

    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float).reshape(3, 3))
        object.__setattr__(self, "p", _vec3(self.p))
        object.__setattr__(self, "v", _vec3(self.v))


@dataclass(frozen=True)
class FullState:
    nav: NavState = field(default_factory=NavState)
    bias: ImuBias = field(default_factory=ImuBias)

    @property
    def R(self) -> np.ndarray:
        return self.nav.R

    @property
    def p(self) -> np.ndarray:
        return self.nav.p

    @property
    def v(self) -> np.ndarray:
        return self.nav.v

    @classmethod
    def make(cls, R=None, p=None, v=None, bg=None, ba=None) -> "FullState":
        z = np.zeros(3)
        return cls(
            NavState(np.eye(3) if R is None else R, z if p is None else p, z if v is None else v),
            ImuBias(z if bg is None else bg, z if ba is None else ba),
        )


@dataclass(frozen=True)
class NoiseParams:
    """Continuous-time noise densities and the world-frame gravity vector.

    sigma_g [rad/s/sqrt(Hz)], sigma_a [m/s^2/sqrt(Hz)],
    sigma_wg [rad/s^2/sqrt(Hz)], sigma_wa [m/s^3/sqrt(Hz)].
    """

    sigma_g: float = 1.6968e-4
    sigma_a: float = 2.0e-3
    sigma_wg: float = 1.9393e-5
    sigma_wa: float = 3.0e-3
    gravity: tuple[float, float, float] = DEFAULT_GRAVITY

    def __post_init__(self):
        for name in ("sigma_g", "sigma_a", "sigma_wg", "sigma_wa"):
            val = getattr(self, name)
            if not np.isfinite(val) or val < 0.0:
                raise ValueError(f"{name} must be finite and non-negative, got {val}")
        object.__setattr__(self, "gravity", tuple(float(g) for g in self.gravity))

    @property
    def g(self) -> np.ndarray:
        return np.array(self.gravity)

    def Q(self) -> np.ndarray:
        """12x12 power spectral density of ``[n_g, n_a, n_wg, n_wa]``."""
        d = np.repeat([self.sigma_g, self.sigma_a, self.sigma_wg, self.sigma_wa], 3)
        return np.diag(d * d)

    def without_gravity(self) -> "NoiseParams":
        return replace(self, gravity=(0.0, 0.0, 0.0))

    def scaled(self, s: float) -> "NoiseParams":
        return replace(
            self,
            sigma_g=s * self.sigma_g,
            sigma_a=s * self.sigma_a,
            sigma_wg=s * self.sigma_wg,
            sigma_wa=s * self.sigma_wa,
        )


class StateDerivative(NamedTuple):
    p: np.ndarray
    R: np.ndarray
    v: np.ndarray
    bg: np.ndarray
    ba: np.ndarray


def correct(sample: ImuSample, bias: ImuBias) -> tuple[np.ndarray, np.ndarray]:
    """Bias-corrected angular rate and specific force."""
    return sample.gyro - bias.bg, sample.accel - bias.ba


def state_derivative(x: FullState, sample: ImuSample, noise: NoiseParams) -> StateDerivative:
    """Noise-free strapdown kinematics without Earth rotation."""
    omega, a = correct(sample, x.bias)
    R = x.R
    zero = np.zeros(3)
    return StateDerivative(x.v.copy(), R @ so3.skew(omega), noise.g + R @ a, zero, zero.copy())


def error_dynamics(x: FullState, sample: ImuSample) -> tuple[np.ndarray, np.ndarray]:
    """Left error-state Jacobians ``F`` (15x15) and noise input ``G`` (15x12).

    Perturbation is ``R = Exp(dtheta) R_hat`` with additive p, v and biases.
    """
    _, a = correct(sample, x.bias)
    return left_error_matrices(x.R, a)


def left_error_matrices(R: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    F = np.zeros((15, 15))
    F[TH, BG] = -R
    F[P, V] = np.eye(3)
    F[V, TH] = -so3.skew(R @ a)
    F[V, BA] = -R
    return F, left_noise_matrix(R)


def left_noise_matrix(R: np.ndarray) -> np.ndarray:
    G = np.zeros((15, 12))
    G[TH, 0:3] = -R
    G[V, 3:6] = -R
    G[BG, 6:9] = np.eye(3)
    G[BA, 9:12] = np.eye(3)
    return G


def boxplus_left(x: FullState, dx) -> FullState:
    dx = np.asarray(dx, dtype=float)
    return FullState(
        NavState(so3.exp(dx[TH]) @ x.R, x.p + dx[P], x.v + dx[V]),
        ImuBias(x.bias.bg + dx[BG], x.bias.ba + dx[BA]),
    )


def boxminus_left(x: FullState, x_hat: FullState) -> np.ndarray:
    """``dx`` with ``boxplus_left(x_hat, dx) == x``."""
    return np.concatenate(
        [
            so3.log(x.R @ x_hat.R.T),
            x.p - x_hat.p,
            x.v - x_hat.v,
            x.bias.bg - x_hat.bias.bg,
            x.bias.ba - x_hat.bias.ba,
        ]
    )


def boxplus_navstate_right(x: FullState, dx) -> FullState:
    """Right perturbation of the NavState retraction.

    Position and velocity offsets are rotated by the already-retracted
    orientation.
    """
    dx = np.asarray(dx, dtype=float)
    R = x.R @ so3.exp(dx[TH])
    return FullState(
        NavState(R, x.p + R @ dx[P], x.v + R @ dx[V]),
        ImuBias(x.bias.bg + dx[BG], x.bias.ba + dx[BA]),
    )


def boxminus_navstate_right(x: FullState, x_hat: FullState) -> np.ndarray:
    return np.concatenate(
        [
            so3.log(x_hat.R.T @ x.R),
            x.R.T @ (x.p - x_hat.p),
            x.R.T @ (x.v - x_hat.v),
            x.bias.bg - x_hat.bias.bg,
            x.bias.ba - x_hat.bias.ba,
        ]
    )
