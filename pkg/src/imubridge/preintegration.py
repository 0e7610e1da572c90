"""Direct IMU preintegration with bias Jacobian and covariance.

Each sample is held constant over the interval to the next one and that
interval is integrated exactly, so the increments agree with an RK4
propagation of the same held inputs to RK4 accuracy.  The bias Jacobian and
the covariance come from differentiating this discrete recursion.

Three right perturbations of the increment are supported, all with the bias
part entering as ``Delta_b = Delta_b_hat - delta_b``:

* ``TANGENT``:  ``dR = dR_hat Exp(dth)``, ``dp = dp_hat + dp'``, ``dv = dv_hat + dv'``
* ``MANIFOLD``: ``dR = dR_hat Exp(dth)``, ``dp = dp_hat + dR dp'``, ``dv = dv_hat + dR dv'``
* ``FORSTER``:  ``dR = dR_hat Exp(-dth)``, ``dp = dp_hat - dp'``, ``dv = dv_hat - dv'``

The start-bias perturbation of the preintegrated quantities is
``b = b_hat - delta_b`` for all three, see :func:`bias_perturbation_map`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import so3
from .errors import InvalidSequenceError
from .imu_model import BIAS, NAV, P, TH, V, ImuBias, ImuSample, NoiseParams
from .propagation import stack_samples


class Convention(str, enum.Enum):
    TANGENT = "tangent"
    MANIFOLD = "manifold"
    FORSTER = "forster"


_I3 = np.eye(3)
_FORSTER_SIGNS = np.concatenate([-np.ones(9), np.ones(6)])


def bias_perturbation_map(conv: Convention) -> np.ndarray:
    """``P_b``: derivative of the preintegration bias error w.r.t. the additive one."""
    Convention(conv)
    return -np.eye(6)


@dataclass(frozen=True)
class PreintegratedMeasurement:
    dR: np.ndarray
    dp: np.ndarray
    dv: np.ndarray
    db: np.ndarray
    dt_total: float
    J_b: np.ndarray
    cov: np.ndarray
    bias_lin: ImuBias
    convention: Convention
    noise: NoiseParams = field(default_factory=NoiseParams, compare=False)

    @property
    def J_b_nav(self) -> np.ndarray:
        return self.J_b[NAV]


def retract(dR, dp, dv, db, dx, conv: Convention):
    """Perturb an increment ``(dR, dp, dv, db)`` by ``dx`` under ``conv``."""
    dx = np.asarray(dx, dtype=float)
    conv = Convention(conv)
    if conv is Convention.TANGENT:
        R = dR @ so3.exp(dx[TH])
        return R, dp + dx[P], dv + dx[V], db - dx[BIAS]
    if conv is Convention.MANIFOLD:
        R = dR @ so3.exp(dx[TH])
        return R, dp + R @ dx[P], dv + R @ dx[V], db - dx[BIAS]
    R = dR @ so3.exp(-dx[TH])
    return R, dp - dx[P], dv - dx[V], db - dx[BIAS]


def local(dR_hat, dp_hat, dv_hat, db_hat, dR, dp, dv, db, conv: Convention) -> np.ndarray:
    """Inverse of :func:`retract`: the ``dx`` taking the hat increment to the other."""
    conv = Convention(conv)
    th = so3.log(dR_hat.T @ dR)
    if conv is Convention.TANGENT:
        parts = [th, dp - dp_hat, dv - dv_hat]
    elif conv is Convention.MANIFOLD:
        parts = [th, dR.T @ (dp - dp_hat), dR.T @ (dv - dv_hat)]
    else:
        parts = [-th, dp_hat - dp, dv_hat - dv]
    return np.concatenate(parts + [db_hat - db])


def retract_measurement(pm: PreintegratedMeasurement, dx):
    return retract(pm.dR, pm.dp, pm.dv, pm.db, dx, pm.convention)


def conversion_matrix(dR: np.ndarray, src: Convention, dst: Convention) -> np.ndarray:
    """``S`` with ``dx_dst = S @ dx_src`` at an increment with rotation ``dR``."""
    src, dst = Convention(src), Convention(dst)

    def to_tangent(c):
        S = np.eye(15)
        if c is Convention.MANIFOLD:
            S[P, P] = dR
            S[V, V] = dR
        elif c is Convention.FORSTER:
            S[NAV, NAV] = -np.eye(9)
        return S

    S_src = to_tangent(src)
    S_dst = to_tangent(dst)
    return np.linalg.solve(S_dst, S_src)


class Preintegrator:
    """Accumulates samples one interval at a time.

    Each call to :meth:`add` closes the interval from the previously added
    sample, holding that sample's measurement over it.  A fresh instance, or
    one that has seen a single sample, represents a zero-length interval.
    Not safe to share between threads while integrating.
    """

    def __init__(
        self,
        bias: ImuBias,
        noise: NoiseParams,
        convention: Convention = Convention.TANGENT,
        track: bool = True,
    ):
        self.bias = bias
        self.noise = noise
        self.convention = Convention(convention)
        self.track = track
        self._manifold = self.convention is Convention.MANIFOLD
        # The densities are isotropic per sensor, so G Q G^T does not depend on dR.
        G = self._noise_input(np.eye(3))
        self._N = G @ noise.Q() @ G.T
        self.reset()

    def reset(self) -> None:
        self.dR = np.eye(3)
        self.dp = np.zeros(3)
        self.dv = np.zeros(3)
        self.dt_total = 0.0
        self._J = np.zeros((9, 6))
        self._cov = np.zeros((15, 15))
        self._last: ImuSample | None = None

    def add(self, sample: ImuSample) -> None:
        if not (np.isfinite(sample.t) and np.all(np.isfinite(sample.gyro)) and np.all(np.isfinite(sample.accel))):
            raise InvalidSequenceError("non-finite IMU sample")
        last = self._last
        self._last = sample
        if last is None:
            return
        dt = sample.t - last.t
        if not dt > 0.0:
            raise InvalidSequenceError("timestamps must be strictly increasing")
        self._step(last.gyro - self.bias.bg, last.accel - self.bias.ba, dt)

    def _noise_input(self, dR: np.ndarray) -> np.ndarray:
        G = np.zeros((15, 12))
        G[TH, 0:3] = -_I3
        G[V, 3:6] = -_I3 if self._manifold else -dR
        G[9:15, 6:12] = -np.eye(6)
        return G

    def _step(self, w: np.ndarray, a: np.ndarray, dt: float) -> None:
        phi = w * dt
        if self.track:
            E, Jr, G1, G2, D1, D2 = so3.held_rate_terms(phi, a)
        else:
            E = so3.exp(phi)
            G1 = so3.exp_integral(phi, 1)
            G2 = so3.exp_integral(phi, 2)
        dR = self.dR
        dt2 = dt * dt
        G2a = G2 @ a
        G1a = G1 @ a
        if self.track:
            # Rotation applied to the p/v rows: dR (tangent) or Exp(phi)^T (manifold).
            Rp = E.T if self._manifold else dR
            A = np.eye(15)
            A[TH, TH] = E.T
            A[P, TH] = -(Rp @ so3.skew(G2a)) * dt2
            A[V, TH] = -(Rp @ so3.skew(G1a)) * dt
            if self._manifold:
                A[P, P] = E.T
                A[P, V] = E.T * dt
                A[V, V] = E.T
            else:
                A[P, V] = _I3 * dt
            # response of the 9 nav errors to a rate / force offset held over the step
            B = np.zeros((9, 6))
            B[TH, 0:3] = Jr * dt
            B[P, 0:3] = Rp @ D2 * (dt2 * dt)
            B[V, 0:3] = Rp @ D1 * dt2
            B[P, 3:6] = Rp @ G2 * dt2
            B[V, 3:6] = Rp @ G1 * dt
            A[NAV, BIAS] = B
            self._J = A[NAV, NAV] @ self._J + B
        self.dp = self.dp + self.dv * dt + dR @ G2a * dt2
        self.dv = self.dv + dR @ G1a * dt
        self.dR = dR @ E
        self.dt_total += dt
        if self.track:
            half_noise = (0.5 * dt) * self._N
            cov = A @ (self._cov + half_noise) @ A.T + half_noise
            self._cov = 0.5 * (cov + cov.T)

    def measurement(self) -> PreintegratedMeasurement:
        J = np.zeros((15, 6))
        J[NAV] = self._J
        cov = self._cov.copy()
        if self.convention is Convention.FORSTER:
            J = _FORSTER_SIGNS[:, None] * J
            cov = np.outer(_FORSTER_SIGNS, _FORSTER_SIGNS) * cov
        return PreintegratedMeasurement(
            dR=self.dR.copy(),
            dp=self.dp.copy(),
            dv=self.dv.copy(),
            db=np.zeros(6),
            dt_total=self.dt_total,
            J_b=J,
            cov=cov,
            bias_lin=self.bias,
            convention=self.convention,
            noise=self.noise,
        )


def preintegrate(
    bias: ImuBias,
    seq: Sequence[ImuSample],
    noise: NoiseParams,
    conv: Convention = Convention.TANGENT,
    track: bool = True,
) -> PreintegratedMeasurement:
    """Preintegrate ``seq`` at linearization bias ``bias``.

    A single sample gives the zero-length interval (identity increment).
    """
    stack_samples(seq, min_len=1)
    pre = Preintegrator(bias, noise, conv, track=track)
    for z in seq:
        pre.add(z)
    return pre.measurement()


def integrate_increments(bias: ImuBias, seq: Sequence[ImuSample]):
    """``(dR, dp, dv)`` only, without Jacobian or covariance bookkeeping."""
    t, gyro, accel = stack_samples(seq, min_len=1)
    dR = np.eye(3)
    dp = np.zeros(3)
    dv = np.zeros(3)
    bg, ba = bias.bg, bias.ba
    for k in range(1, len(t)):
        dt = t[k] - t[k - 1]
        phi = (gyro[k - 1] - bg) * dt
        a = accel[k - 1] - ba
        dp = dp + dv * dt + dR @ so3.exp_integral(phi, 2) @ a * (dt * dt)
        dv = dv + dR @ so3.exp_integral(phi, 1) @ a * dt
        dR = dR @ so3.exp(phi)
    return dR, dp, dv


def numerical_bias_jacobian(
    pm: PreintegratedMeasurement, seq: Sequence[ImuSample], eps: float = 1e-6
) -> np.ndarray:
    """Central differences of re-preintegration w.r.t. the preintegration bias error.

    Differences are taken in the convention's own increment coordinates,
    which for ``TANGENT`` is plain vector-space differencing of dp and dv.
    """
    Pb_inv = np.linalg.inv(bias_perturbation_map(pm.convention))
    b0 = pm.bias_lin.vector
    J = np.zeros((15, 6))
    for i in range(6):
        step = Pb_inv[:, i] * eps
        cols = []
        for sgn in (1.0, -1.0):
            b = ImuBias.from_vector(b0 + sgn * step)
            dR, dp, dv = integrate_increments(b, seq)
            cols.append(local(pm.dR, pm.dp, pm.dv, pm.db, dR, dp, dv, pm.db, pm.convention))
        J[:, i] = (cols[0] - cols[1]) / (2.0 * eps)
    return J


def bias_jacobian_check(pm: PreintegratedMeasurement, seq: Sequence[ImuSample], eps: float = 1e-6) -> float:
    """Max |analytic - numeric| over the navigation rows of ``J_b``."""
    num = numerical_bias_jacobian(pm, seq, eps)
    return float(np.max(np.abs(pm.J_b[NAV] - num[NAV])))


def apply_bias_correction(pm: PreintegratedMeasurement, b_new: ImuBias):
    """First-order update of ``(dR, dp, dv)`` to a new start bias."""
    db_add = (b_new - pm.bias_lin).vector
    dx = np.zeros(15)
    dx[NAV] = pm.J_b[NAV] @ (bias_perturbation_map(pm.convention) @ db_add)
    dR, dp, dv, _ = retract_measurement(pm, dx)
    return dR, dp, dv


def corrected_measurement(pm: PreintegratedMeasurement, b_new: ImuBias) -> PreintegratedMeasurement:
    """``pm`` relinearized at ``b_new`` with first-order increments; J_b and cov kept."""
    dR, dp, dv = apply_bias_correction(pm, b_new)
    return PreintegratedMeasurement(
        dR, dp, dv, pm.db.copy(), pm.dt_total, pm.J_b, pm.cov, b_new, pm.convention, pm.noise
    )
