"""Conversions between left-error propagation and right-perturbed preintegration.

The prediction ``f(x_s, Delta_x)``

    R_e = R_s dR
    p_e = p_s + v_s dt + g dt^2 / 2 + R_s dp
    v_e = v_s + R_s dv + g dt
    b_e = b_s + Delta_b

links the two: its derivatives with respect to the start state (left
perturbation) and to the increment (preintegration perturbation) are all we
need to move Jacobians and covariances from one side to the other.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import so3
from .errors import ConditioningError, ConventionError
from .imu_model import BIAS, NAV, P, TH, V, FullState, ImuBias, ImuSample, NavState, NoiseParams
from .preintegration import (
    Convention,
    PreintegratedMeasurement,
    bias_perturbation_map,
    conversion_matrix,
    corrected_measurement,
)
from .propagation import PropagationResult, propagate, stack_samples

LEFT = "left"
_MAX_COND = 1e12


@dataclass(frozen=True)
class ConversionJacobians:
    A: np.ndarray  # d(left error of predicted state) / d(preint error)
    P_b: np.ndarray  # d(preint bias error) / d(left bias error)
    prop_convention: str
    preint_convention: Convention


@dataclass(frozen=True)
class RecoveredProp:
    state: FullState
    phi: np.ndarray
    Gmat: np.ndarray
    cov: np.ndarray


def _needs_correction(pm: PreintegratedMeasurement, bias: ImuBias) -> bool:
    return not np.array_equal(bias.vector, pm.bias_lin.vector)


def predict(x_s: FullState, pm: PreintegratedMeasurement, noise: NoiseParams, correct_bias: bool = True) -> FullState:
    """Predicted end state from the start state and the increment.

    With ``correct_bias`` the increment is first moved to ``x_s.bias`` to
    first order when it was integrated at a different bias.
    """
    if correct_bias and _needs_correction(pm, x_s.bias):
        pm = corrected_measurement(pm, x_s.bias)
    dt = pm.dt_total
    g = noise.g
    R = x_s.R
    nav = NavState(
        R @ pm.dR,
        x_s.p + x_s.v * dt + 0.5 * g * dt * dt + R @ pm.dp,
        x_s.v + R @ pm.dv + g * dt,
    )
    return FullState(nav, ImuBias.from_vector(x_s.bias.vector + pm.db))


def state_jacobian(x_s: FullState, pm: PreintegratedMeasurement) -> np.ndarray:
    """Derivative of the prediction w.r.t. the left error of the start state.

    Bias columns carry only the direct ``b_e = b_s + Delta_b`` feed-through;
    the effect through the increment is added separately via ``J_b``.
    """
    D = np.eye(15)
    D[P, TH] = -so3.skew(x_s.R @ pm.dp)
    D[P, V] = np.eye(3) * pm.dt_total
    D[V, TH] = -so3.skew(x_s.R @ pm.dv)
    return D


def conversion_jacobians(
    x_s: FullState,
    pm: PreintegratedMeasurement,
    preint_conv: Convention | None = None,
    prop_conv: str = LEFT,
) -> ConversionJacobians:
    """``A = d(left error of f) / d(preint error)`` and the bias map ``P_b``."""
    if prop_conv != LEFT:
        raise ConventionError("only the left propagation error state is bridged")
    conv = Convention(pm.convention if preint_conv is None else preint_conv)
    R = x_s.R
    A_tan = np.zeros((15, 15))
    A_tan[TH, TH] = R @ pm.dR
    A_tan[P, P] = R
    A_tan[V, V] = R
    A_tan[BIAS, BIAS] = -np.eye(6)
    A = A_tan @ conversion_matrix(pm.dR, conv, Convention.TANGENT)
    if np.linalg.cond(A) > _MAX_COND:
        raise ConditioningError("conversion Jacobian is singular")
    return ConversionJacobians(A, bias_perturbation_map(conv), prop_conv, conv)


def canonical_start(bias: ImuBias) -> FullState:
    return FullState(NavState(), bias)


def preint_from_propagation(
    res: PropagationResult,
    bias_s: ImuBias,
    dt_total: float,
    noise: NoiseParams,
    conv: Convention,
    bias_map: np.ndarray | None = None,
) -> PreintegratedMeasurement:
    """Read a preintegrated measurement off a zero-gravity propagation from identity.

    ``bias_map`` overrides ``P_b`` (used only for fault injection).
    """
    conv = Convention(conv)
    x0 = canonical_start(bias_s)
    end = res.state
    zero_cov = np.zeros((15, 15))
    pm0 = PreintegratedMeasurement(
        end.R, end.p, end.v, np.zeros(6), dt_total, np.zeros((15, 6)), zero_cov, bias_s, conv, noise
    )
    cj = conversion_jacobians(x0, pm0, conv)
    P_b = cj.P_b if bias_map is None else bias_map
    A_inv = np.linalg.inv(cj.A)
    # only the increment route; the direct b_e = b_s feed-through is removed
    direct = np.zeros((15, 6))
    direct[BIAS] = np.eye(6)
    J_b = A_inv @ (res.phi[:, BIAS] - direct) @ np.linalg.inv(P_b)
    cov = A_inv @ res.cov @ A_inv.T
    cov = 0.5 * (cov + cov.T)
    return PreintegratedMeasurement(
        end.R.copy(), end.p.copy(), end.v.copy(), np.zeros(6), dt_total, J_b, cov, bias_s, conv, noise
    )


def preint_by_prop(
    bias_s: ImuBias,
    seq: Sequence[ImuSample],
    noise: NoiseParams,
    conv: Convention = Convention.TANGENT,
    bias_map: np.ndarray | None = None,
    **prop_kwargs,
) -> PreintegratedMeasurement:
    """Preintegration realized by the RK4 propagator.

    Propagates from ``R = I, p = v = 0`` with gravity switched off and zero
    initial covariance, then maps the result into ``conv`` coordinates.
    """
    t, _, _ = stack_samples(seq, min_len=1)
    res = propagate(canonical_start(bias_s), np.zeros((15, 15)), seq, noise.without_gravity(), **prop_kwargs)
    return preint_from_propagation(res, bias_s, float(t[-1] - t[0]), noise, conv, bias_map)


def prop_by_preint(
    x_s: FullState,
    cov_s: np.ndarray,
    pm: PreintegratedMeasurement,
    noise: NoiseParams,
    expect_convention: Convention | None = None,
) -> RecoveredProp:
    """Left-error transition matrix and covariance recovered from ``pm``.

    The start bias is ``x_s.bias``; if ``pm`` was integrated elsewhere it is
    first corrected to that bias.
    """
    if expect_convention is not None and Convention(expect_convention) is not pm.convention:
        raise ConventionError(f"measurement is in {pm.convention.value}, expected {Convention(expect_convention).value}")
    if _needs_correction(pm, x_s.bias):
        pm = corrected_measurement(pm, x_s.bias)
    cj = conversion_jacobians(x_s, pm)
    G = cj.A
    phi = state_jacobian(x_s, pm)
    phi[NAV, BIAS] += G[NAV, NAV] @ pm.J_b[NAV] @ cj.P_b
    cov = phi @ np.asarray(cov_s, dtype=float) @ phi.T + G @ pm.cov @ G.T
    cov = 0.5 * (cov + cov.T)
    return RecoveredProp(predict(x_s, pm, noise, correct_bias=False), phi, G, cov)
