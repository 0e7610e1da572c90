"""Preintegration residuals, their Jacobians and covariance.

Two residual styles are provided.  ``COMPUTE_ERROR`` compares the prediction
against the end state in the end frame,

    r_th = Log(R_e^T R_pred),  r_p = R_e^T (p_pred - p_e),
    r_v  = R_e^T (v_pred - v_e),  r_b = b_pred - b_e,

and pairs with the ``TANGENT`` and ``MANIFOLD`` increment perturbations.
``FORSTER`` reverses the subtraction and works in the start frame,

    r_th = Log(R_pred^T R_e),  r_p = R_s^T (p_e - p_pred),
    r_v  = R_s^T (v_e - v_pred),  r_b = b_e - b_pred,

and pairs with the ``FORSTER`` perturbation, for which the residual Jacobian
is close to the identity.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import so3
from .bridge import predict
from .errors import ConventionError
from .imu_model import BIAS, P, TH, V, FullState, ImuBias, NoiseParams
from .preintegration import Convention, PreintegratedMeasurement, bias_perturbation_map


class ResidualStyle(str, enum.Enum):
    COMPUTE_ERROR = "compute_error"
    FORSTER = "forster"


_PAIRS = {
    ResidualStyle.COMPUTE_ERROR: (Convention.TANGENT, Convention.MANIFOLD),
    ResidualStyle.FORSTER: (Convention.FORSTER,),
}


def check_pairing(style: ResidualStyle, conv: Convention) -> None:
    style, conv = ResidualStyle(style), Convention(conv)
    if conv not in _PAIRS[style]:
        raise ConventionError(f"{style.value} residual is not defined for the {conv.value} perturbation")


def default_style(conv: Convention) -> ResidualStyle:
    return ResidualStyle.FORSTER if Convention(conv) is Convention.FORSTER else ResidualStyle.COMPUTE_ERROR


@dataclass(frozen=True)
class FactorContext:
    """Everything a residual is evaluated at."""

    x_s: FullState
    x_e: FullState
    pm: PreintegratedMeasurement
    noise: NoiseParams
    style: ResidualStyle | None = None

    @property
    def resolved_style(self) -> ResidualStyle:
        return default_style(self.pm.convention) if self.style is None else ResidualStyle(self.style)


@dataclass(frozen=True)
class FactorEvaluation:
    r: np.ndarray
    J_dx: np.ndarray  # dr / d(preint error)
    Sigma_r: np.ndarray
    J_bias: np.ndarray  # dr / d(additive start bias), through the increment


def residual(
    x_s: FullState,
    x_e: FullState,
    pm: PreintegratedMeasurement,
    noise: NoiseParams,
    style: ResidualStyle = ResidualStyle.COMPUTE_ERROR,
) -> np.ndarray:
    """15-vector residual ``[r_th, r_p, r_v, r_bg, r_ba]``.

    The increments of ``pm`` are used as stored, whatever ``x_s.bias`` is.
    """
    style = ResidualStyle(style)
    pred = predict(x_s, pm, noise, correct_bias=False)
    R_e = x_e.R
    if style is ResidualStyle.COMPUTE_ERROR:
        parts = [
            so3.log(R_e.T @ pred.R),
            R_e.T @ (pred.p - x_e.p),
            R_e.T @ (pred.v - x_e.v),
            pred.bias.vector - x_e.bias.vector,
        ]
    else:
        R_s = x_s.R
        parts = [
            so3.log(pred.R.T @ R_e),
            R_s.T @ (x_e.p - pred.p),
            R_s.T @ (x_e.v - pred.v),
            x_e.bias.vector - pred.bias.vector,
        ]
    return np.concatenate(parts)


def style_map(x_s: FullState, x_e: FullState) -> np.ndarray:
    """``T`` with ``r_forster = T @ r_compute_error``, exact for any states."""
    T = -np.eye(15)
    M = x_s.R.T @ x_e.R
    T[P, P] = -M
    T[V, V] = -M
    return T


def residual_jacobian_preint(ctx: FactorContext, r: np.ndarray | None = None) -> np.ndarray:
    """``dr / d(preint error)`` under the measurement's convention."""
    style = ctx.resolved_style
    conv = ctx.pm.convention
    check_pairing(style, conv)
    if r is None:
        r = residual(ctx.x_s, ctx.x_e, ctx.pm, ctx.noise, style)
    J = np.zeros((15, 15))
    if style is ResidualStyle.FORSTER:
        J[TH, TH] = so3.inverse_left_jacobian(r[TH])
        J[3:15, 3:15] = np.eye(12)
        return J
    M = ctx.x_e.R.T @ ctx.x_s.R
    if conv is Convention.MANIFOLD:
        M = M @ ctx.pm.dR
    J[TH, TH] = so3.inverse_right_jacobian(r[TH])
    J[P, P] = M
    J[V, V] = M
    J[BIAS, BIAS] = -np.eye(6)
    return J


def residual_covariance(J_dx: np.ndarray, cov_preint: np.ndarray) -> np.ndarray:
    S = J_dx @ cov_preint @ J_dx.T
    return 0.5 * (S + S.T)


def residual_bias_jacobian(J_dx: np.ndarray, J_b: np.ndarray) -> np.ndarray:
    """``dr / d(preint bias error)``."""
    return J_dx @ J_b


def evaluate(ctx: FactorContext) -> FactorEvaluation:
    style = ctx.resolved_style
    r = residual(ctx.x_s, ctx.x_e, ctx.pm, ctx.noise, style)
    J_dx = residual_jacobian_preint(ctx, r)
    P_b = bias_perturbation_map(ctx.pm.convention)
    return FactorEvaluation(
        r=r,
        J_dx=J_dx,
        Sigma_r=residual_covariance(J_dx, ctx.pm.cov),
        J_bias=residual_bias_jacobian(J_dx, ctx.pm.J_b) @ P_b,
    )


def linearized_residual(ctx: FactorContext, b_nominal: ImuBias, db) -> np.ndarray:
    """First-order residual after moving the preintegration bias to ``b_nominal + db``.

    The states are held fixed, so only the increment rows change.
    """
    if not np.allclose(b_nominal.vector, ctx.pm.bias_lin.vector, rtol=0.0, atol=1e-12):
        raise ValueError("measurement was not integrated at the nominal bias")
    ev = evaluate(ctx)
    return ev.r + ev.J_bias @ np.asarray(db, dtype=float).reshape(6)


def whitened_cost(ev: FactorEvaluation) -> float:
    return float(ev.r @ np.linalg.solve(ev.Sigma_r, ev.r))
