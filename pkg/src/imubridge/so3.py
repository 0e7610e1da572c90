"""Rotation-group kernel.

Exponential and logarithm maps on SO(3), the left/right Jacobians and their
inverses, Hamilton quaternion helpers, and the integrals of ``Exp(t * phi)``
used to integrate a rotation rate held constant over a sampling interval.

Everything here is a pure function of numpy arrays.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import InvalidRotationError

SMALL_ANGLE = 1e-8
# Below this angle the held-rate integral coefficients use their Taylor series.
_SERIES_ANGLE = 1.0
_SERIES_TERMS = 14

_I3 = np.eye(3)


def skew(v) -> np.ndarray:
    """Cross-product matrix, ``skew(v) @ w == np.cross(v, w)``."""
    x, y, z = v[0], v[1], v[2]
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(S: np.ndarray) -> np.ndarray:
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def exp(phi) -> np.ndarray:
    """Rodrigues formula for ``expm(skew(phi))``."""
    phi = np.asarray(phi, dtype=float)
    theta = math.sqrt(phi @ phi)
    K = skew(phi)
    if theta < SMALL_ANGLE:
        return _I3 + K + 0.5 * (K @ K)
    half = math.sin(0.5 * theta)
    a = math.sin(theta) / theta
    b = 2.0 * half * half / (theta * theta)
    return _I3 + a * K + b * (K @ K)


def is_rotation(R: np.ndarray, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    if np.max(np.abs(R.T @ R - _I3)) > tol:
        return False
    return abs(np.linalg.det(R) - 1.0) <= tol


def log(R: np.ndarray, check: bool = True) -> np.ndarray:
    """Rotation vector of ``R`` with norm in ``[0, pi]``.

    Raises InvalidRotationError if ``R`` is not orthonormal with det +1.
    """
    R = np.asarray(R, dtype=float)
    if check and not is_rotation(R):
        raise InvalidRotationError("matrix is not a rotation")
    w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = math.sqrt(w @ w)
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    theta = math.atan2(s, c)
    if theta < SMALL_ANGLE:
        return w * (1.0 + theta * theta / 6.0)
    if theta < math.pi - 1e-3:
        return w * (theta / s)
    # Near pi: sin(theta) is tiny, so read the axis off the symmetric part,
    # B = (R - cos(theta) I) / (1 - cos(theta)) = u u^T.
    B = (0.5 * (R + R.T) - c * _I3) / (1.0 - c)
    i = int(np.argmax(np.diag(B)))
    u = B[:, i] / math.sqrt(B[i, i])
    if u @ w < 0.0:
        u = -u
    return theta * u / math.sqrt(u @ u)


def _jacobian_coeffs(theta: float) -> tuple[float, float]:
    # (1 - cos t) / t^2 and (t - sin t) / t^3
    half = math.sin(0.5 * theta)
    return 2.0 * half * half / (theta * theta), (theta - math.sin(theta)) / theta**3


def right_jacobian(phi) -> np.ndarray:
    """``Exp(phi + d) ~= Exp(phi) Exp(J_r(phi) d)``."""
    phi = np.asarray(phi, dtype=float)
    theta = math.sqrt(phi @ phi)
    K = skew(phi)
    if theta < SMALL_ANGLE:
        return _I3 - 0.5 * K + (K @ K) / 6.0
    a, b = _jacobian_coeffs(theta)
    return _I3 - a * K + b * (K @ K)


def left_jacobian(phi) -> np.ndarray:
    """``Exp(phi + d) ~= Exp(J_l(phi) d) Exp(phi)``; equals ``right_jacobian(-phi)``."""
    phi = np.asarray(phi, dtype=float)
    theta = math.sqrt(phi @ phi)
    K = skew(phi)
    if theta < SMALL_ANGLE:
        return _I3 + 0.5 * K + (K @ K) / 6.0
    a, b = _jacobian_coeffs(theta)
    return _I3 + a * K + b * (K @ K)


def _inverse_coeff(theta: float) -> float:
    return 1.0 / (theta * theta) - (1.0 + math.cos(theta)) / (2.0 * theta * math.sin(theta))


def inverse_right_jacobian(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = math.sqrt(phi @ phi)
    K = skew(phi)
    if theta < SMALL_ANGLE:
        return _I3 + 0.5 * K + (K @ K) / 12.0
    return _I3 + 0.5 * K + _inverse_coeff(theta) * (K @ K)


def inverse_left_jacobian(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = math.sqrt(phi @ phi)
    K = skew(phi)
    if theta < SMALL_ANGLE:
        return _I3 - 0.5 * K + (K @ K) / 12.0
    return _I3 - 0.5 * K + _inverse_coeff(theta) * (K @ K)


def nearest_rotation(M: np.ndarray) -> np.ndarray:
    """Orthogonal projection of a near-rotation matrix back onto SO(3)."""
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    if np.linalg.det(R) < 0.0:
        U[:, -1] = -U[:, -1]
        R = U @ Vt
    return R


# -- quaternions (Hamilton, scalar first) ------------------------------------


def omega_matrix(w) -> np.ndarray:
    """``Omega(w)`` such that ``qdot = 0.5 * Omega(w) @ q`` for body rate ``w``."""
    w = np.asarray(w, dtype=float)
    Om = np.zeros((4, 4))
    Om[0, 1:] = -w
    Om[1:, 0] = w
    Om[1:, 1:] = -skew(w)
    return Om


def quat_to_rot(q) -> np.ndarray:
    w, x, y, z = (float(c) for c in q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rot_to_quat(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; the result is unit norm with ``q_w >= 0``."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    k = int(np.argmax([tr, R[0, 0], R[1, 1], R[2, 2]]))
    if k == 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif k == 1:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif k == 2:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return -q if q[0] < 0.0 else q


# -- integrals of Exp(t * phi) for a held rotation rate ----------------------


def _series(theta2: float, k: int) -> tuple[float, float]:
    """s_k = sum_m (-1)^m t^2m / (2m+k)! and (d s_k / dt) / t, by Taylor series."""
    val = 0.0
    der = 0.0
    # term_m = (-1)^m t^(2m-2) / (2m+k)!, so t^2 * term_m is the series term
    term = 1.0 / math.factorial(k)
    val += term
    for m in range(1, _SERIES_TERMS):
        term *= -1.0 / ((2 * m + k - 1) * (2 * m + k))
        der += 2.0 * m * term
        term *= theta2
        val += term
    return val, der


def _closed(theta: float, k: int) -> tuple[float, float]:
    s = [math.cos(theta), math.sin(theta) / theta]
    t2 = theta * theta
    for j in range(2, k + 1):
        s.append((1.0 / math.factorial(j - 2) - s[j - 2]) / t2)
    return s[k], (s[k - 1] - k * s[k]) / t2


def _coeff(theta: float, k: int) -> tuple[float, float]:
    if theta < _SERIES_ANGLE:
        return _series(theta * theta, k)
    return _closed(theta, k)


def exp_integral(phi, order: int) -> np.ndarray:
    """``Gamma_n(phi) = sum_j skew(phi)^j / (j + n)!``.

    ``Gamma_1`` integrates ``Exp(t phi)`` over ``t in [0, 1]`` (it equals
    ``left_jacobian``) and ``Gamma_2`` is the double integral, so a rate
    ``w`` and specific force ``a`` held over ``dt`` give a velocity increment
    ``Gamma_1(w dt) a dt`` and position increment ``Gamma_2(w dt) a dt^2``.
    """
    phi = np.asarray(phi, dtype=float)
    theta = math.sqrt(phi @ phi)
    K = skew(phi)
    c1, _ = _coeff(theta, order + 1)
    c2, _ = _coeff(theta, order + 2)
    return _I3 / math.factorial(order) + c1 * K + c2 * (K @ K)


def exp_integral_jacobian(phi, a, order: int) -> np.ndarray:
    """Derivative of ``exp_integral(phi, order) @ a`` with respect to ``phi``."""
    phi = np.asarray(phi, dtype=float)
    a = np.asarray(a, dtype=float)
    theta = math.sqrt(phi @ phi)
    c1, d1 = _coeff(theta, order + 1)
    c2, d2 = _coeff(theta, order + 2)
    return _gamma_jacobian(phi, a, skew(phi), c1, d1, c2, d2)


def _gamma_jacobian(phi, a, K, c1, d1, c2, d2):
    Ka = K @ a
    KKa = K @ Ka
    return (
        -c1 * skew(a)
        + c2 * (np.outer(phi, a) + (phi @ a) * _I3 - 2.0 * np.outer(a, phi))
        + np.outer(d1 * Ka + d2 * KKa, phi)
    )


class HeldRateTerms(NamedTuple):
    E: np.ndarray  # Exp(phi)
    Jr: np.ndarray  # right Jacobian of phi
    G1: np.ndarray  # exp_integral(phi, 1)
    G2: np.ndarray  # exp_integral(phi, 2)
    D1: np.ndarray  # d(G1 a)/d phi
    D2: np.ndarray  # d(G2 a)/d phi


def held_rate_terms(phi, a) -> HeldRateTerms:
    """All per-interval terms for rotation increment ``phi`` and held force ``a``.

    Same values as the individual functions, sharing one coefficient evaluation.
    """
    theta = math.sqrt(phi @ phi)
    K = skew(phi)
    KK = K @ K
    s1 = math.sin(theta) / theta if theta >= SMALL_ANGLE else 1.0 - theta * theta / 6.0
    s2, d2 = _coeff(theta, 2)
    s3, d3 = _coeff(theta, 3)
    s4, d4 = _coeff(theta, 4)
    E = _I3 + s1 * K + s2 * KK
    Jr = _I3 - s2 * K + s3 * KK
    G1 = _I3 + s2 * K + s3 * KK
    G2 = 0.5 * _I3 + s3 * K + s4 * KK
    D1 = _gamma_jacobian(phi, a, K, s2, d2, s3, d3)
    D2 = _gamma_jacobian(phi, a, K, s3, d3, s4, d4)
    return HeldRateTerms(E, Jr, G1, G2, D1, D2)
