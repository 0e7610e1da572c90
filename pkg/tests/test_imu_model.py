import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from imubridge import so3
from imubridge.imu_model import (
    BIAS,
    NAV,
    FullState,
    ImuBias,
    ImuSample,
    NoiseParams,
    boxminus_left,
    boxminus_navstate_right,
    boxplus_left,
    boxplus_navstate_right,
    error_dynamics,
    state_derivative,
)
from oracles import hat, random_rotation

dx15 = arrays(np.float64, 15, elements=st.floats(-0.5, 0.5))


def _random_state(rng):
    return FullState.make(
        random_rotation(rng), rng.normal(size=3), rng.normal(size=3), rng.normal(0, 0.01, 3), rng.normal(0, 0.1, 3)
    )


def _flow(x, sample, h, noise):
    """RK4 of the strapdown equations over a signed step ``h``."""
    w = sample.gyro - x.bias.bg
    a = sample.accel - x.bias.ba
    g = noise.g

    def f(R, v):
        return R @ hat(w), g + R @ a

    R, p, v = x.R, x.p, x.v
    k1R, k1v = f(R, v)
    k2R, k2v = f(R + 0.5 * h * k1R, v + 0.5 * h * k1v)
    k3R, k3v = f(R + 0.5 * h * k2R, v + 0.5 * h * k2v)
    k4R, k4v = f(R + h * k3R, v + h * k3v)
    R1 = R + h / 6 * (k1R + 2 * k2R + 2 * k3R + k4R)
    p1 = p + h / 6 * (v + 2 * (v + 0.5 * h * k1v) + 2 * (v + 0.5 * h * k2v) + v + h * k3v)
    v1 = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    U, _, Vt = np.linalg.svd(R1)
    return FullState.make(U @ Vt, p1, v1, x.bias.bg, x.bias.ba)


def test_error_dynamics_finite_difference(rng):
    """d/dt of the left error equals F dx (nested central differences)."""
    noise = NoiseParams()
    h, eps = 1e-4, 1e-6
    for _ in range(5):
        x = _random_state(rng)
        z = ImuSample(0.0, rng.uniform(-1, 1, 3), rng.uniform(-5, 5, 3))
        F, _ = error_dynamics(x, z)
        num = np.zeros((15, 15))
        for i in range(15):
            e = np.zeros(15)
            e[i] = eps
            rates = []
            for s in (1.0, -1.0):
                xp = boxplus_left(x, s * e)
                fwd = boxminus_left(_flow(xp, z, h, noise), _flow(x, z, h, noise))
                bwd = boxminus_left(_flow(xp, z, -h, noise), _flow(x, z, -h, noise))
                rates.append((fwd - bwd) / (2 * h))
            num[:, i] = (rates[0] - rates[1]) / (2 * eps)
        assert np.max(np.abs(num[NAV] - F[NAV])) < 1e-4
        assert np.all(F[BIAS] == 0.0)


def test_noise_input_matrix(rng):
    # measurement noise n enters as omega = omega_m - b - n, a = a_m - b - n
    noise = NoiseParams()
    h, eps = 1e-4, 1e-6
    x = _random_state(rng)
    z = ImuSample(0.0, rng.uniform(-1, 1, 3), rng.uniform(-5, 5, 3))
    _, G = error_dynamics(x, z)
    num = np.zeros((15, 6))
    for j in range(6):
        rates = []
        for s in (1.0, -1.0):
            dn = np.zeros(6)
            dn[j] = s * eps
            zn = ImuSample(0.0, z.gyro - dn[:3], z.accel - dn[3:])
            fwd = boxminus_left(_flow(x, zn, h, noise), _flow(x, z, h, noise))
            bwd = boxminus_left(_flow(x, zn, -h, noise), _flow(x, z, -h, noise))
            rates.append((fwd - bwd) / (2 * h))
        num[:, j] = (rates[0] - rates[1]) / (2 * eps)
    assert np.max(np.abs(num[NAV] - G[NAV, :6])) < 1e-4
    assert np.array_equal(G[BIAS, 6:], np.eye(6))


def test_state_derivative_at_rest():
    noise = NoiseParams()
    x = FullState()
    z = ImuSample(0.0, np.zeros(3), -noise.g)
    d = state_derivative(x, z, noise)
    assert np.allclose(d.v, 0.0) and np.allclose(d.R, 0.0) and np.allclose(d.p, 0.0)


@given(dx15)
def test_left_retraction_roundtrip(dx):
    x = FullState.make(so3.exp([0.3, -1.0, 2.0]), [1.0, 2.0, 3.0], [-1.0, 0.0, 0.5], [0.01] * 3, [0.1] * 3)
    assert np.allclose(boxminus_left(boxplus_left(x, dx), x), dx, atol=1e-12)


@given(dx15)
def test_navstate_right_retraction_roundtrip(dx):
    x = FullState.make(so3.exp([0.3, -1.0, 2.0]), [1.0, 2.0, 3.0], [-1.0, 0.0, 0.5])
    y = boxplus_navstate_right(x, dx)
    assert np.allclose(y.p, x.p + y.R @ dx[3:6])
    assert np.allclose(boxminus_navstate_right(y, x), dx, atol=1e-12)


def test_bias_arithmetic():
    a = ImuBias([1, 2, 3], [4, 5, 6])
    b = ImuBias.from_vector(np.arange(6.0))
    assert np.array_equal((a - b).vector, np.array([1, 1, 1, 1, 1, 1.0]))
    assert np.array_equal((a + b).vector, a.vector + b.vector)


def test_noise_params():
    n = NoiseParams(1.0, 2.0, 3.0, 4.0)
    assert np.array_equal(np.diag(n.Q()), np.repeat([1.0, 4.0, 9.0, 16.0], 3))
    assert np.array_equal(n.without_gravity().g, np.zeros(3))
    assert n.scaled(2.0).sigma_a == 4.0
    with pytest.raises(ValueError):
        NoiseParams(sigma_g=-1.0)
    with pytest.raises(ValueError):
        NoiseParams(sigma_a=float("nan"))
