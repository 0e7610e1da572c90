import numpy as np
import pytest

from imubridge import so3
from imubridge.errors import InvalidSequenceError
from imubridge.imu_model import FullState, ImuSample, NoiseParams, boxminus_left, boxplus_left, left_error_matrices
from imubridge.propagation import cov_step, phi_step, propagate, rk4_step, transition_matrix
from oracles import expm_series, random_rotation, smooth_sequence


def _state(rng):
    return FullState.make(random_rotation(rng), rng.normal(size=3), rng.normal(size=3), rng.normal(0, 0.01, 3), rng.normal(0, 0.1, 3))


def _phi_fd(x0, seq, noise, eps=1e-6):
    ref = propagate(x0, np.zeros((15, 15)), seq, noise).state
    J = np.zeros((15, 15))
    for i in range(15):
        e = np.zeros(15)
        e[i] = eps
        ends = [propagate(boxplus_left(x0, s * e), np.zeros((15, 15)), seq, noise).state for s in (1.0, -1.0)]
        J[:, i] = (boxminus_left(ends[0], ref) - boxminus_left(ends[1], ref)) / (2 * eps)
    return J


def test_transition_matrix_matches_finite_differences(rng):
    noise = NoiseParams()
    for _ in range(3):
        x0 = _state(rng)
        seq = smooth_sequence(rng, n=41)
        res = propagate(x0, np.zeros((15, 15)), seq, noise)
        assert np.max(np.abs(res.phi - _phi_fd(x0, seq, noise))) < 1e-4


def test_mean_linearization_beats_start(rng):
    noise = NoiseParams()
    x0 = _state(rng)
    seq = smooth_sequence(rng, n=201)
    num = _phi_fd(x0, seq, noise)
    err_mean = np.max(np.abs(propagate(x0, np.zeros((15, 15)), seq, noise, linearize="mean").phi - num))
    err_start = np.max(np.abs(propagate(x0, np.zeros((15, 15)), seq, noise, linearize="start").phi - num))
    assert err_mean < err_start


def test_semigroup_under_splitting(rng):
    noise = NoiseParams()
    x0 = _state(rng)
    seq = smooth_sequence(rng, n=201)
    cov0 = np.eye(15) * 1e-4
    full = propagate(x0, cov0, seq, noise)
    for k in (1, 57, 100, 199):
        a = propagate(x0, cov0, seq[: k + 1], noise)
        b = propagate(a.state, a.cov, seq[k:], noise)
        assert np.max(np.abs(b.phi @ a.phi - full.phi)) < 1e-9
        assert np.max(np.abs(b.cov - full.cov)) < 1e-12
        assert np.allclose(b.state.R, full.state.R, atol=1e-14)


def test_fast_covariance_matches_explicit_noise_integral(rng):
    noise = NoiseParams()
    x0 = _state(rng)
    seq = smooth_sequence(rng, n=31)
    cov = np.eye(15) * 1e-3
    Q = noise.Q()
    x = x0
    for z0, z1 in zip(seq[:-1], seq[1:]):
        dt = z1.t - z0.t
        F0, G0 = left_error_matrices(x.R, z0.accel - x.bias.ba)
        x = rk4_step(x, z0, z1, noise)
        F1, G1 = left_error_matrices(x.R, z0.accel - x.bias.ba)
        cov = cov_step(cov, transition_matrix(0.5 * (F0 + F1), dt), G0, G1, Q, dt)
    res = propagate(x0, np.eye(15) * 1e-3, seq, noise)
    assert np.allclose(res.cov, cov, rtol=1e-12, atol=1e-18)


def test_phi_step_is_second_order_truncation(rng):
    x = _state(rng)
    z = ImuSample(0.0, [0.1, 0.2, 0.3], [1.0, 2.0, 9.0])
    F, _ = left_error_matrices(x.R, z.accel - x.bias.ba)
    for dt in (1e-2, 5e-3):
        err = np.max(np.abs(phi_step(x, z, dt) - expm_series(F * dt)))
        assert err < np.max(np.abs(F)) ** 3 * dt**3
    with pytest.raises(ValueError):
        phi_step(x, z, 0.0)


def test_covariance_scales_quadratically_with_noise(rng):
    x0 = _state(rng)
    seq = smooth_sequence(rng, n=101)
    noise = NoiseParams()
    base = propagate(x0, np.zeros((15, 15)), seq, noise).cov
    scaled = propagate(x0, np.zeros((15, 15)), seq, noise.scaled(3.0)).cov
    assert np.allclose(scaled, 9.0 * base, rtol=1e-12, atol=0.0)


def test_covariance_symmetric_psd(rng):
    noise = NoiseParams()
    for _ in range(5):
        res = propagate(_state(rng), np.diag(rng.uniform(0, 1e-3, 15)), smooth_sequence(rng, n=201), noise)
        assert np.max(np.abs(res.cov - res.cov.T)) <= 1e-10
        assert np.min(np.linalg.eigvalsh(res.cov)) >= -1e-9


def test_constant_rate_and_force_closed_form():
    noise = NoiseParams()
    w = np.array([0.2, -0.1, 0.4])
    T = 2.0
    seq = [ImuSample(k / 100, w, -noise.g) for k in range(201)]
    R0 = so3.exp([0.5, 0.1, -0.3])
    res = propagate(FullState.make(R0), np.zeros((15, 15)), seq, noise)
    assert np.allclose(res.state.R, R0 @ so3.exp(w * T), atol=1e-10)
    # zero rate: body force a in the world frame plus gravity
    a = np.array([1.0, -2.0, 3.0])
    seq = [ImuSample(k / 100, np.zeros(3), a) for k in range(201)]
    res = propagate(FullState.make(R0, v=[1.0, 0.0, 0.0]), np.zeros((15, 15)), seq, noise)
    acc = R0 @ a + noise.g
    assert np.allclose(res.state.v, [1.0, 0.0, 0.0] + acc * T, atol=1e-12)
    assert np.allclose(res.state.p, np.array([1.0, 0.0, 0.0]) * T + 0.5 * acc * T * T, atol=1e-12)


def test_linear_interpolation_option(rng):
    noise = NoiseParams()
    seq = [ImuSample(k / 100, [0.0, 0.0, 0.0], [k / 100, 0.0, 0.0]) for k in range(101)]
    res = propagate(FullState(), np.zeros((15, 15)), seq, noise.without_gravity(), interp="linear")
    # a(t) = t exactly: v = t^2 / 2, p = t^3 / 6 (RK4 is exact for this)
    assert np.allclose(res.state.v, [0.5, 0.0, 0.0], atol=1e-12)
    assert np.allclose(res.state.p, [1.0 / 6.0, 0.0, 0.0], atol=1e-12)
    with pytest.raises(ValueError):
        propagate(FullState(), np.zeros((15, 15)), seq, noise, interp="cubic")
    with pytest.raises(ValueError):
        propagate(FullState(), np.zeros((15, 15)), seq, noise, linearize="end")


def test_single_sample_is_identity(rng):
    x0 = _state(rng)
    cov0 = np.eye(15)
    res = propagate(x0, cov0, [ImuSample(3.0, [1, 2, 3], [4, 5, 6])], NoiseParams())
    assert np.array_equal(res.phi, np.eye(15))
    assert np.array_equal(res.cov, cov0)
    assert np.array_equal(res.state.R, x0.R)


def test_invalid_sequences():
    noise = NoiseParams()
    with pytest.raises(InvalidSequenceError):
        propagate(FullState(), np.zeros((15, 15)), [], noise)
    bad_t = [ImuSample(0.0, np.zeros(3), np.zeros(3)), ImuSample(0.0, np.zeros(3), np.zeros(3))]
    with pytest.raises(InvalidSequenceError):
        propagate(FullState(), np.zeros((15, 15)), bad_t, noise)
    nan = [ImuSample(0.0, np.zeros(3), np.zeros(3)), ImuSample(0.1, [np.nan, 0, 0], np.zeros(3))]
    with pytest.raises(InvalidSequenceError):
        propagate(FullState(), np.zeros((15, 15)), nan, noise)
