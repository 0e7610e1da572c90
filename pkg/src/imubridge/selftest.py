"""Quick invariant checks over short random sequences.

``fault="pb-sign"`` flips the sign of the bias perturbation map inside the
propagation-to-preintegration bridge, which the bias-Jacobian equivalence
check must catch.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import so3
from .bridge import preint_by_prop, predict, prop_by_preint
from .experiments import entrywise_diff
from .factors import FactorContext, default_style, residual, residual_jacobian_preint
from .imu_model import NAV, boxminus_left, boxplus_left
from .preintegration import (
    Convention,
    PreintegratedMeasurement,
    bias_jacobian_check,
    preintegrate,
    retract_measurement,
)
from .propagation import propagate
from .synth import TrialSpec, generate

FAULTS = ("pb-sign",)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _data(seed: int = 7, duration: float = 1.0):
    spec = TrialSpec(seed=seed, duration=duration)
    seq, x0, b0 = generate(spec)
    return seq, x0, b0, spec.noise


def _check_so3(rng) -> float:
    err = 0.0
    for _ in range(20):
        axis = rng.normal(size=3)
        phi = axis / np.linalg.norm(axis) * rng.uniform(0.0, 3.0)
        err = max(err, np.max(np.abs(so3.log(so3.exp(phi)) - phi)))
    return err


def _check_bias_jacobian(seq, b0, noise) -> float:
    return max(bias_jacobian_check(preintegrate(b0, seq, noise, c), seq) for c in Convention)


def _bridge_diffs(seq, b0, noise, fault):
    bias_map = np.eye(6) if fault == "pb-sign" else None
    worst_j, worst_s = 0.0, 0.0
    for conv in (Convention.TANGENT, Convention.MANIFOLD):
        ref = preintegrate(b0, seq, noise, conv)
        est = preint_by_prop(b0, seq, noise, conv, bias_map=bias_map)
        worst_j = max(worst_j, float(np.mean(entrywise_diff(ref.J_b[NAV], est.J_b[NAV]))))
        worst_s = max(worst_s, float(np.mean(entrywise_diff(ref.cov, est.cov))))
    return worst_j, worst_s


def _check_prop_by_preint(seq, x0, b0, noise) -> float:
    cov0 = np.diag(np.repeat([0.01, 0.1, 0.05, 0.001, 0.01], 3) ** 2)
    ref = propagate(x0, cov0, seq, noise)
    worst = 0.0
    for conv in Convention:
        est = prop_by_preint(x0, cov0, preintegrate(b0, seq, noise, conv), noise)
        worst = max(worst, float(np.mean(entrywise_diff(ref.phi, est.phi))))
        worst = max(worst, float(np.mean(entrywise_diff(ref.cov, est.cov))))
    return worst


def _check_phi_fd(seq, x0, noise, eps=1e-6) -> float:
    short = seq[:41]
    res = propagate(x0, np.zeros((15, 15)), short, noise.scaled(0.0))
    J = np.zeros((15, 15))
    for i in range(15):
        e = np.zeros(15)
        e[i] = eps
        ends = [
            propagate(boxplus_left(x0, s * e), np.zeros((15, 15)), short, noise.scaled(0.0)).state for s in (1, -1)
        ]
        J[:, i] = (boxminus_left(ends[0], res.state) - boxminus_left(ends[1], res.state)) / (2 * eps)
    return float(np.max(np.abs(J - res.phi)))


def _check_semigroup(seq, x0, noise) -> float:
    cov0 = np.zeros((15, 15))
    full = propagate(x0, cov0, seq, noise)
    k = len(seq) // 2
    a = propagate(x0, cov0, seq[: k + 1], noise)
    b = propagate(a.state, a.cov, seq[k:], noise)
    return float(max(np.max(np.abs(b.phi @ a.phi - full.phi)), np.max(np.abs(b.cov - full.cov))))


def _check_covariances(seq, x0, b0, noise) -> tuple[float, float]:
    mats = [preintegrate(b0, seq, noise, c).cov for c in Convention]
    mats.append(propagate(x0, np.eye(15) * 1e-4, seq, noise).cov)
    asym = max(float(np.max(np.abs(m - m.T))) for m in mats)
    min_eig = min(float(np.min(np.linalg.eigvalsh(m))) for m in mats)
    return asym, min_eig


def _check_residuals(seq, x0, b0, noise, rng, eps=1e-6) -> tuple[float, float]:
    zero, jac = 0.0, 0.0
    for conv in Convention:
        pm = preintegrate(b0, seq, noise, conv)
        style = default_style(conv)
        zero = max(zero, float(np.max(np.abs(residual(x0, predict(x0, pm, noise), pm, noise, style)))))
        x_e = boxplus_left(predict(x0, pm, noise), rng.normal(0.0, 0.05, 15))
        J = residual_jacobian_preint(FactorContext(x0, x_e, pm, noise, style))
        Jn = np.zeros((15, 15))
        for i in range(15):
            e = np.zeros(15)
            e[i] = eps
            rs = []
            for s in (1, -1):
                dR, dp, dv, db = retract_measurement(pm, s * e)
                pm2 = PreintegratedMeasurement(dR, dp, dv, db, pm.dt_total, pm.J_b, pm.cov, pm.bias_lin, conv, noise)
                rs.append(residual(x0, x_e, pm2, noise, style))
            Jn[:, i] = (rs[0] - rs[1]) / (2 * eps)
        jac = max(jac, float(np.max(np.abs(J - Jn))))
    return zero, jac


def run_selftest(fault: str | None = None, log: Callable[[str], None] | None = None) -> list[CheckResult]:
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}")
    rng = np.random.default_rng(11)
    seq, x0, b0, noise = _data()
    results: list[CheckResult] = []

    def record(name, value, ok, fmt="{:.3e}"):
        r = CheckResult(name, bool(ok), fmt.format(value) if not isinstance(value, str) else value)
        results.append(r)
        if log is not None:
            log(f"{'PASS' if r.passed else 'FAIL'}  {name}: {r.detail}")

    err = _check_so3(rng)
    record("so3 exp/log roundtrip", err, err < 1e-10)
    err = _check_bias_jacobian(seq, b0, noise)
    record("bias Jacobian vs finite differences", err, err < 1e-4)
    jb, sg = _bridge_diffs(seq, b0, noise, fault)
    record("preint-by-prop bias Jacobian equivalence", jb, jb <= 1e-4)
    record("preint-by-prop covariance equivalence", sg, sg <= 1e-4)
    err = _check_prop_by_preint(seq, x0, b0, noise)
    record("prop-by-preint transition/covariance equivalence", err, err <= 1e-4)
    err = _check_phi_fd(seq, x0, noise)
    record("transition matrix vs finite differences", err, err < 1e-4)
    err = _check_semigroup(seq, x0, noise)
    record("transition semigroup under splitting", err, err < 1e-9)
    asym, min_eig = _check_covariances(seq, x0, b0, noise)
    record("covariance symmetry", asym, asym <= 1e-10)
    record("covariance PSD (min eigenvalue)", min_eig, min_eig >= -1e-9)
    zero, jac = _check_residuals(seq, x0, b0, noise, rng)
    record("residual zero at exact prediction", zero, zero <= 1e-10)
    record("residual Jacobian vs finite differences", jac, jac < 1e-5)
    return results


def main_selftest(fault: str | None = None) -> int:
    t0 = time.perf_counter()
    results = run_selftest(fault, log=print)
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed in {time.perf_counter() - t0:.1f} s")
    return 0 if n_fail == 0 else 1
