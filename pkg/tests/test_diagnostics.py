import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sphere_sh import (
    DriftParams,
    EnsembleConfig,
    NoiseModel,
    SchemeConfig,
    SpectralSpace,
    energy_identity_residuals,
    energy_pairing,
    energy_Y,
    eta_coefficients,
    eta_value,
    inner_H,
    khashminskii_report,
    norm_L2n,
    norm_V,
    run_ensemble,
    run_trajectory,
    step_em_ito,
)
from sphere_sh.diagnostics import (
    StoppingMonitor,
    energy_hessian,
    energy_pairing_operator,
    ito_energy_decomposition,
    q_P_lower_bound,
    stopping_update,
)
from sphere_sh.manifold import diffusion_B, ito_correction_m

from conftest import on_sphere

SP = SpectralSpace(8, 8, pad_factor=2)
U11 = SP.mode(1, 1)


def test_energy_values():
    assert energy_Y(SP.zeros(), 1) == 0.0
    assert energy_Y(U11, 1) == pytest.approx(5.0)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_energy_inequalities(rng, n):
    sp = SpectralSpace(6, 6, pad_factor=n)
    for _ in range(100):
        u = rng.uniform(0.1, 3) * on_sphere(sp.random(rng, 1.0))
        Y = energy_Y(u, n)
        assert norm_V(u) ** 2 <= 2 * Y
        assert norm_L2n(u, n) ** (2 * n) <= 2 * n * Y


def test_energy_pairing_values(rng):
    assert energy_pairing(U11, SP.zeros(), 1) == 0.0
    assert energy_pairing(U11, U11, 1) == pytest.approx(10.0)


@pytest.mark.parametrize("n", [1, 2])
def test_energy_pairing_finite_difference(rng, n):
    h = 1e-5
    for _ in range(50):
        u, p = SP.random(rng, 1.5), SP.random(rng, 1.5)
        fd = (energy_Y(u + h * p, n) - energy_Y(u - h * p, n)) / (2 * h)
        exact = energy_pairing(u, p, n)
        assert fd == pytest.approx(exact, rel=1e-6)
        assert energy_pairing_operator(u, p, n) == pytest.approx(exact, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_energy_hessian_finite_difference(rng, n):
    sp = SpectralSpace(6, 6, pad_factor=n)
    h = 1e-5
    for _ in range(10):
        u, p, q = (sp.random(rng, 1.5) for _ in range(3))
        fd = (energy_pairing(u + h * q, p, n) - energy_pairing(u - h * q, p, n)) / (2 * h)
        assert fd == pytest.approx(energy_hessian(u, p, q, n), rel=1e-6)


@pytest.mark.parametrize("n", [1, 2])
def test_energy_identities(rng, n):
    for _ in range(20):
        f = SP.random(rng, 1.0)
        u = rng.uniform(0.5, 1.5) * on_sphere(SP.random(rng, 1.0))
        for r in energy_identity_residuals(f, u, DriftParams(n=n)):
            assert r.relative <= 1e-9, r


def test_energy_identity_signs(rng):
    u = on_sphere(SP.random(rng, 1.0))
    r = {x.name: x for x in energy_identity_residuals(SP.random(rng), u, DriftParams(n=2))}
    assert r["enrgy_lmma_4"].rhs <= 0 and r["enrgy_lmma_4"].lhs <= 0
    r = {x.name: x for x in energy_identity_residuals(u, u, DriftParams(n=1))}
    assert abs(r["enrgy_lmma_5"].rhs) < 1e-12


def test_eta_values(rng):
    assert eta_value(on_sphere(SP.random(rng))) == pytest.approx(0.0, abs=1e-15)
    f = SP.mode(2, 3, 0.4)
    c = eta_coefficients(U11, NoiseModel([f]), 1)
    assert c.a1[0] == 0.0
    assert c.a2 == pytest.approx(18 - 0.16)


def test_eta_a1_sign(rng):
    # d|u|^2 picks up 2<u, B(u)> dW = 2<u,f>(1 - |u|^2) dW = a1 * eta * dW
    f, u = SP.random(rng), 1.3 * on_sphere(SP.random(rng))
    a1 = eta_coefficients(u, NoiseModel([f]), 1).a1[0]
    assert 2 * inner_H(u, diffusion_B(f, u)) == pytest.approx(a1 * eta_value(u), rel=1e-12)


def _affine_step(u, noise, params, cfg):
    """u+ = a + sum_k dW_k b_k; the EM step is affine in the increments."""
    a = step_em_ito(u, np.zeros(noise.channels), noise, params, cfg)
    b = [step_em_ito(u, np.eye(noise.channels)[k], noise, params, cfg) - a
         for k in range(noise.channels)]
    return a, b


def test_one_step_eta_mean(rng):
    u = on_sphere(SP.mode(1, 1) + 0.5 * SP.mode(1, 2) + 0.3 * SP.mode(2, 1))
    noise = NoiseModel([SP.mode(1, 2) + 0.5 * SP.mode(2, 2), 0.7 * SP.mode(2, 1)])
    params, dt = DriftParams(), 1e-6
    a, b = _affine_step(u, noise, params, SchemeConfig("em_ito", dt))
    A = np.stack([a.coeff.ravel()] + [x.coeff.ravel() for x in b])
    dW = math.sqrt(dt) * rng.standard_normal((10**5, noise.channels))
    X = np.hstack([np.ones((dW.shape[0], 1)), dW]) @ A
    eta = np.sum(X**2, axis=1) - 1.0
    se = eta.std(ddof=1) / math.sqrt(eta.size)
    drift = (a - u) / dt
    # the exact mean is dt^2 |drift|^2, far below the sampling error
    assert abs(eta.mean() - dt**2 * np.sum(drift.coeff**2)) <= 4 * se
    # without the 1/2 sum m_k correction the mean is off by -dt sum |B_k|^2
    a_bad = a - 0.5 * dt * sum((ito_correction_m(f, u) for f in noise.fields), SP.zeros())
    X_bad = X + (a_bad - a).coeff.ravel()
    bias = (np.sum(X_bad**2, axis=1) - 1.0).mean()
    assert abs(bias) > 20 * se


def test_stopping_monitor():
    mon = StoppingMonitor((1, 2, 5))
    mon, new = stopping_update(mon, 0.0, 3.0)
    assert new == [1.0, 2.0]
    for t in (0.1, 0.2):
        mon, new = stopping_update(mon, t, 3.0)
        assert new == []
    assert mon.hits == {1.0: 0.0, 2.0: 0.0, 5.0: None}
    with pytest.raises(ValueError):
        stopping_update(mon, 0.2, 3.0)
    empty = StoppingMonitor()
    empty, new = stopping_update(empty, 0.0, 100.0)
    assert new == [] and empty.hits == {}


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=60))
def test_stopping_matches_scan(steps):
    norms = 2.0 + np.cumsum(steps)
    levels = (1.5, 2.5, 3.0, 4.0)
    mon = StoppingMonitor(levels)
    for i, v in enumerate(norms):
        stopping_update(mon, 0.1 * i, float(v))
    for l in levels:
        idx = np.nonzero(norms >= l)[0]
        expected = 0.1 * idx[0] if idx.size else None
        assert mon.hits[l] == expected


def test_stopping_accepts_fields():
    mon, new = stopping_update(StoppingMonitor((2.9, 3.1)), 0.0, U11)
    assert new == [2.9]


def test_trajectory_invariants(rng):
    noise = NoiseModel([SP.mode(1, 2, 2.0)])
    cfg = SchemeConfig("em_ito_exponential", dt=1e-4, seed=3)
    d = run_trajectory(on_sphere(U11 + 0.2 * SP.mode(2, 2)), 0.02, DriftParams(), cfg, noise,
                       levels=(3.0, 3.2, 50.0))
    a = d.as_arrays()
    assert len({len(v) for v in a.values()}) == 1
    assert np.all(np.diff(a["x_norm"]) >= 0)
    for l, t in d.tau_hits.items():
        idx = np.nonzero(a["norm_V"] >= l)[0]
        assert t == (a["times"][idx[0]] if idx.size else None)


def test_ito_decomposition_frozen():
    zero = NoiseModel([SP.zeros()])
    cfg = SchemeConfig("em_ito", dt=1e-6)
    d = run_trajectory(SP.zeros(), 1e-5, DriftParams(), cfg, zero, keep_states=True)
    res, _ = ito_energy_decomposition(d, zero, DriftParams())
    assert res == 0.0
    d = run_trajectory(U11, 1e-5, DriftParams(), cfg, zero, keep_states=True)
    assert ito_energy_decomposition(d, zero, DriftParams())[0] < 1e-12


def test_ito_decomposition_one_step_is_second_order(rng):
    u = on_sphere(SP.random(rng, 2.0))
    zero = NoiseModel([SP.zeros()])
    res = []
    dts = [4e-6, 2e-6, 1e-6, 5e-7]
    for dt in dts:
        d = run_trajectory(u, dt, DriftParams(), SchemeConfig("em_ito", dt), zero, keep_states=True)
        res.append(ito_energy_decomposition(d, zero, DriftParams())[0])
    assert np.polyfit(np.log(dts), np.log(res), 1)[0] == pytest.approx(2.0, abs=0.2)


def test_ito_decomposition_needs_states(rng):
    d = run_trajectory(U11, 1e-5, DriftParams(), SchemeConfig("em_ito", dt=1e-6),
                       NoiseModel([SP.zeros()]))
    with pytest.raises(ValueError):
        ito_energy_decomposition(d, NoiseModel([SP.zeros()]), DriftParams())


def test_q_P():
    assert q_P_lower_bound(10) == 50


def test_khashminskii_fixed_point():
    sp = SpectralSpace(8, 8)
    zero = NoiseModel([sp.zeros()])
    ens = EnsembleConfig(paths=4, T=0.05, dt_levels=(1e-3,), levels=(2.0, 3.5, 5.0, 8.0))
    est = run_ensemble(ens, sp.mode(1, 1), DriftParams(),
                       SchemeConfig("em_ito_exponential", renormalize=True), zero, workers=1)
    np.testing.assert_allclose(est.mean_Y, 5.0, rtol=1e-12)
    assert np.all(est.se_Y == 0)
    rep = khashminskii_report(est, ens.levels, 1)
    assert rep.initial_energy == pytest.approx(5.0)
    assert rep.q_P_bound == 50
    assert rep.passed and rep.saturated
    assert np.allclose(rep.stopped_mean[1:], 5.0)
    assert any("ell = 8" in line for line in rep.lines())


def test_khashminskii_needs_level_above_sup():
    sp = SpectralSpace(4, 4)
    ens = EnsembleConfig(paths=2, T=0.01, dt_levels=(1e-3,), levels=(2.0,))
    est = run_ensemble(ens, sp.mode(1, 1), DriftParams(), SchemeConfig(renormalize=True),
                       NoiseModel([sp.zeros()]), workers=1)
    rep = khashminskii_report(est, ens.levels, 1)
    assert not rep.condition_iv
    with pytest.raises(ValueError):
        khashminskii_report(None, (1.0,), 1)
