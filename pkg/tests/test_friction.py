import numpy as np
import pytest

from hydrarm import testbed
from hydrarm.friction import (CovarianceError, IdentifiabilityWarning, RankDeficientError,
                              RegressionSample, RLSState, batch_ls, build_regression,
                              build_sample, differentiate, extract_friction, identify_cylinder,
                              rls_run, rls_update, stribeck_curve)
from hydrarm.hydraulics import Excitation, LinearStribeck, simulate_cylinder

TWO_TONE = Excitation((0.06, 0.01), (0.05, 0.5))


def planted_theta(p):
    return np.array([p.m, p.K, p.friction.fc, p.friction.fv, p.friction.fs])


def rel_err(est, ref):
    return np.abs(np.asarray(est) - ref) / np.abs(ref)


def test_sample_identity_on_clean_records():
    p = testbed.cylinder_params(2)
    run = simulate_cylinder(p, noise={})
    theta = planted_theta(p)
    for rec in list(run)[::500]:
        s = build_sample(rec, p.c, p.A1, p.A2)
        assert s.y == pytest.approx(s.lam @ theta, abs=1e-9)


def test_sample_at_rest_has_no_friction_entries():
    p = testbed.cylinder_params(1)
    run = simulate_cylinder(p, Excitation.none(), duration=1.0, noise={})
    s = build_sample(next(iter(run)), p.c, p.A1, p.A2)
    assert np.array_equal(s.lam[2:], np.zeros(3))


def test_zero_damping_leaves_output_alone():
    p = testbed.cylinder_params(1)
    rec = list(simulate_cylinder(p, noise={}))[100]
    s = build_sample(rec, 0.0, p.A1, p.A2)
    assert s.y == rec.p1 * p.A1 - rec.p2 * p.A2 - rec.F


def test_rls_zero_regressor_keeps_state():
    st = RLSState.initial(5)
    st2 = rls_update(st, RegressionSample(3.0, np.zeros(5)))
    assert np.array_equal(st2.alpha_hat, st.alpha_hat)
    assert np.array_equal(st2.P, st.P)
    assert st2.k == 1


def test_rls_update_matches_loop():
    p = testbed.cylinder_params(3)
    y, Lam = build_regression(simulate_cylinder(p, noise={}), p.c, p.A1, p.A2)
    st = RLSState.initial(5)
    for k in range(200):
        st = rls_update(st, RegressionSample(y[k], Lam[k]))
    res = rls_run(y[:200], Lam[:200])
    assert np.allclose(st.alpha_hat, res.theta, rtol=1e-8)


def test_rls_noiseless_two_tone_recovers_all():
    p = testbed.cylinder_params(4)
    run = simulate_cylinder(p, TWO_TONE, noise={})
    y, Lam = build_regression(run, p.c, p.A1, p.A2)
    res = rls_run(y, Lam)
    theta = planted_theta(p)
    assert np.linalg.norm(res.theta - theta) / np.linalg.norm(theta) < 1e-4
    assert np.all(np.diff(res.traces) <= 1e-12 * res.traces[:-1])
    assert res.min_pivots.min() > 0


def test_batch_exact_and_agrees_with_rls():
    p = testbed.cylinder_params(3)
    run = simulate_cylinder(p, noise={})
    b = identify_cylinder(run, p.c, p.A1, p.A2, fix_mass=p.m)
    r = identify_cylinder(run, p.c, p.A1, p.A2, fix_mass=p.m, estimator="rls")
    ref = planted_theta(p)[1:]
    assert np.all(rel_err(b.theta, ref) < 1e-9)
    assert np.all(rel_err(r.theta, b.theta) < 1e-6)
    assert b.residual_rms < 1e-9


def test_single_tone_mass_is_unidentifiable():
    p = testbed.cylinder_params(1)
    with pytest.raises(RankDeficientError, match="m"):
        identify_cylinder(simulate_cylinder(p, noise={}), p.c, p.A1, p.A2)


def test_free_mass_recovered_under_noise():
    for j in range(1, 7):
        p = testbed.cylinder_params(j)
        run = simulate_cylinder(p, TWO_TONE, seed=j)
        res = identify_cylinder(run, p.c, p.A1, p.A2)
        assert abs(res.fit.m - p.m) / p.m < 0.01


def test_joint1_fixed_mass_triple():
    p = testbed.cylinder_params(1)
    res = identify_cylinder(simulate_cylinder(p, seed=1), p.c, p.A1, p.A2, fix_mass=4.595)
    f = res.fit.friction
    assert np.all(rel_err([f.fc, f.fv, f.fs], [20.77, 7.83, -15.15]) < 0.02)
    assert res.fit.m == 4.595 and res.fit.mass_fixed


def test_zero_friction_plant():
    p = testbed.cylinder_params(2, friction=LinearStribeck(0.0, 0.0, 0.0))
    res = identify_cylinder(simulate_cylinder(p, seed=3), p.c, p.A1, p.A2, fix_mass=p.m)
    f = res.fit.friction
    assert max(abs(f.fc), abs(f.fv), abs(f.fs)) < 0.05


def test_one_sided_motion_flagged():
    rng = np.random.default_rng(0)
    dx = rng.uniform(0.01, 0.1, 300)
    x = rng.normal(size=300)
    ddx = rng.normal(size=300)
    Lam = np.column_stack([ddx, x, np.sign(dx), dx, np.cbrt(dx)])
    with pytest.warns(IdentifiabilityWarning):
        batch_ls(Lam @ np.ones(5), Lam)


def test_too_few_samples():
    with pytest.raises(RankDeficientError):
        batch_ls(np.ones(3), np.ones((3, 5)))


def test_covariance_failure_is_reported():
    st = RLSState(np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]), 0)
    with pytest.raises(CovarianceError):
        rls_update(st, RegressionSample(1.0, np.array([1.0, 0.0])))


def test_residual_rms_matches_noise_level():
    p = testbed.cylinder_params(5)
    noise = {"x": 1e-6, "p1": 0.2, "p2": 0.2}
    res = identify_cylinder(simulate_cylinder(p, noise=noise, seed=2), p.c, p.A1, p.A2,
                            fix_mass=p.m)
    sigma = np.sqrt((p.A1 * 0.2) ** 2 + (p.A2 * 0.2) ** 2 + (p.K * 1e-6) ** 2)
    assert 0.5 * sigma <= res.residual_rms <= 2 * sigma


def test_extract_friction_sizes():
    fit = extract_friction([1, 2, 3, 4, 5])
    assert (fit.m, fit.K, fit.friction.fs) == (1, 2, 5)
    with pytest.raises(ValueError):
        extract_friction([1, 2, 3, 4, 5], fix_mass=2.0)


def test_stribeck_curve():
    curve = stribeck_curve(LinearStribeck(6.62, 3.99, -3.01), [-1.0, 0.0, 1.0])
    assert curve[2][1] == pytest.approx(7.60)
    assert curve[0][1] == -curve[2][1]
    assert curve[1] == (0.0, 0.0)
    assert stribeck_curve(LinearStribeck(1, 1, 1), []) == []


def test_differentiate_recovers_derivatives():
    t = np.arange(0, 20, 0.02)
    x = np.sin(0.5 * t)
    dx, ddx = differentiate(t, x)
    inner = slice(10, -10)
    assert np.abs(dx[inner] - 0.5 * np.cos(0.5 * t[inner])).max() < 1e-3
    assert np.abs(ddx[inner] + 0.25 * np.sin(0.5 * t[inner])).max() < 1e-3
