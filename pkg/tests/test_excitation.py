import math

import numpy as np
import pytest

from hydrarm.excitation import (BoundaryParametrization, FourierTrajectory, check_constraints,
                                condition_number, conservative_amplitude, eval_trajectory,
                                optimize_trajectory, random_feasible_trajectory,
                                table3_trajectory)


def zero_traj(q0=None, nH=3):
    q0 = np.zeros(6) if q0 is None else q0
    return FourierTrajectory(np.zeros((6, nH)), np.zeros((6, nH)), q0, 0.1 * math.pi)


def test_static_trajectory():
    q0 = np.linspace(0.0, 0.5, 6)
    s = eval_trajectory(zero_traj(q0), 3.7)
    assert np.array_equal(s.q, q0)
    assert not s.dq.any() and not s.ddq.any()


def test_single_harmonic_start():
    a = np.zeros((6, 3))
    a[0, 0] = 1.0
    traj = FourierTrajectory(a, np.zeros((6, 3)), np.full(6, 0.2), math.pi)
    s = eval_trajectory(traj, 0.0)
    assert s.dq[0] == pytest.approx(1.0)
    assert s.q[0] == pytest.approx(0.2)


def test_derivatives_match_finite_differences(rng):
    traj = FourierTrajectory(rng.normal(0, 0.1, (6, 3)), rng.normal(0, 0.1, (6, 3)),
                             rng.normal(size=6), 0.1 * math.pi)
    t = np.linspace(0, traj.period, 400)
    h = 1e-4
    qp, dqp, _ = traj.evaluate(t + h)
    qm, dqm, _ = traj.evaluate(t - h)
    _, dq, ddq = traj.evaluate(t)
    assert np.abs((qp - qm) / (2 * h) - dq).max() < 1e-6
    assert np.abs((dqp - dqm) / (2 * h) - ddq).max() < 1e-6


def test_zero_trajectory_feasible(model):
    assert check_constraints(zero_traj(np.full(6, 0.0)), model.limits).feasible


def test_position_violation_reports_worst(model):
    b = np.zeros((6, 3))
    b[0, 0] = -0.08  # q1 = q0 - b/w cos(wt) swings +-0.255 rad
    traj = FourierTrajectory(np.zeros((6, 3)), b, np.array([0.9, 0, 0, 0, 0, 0]), 0.1 * math.pi)
    rep = check_constraints(traj, model.limits, boundary="zero")
    pos = [v for v in rep.violations if v.joint == 1 and v.kind == "pos"]
    assert pos and pos[0].bound == 1.0472
    assert pos[0].value == pytest.approx(0.9 + 0.08 / (0.1 * math.pi), rel=1e-5)


def test_conservative_bound_implies_grid_check(model, rng):
    checked = 0
    for _ in range(100):
        traj = FourierTrajectory(rng.normal(0, 0.01, (6, 3)), rng.normal(0, 0.01, (6, 3)),
                                 np.zeros(6), 0.1 * math.pi)
        rep = check_constraints(traj, model.limits, grid_dt=1e-2, boundary="zero", tol=np.inf)
        for j, ok in enumerate(rep.conservative_ok):
            if ok:
                checked += 1
                assert not [v for v in rep.violations if v.joint == j + 1 and v.kind == "pos"]
    assert checked > 0


def test_conservative_amplitude_formula():
    traj = FourierTrajectory(np.ones((6, 2)), np.zeros((6, 2)), np.zeros(6), 2.0)
    assert np.allclose(conservative_amplitude(traj), 1 / 2 + 1 / 4)


def test_static_trajectory_is_ill_conditioned(model, mapping):
    assert condition_number(model, mapping, zero_traj()) == math.inf


def test_condition_number_bounds_and_phase(model, mapping):
    traj = random_feasible_trajectory(model, np.random.default_rng(3))
    k0 = condition_number(model, mapping, traj)
    k1 = condition_number(model, mapping, traj, phase=0.37 * traj.period / 100)
    assert k0 >= 1
    assert abs(k1 - k0) / k0 < 0.05


def test_parameter_counts():
    p = BoundaryParametrization(6, 3, 0.1 * math.pi)
    assert 6 * (2 * 3 + 1) == 42
    assert p.n_free + p.n_eliminated == 42
    assert p.n_free == 24
    zero = BoundaryParametrization(6, 3, 0.1 * math.pi, "zero")
    # the start condition fixes q0 instead of a harmonic
    assert zero.n_free == 24 and zero.per_joint == 4


@pytest.mark.parametrize("mode", ["offset", "zero"])
def test_parametrization_meets_boundary(mode, rng):
    p = BoundaryParametrization(6, 4, 0.2 * math.pi, mode)
    traj = p.to_trajectory(rng.normal(size=p.n_free))
    q, dq, ddq = traj.evaluate(np.array([0.0, traj.period]))
    target = traj.q0 if mode == "offset" else 0.0
    assert np.abs(q - target).max() < 1e-12
    assert np.abs(dq).max() < 1e-12 and np.abs(ddq).max() < 1e-12


def test_table3_preset_loads(model):
    traj = table3_trajectory()
    assert traj.n_harmonics == 3 and traj.n_joints == 6
    assert traj.omega_f == pytest.approx(0.1 * math.pi)
    rep = check_constraints(traj, model.limits)
    assert set(rep.max_ratio) == {"pos", "vel", "acc"}


def test_trajectory_json_round_trip(designed):
    traj = designed.trajectory
    for units in ("rad", "deg"):
        again = FourierTrajectory.load(traj.to_dict(units))
        assert np.allclose(again.a, traj.a, rtol=1e-14, atol=1e-17)
        assert np.allclose(again.q0, traj.q0, rtol=1e-14, atol=1e-17)


def test_optimizer_contract(model, designed):
    rep = check_constraints(designed.trajectory, model.limits, grid_dt=1e-3)
    assert rep.feasible
    _, dq, ddq = designed.trajectory.evaluate(np.array([0.0]))
    assert np.abs(dq).max() < 1e-6 and np.abs(ddq).max() < 1e-6
    assert math.isfinite(designed.kappa)
    assert designed.n_params_full == 42
    h = np.asarray(designed.history)
    assert np.all(np.diff(h) <= 0)
    assert designed.evaluations <= 300


def test_optimizer_is_deterministic(model, mapping):
    a = optimize_trajectory(model, mapping, seed=4, budget=120)
    b = optimize_trajectory(model, mapping, seed=4, budget=120)
    assert a.kappa == b.kappa
    assert np.array_equal(a.trajectory.a, b.trajectory.a)


def test_single_evaluation_budget(model, mapping):
    res = optimize_trajectory(model, mapping, seed=0, budget=1)
    assert res.evaluations == 1
    assert len(res.history) == 1
    assert res.history[0] == pytest.approx(math.log10(res.kappa))
    with pytest.raises(ValueError):
        optimize_trajectory(model, mapping, budget=0)
