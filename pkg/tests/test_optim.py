import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latpaint.optim import (
    Adam,
    OptimConfig,
    OptimizationError,
    Trajectory,
    iterations_to_saturation,
    optimize_single,
    optimize_window,
)
from oracles import saturation_scan


def l1_to(c):
    return lambda z: (float(np.abs(z - c).sum()), np.sign(z - c))


def quad_to(c):
    return lambda z: (float(((z - c) ** 2).sum()), 2 * (z - c))


def test_l1_start_at_optimum_stays():
    c = np.array([0.3, -0.5, 0.1])
    z, traj = optimize_single(c.copy(), l1_to(c), OptimConfig(max_iters=20))
    assert np.array_equal(z, c)
    assert traj.values == [0.0] * 20


def test_quadratic_converges():
    c = np.random.default_rng(0).uniform(-0.8, 0.8, 8)
    z, traj = optimize_single(np.zeros(8), quad_to(c), OptimConfig(max_iters=500, lr=0.05))
    assert quad_to(c)(z)[0] <= 1e-4
    assert traj.iterations == 500


def test_clamp_projects_onto_box():
    c = np.array([1.7, -2.5, 0.4, 3.0])
    z, _ = optimize_single(np.zeros(4), quad_to(c), OptimConfig(max_iters=800, lr=0.05))
    np.testing.assert_allclose(z, np.clip(c, -1, 1), atol=1e-3)
    assert np.all(np.abs(z) <= 1.0)


def test_clamp_off_leaves_box():
    c = np.array([1.5])
    z, _ = optimize_single(np.zeros(1), quad_to(c), OptimConfig(max_iters=800, lr=0.05, clamp_z=False))
    assert z[0] == pytest.approx(1.5, abs=1e-3)


def test_iterates_stay_in_box():
    rng = np.random.default_rng(1)
    c = rng.uniform(-3, 3, 5)
    seen = []

    def obj(z):
        seen.append(z.copy())
        return quad_to(c)(z)

    optimize_single(rng.uniform(-1, 1, 5), obj, OptimConfig(max_iters=200, lr=0.1))
    assert np.all(np.abs(np.array(seen)) <= 1.0)


def test_determinism():
    c = np.linspace(-0.5, 0.5, 6)
    a = optimize_single(np.zeros(6), quad_to(c), OptimConfig(max_iters=50))
    b = optimize_single(np.zeros(6), quad_to(c), OptimConfig(max_iters=50))
    assert np.array_equal(a[0], b[0]) and a[1].values == b[1].values


def test_records_pre_update_value():
    c = np.ones(2) * 0.5
    _, traj = optimize_single(np.zeros(2), quad_to(c), OptimConfig(max_iters=3))
    assert traj.values[0] == 0.5


def test_descent_on_convex():
    rng = np.random.default_rng(2)
    for _ in range(5):
        c = rng.uniform(-1, 1, 4)
        z0 = rng.uniform(-1, 1, 4)
        z, _ = optimize_single(z0, l1_to(c), OptimConfig(max_iters=100))
        assert l1_to(c)(z)[0] <= l1_to(c)(z0)[0]


def test_nonfinite_aborts_with_iteration():
    def obj(z):
        return (math.nan if z[0] > 0.05 else float(z[0] ** 2)), np.array([-1.0])

    with pytest.raises(OptimizationError) as info:
        optimize_single(np.zeros(1), obj, OptimConfig(max_iters=100))
    assert info.value.iteration > 0
    assert "iteration" in str(info.value)


def test_config_validation():
    with pytest.raises(ValueError):
        OptimConfig(max_iters=0)
    with pytest.raises(ValueError):
        OptimConfig(beta1=1.0)
    with pytest.raises(ValueError):
        OptimConfig(lr=0.0)
    with pytest.raises(ValueError):
        OptimConfig(schedule="linear")


def test_cosine_schedule_decays():
    cfg = OptimConfig(max_iters=100, lr=0.1, schedule="cosine")
    assert cfg.step_size(0) == pytest.approx(0.1)
    assert cfg.step_size(50) == pytest.approx(0.05)
    assert 0 < cfg.step_size(99) < 1e-4
    steps = [cfg.step_size(t) for t in range(100)]
    assert all(a >= b for a, b in zip(steps, steps[1:]))
    assert OptimConfig(lr=0.1).step_size(500) == 0.1


def test_adam_first_step_is_lr_times_sign():
    opt = Adam(3)
    step = opt.step(np.array([2.0, -0.5, 1e-3]), 0.02)
    np.testing.assert_allclose(step, [-0.02, 0.02, -0.02], rtol=1e-4)


# ---------------------------------------------------------------- window


def test_window_mu_zero_matches_single_runs():
    rng = np.random.default_rng(3)
    cs = rng.uniform(-1, 1, (4, 5))
    z0s = rng.uniform(-1, 1, (4, 5))
    cfg = OptimConfig(max_iters=120)
    zs, traj = optimize_window(list(z0s), [l1_to(c) for c in cs], 0.0, cfg)
    for i in range(4):
        z, t = optimize_single(z0s[i], l1_to(cs[i]), cfg)
        assert np.array_equal(zs[i], z)
        assert traj.frame_values[:, i].tolist() == t.values


@pytest.mark.parametrize("mu", [0.0, 0.1, 1e6])
def test_single_frame_window_matches_single(mu):
    c = np.array([0.2, -0.4])
    cfg = OptimConfig(max_iters=60)
    (z,), traj = optimize_window([np.zeros(2)], [quad_to(c)], mu, cfg)
    z1, t1 = optimize_single(np.zeros(2), quad_to(c), cfg)
    assert np.array_equal(z, z1) and traj.values == t1.values


def test_window_large_mu_forces_consensus():
    cfg = OptimConfig(max_iters=1000, schedule="cosine")
    zs, _ = optimize_window([np.array([-0.5, 0.2]), np.array([0.5, -0.1])],
                            [quad_to(np.array([-0.3, 0.1])), quad_to(np.array([0.3, 0.0]))], 1e6, cfg)
    assert np.abs(zs[0] - zs[1]).sum() <= 1e-3


def test_window_frozen_anchor_not_moved():
    anchor = np.array([0.4, -0.4])
    cfg = OptimConfig(max_iters=300, schedule="cosine")
    zs, _ = optimize_window([anchor, np.zeros(2)], [None, quad_to(np.array([-0.2, 0.3]))], 1e6, cfg, frozen=1)
    assert np.array_equal(zs[0], anchor)
    assert np.abs(zs[1] - anchor).sum() <= 1e-3


def test_window_argument_errors():
    with pytest.raises(ValueError):
        optimize_window([], [], 0.1)
    with pytest.raises(ValueError):
        optimize_window([np.zeros(2)], [quad_to(np.zeros(2))], 0.1, frozen=1)


# ---------------------------------------------------------------- saturation


def test_saturation_examples():
    assert iterations_to_saturation([10, 5, 1, 0.5, 0.5]) == 3
    assert iterations_to_saturation([3.0] * 7) == 0
    assert iterations_to_saturation([4.0]) == 0
    assert iterations_to_saturation(Trajectory([10, 5, 1, 0.5, 0.5], np.zeros(1))) == 3
    with pytest.raises(ValueError):
        iterations_to_saturation([])


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=60),
       st.floats(0.5, 0.99))
@settings(max_examples=200, deadline=None)
def test_saturation_matches_scan(values, fraction):
    assert iterations_to_saturation(values, fraction) == saturation_scan(values, fraction)


def test_trajectory_csv(tmp_path):
    t = Trajectory([1.5, 0.1 + 0.2], np.zeros(1))
    t.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines == ["iteration,objective", "0,1.5", "1,0.30000000000000004"]
