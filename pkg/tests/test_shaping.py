"""Forward-backward sweep, adjoint gradient, and task optimizer tests."""

import json

import numpy as np
import pytest

from octoarm import (
    ActivationSet,
    Circle,
    MuscleSet,
    RodModel,
    TaskSpec,
    make_grid,
    solve_task,
)
from octoarm.equilibrium import sensitivity_field, solve_field
from octoarm.shaping import (
    activation_gradient,
    backward_sweep,
    forward_sweep,
    grasp_cost,
    obstacle_violation,
    task_cost,
    tip_cost,
)


@pytest.fixture
def model():
    return RodModel()


@pytest.fixture
def muscles():
    return MuscleSet.default()


def test_task_spec_validation():
    with pytest.raises(ValueError):
        TaskSpec()  # neither target nor object
    with pytest.raises(ValueError):
        TaskSpec(tip_target=(0.1, 0.1), tip_weight=-1.0)
    with pytest.raises(ValueError):
        TaskSpec(tip_target=(0.1, 0.1), grasp_distance="euclidean")
    with pytest.raises(ValueError):
        TaskSpec(tip_target=(0.1, 0.1),
                 obstacles=(Circle((0.1, 0.1), 0.02),))


def test_tip_cost_quadratic():
    assert tip_cost((0.1, 0.2), (0.1, 0.2)) == 0.0
    assert tip_cost((0.13, 0.24), (0.1, 0.2)) == pytest.approx(
        0.5 * (0.03**2 + 0.04**2))


def test_grasp_cost_modes():
    obj = Circle((0.0, 0.0), 0.02)
    r = np.array([0.05, 0.0])
    assert grasp_cost(r, obj, 0.005, "centerline") == pytest.approx(0.03)
    assert grasp_cost(r, obj, 0.005, "surface") == pytest.approx(0.025)
    # inside the contact distance the cost is still the absolute gap
    assert grasp_cost(np.array([0.021, 0.0]), obj, 0.005, "surface") \
        == pytest.approx(0.004)


def test_obstacle_violation_active_only_inside():
    obj = Circle((0.0, 0.0), 0.02)
    assert obstacle_violation(np.array([0.05, 0.0]), obj, 0.005) == 0.0
    inside = obstacle_violation(np.array([0.02, 0.0]), obj, 0.005)
    assert inside == pytest.approx(0.025**2 - 0.02**2)


def test_forward_sweep_accumulates_violations(model, muscles):
    alpha = ActivationSet.zeros(model.n_elements)
    sol = solve_field(model, muscles, alpha)
    # an obstacle sitting right on the straight rod
    obs = Circle((0.1, 0.0), 0.01)
    task = TaskSpec(tip_target=(0.2, 0.0), obstacles=(obs,),
                    obstacle_weights=(1e5,))
    fwd = forward_sweep(model, sol, task)
    assert fwd.qhat.shape == (1, model.n_elements + 1)
    assert np.all(np.diff(fwd.qhat[0]) >= 0.0)
    assert fwd.qhat[0, -1] > 0.0
    assert fwd.qhat[0, 0] == 0.0


def test_adjoint_gradient_matches_pipeline_fd(model, muscles):
    """Full-pipeline check: adjoint gradient vs FD of the discrete cost
    (solve equilibrium, integrate, evaluate) at random elements."""
    rng = np.random.default_rng(47)
    n = model.n_elements
    grid = make_grid(model)
    task = TaskSpec(tip_target=(0.12, 0.14))
    alpha = ActivationSet.from_array(rng.uniform(0.1, 0.6, (3, n)))

    sol = solve_field(model, muscles, alpha)
    fwd = forward_sweep(model, sol, task)
    cos = backward_sweep(model, fwd, sol, task)
    sens = sensitivity_field(model, muscles, sol, alpha)
    grad = activation_gradient(model, cos, sol, sens, alpha, task)

    warm = (sol.stretch, sol.curvature)
    h = 1e-7
    for mi, j in [(0, 10), (1, 30), (2, 50), (0, 90), (2, 99)]:
        hi = alpha.stack().copy()
        lo = alpha.stack().copy()
        hi[mi, j] += h
        lo[mi, j] -= h
        J_hi = task_cost(model,
                         solve_field(model, muscles,
                                     ActivationSet.from_array(hi), warm=warm),
                         ActivationSet.from_array(hi), task)[0]
        J_lo = task_cost(model,
                         solve_field(model, muscles,
                                     ActivationSet.from_array(lo), warm=warm),
                         ActivationSet.from_array(lo), task)[0]
        fd = (J_hi - J_lo) / (2 * h)
        # the adjoint gradient is an ascent density: -dJ/dalpha per length
        assert grad[mi, j] == pytest.approx(-fd / grid.ds, rel=1e-3)


def test_costate_constant_without_running_cost(model, muscles):
    alpha = ActivationSet.zeros(model.n_elements)
    sol = solve_field(model, muscles, alpha)
    task = TaskSpec(tip_target=(0.1, 0.1))
    fwd = forward_sweep(model, sol, task)
    cos = backward_sweep(model, fwd, sol, task)
    # terminal condition, constant in s
    tip = sol.configuration.positions[-1]
    expected = -task.tip_weight * (tip - np.asarray(task.tip_target))
    assert np.allclose(cos.lambda_r, expected, rtol=1e-12)
    assert cos.lambda_theta[-1] == 0.0


def test_solve_task_reaches_easy_target(model, muscles):
    task = TaskSpec(tip_target=(0.16, 0.06), max_iters=2500)
    alpha, report = solve_task(model, muscles, task)
    assert report.final_tip_error < 0.01
    a = alpha.stack()
    assert np.all(a >= 0.0) and np.all(a <= 1.0)
    # cost must have improved on the passive arm
    J0 = task.tip_weight * tip_cost((0.2, 0.0), task.tip_target)
    assert report.final_cost < J0
    assert report.pd_fraction == 1.0


def test_solve_task_warm_start_and_logging(model, muscles, tmp_path):
    task = TaskSpec(tip_target=(0.18, 0.02), max_iters=300)
    log_path = tmp_path / "opt.jsonl"
    with open(log_path, "w") as fh:
        alpha, report = solve_task(model, muscles, task, log_stream=fh,
                                   log_every=50)
    lines = [json.loads(x) for x in log_path.read_text().splitlines()]
    assert len(lines) >= 2
    assert {"iter", "J", "tip_error", "max_violation"} <= set(lines[0])
    assert lines[-1]["J"] <= lines[0]["J"]
    # warm start from the previous solution converges at least as well
    alpha2, report2 = solve_task(model, muscles, task, initial=alpha)
    assert report2.final_cost <= report.final_cost * (1.0 + 1e-6)


def test_gradient_sign_structure(model, muscles):
    """For a target up and ahead, the top longitudinal muscle is the one
    the optimizer recruits first."""
    task = TaskSpec(tip_target=(0.12, 0.14))
    alpha = ActivationSet.zeros(model.n_elements)
    sol = solve_field(model, muscles, alpha)
    fwd = forward_sweep(model, sol, task)
    cos = backward_sweep(model, fwd, sol, task)
    sens = sensitivity_field(model, muscles, sol, alpha)
    grad = activation_gradient(model, cos, sol, sens, alpha, task)
    assert np.all(grad[0] > 0.0)   # lm_top bends toward the target
    assert np.all(grad[1] < 0.0)   # lm_bottom would bend away
