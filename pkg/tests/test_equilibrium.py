"""Pointwise equilibrium solver and sensitivity tests."""

import numpy as np
import pytest

from octoarm import (
    ActivationSet,
    MuscleSet,
    RodModel,
    make_grid,
    sensitivity_field,
    solve_field,
    solve_pointwise,
)
from octoarm.equilibrium import integrate_configuration
from octoarm.muscles import total_gradient_P


@pytest.fixture
def model():
    return RodModel()


@pytest.fixture
def muscles():
    return MuscleSet.default()


def _bisection_tm_stretch(model, muscles, s):
    """Independent oracle: scalar bisection on the axial balance with the
    transverse muscle fully active."""
    phi = (model.tip_radius * s
           + model.base_radius * (model.rest_length - s)) / model.rest_length
    area = np.pi * phi**2
    c = muscles.tm.max_stress * muscles.tm.area_fraction * area

    def f(nu1):
        return model.youngs * area * (nu1 - 1.0) - c * muscles.fl(2.0 - nu1)

    lo, hi = 1.0, 1.4
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def test_passive_equilibrium_is_rest(model, muscles):
    sol = solve_field(model, muscles, ActivationSet.zeros(model.n_elements))
    assert np.allclose(sol.stretch, 1.0, atol=1e-12)
    assert np.allclose(sol.curvature, 0.0, atol=1e-12)
    assert np.all(sol.residual <= 1e-10)
    assert np.all(sol.positive_definite)


def test_tm_extension_matches_bisection_oracle(model, muscles):
    n = model.n_elements
    alpha = ActivationSet(np.zeros(n), np.zeros(n), np.ones(n))
    sol = solve_field(model, muscles, alpha)
    grid = make_grid(model)
    for j in [0, 50, 99]:
        oracle = _bisection_tm_stretch(model, muscles, grid.element_coords[j])
        assert sol.stretch[j] == pytest.approx(oracle, abs=1e-9)
    # taper cancels: the balance is independent of area, so stretch is
    # uniform and near the benchmark value
    assert np.ptp(sol.stretch) < 1e-9
    assert sol.stretch[0] == pytest.approx(1.1047, abs=1e-3)
    assert np.allclose(sol.curvature, 0.0, atol=1e-10)


def test_symmetric_lm_activation_gives_zero_curvature(model, muscles):
    n = model.n_elements
    a = np.full(n, 0.6)
    alpha = ActivationSet(a.copy(), a.copy(), np.zeros(n))
    sol = solve_field(model, muscles, alpha)
    assert np.max(np.abs(sol.curvature)) < 1e-12
    assert np.all(sol.stretch < 1.0)  # contraction


def test_single_lm_bends_with_expected_sign(model, muscles):
    n = model.n_elements
    top = ActivationSet(np.full(n, 0.5), np.zeros(n), np.zeros(n))
    sol_top = solve_field(model, muscles, top)
    assert np.all(sol_top.curvature > 0.0)
    bottom = ActivationSet(np.zeros(n), np.full(n, 0.5), np.zeros(n))
    sol_bot = solve_field(model, muscles, bottom)
    # mirror symmetry between the two longitudinal muscles
    assert np.allclose(sol_bot.curvature, -sol_top.curvature, rtol=1e-9)
    assert np.allclose(sol_bot.stretch, sol_top.stretch, rtol=1e-9)


def test_equilibrium_residual_is_stationary_point(model, muscles):
    rng = np.random.default_rng(31)
    n = model.n_elements
    alpha = ActivationSet.from_array(rng.uniform(0.0, 1.0, (3, n)))
    sol = solve_field(model, muscles, alpha)
    grid = make_grid(model)
    P = total_gradient_P(
        model, muscles, (sol.stretch, sol.shear, sol.curvature),
        alpha.stack()[:, None, :].reshape(3, n), grid.element_coords)
    scale_1 = model.youngs * grid.area
    scale_3 = model.youngs * grid.second_moment / model.rest_length
    assert np.max(np.abs(P[..., 0]) / scale_1) < 1e-9
    assert np.max(np.abs(P[..., 1])) == 0.0
    assert np.max(np.abs(P[..., 2]) / scale_3) < 1e-9


def test_solve_pointwise_agrees_with_field(model, muscles):
    grid = make_grid(model)
    n = model.n_elements
    rng = np.random.default_rng(37)
    alpha = ActivationSet.from_array(rng.uniform(0.0, 0.9, (3, n)))
    sol = solve_field(model, muscles, alpha)
    for j in [4, 61]:
        (nu1, nu2, kappa), pd = solve_pointwise(
            model, muscles, alpha.stack()[:, j], grid.element_coords[j])
        assert nu1 == pytest.approx(sol.stretch[j], abs=1e-8)
        assert kappa == pytest.approx(sol.curvature[j], abs=1e-6)
        assert nu2 == 0.0
        assert pd == bool(sol.positive_definite[j])


def test_integrate_configuration_circle_arc(model):
    """Constant curvature integrates to a circular arc of matching radius."""
    n = model.n_elements
    R = 0.08
    kappa = np.full(n, 1.0 / R)
    config = integrate_configuration(model, np.ones(n), np.zeros(n), kappa)
    center = np.array([0.0, R])
    radii = np.linalg.norm(config.positions - center, axis=1)
    assert np.allclose(radii, R, atol=1e-5)
    # total turning angle
    assert config.angles[-1] == pytest.approx(
        (model.rest_length - 0.5 * model.rest_length / n) / R, rel=1e-9)


def test_sensitivity_matches_pointwise_fd(model, muscles):
    rng = np.random.default_rng(41)
    n = model.n_elements
    grid = make_grid(model)
    alpha = ActivationSet.from_array(rng.uniform(0.05, 0.8, (3, n)))
    sol = solve_field(model, muscles, alpha)
    sens = sensitivity_field(model, muscles, sol, alpha)
    delta = 1e-6
    for j in [7, 52, 96]:
        s = grid.element_coords[j]
        for mi in range(3):
            hi = alpha.stack()[:, j].copy()
            lo = hi.copy()
            hi[mi] += delta
            lo[mi] -= delta
            (n_hi, _, k_hi), _ = solve_pointwise(model, muscles, hi, s)
            (n_lo, _, k_lo), _ = solve_pointwise(model, muscles, lo, s)
            fd_nu1 = (n_hi - n_lo) / (2 * delta)
            fd_kap = (k_hi - k_lo) / (2 * delta)
            assert sens[j, mi, 0] == pytest.approx(fd_nu1, rel=1e-4,
                                                   abs=1e-8)
            assert sens[j, mi, 1] == pytest.approx(fd_kap, rel=1e-4,
                                                   abs=1e-6)


def test_tm_sensitivity_sign_at_rest(model, muscles):
    """At zero activation the transverse muscle lengthens the arm; the
    closed-form rate is n_max (A/12) f_l(1) / (EA)."""
    n = model.n_elements
    alpha = ActivationSet.zeros(n)
    sol = solve_field(model, muscles, alpha)
    sens = sensitivity_field(model, muscles, sol, alpha)
    expected = muscles.tm.max_stress * muscles.tm.area_fraction \
        * muscles.fl(1.0) / model.youngs
    assert np.allclose(sens[:, 2, 0], expected, rtol=1e-9)
    assert expected == pytest.approx(0.1094, abs=2e-4)
    assert np.all(sens[:, 2, 0] > 0.0)
