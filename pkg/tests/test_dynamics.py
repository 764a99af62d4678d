"""Time integration tests: fixed points, energy behavior, convergence."""

import numpy as np
import pytest

from octoarm import (
    ActivationSet,
    DynamicState,
    MuscleSet,
    RodModel,
    bent_initial_state,
    simulate,
    step,
    stretched_initial_state,
)
from octoarm.dynamics import energies, potential_gradient, rhs
from octoarm.muscles import muscle_stored_energy
from octoarm.rod import Configuration, compute_strains, make_grid


@pytest.fixture
def model():
    return RodModel(n_elements=20)


@pytest.fixture
def muscles():
    return MuscleSet.default()


def test_rest_is_fixed_point(model, muscles):
    state = DynamicState.rest(model)
    nxt = step(model, muscles, state, ActivationSet.zeros(model.n_elements),
               1e-5)
    assert np.allclose(nxt.config.positions, state.config.positions,
                       atol=1e-12)
    assert np.allclose(nxt.velocity, 0.0, atol=1e-12)
    assert nxt.time == pytest.approx(1e-5)


def test_base_stays_clamped(model, muscles):
    state = bent_initial_state(model, 0.02)
    alpha = ActivationSet(np.full(model.n_elements, 0.8),
                          np.zeros(model.n_elements),
                          np.zeros(model.n_elements))
    for _ in range(50):
        state = step(model, muscles, state, alpha, 1e-5)
    assert np.allclose(state.config.positions[0], 0.0, atol=1e-15)
    assert state.velocity[0, 0] == 0.0 and state.velocity[0, 1] == 0.0
    assert state.angular_velocity[0] == 0.0


def test_muscle_gradient_matches_fd(model, muscles):
    """Configuration-space gradient of the full potential against FD."""
    rng = np.random.default_rng(43)
    n = model.n_elements
    state = bent_initial_state(model, 0.015)
    alpha = ActivationSet.from_array(rng.uniform(0.0, 1.0, (3, n)))
    grad_r, grad_t = potential_gradient(model, muscles, state.config, alpha)
    grid = make_grid(model)

    def V(config):
        w = compute_strains(model, config)
        from octoarm.rod import elastic_energy, kappa_to_elements
        total = elastic_energy(model, w)
        kel = kappa_to_elements(w.curvature)
        for i, spec in enumerate(muscles.specs):
            dens = muscle_stored_energy(spec, muscles.fl,
                                        (w.stretch, w.shear, kel),
                                        grid.area, grid.radius)
            total += float(np.sum(alpha.stack()[i] * dens * grid.ds))
        return total

    h = 1e-7
    for i, c in [(1, 0), (10, 1), (20, 0)]:
        cp = state.config.copy()
        cm = state.config.copy()
        cp.positions[i, c] += h
        cm.positions[i, c] -= h
        fd = (V(cp) - V(cm)) / (2 * h)
        assert grad_r[i, c] == pytest.approx(fd, rel=1e-5, abs=1e-7)
    for j in [0, 9, 19]:
        cp = state.config.copy()
        cm = state.config.copy()
        cp.angles[j] += h
        cm.angles[j] -= h
        fd = (V(cp) - V(cm)) / (2 * h)
        assert grad_t[j] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_rhs_zero_at_rest(model, muscles):
    state = DynamicState.rest(model)
    dp_r, dp_t = rhs(model, muscles, state,
                     ActivationSet.zeros(model.n_elements))
    # roundoff in the linspace node spacing leaves ~1e-15 N residues
    assert np.allclose(dp_r, 0.0, atol=1e-12)
    assert np.allclose(dp_t, 0.0, atol=1e-12)


def test_undamped_energy_conservation(muscles):
    model = RodModel(n_elements=20, damping=0.0)
    state = bent_initial_state(model, 0.01)
    log = simulate(model, muscles, state,
                   ActivationSet.zeros(model.n_elements), 0.02, 1e-5,
                   sample_stride=200)
    H = log.hamiltonian
    assert np.max(np.abs(H - H[0])) < 1e-5 * H[0]


def test_damped_energy_monotone(model, muscles):
    state = stretched_initial_state(model, 0.01)
    log = simulate(model, muscles, state,
                   ActivationSet.zeros(model.n_elements), 0.05, 1e-5,
                   sample_stride=100)
    H = log.hamiltonian
    assert np.all(np.diff(H) <= 1e-8 * H[0])
    assert H[-1] < H[0]


def test_energies_decompose(model, muscles):
    state = bent_initial_state(model, 0.01)
    state.velocity[:, 1] = 0.001
    state.velocity[0] = 0.0
    alpha = ActivationSet.from_array(np.full((3, model.n_elements), 0.3))
    kin, ela, mus = energies(model, muscles, state, alpha)
    assert kin > 0.0 and ela > 0.0 and mus > 0.0
    grid = make_grid(model)
    kin_direct = 0.5 * float(
        np.sum(grid.node_mass[:, None] * state.velocity**2))
    assert kin == pytest.approx(kin_direct, rel=1e-12)


def test_verlet_second_order_convergence(muscles):
    """Halving dt reduces the one-period state error about 4x."""
    model = RodModel(n_elements=10, damping=0.0)
    alpha = ActivationSet.zeros(model.n_elements)
    t_final = 0.004

    def final_tip(dt):
        state = stretched_initial_state(model, 0.005)
        log = simulate(model, muscles, state, alpha, t_final, dt,
                       sample_stride=10**9)
        return log.positions[-1][-1]

    ref = final_tip(2.5e-7)
    e1 = np.linalg.norm(final_tip(4e-6) - ref)
    e2 = np.linalg.norm(final_tip(2e-6) - ref)
    assert e1 / e2 == pytest.approx(4.0, rel=0.35)


def test_simulate_validates_arguments(model, muscles):
    state = DynamicState.rest(model)
    alpha = ActivationSet.zeros(model.n_elements)
    with pytest.raises(ValueError):
        simulate(model, muscles, state, alpha, -1.0, 1e-5)
    with pytest.raises(ValueError):
        simulate(model, muscles, state, alpha, 1.0, 0.0)
    with pytest.raises(ValueError):
        simulate(model, muscles, state, alpha, 1.0, 1e-5, sample_stride=0)


def test_trajectory_csv_roundtrip(tmp_path, model, muscles):
    state = stretched_initial_state(model, 0.005)
    log = simulate(model, muscles, state,
                   ActivationSet.zeros(model.n_elements), 0.001, 1e-5,
                   sample_stride=50)
    path = tmp_path / "traj.csv"
    log.to_csv(path)
    data = np.genfromtxt(path, delimiter=",", names=True)
    n_nodes = model.n_elements + 1
    assert data.shape[0] == len(log.times) * n_nodes
    assert data["x"][n_nodes - 1] == pytest.approx(
        log.positions[0][-1][0], rel=1e-10)
