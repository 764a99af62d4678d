"""Static activation design via forward-backward sweeps.

The upper level is an optimal control problem over arc length: the
equilibrium strains act as state dynamics, obstacle constraints are folded
into augmented states, and a costate sweep supplies the activation
gradient. The backward sweep is the exact discrete adjoint of the forward
(midpoint-rule) integration, so the resulting gradient matches finite
differences of the fully discrete cost.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import EquilibriumSolution, sensitivity_field, solve_field
from .muscles import ActivationSet, MuscleSet
from .rod import RodModel, frame_vectors, make_grid, taper_radius


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float


@dataclass
class TaskSpec:
    """Objective, constraints and optimizer settings for one task."""

    tip_target: tuple[float, float] | None = None
    tip_weight: float = 1.0e5
    grasp_object: Circle | None = None
    grasp_weight: float = 1.0e5
    grasp_window: tuple[float, float] | None = None  # [s1, s2] in meters
    grasp_distance: str = "surface"  # or "centerline"
    obstacles: tuple[Circle, ...] = ()
    obstacle_weights: tuple[float, ...] = ()
    learning_rate: float = 1.0e-8
    max_iters: int = 100_000
    grad_tol: float = 1.0e-6

    def __post_init__(self) -> None:
        if self.tip_target is None and self.grasp_object is None:
            raise ValueError("task needs a tip target or a grasp object")
        if self.tip_weight < 0 or self.grasp_weight < 0:
            raise ValueError("weights must be nonnegative")
        if self.grasp_distance not in ("surface", "centerline"):
            raise ValueError("grasp_distance must be surface or centerline")
        if self.obstacles and len(self.obstacle_weights) != len(self.obstacles):
            raise ValueError("one weight per obstacle required")


@dataclass
class AugmentedState:
    """Forward-sweep result: configuration plus obstacle accumulators."""

    positions: np.ndarray       # (N+1, 2) node positions
    theta_mid: np.ndarray       # (N,) element angles
    qhat: np.ndarray            # (N_obs, N+1) running constraint integrals


@dataclass
class CostateField:
    lambda_r: np.ndarray        # (N+1, 2)
    lambda_theta: np.ndarray    # (N+1,)


@dataclass
class OptimizationReport:
    cost_history: np.ndarray
    final_cost: float
    final_tip_error: float
    max_violation: float
    pd_fraction: float
    iterations: int
    wall_time: float


def tip_cost(q_tip, target) -> float:
    """Half squared distance of the tip position to the target."""
    d = np.asarray(q_tip, float) - np.asarray(target, float)
    return 0.5 * float(d @ d)


def grasp_cost(q_point, obj: Circle, arm_radius, mode: str = "surface"):
    """Distance of the arm to the object boundary at one arc-length point.

    ``surface`` measures surface-to-surface (arm radius included);
    ``centerline`` measures centerline-to-boundary.
    """
    r = np.asarray(q_point, float)
    d = r - np.asarray(obj.center, float)
    dist = np.linalg.norm(d, axis=-1)
    contact = obj.radius + (arm_radius if mode == "surface" else 0.0)
    return np.abs(dist - contact)


def _grasp_grad(r, obj: Circle, arm_radius, mode):
    d = np.asarray(r, float) - np.asarray(obj.center, float)
    dist = np.linalg.norm(d, axis=-1, keepdims=True)
    contact = obj.radius + (arm_radius if mode == "surface" else 0.0)
    gap = dist[..., 0] - np.asarray(contact)
    # Subgradient 0 at the kink and at the degenerate center.
    safe = np.where(dist > 0.0, dist, 1.0)
    return np.sign(gap)[..., None] * d / safe * (dist[..., 0] > 0.0)[..., None]


def obstacle_violation(q_point, obstacle: Circle, arm_radius):
    """max(Psi, 0) with Psi = (phi_obj + phi(s))^2 - |r_obj - r(s)|^2."""
    d = np.asarray(q_point, float) - np.asarray(obstacle.center, float)
    psi = (obstacle.radius + np.asarray(arm_radius)) ** 2 \
        - np.sum(d * d, axis=-1)
    return np.maximum(psi, 0.0)


def _violation_grad(r, obstacle: Circle, arm_radius):
    d = np.asarray(r, float) - np.asarray(obstacle.center, float)
    psi = (obstacle.radius + np.asarray(arm_radius)) ** 2 \
        - np.sum(d * d, axis=-1)
    return np.where((psi > 0.0)[..., None], -2.0 * d, 0.0)


def _grasp_mask(model: RodModel, task: TaskSpec) -> np.ndarray:
    grid = make_grid(model)
    if task.grasp_object is None:
        return np.zeros(model.n_elements)
    if task.grasp_window is None:
        s1, s2 = 0.4 * model.rest_length, model.rest_length
    else:
        s1, s2 = task.grasp_window
    mids = grid.element_coords
    return task.grasp_weight * ((mids >= s1) & (mids <= s2)).astype(float)


def forward_sweep(model: RodModel, solution: EquilibriumSolution,
                  task: TaskSpec) -> AugmentedState:
    """Integrate the kinematics and obstacle accumulators from the base."""
    grid = make_grid(model)
    config = solution.configuration
    r_mid = 0.5 * (config.positions[:-1] + config.positions[1:])
    qhat = np.zeros((len(task.obstacles), model.n_elements + 1))
    for j, obs in enumerate(task.obstacles):
        c = obstacle_violation(r_mid, obs, grid.radius)
        qhat[j, 1:] = np.cumsum(c * grid.ds)
    return AugmentedState(positions=config.positions,
                          theta_mid=config.angles, qhat=qhat)


def _running_cost_gradients(model, task, r_mid):
    """Gradient of the per-element running costs (grasp + weighted obstacle
    accumulators) with respect to the element midpoint positions."""
    grid = make_grid(model)
    M = np.zeros_like(r_mid)
    mu = _grasp_mask(model, task)
    if task.grasp_object is not None:
        M += mu[:, None] * _grasp_grad(r_mid, task.grasp_object, grid.radius,
                                       task.grasp_distance)
    for xi, obs in zip(task.obstacle_weights, task.obstacles):
        M += xi * _violation_grad(r_mid, obs, grid.radius)
    return M * grid.ds


def backward_sweep(model: RodModel, forward: AugmentedState,
                   solution: EquilibriumSolution, task: TaskSpec
                   ) -> CostateField:
    """Exact discrete adjoint of the forward sweep.

    Terminal condition: lambda_r(L0) = -mu_tip (r(L0) - r*), lambda_theta = 0.
    With no running costs the position costates are constant in s.
    """
    grid = make_grid(model)
    n = model.n_elements
    r = forward.positions
    r_mid = 0.5 * (r[:-1] + r[1:])

    g_direct = np.zeros((n + 1, 2))
    if task.tip_target is not None:
        g_direct[n] = task.tip_weight * (r[n] - np.asarray(task.tip_target))
    M = _running_cost_gradients(model, task, r_mid)
    g_direct[:-1] += 0.5 * M
    g_direct[1:] += 0.5 * M
    # Suffix sums propagate the recursion r_{i+1} = r_i + ds * t_i.
    g_r = np.cumsum(g_direct[::-1], axis=0)[::-1]

    a, b = frame_vectors(forward.theta_mid)
    dt_dtheta = solution.stretch[:, None] * b - solution.shear[:, None] * a
    g_theta_direct = np.zeros(n + 1)
    g_theta_direct[:-1] = grid.ds * np.einsum("ij,ij->i", g_r[1:], dt_dtheta)
    g_theta = np.cumsum(g_theta_direct[::-1])[::-1]

    return CostateField(lambda_r=-g_r, lambda_theta=-g_theta)


def activation_gradient(model: RodModel, costate: CostateField,
                        solution: EquilibriumSolution, sens: np.ndarray,
                        activations: ActivationSet, task: TaskSpec
                        ) -> np.ndarray:
    """dH/dalpha per element and muscle, shape (3, N).

    Chains the costates through the kinematics and the equilibrium
    sensitivities; the quadratic control cost contributes -alpha.
    """
    grid = make_grid(model)
    a, b = frame_vectors(solution.configuration.angles)
    dt_dtheta = solution.stretch[:, None] * b - solution.shear[:, None] * a
    lam_r = costate.lambda_r[1:]          # costate above each element
    lam_t = costate.lambda_theta[1:]
    grad = np.empty((3, model.n_elements))
    for m in range(3):
        dnu1 = sens[:, m, 0]
        dkap = sens[:, m, 1]
        term_r = np.einsum("ij,ij->i",
                           lam_r,
                           a * dnu1[:, None]
                           + dt_dtheta * (0.5 * grid.ds * dkap)[:, None])
        grad[m] = term_r + lam_t * dkap
    return grad - activations.stack()


def task_cost(model: RodModel, solution: EquilibriumSolution,
              activations: ActivationSet, task: TaskSpec):
    """(J, tip_error, max_violation); J excludes the obstacle penalty."""
    grid = make_grid(model)
    r = solution.configuration.positions
    r_mid = 0.5 * (r[:-1] + r[1:])
    control = 0.5 * float(np.sum(activations.stack() ** 2) * grid.ds)
    J = control
    tip_error = np.nan
    if task.tip_target is not None:
        tip_error = float(np.linalg.norm(r[-1] - np.asarray(task.tip_target)))
        J += task.tip_weight * tip_cost(r[-1], task.tip_target)
    if task.grasp_object is not None:
        mu = _grasp_mask(model, task)
        J += float(np.sum(mu * grasp_cost(r_mid, task.grasp_object,
                                          grid.radius, task.grasp_distance)
                          * grid.ds))
    max_violation = 0.0
    for obs in task.obstacles:
        max_violation = max(max_violation, float(np.max(
            obstacle_violation(r_mid, obs, grid.radius))))
    return J, tip_error, max_violation


def solve_task(model: RodModel, muscles: MuscleSet, task: TaskSpec,
               initial: ActivationSet | None = None,
               log_stream=None, log_every: int = 1):
    """Projected gradient ascent on the control Hamiltonian (the bilevel
    forward-backward iteration).

    Returns (activations, report). ``log_stream`` receives one JSON line per
    ``log_every`` iterations with (iter, J, tip_error, max_violation).
    """
    t0 = time.perf_counter()
    n = model.n_elements
    alpha = (initial.copy() if initial is not None
             else ActivationSet.zeros(n))
    eta = task.learning_rate
    warm = None
    history = []
    grad = None
    accepted_aug = np.inf
    k = 0

    # Adaptive step: a trial point whose augmented cost increases is
    # rejected (revert, halve the step); accepted steps slowly regrow the
    # step so an early transient cannot freeze the iteration.
    for k in range(task.max_iters):
        trial = alpha if grad is None else ActivationSet.from_array(
            np.clip(alpha.stack() + eta * grad, 0.0, 1.0))
        solution = solve_field(model, muscles, trial, warm=warm)
        J, tip_err, max_viol = task_cost(model, solution, trial, task)
        forward = forward_sweep(model, solution, task)
        aug = J + sum(xi * forward.qhat[j, -1]
                      for j, xi in enumerate(task.obstacle_weights))
        history.append(J)
        if log_stream is not None and (k % log_every == 0):
            log_stream.write(json.dumps(
                {"iter": k, "J": J, "tip_error": tip_err,
                 "max_violation": max_viol, "eta": eta}) + "\n")

        if aug > accepted_aug * (1.0 + 1e-12):
            eta *= 0.5
            continue
        alpha = trial
        accepted_aug = aug
        warm = (solution.stretch, solution.curvature)
        eta = min(eta * 1.05, 1e6 * task.learning_rate)

        costate = backward_sweep(model, forward, solution, task)
        sens = sensitivity_field(model, muscles, solution, alpha)
        grad = activation_gradient(model, costate, solution, sens, alpha,
                                   task)
        stacked = alpha.stack()
        projected = np.where(
            ((stacked >= 1.0) & (grad > 0.0))
            | ((stacked <= 0.0) & (grad < 0.0)),
            0.0, grad)
        if np.max(np.abs(projected)) < task.grad_tol:
            break

    solution = solve_field(model, muscles, alpha, warm=warm)
    J, tip_err, max_viol = task_cost(model, solution, alpha, task)
    if log_stream is not None:
        log_stream.write(json.dumps(
            {"iter": k + 1, "J": J, "tip_error": tip_err,
             "max_violation": max_viol}) + "\n")
    report = OptimizationReport(
        cost_history=np.asarray(history),
        final_cost=J,
        final_tip_error=tip_err,
        max_violation=max_viol,
        pd_fraction=float(np.mean(solution.positive_definite)),
        iterations=k + 1,
        wall_time=time.perf_counter() - t0,
    )
    return alpha, report
