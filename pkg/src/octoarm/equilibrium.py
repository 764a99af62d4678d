"""Static equilibria under constant activations (fixed-free boundary
conditions).

With the base clamped and the tip free the costate of the static problem
vanishes identically, so the equilibrium strains satisfy the pointwise
stationarity condition P(w; alpha) = 0. The shear component decouples
(P2 = GA*nu2 has the unique root 0), leaving a 2x2 root-finding problem in
(nu1, kappa) per element, solved by damped Newton with multistart and
warm-starting along the arm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .muscles import ActivationSet, MuscleSet, muscle_energy_gradients
from .rod import Configuration, RodModel, frame_vectors, make_grid, taper_radius


class EquilibriumError(RuntimeError):
    """Raised when the pointwise solver fails to converge; carries the best
    residual achieved."""

    def __init__(self, best_residual: float):
        super().__init__(
            f"pointwise equilibrium solve did not converge "
            f"(best residual {best_residual:.3e})")
        self.best_residual = best_residual


@dataclass
class EquilibriumSolution:
    """Equilibrium strains, reconstructed configuration and certificates."""

    stretch: np.ndarray        # (N,) nu1 at elements
    shear: np.ndarray          # (N,) identically zero
    curvature: np.ndarray      # (N,) kappa at elements
    configuration: Configuration
    residual: np.ndarray       # (N,) nondimensional residual inf-norm
    positive_definite: np.ndarray  # (N,) bool Hessian PD flags

    def to_csv(self, path, element_coords) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("s,nu1,kappa,residual,pd\n")
            for s, n1, k, r, pd in zip(element_coords, self.stretch,
                                       self.curvature, self.residual,
                                       self.positive_definite):
                fh.write(f"{s:.12g},{n1:.12g},{k:.12g},{r:.3e},{int(pd)}\n")


def _pq_reduced(model, muscles, nu1, kappa, alpha, area, phi):
    """Scaled residual (2, N) and its Jacobian (2, 2, N) in (nu1, kappa)."""
    nu1o = model.rest_strains[0]
    kappao = model.rest_strains[2]
    second_moment = area**2 / (4.0 * np.pi)
    d_nu1, d_kappa = muscle_energy_gradients(muscles, nu1, kappa, area, phi,
                                             nu1o)
    p1 = model.youngs * area * (nu1 - nu1o) + np.sum(alpha * d_nu1, axis=0)
    p3 = model.youngs * second_moment * (kappa - kappao) \
        + np.sum(alpha * d_kappa, axis=0)

    offset = muscles.lm_top.offset_fraction * phi
    c_top = muscles.lm_top.max_stress * muscles.lm_top.area_fraction * area
    c_bot = muscles.lm_bottom.max_stress * muscles.lm_bottom.area_fraction \
        * area
    c_tm = muscles.tm.max_stress * muscles.tm.area_fraction * area
    fp_top = muscles.fl.derivative(nu1 - offset * kappa)
    fp_bot = muscles.fl.derivative(nu1 + offset * kappa)
    fp_tm = muscles.fl.derivative(2.0 - nu1 / nu1o)
    a_top = alpha[0] * c_top * fp_top
    a_bot = alpha[1] * c_bot * fp_bot
    a_tm = alpha[2] * c_tm * fp_tm / nu1o**2

    q11 = model.youngs * area + a_top + a_bot + a_tm
    q13 = offset * (a_bot - a_top)
    q33 = model.youngs * second_moment + offset**2 * (a_top + a_bot)

    # Nondimensionalization: P1 by EA, P3 by EI/L0.
    s1 = 1.0 / (model.youngs * area)
    s3 = model.rest_length / (model.youngs * second_moment)
    R = np.stack([p1 * s1, p3 * s3])
    J = np.stack([
        np.stack([q11 * s1, q13 * s1]),
        np.stack([q13 * s3, q33 * s3]),
    ])
    return R, J


def _energy_density(model, muscles, nu1, kappa, alpha, area, phi):
    from .muscles import muscle_stored_energy

    nu1o, _, kappao = model.rest_strains
    second_moment = area**2 / (4.0 * np.pi)
    W = 0.5 * model.youngs * area * (nu1 - nu1o) ** 2 \
        + 0.5 * model.youngs * second_moment * (kappa - kappao) ** 2
    for i, spec in enumerate(muscles.specs):
        W = W + alpha[i] * muscle_stored_energy(
            spec, muscles.fl, (nu1, np.zeros_like(nu1), kappa), area, phi,
            nu1o)
    return W


def _newton(model, muscles, alpha, area, phi, nu1_0, kappa_0,
            tol=1e-10, max_iter=100):
    """Vectorized damped Newton on the reduced system; returns solution
    arrays plus convergence flags and final residual norms."""
    nu1 = np.array(nu1_0, dtype=float)
    kappa = np.array(kappa_0, dtype=float)
    R, J = _pq_reduced(model, muscles, nu1, kappa, alpha, area, phi)
    rnorm = np.max(np.abs(R), axis=0)
    for _ in range(max_iter):
        active = rnorm > tol
        if not np.any(active):
            break
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        safe = np.where(np.abs(det) > 1e-300, det, 1.0)
        dx1 = -(J[1, 1] * R[0] - J[0, 1] * R[1]) / safe
        dx3 = -(J[0, 0] * R[1] - J[1, 0] * R[0]) / safe
        bad = np.abs(det) <= 1e-300
        # Singular Jacobian: fall back to a small gradient-ish nudge.
        dx1 = np.where(bad, -R[0], dx1)
        dx3 = np.where(bad, -R[1], dx3)

        t = np.where(active, 1.0, 0.0)
        improved = ~active
        for _ in range(40):
            nu1_try = nu1 + t * dx1
            kappa_try = kappa + t * dx3
            ok = nu1_try > 1e-3
            R_try, J_try = _pq_reduced(model, muscles,
                                       np.where(ok, nu1_try, nu1),
                                       np.where(ok, kappa_try, kappa),
                                       alpha, area, phi)
            rnorm_try = np.max(np.abs(R_try), axis=0)
            good = ok & (rnorm_try <= (1.0 - 1e-4 * t) * rnorm) & active
            nu1 = np.where(good, nu1_try, nu1)
            kappa = np.where(good, kappa_try, kappa)
            improved |= good
            t = np.where(good, 0.0, 0.5 * t)
            if np.all(improved):
                break
        # Stuck elements take the (possibly non-monotone) full step so the
        # next multistart still has a chance.
        stuck = active & ~improved
        nu1 = np.where(stuck, np.maximum(nu1 + dx1, 1e-3), nu1)
        kappa = np.where(stuck, kappa + dx3, kappa)
        R, J = _pq_reduced(model, muscles, nu1, kappa, alpha, area, phi)
        rnorm = np.max(np.abs(R), axis=0)
    return nu1, kappa, rnorm <= tol, rnorm


def solve_field(model: RodModel, muscles: MuscleSet,
                activations: ActivationSet, tol: float = 1e-10,
                warm: tuple[np.ndarray, np.ndarray] | None = None
                ) -> EquilibriumSolution:
    """Solve P(w; alpha) = 0 at every element midpoint.

    Multistart: rest strains, an optional warm start, and two spread-out
    axial seeds (the compact support of the force-length curve can create
    multiple roots). Among converged roots the one with the smallest total
    energy density is kept, ties broken by proximity to the rest strains.
    """
    grid = make_grid(model)
    alpha = activations.stack()
    area, phi = grid.area, grid.radius
    n = model.n_elements
    nu1o, _, kappao = model.rest_strains

    # A warm start close to a root tracks the continuation branch; accept it
    # directly and fall back to the full multistart only on failure.
    if warm is not None:
        nu1, kappa, conv, rnorm = _newton(
            model, muscles, alpha, area, phi,
            np.asarray(warm[0], float), np.asarray(warm[1], float), tol=tol)
        if np.all(conv):
            return _build_solution(model, muscles, alpha, area, phi,
                                   nu1, kappa, n)

    starts = [(np.full(n, nu1o), np.full(n, kappao)),
              (np.full(n, 0.85 * nu1o), np.full(n, kappao)),
              (np.full(n, 1.25 * nu1o), np.full(n, kappao))]
    if warm is not None:
        starts.insert(0, (np.asarray(warm[0], float),
                          np.asarray(warm[1], float)))

    best_nu1 = np.full(n, np.nan)
    best_kappa = np.full(n, np.nan)
    best_W = np.full(n, np.inf)
    best_dist = np.full(n, np.inf)
    any_conv = np.zeros(n, dtype=bool)
    best_res = np.full(n, np.inf)

    for nu1_0, kappa_0 in starts:
        nu1, kappa, conv, rnorm = _newton(model, muscles, alpha, area, phi,
                                          nu1_0, kappa_0, tol=tol)
        best_res = np.minimum(best_res, rnorm)
        W = _energy_density(model, muscles, nu1, kappa, alpha, area, phi)
        dist = np.hypot(nu1 - nu1o, (kappa - kappao) * model.rest_length)
        margin = np.where(np.isfinite(best_W), np.abs(best_W), 0.0)
        threshold = best_W - 1e-15 * margin
        better = conv & (
            ~any_conv
            | (W < threshold)
            | (np.isclose(W, best_W, rtol=1e-12, atol=0.0)
               & (dist < best_dist))
        )
        best_nu1 = np.where(better, nu1, best_nu1)
        best_kappa = np.where(better, kappa, best_kappa)
        best_W = np.where(better, W, best_W)
        best_dist = np.where(better, dist, best_dist)
        any_conv |= conv

    if not np.all(any_conv):
        raise EquilibriumError(float(np.max(best_res[~any_conv])))

    return _build_solution(model, muscles, alpha, area, phi, best_nu1,
                           best_kappa, n)


def _build_solution(model, muscles, alpha, area, phi, nu1, kappa, n
                    ) -> EquilibriumSolution:
    R, _ = _pq_reduced(model, muscles, nu1, kappa, alpha, area, phi)
    residual = np.max(np.abs(R), axis=0)
    pd = _pd_flags(model, muscles, nu1, kappa, alpha, area, phi)
    config = integrate_configuration(model, nu1, np.zeros(n), kappa)
    return EquilibriumSolution(
        stretch=nu1,
        shear=np.zeros(n),
        curvature=kappa,
        configuration=config,
        residual=residual,
        positive_definite=pd,
    )


def _pd_flags(model, muscles, nu1, kappa, alpha, area, phi):
    """Positive definiteness of the full 3x3 Hessian (Q22 = GA > 0 always;
    the (nu1, kappa) block is checked by leading minors)."""
    _, J = _pq_reduced(model, muscles, nu1, kappa, alpha, area, phi)
    s1 = 1.0 / (model.youngs * area)
    s3 = model.rest_length / (model.youngs * (area**2 / (4.0 * np.pi)))
    q11, q13, q33 = J[0, 0] / s1, J[0, 1] / s1, J[1, 1] / s3
    det = q11 * q33 - q13**2
    return (q11 > 0.0) & (det > 0.0)


def solve_pointwise(model: RodModel, muscles: MuscleSet, alpha_point, s: float,
                    tol: float = 1e-10):
    """Pointwise equilibrium at one arc-length location.

    Returns ((nu1, 0.0, kappa), pd_flag). Non-PD stationary points are
    reported, not rejected.
    """
    alpha = np.asarray(alpha_point, float).reshape(3, 1)
    phi = np.asarray([taper_radius(model, s)])
    area = np.pi * phi**2
    nu1o, _, kappao = model.rest_strains
    starts = [(nu1o, kappao), (0.85 * nu1o, kappao), (1.25 * nu1o, kappao)]
    best = None
    best_res = np.inf
    for nu1_0, kappa_0 in starts:
        nu1, kappa, conv, rnorm = _newton(
            model, muscles, alpha, area, phi,
            np.array([nu1_0]), np.array([kappa_0]), tol=tol)
        best_res = min(best_res, float(rnorm[0]))
        if conv[0]:
            W = float(_energy_density(model, muscles, nu1, kappa, alpha,
                                      area, phi)[0])
            dist = abs(nu1[0] - nu1o) + abs(kappa[0] - kappao)
            key = (W, dist)
            if best is None or key < best[0]:
                best = (key, float(nu1[0]), float(kappa[0]))
    if best is None:
        raise EquilibriumError(best_res)
    _, nu1_star, kappa_star = best
    pd = bool(_pd_flags(model, muscles, np.array([nu1_star]),
                        np.array([kappa_star]), alpha, area, phi)[0])
    return (nu1_star, 0.0, kappa_star), pd


def integrate_configuration(model: RodModel, nu1, nu2, kappa
                            ) -> Configuration:
    """Midpoint-rule kinematic integration of per-element strains from the
    clamped base q(0) = 0."""
    grid = make_grid(model)
    ds = grid.ds
    theta_nodes = np.concatenate([[0.0], np.cumsum(np.asarray(kappa) * ds)])
    theta_mid = 0.5 * (theta_nodes[:-1] + theta_nodes[1:])
    a, b = frame_vectors(theta_mid)
    steps = ds * (np.asarray(nu1)[:, None] * a + np.asarray(nu2)[:, None] * b)
    positions = np.vstack([[0.0, 0.0], np.cumsum(steps, axis=0)])
    return Configuration(positions=positions, angles=theta_mid)


def equilibrium_configuration(model: RodModel, solution: EquilibriumSolution
                              ) -> Configuration:
    return integrate_configuration(model, solution.stretch, solution.shear,
                                   solution.curvature)


def sensitivity_field(model: RodModel, muscles: MuscleSet,
                      solution: EquilibriumSolution,
                      activations: ActivationSet) -> np.ndarray:
    """d(nu1, kappa)/d(alpha^m) per element by implicit differentiation.

    Returns shape (N, 3, 2) ordered (lm_top, lm_bottom, tm) x (nu1, kappa).
    Elements with a non-PD (or singular) Hessian fall back to central finite
    differences of the pointwise solver.
    """
    grid = make_grid(model)
    alpha = activations.stack()
    area, phi = grid.area, grid.radius
    nu1, kappa = solution.stretch, solution.curvature
    nu1o = model.rest_strains[0]

    d_nu1, d_kappa = muscle_energy_gradients(muscles, nu1, kappa, area, phi,
                                             nu1o)  # (3, N) each
    _, J = _pq_reduced(model, muscles, nu1, kappa, alpha, area, phi)
    # Undo the residual scaling to recover the raw reduced Hessian.
    s1 = 1.0 / (model.youngs * area)
    s3 = model.rest_length / (model.youngs * (area**2 / (4.0 * np.pi)))
    q11, q13, q33 = J[0, 0] / s1, J[0, 1] / s1, J[1, 1] / s3
    det = q11 * q33 - q13**2

    sens = np.zeros((model.n_elements, 3, 2))
    ok = solution.positive_definite & (np.abs(det) > 0.0)
    safe = np.where(ok, det, 1.0)
    for m in range(3):
        rhs1, rhs3 = -d_nu1[m], -d_kappa[m]
        sens[:, m, 0] = np.where(ok, (q33 * rhs1 - q13 * rhs3) / safe, 0.0)
        sens[:, m, 1] = np.where(ok, (q11 * rhs3 - q13 * rhs1) / safe, 0.0)

    if not np.all(ok):
        delta = 1e-6
        for j in np.flatnonzero(~ok):
            s = grid.element_coords[j]
            for m in range(3):
                a_hi = alpha[:, j].copy()
                a_lo = alpha[:, j].copy()
                a_hi[m] = min(a_hi[m] + delta, 1.0)
                a_lo[m] = max(a_lo[m] - delta, 0.0)
                span = a_hi[m] - a_lo[m]
                (n_hi, _, k_hi), _ = solve_pointwise(model, muscles, a_hi, s)
                (n_lo, _, k_lo), _ = solve_pointwise(model, muscles, a_lo, s)
                sens[j, m, 0] = (n_hi - n_lo) / span
                sens[j, m, 1] = (k_hi - k_lo) / span
    return sens
