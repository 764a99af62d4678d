"""Planar Cosserat rod: tapered geometry, staggered-grid discretization,
kinematics, and passive elastic energetics.

Discretization convention (staggered grid):
  * positions/velocities live at the N+1 nodes,
  * angle, stretch and shear live at the N elements,
  * curvature lives at the N-1 interior (Voronoi) points.

Discrete generalized forces are defined as exact gradients of the discrete
energy so that energy-decay statements hold at the discrete level.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class InvalidConfigurationError(ValueError):
    """Raised for degenerate or inverted rod configurations."""


@dataclass(frozen=True)
class RodModel:
    """Material and geometric description of the tapered planar rod.

    Defaults are the octopus-arm benchmark values: a 20 cm arm tapering
    from 1.2 cm to 0.12 cm radius, E = 10 kPa, G = 40/9 kPa.
    """

    rest_length: float = 0.20
    base_radius: float = 0.012
    tip_radius: float = 0.0012
    youngs: float = 10.0e3
    shear_mod: float = 40.0e3 / 9.0
    density: float = 1050.0
    damping: float = 0.02
    rest_strains: tuple[float, float, float] = (1.0, 0.0, 0.0)
    n_elements: int = 100

    def __post_init__(self) -> None:
        if self.rest_length <= 0:
            raise ValueError("rest_length must be positive")
        if not self.base_radius >= self.tip_radius > 0:
            raise ValueError("radii must satisfy base_radius >= tip_radius > 0")
        if self.youngs <= 0 or self.shear_mod <= 0:
            raise ValueError("elastic moduli must be positive")
        if self.density <= 0:
            raise ValueError("density must be positive")
        if self.damping < 0:
            raise ValueError("damping must be nonnegative")
        if self.n_elements < 2:
            raise ValueError("need at least 2 elements")


def taper_radius(model: RodModel, s):
    """Linearly tapered radius profile, phi(0)=base, phi(L0)=tip.

    ``s`` may be a scalar or array of arc-length coordinates in [0, L0].
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0) or np.any(s > model.rest_length):
        raise ValueError("arc length out of [0, L0]")
    L0 = model.rest_length
    out = (model.tip_radius * s + model.base_radius * (L0 - s)) / L0
    return out if out.ndim else float(out)


@dataclass
class Grid:
    """Precomputed discretization data for a rod model."""

    node_coords: np.ndarray        # (N+1,)
    element_coords: np.ndarray     # (N,) element midpoints
    ds: float                      # uniform element length
    voronoi: np.ndarray            # (N-1,) interior spacings
    radius: np.ndarray             # (N,) phi at element midpoints
    area: np.ndarray               # (N,)
    second_moment: np.ndarray      # (N,)
    voronoi_second_moment: np.ndarray  # (N-1,) averaged to interior points
    node_mass: np.ndarray          # (N+1,) lumped translational mass [kg]
    element_inertia: np.ndarray    # (N,) lumped rotational inertia [kg m^2]


@lru_cache(maxsize=32)
def make_grid(model: RodModel) -> Grid:
    n = model.n_elements
    ds = model.rest_length / n
    nodes = np.linspace(0.0, model.rest_length, n + 1)
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    radius = taper_radius(model, mids)
    area = np.pi * radius**2
    second_moment = area**2 / (4.0 * np.pi)
    voronoi = np.full(n - 1, ds)
    voronoi_second_moment = 0.5 * (second_moment[:-1] + second_moment[1:])
    node_mass = np.zeros(n + 1)
    half = 0.5 * model.density * area * ds
    node_mass[:-1] += half
    node_mass[1:] += half
    element_inertia = model.density * second_moment * ds
    return Grid(
        node_coords=nodes,
        element_coords=mids,
        ds=ds,
        voronoi=voronoi,
        radius=radius,
        area=area,
        second_moment=second_moment,
        voronoi_second_moment=voronoi_second_moment,
        node_mass=node_mass,
        element_inertia=element_inertia,
    )


@dataclass
class Configuration:
    """Discrete configuration: node positions and element angles."""

    positions: np.ndarray  # (N+1, 2)
    angles: np.ndarray     # (N,)

    @classmethod
    def rest(cls, model: RodModel) -> "Configuration":
        grid = make_grid(model)
        pos = np.zeros((model.n_elements + 1, 2))
        pos[:, 0] = grid.node_coords
        return cls(positions=pos, angles=np.zeros(model.n_elements))

    def copy(self) -> "Configuration":
        return Configuration(self.positions.copy(), self.angles.copy())


@dataclass
class StrainField:
    """Pointwise deformations: stretch/shear at elements, curvature at
    interior points."""

    stretch: np.ndarray    # (N,)
    shear: np.ndarray      # (N,)
    curvature: np.ndarray  # (N-1,)


def frame_vectors(theta):
    """Material frame {a, b} for angle(s) theta; shapes (..., 2)."""
    c, s = np.cos(theta), np.sin(theta)
    a = np.stack([c, s], axis=-1)
    b = np.stack([-s, c], axis=-1)
    return a, b


def kinematic_rhs(q_point, w_point):
    """Arc-length derivative of (r, theta) for pointwise strains.

    Returns ((dx, dy), dtheta) = (nu1*a + nu2*b, kappa).
    """
    (_, theta) = q_point
    nu1, nu2, kappa = w_point
    a, b = frame_vectors(theta)
    dr = nu1 * a + nu2 * b
    return (dr[..., 0], dr[..., 1]), kappa


def compute_strains(model: RodModel, config: Configuration) -> StrainField:
    """Invert the discrete kinematics: strains from a configuration."""
    grid = make_grid(model)
    dr = np.diff(config.positions, axis=0) / grid.ds
    if not np.all(np.isfinite(dr)):
        raise InvalidConfigurationError("non-finite configuration")
    a, b = frame_vectors(config.angles)
    nu1 = np.einsum("ij,ij->i", dr, a)
    nu2 = np.einsum("ij,ij->i", dr, b)
    if np.any(nu1 <= 0.0):
        raise InvalidConfigurationError("inverted element (stretch <= 0)")
    kappa = np.diff(config.angles) / grid.voronoi
    return StrainField(stretch=nu1, shear=nu2, curvature=kappa)


def kappa_to_elements(kappa_interior: np.ndarray) -> np.ndarray:
    """Extend interior curvature to elements: interior elements average the
    two neighbouring values, end elements copy the nearest interior value."""
    k = np.asarray(kappa_interior)
    out = np.empty(k.shape[0] + 1)
    out[0] = k[0]
    out[-1] = k[-1]
    out[1:-1] = 0.5 * (k[:-1] + k[1:])
    return out


def kappa_to_elements_adjoint(weights_elements: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`kappa_to_elements` (transpose of the linear map)."""
    chi = np.asarray(weights_elements)
    d = 0.5 * (chi[:-1] + chi[1:])
    d[0] += 0.5 * chi[0]
    d[-1] += 0.5 * chi[-1]
    return d


def elastic_energy(model: RodModel, w: StrainField) -> float:
    """Quadratic stored elastic energy of the discretized rod [J]."""
    grid = make_grid(model)
    nu1o, nu2o, kappao = model.rest_strains
    stretch_term = model.youngs * grid.area * (w.stretch - nu1o) ** 2
    shear_term = model.shear_mod * grid.area * (w.shear - nu2o) ** 2
    bend_term = (
        model.youngs * grid.voronoi_second_moment * (w.curvature - kappao) ** 2
    )
    return float(
        0.5 * np.sum((stretch_term + shear_term) * grid.ds)
        + 0.5 * np.sum(bend_term * grid.voronoi)
    )


def elastic_internal_loads(model: RodModel, w_point, s):
    """Linear stress-strain loads (n1, n2, m) at arc length s."""
    nu1, nu2, kappa = w_point
    nu1o, nu2o, kappao = model.rest_strains
    phi = taper_radius(model, s)
    area = np.pi * phi**2
    second_moment = area**2 / (4.0 * np.pi)
    n1 = model.youngs * area * (nu1 - nu1o)
    n2 = model.shear_mod * area * (nu2 - nu2o)
    m = model.youngs * second_moment * (kappa - kappao)
    return n1, n2, m


def config_gradient_from_loads(
    grid: Grid,
    config: Configuration,
    w: StrainField,
    n1: np.ndarray,
    n2: np.ndarray,
    dV_dkappa: np.ndarray,
):
    """Chain rule from per-element loads to configuration-space gradient.

    ``n1``/``n2`` are dW/dnu1, dW/dnu2 per element; ``dV_dkappa`` is the full
    derivative of the discrete energy with respect to interior curvatures.
    Returns (dV/dr at nodes, dV/dtheta at elements).
    """
    a, b = frame_vectors(config.angles)
    f = n1[:, None] * a + n2[:, None] * b
    grad_r = np.zeros((grid.node_coords.shape[0], 2))
    grad_r[1:] += f
    grad_r[:-1] -= f
    grad_theta = (n1 * w.shear - n2 * w.stretch) * grid.ds
    dk = dV_dkappa / grid.voronoi
    grad_theta[1:] += dk
    grad_theta[:-1] -= dk
    return grad_r, grad_theta


def elastic_config_gradient(model: RodModel, config: Configuration,
                            w: StrainField | None = None):
    """Gradient of the discrete elastic energy w.r.t. (r_i, theta_j)."""
    grid = make_grid(model)
    if w is None:
        w = compute_strains(model, config)
    nu1o, nu2o, kappao = model.rest_strains
    n1 = model.youngs * grid.area * (w.stretch - nu1o)
    n2 = model.shear_mod * grid.area * (w.shear - nu2o)
    dV_dkappa = (
        model.youngs * grid.voronoi_second_moment * (w.curvature - kappao)
        * grid.voronoi
    )
    return config_gradient_from_loads(grid, config, w, n1, n2, dV_dkappa)


def elastic_generalized_force(model: RodModel, config: Configuration,
                              w: StrainField | None = None):
    """Conservative force/couple field -dV^e/dq on the discrete DOFs."""
    grad_r, grad_theta = elastic_config_gradient(model, config, w)
    return -grad_r, -grad_theta
