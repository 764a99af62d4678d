"""Hill-type muscle actuation: force-length model, per-muscle strain, loads,
stored-energy functions, and the aggregate potential density W with its
gradient P and Hessian Q.

Muscle kinds and geometry (planar arm):
  * ``lm_top`` / ``lm_bottom``: longitudinal muscles offset a distance
    ``offset_fraction * phi(s)`` above/below the centerline; they contract
    along the axis and bend the rod through their offset couple.
  * ``tm``: transverse muscle at the centerline; its contraction lengthens
    the arm (constant-volume effect), modeled with an inverted strain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .rod import RodModel, taper_radius

KINDS = ("lm_top", "lm_bottom", "tm")


@dataclass(frozen=True)
class ForceLengthModel:
    """Cubic force-length curve with compact support, clamped at zero.

    The fitted cubic dips slightly below zero near the upper support edge;
    values are clamped to keep the curve nonnegative, and the derivative is
    taken on the unclamped side of each kink (right side at the lower edge,
    zero on the clamped side).
    """

    coeffs: tuple[float, float, float, float] = (3.06, -13.64, 18.01, -6.44)
    support: tuple[float, float] = (0.6, 1.6)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        lo, hi = self.support
        poly = np.polyval(self.coeffs, z)
        out = np.where((z >= lo) & (z <= hi), np.maximum(poly, 0.0), 0.0)
        return out if out.ndim else float(out)

    @cached_property
    def _deriv_coeffs(self) -> np.ndarray:
        return np.polyder(np.asarray(self.coeffs, dtype=float))

    def derivative(self, z):
        """One-sided derivative of the clamped curve (zero where clamped)."""
        z = np.asarray(z, dtype=float)
        lo, hi = self.support
        poly = np.polyval(self.coeffs, z)
        dpoly = np.polyval(self._deriv_coeffs, z)
        active = (z >= lo) & (z <= hi) & (poly > 0.0)
        out = np.where(active, dpoly, 0.0)
        return out if out.ndim else float(out)

    @cached_property
    def _integral_pieces(self):
        # Breakpoints where the clamped integrand can switch on/off:
        # support edges plus real roots of the cubic inside the support.
        lo, hi = self.support
        roots = np.roots(self.coeffs)
        real = sorted(
            float(r.real)
            for r in roots
            if abs(r.imag) < 1e-12 and lo < r.real < hi
        )
        breaks = np.array([lo, *real, hi])
        anti = np.polyint(np.asarray(self.coeffs, dtype=float))
        # Positive-part mask per subinterval, decided at the midpoint.
        mids = 0.5 * (breaks[:-1] + breaks[1:])
        pos = np.polyval(self.coeffs, mids) > 0.0
        # Cumulative integral of the clamped curve at each breakpoint.
        seg = np.where(
            pos,
            np.polyval(anti, breaks[1:]) - np.polyval(anti, breaks[:-1]),
            0.0,
        )
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        return breaks, pos, cum, anti

    def integral(self, z):
        """F_l(z) = integral of the clamped force-length curve from 0 to z."""
        z = np.asarray(z, dtype=float)
        breaks, pos, cum, anti = self._integral_pieces
        idx = np.clip(np.searchsorted(breaks, z, side="right") - 1, 0,
                      len(breaks) - 2)
        within = np.where(
            pos[idx],
            np.polyval(anti, np.clip(z, breaks[0], breaks[-1]))
            - np.polyval(anti, breaks[idx]),
            0.0,
        )
        out = np.where(z <= breaks[0], 0.0,
                       np.where(z >= breaks[-1], cum[-1], cum[idx] + within))
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class MuscleSpec:
    """Geometry and strength of one muscle group."""

    kind: str
    max_stress: float        # [Pa]
    area_fraction: float     # muscle area as a fraction of A(s)
    offset_fraction: float   # offset as a fraction of phi(s); 0 for TM

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown muscle kind {self.kind!r}")
        if self.max_stress <= 0 or self.area_fraction <= 0:
            raise ValueError("max_stress and area_fraction must be positive")
        if self.offset_fraction < 0:
            raise ValueError("offset_fraction must be nonnegative")


def default_muscle_specs() -> tuple[MuscleSpec, MuscleSpec, MuscleSpec]:
    """Benchmark values: LM at 19.89 kPa, A/9, offset 2/3; TM at 13.26 kPa,
    A/12, on the centerline."""
    lm = dict(max_stress=19.89e3, area_fraction=1.0 / 9.0,
              offset_fraction=2.0 / 3.0)
    tm = dict(max_stress=13.26e3, area_fraction=1.0 / 12.0,
              offset_fraction=0.0)
    return (
        MuscleSpec(kind="lm_top", **lm),
        MuscleSpec(kind="lm_bottom", **lm),
        MuscleSpec(kind="tm", **tm),
    )


@dataclass(frozen=True)
class MuscleSet:
    """The three muscle groups plus their shared force-length curve."""

    lm_top: MuscleSpec
    lm_bottom: MuscleSpec
    tm: MuscleSpec
    fl: ForceLengthModel = field(default_factory=ForceLengthModel)

    @classmethod
    def default(cls) -> "MuscleSet":
        top, bottom, tm = default_muscle_specs()
        return cls(lm_top=top, lm_bottom=bottom, tm=tm)

    @property
    def specs(self) -> tuple[MuscleSpec, MuscleSpec, MuscleSpec]:
        return (self.lm_top, self.lm_bottom, self.tm)


@dataclass
class ActivationSet:
    """Per-element activation profiles for the three muscle groups."""

    lm_top: np.ndarray
    lm_bottom: np.ndarray
    tm: np.ndarray

    def __post_init__(self) -> None:
        for name in KINDS:
            arr = np.asarray(getattr(self, name), dtype=float)
            if np.any(arr < 0.0) or np.any(arr > 1.0):
                raise ValueError(f"activation {name} outside [0, 1]")
            setattr(self, name, arr)

    @classmethod
    def zeros(cls, n: int) -> "ActivationSet":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ActivationSet":
        """Build from a (3, N) array ordered (lm_top, lm_bottom, tm)."""
        return cls(arr[0], arr[1], arr[2])

    def stack(self) -> np.ndarray:
        return np.stack([self.lm_top, self.lm_bottom, self.tm])

    def copy(self) -> "ActivationSet":
        return ActivationSet(self.lm_top.copy(), self.lm_bottom.copy(),
                             self.tm.copy())


def muscle_strain(kind: str, w_point, phi, rest_stretch: float = 1.0):
    """Local muscle stretch as a function of the rod strains."""
    nu1, _, kappa = w_point
    if kind == "lm_top":
        return nu1 - self_offset(kind, phi) * kappa
    if kind == "lm_bottom":
        return nu1 + self_offset(kind, phi) * kappa
    if kind == "tm":
        return 2.0 - nu1 / rest_stretch
    raise ValueError(f"unknown muscle kind {kind!r}")


def self_offset(kind: str, phi):
    """Off-center distance for the default geometry (2/3 of the radius for
    longitudinal muscles, zero for the transverse muscle)."""
    if kind == "tm":
        return 0.0 if np.isscalar(phi) else np.zeros_like(phi)
    return 2.0 * np.asarray(phi) / 3.0


def _spec_strain(spec: MuscleSpec, nu1, kappa, phi, rest_stretch=1.0):
    offset = spec.offset_fraction * np.asarray(phi, dtype=float)
    if spec.kind == "lm_top":
        return nu1 - offset * kappa
    if spec.kind == "lm_bottom":
        return nu1 + offset * kappa
    return 2.0 - nu1 / rest_stretch


def muscle_loads(spec: MuscleSpec, fl: ForceLengthModel, w_point, phi, area,
                 u, rest_stretch: float = 1.0):
    """Internal loads (n1, n2, m) produced by one muscle at activation u."""
    nu1, _, kappa = w_point
    nu_m = _spec_strain(spec, nu1, kappa, phi, rest_stretch)
    mag = spec.max_stress * spec.area_fraction * np.asarray(area) * fl(nu_m) * u
    offset = spec.offset_fraction * np.asarray(phi)
    if spec.kind == "lm_top":
        return mag, 0.0 * mag, -offset * mag
    if spec.kind == "lm_bottom":
        return mag, 0.0 * mag, offset * mag
    return -mag, 0.0 * mag, 0.0 * mag


def muscle_stored_energy(spec: MuscleSpec, fl: ForceLengthModel, w_point,
                         area, phi, rest_stretch: float = 1.0):
    """Stored energy density W^m; its w-gradient scaled by u gives the
    muscle loads."""
    nu1, _, kappa = w_point
    nu_m = _spec_strain(spec, nu1, kappa, phi, rest_stretch)
    return spec.max_stress * spec.area_fraction * np.asarray(area) \
        * fl.integral(nu_m)


def muscle_energy_gradients(muscles: MuscleSet, nu1, kappa, area, phi,
                            rest_stretch: float = 1.0):
    """dW^m/dnu1 and dW^m/dkappa for all three muscles.

    Returns two (3, ...) arrays ordered (lm_top, lm_bottom, tm). The nu2
    derivative vanishes for every kind.
    """
    nu1 = np.asarray(nu1, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    area = np.asarray(area, dtype=float)
    phi = np.asarray(phi, dtype=float)
    d_nu1 = np.zeros((3,) + np.broadcast(nu1, kappa, area).shape)
    d_kappa = np.zeros_like(d_nu1)
    for i, spec in enumerate(muscles.specs):
        coef = spec.max_stress * spec.area_fraction * area
        nu_m = _spec_strain(spec, nu1, kappa, phi, rest_stretch)
        f = muscles.fl(nu_m)
        if spec.kind == "lm_top":
            offset = spec.offset_fraction * phi
            d_nu1[i] = coef * f
            d_kappa[i] = -offset * coef * f
        elif spec.kind == "lm_bottom":
            offset = spec.offset_fraction * phi
            d_nu1[i] = coef * f
            d_kappa[i] = offset * coef * f
        else:
            d_nu1[i] = -coef * f / rest_stretch
    return d_nu1, d_kappa


def total_gradient_P(model: RodModel, muscles: MuscleSet, w_point, alpha_point,
                     s):
    """Gradient of the total potential density W(w; alpha) in w.

    ``alpha_point`` is ordered (lm_top, lm_bottom, tm); entries and ``s`` may
    be arrays for vectorized evaluation.
    """
    nu1, nu2, kappa = (np.asarray(x, dtype=float) for x in w_point)
    alpha = np.asarray(alpha_point, dtype=float)
    phi = np.asarray(taper_radius(model, s))
    area = np.pi * phi**2
    second_moment = area**2 / (4.0 * np.pi)
    nu1o, nu2o, kappao = model.rest_strains
    d_nu1, d_kappa = muscle_energy_gradients(muscles, nu1, kappa, area, phi,
                                             nu1o)
    p1 = model.youngs * area * (nu1 - nu1o) + np.sum(alpha * d_nu1, axis=0)
    p2 = model.shear_mod * area * (nu2 - nu2o)
    p3 = model.youngs * second_moment * (kappa - kappao) \
        + np.sum(alpha * d_kappa, axis=0)
    return np.stack(np.broadcast_arrays(p1, p2, p3), axis=-1)


def total_hessian_Q(model: RodModel, muscles: MuscleSet, w_point, alpha_point,
                    s):
    """Hessian of W(w; alpha) in w; shape (..., 3, 3), symmetric.

    At the force-length kinks the one-sided derivative on the unclamped side
    is used (see :meth:`ForceLengthModel.derivative`).
    """
    nu1, nu2, kappa = (np.asarray(x, dtype=float) for x in w_point)
    alpha = np.asarray(alpha_point, dtype=float)
    phi = np.asarray(taper_radius(model, s))
    area = np.pi * phi**2
    second_moment = area**2 / (4.0 * np.pi)
    nu1o = model.rest_strains[0]
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
    q22 = model.shear_mod * area
    q33 = model.youngs * second_moment + offset**2 * (a_top + a_bot)

    shape = np.broadcast(q11, q13, q22, q33).shape
    Q = np.zeros(shape + (3, 3))
    Q[..., 0, 0] = q11
    Q[..., 0, 2] = q13
    Q[..., 2, 0] = q13
    Q[..., 1, 1] = q22
    Q[..., 2, 2] = q33
    return Q


def total_energy_density_W(model: RodModel, muscles: MuscleSet, w_point,
                           alpha_point, s):
    """Total potential density W(w; alpha) = W^e + sum_m alpha^m W^m."""
    nu1, nu2, kappa = (np.asarray(x, dtype=float) for x in w_point)
    alpha = np.asarray(alpha_point, dtype=float)
    phi = np.asarray(taper_radius(model, s))
    area = np.pi * phi**2
    second_moment = area**2 / (4.0 * np.pi)
    nu1o, nu2o, kappao = model.rest_strains
    w_e = 0.5 * (
        model.youngs * area * (nu1 - nu1o) ** 2
        + model.shear_mod * area * (nu2 - nu2o) ** 2
        + model.youngs * second_moment * (kappa - kappao) ** 2
    )
    total = w_e
    for i, spec in enumerate(muscles.specs):
        total = total + alpha[i] * muscle_stored_energy(
            spec, muscles.fl, (nu1, nu2, kappa), area, phi, nu1o)
    return total
