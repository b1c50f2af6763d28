"""Position-dependent series mesh stiffness.

Tooth bending, shear and foundation compliance are integrated over the
tooth section; Hertzian line-contact compliance closes the series
chain.  A pre-computed table of the structural part over the flank
parameter supports fast interpolation inside the contact solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .exceptions import DomainError, NonPositiveStiffness, OutOfRange
from .geometry import InvoluteProfile

DEFAULT_SECTION_SAMPLES = 64


@dataclass(frozen=True)
class ToothSection:
    """Sampled cross-section properties of a tooth along its height.

    ``x`` runs from the root (0) toward the tip; ``I`` and ``A`` are the
    second moment of area and the cross-sectional area at each height.
    """

    E: float       # Young's modulus, Pa
    G: float       # shear modulus, Pa
    nu: float      # Poisson ratio
    B: float       # face width, m
    H_f: float     # root thickness, m
    x: np.ndarray
    I: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        i_arr = np.asarray(self.I, dtype=float)
        a_arr = np.asarray(self.A, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "I", i_arr)
        object.__setattr__(self, "A", a_arr)
        if not (len(x) == len(i_arr) == len(a_arr)):
            raise ValueError("section sample arrays must have equal length")
        if np.any(np.diff(x) <= 0.0):
            raise ValueError("section samples must be ordered by x")
        if np.any(i_arr <= 0.0) or np.any(a_arr <= 0.0):
            raise ValueError("I(x) and A(x) must be strictly positive")


@dataclass(frozen=True)
class HertzParams:
    """Hertzian line-contact quantities."""

    E_star: float   # effective modulus, Pa
    rho_eq: float   # equivalent curvature radius, m
    b: float        # contact half-width, m
    p: float        # load per unit length, N/m

    def __post_init__(self):
        if min(self.E_star, self.rho_eq, self.b) <= 0.0 or self.p < 0.0:
            raise ValueError("Hertz parameters must be positive")


def _clipped_samples(section: ToothSection, L: float):
    """Section samples restricted to [0, L], with an interpolated endpoint."""
    x = section.x
    if L > x[-1] + 1e-15 * max(1.0, x[-1]):
        raise OutOfRange(
            f"contact height L={L:.6g} exceeds sampled range {x[-1]:.6g}")
    L = min(L, x[-1])
    mask = x < L
    xs = np.append(x[mask], L)
    i_end = np.interp(L, x, section.I)
    a_end = np.interp(L, x, section.A)
    return xs, np.append(section.I[mask], i_end), np.append(section.A[mask], a_end)


def bending_deflection(section: ToothSection, L: float, beta: float,
                       F: float) -> float:
    """Cantilever bending deflection (F/E) int (L-x)^2 cos^2(beta)/I dx."""
    if L <= 0.0:
        return 0.0
    xs, i_s, _ = _clipped_samples(section, L)
    if len(xs) < 2:
        return 0.0
    integrand = (L - xs) ** 2 / i_s
    val = simpson(integrand, x=xs)
    return F / section.E * math.cos(beta) ** 2 * float(val)


def shear_deflection(section: ToothSection, L: float, beta: float,
                     F: float) -> float:
    """Shear deflection (1.2 F/G) int cos^2(beta)/A dx."""
    if L <= 0.0:
        return 0.0
    xs, _, a_s = _clipped_samples(section, L)
    if len(xs) < 2:
        return 0.0
    val = simpson(1.0 / a_s, x=xs)
    return 1.2 * F / section.G * math.cos(beta) ** 2 * float(val)


def foundation_deflection(section: ToothSection, L: float, beta: float,
                          F: float) -> float:
    """Root-fillet flexibility by the Ishikawa empirical expression."""
    if section.H_f <= 0.0:
        raise ValueError("root thickness H_f must be positive")
    ratio = L / section.H_f
    tan_b = math.tan(beta)
    bracket = (5.306 * ratio ** 2
               + 2.0 * (1.0 - section.nu) * ratio
               + 1.534 * (1.0 + 0.4167 * tan_b ** 2 / (1.0 + section.nu)))
    return F * math.cos(beta) ** 2 / (section.B * section.E) * bracket


def hertz_line_deflection(h: HertzParams) -> float:
    """Line-contact deflection (2p / pi E*) [ln(2 rho/b) + 0.407]."""
    arg = 2.0 * h.rho_eq / h.b
    if arg <= 1.0:
        raise DomainError(
            f"2*rho_eq/b = {arg:.6g} <= 1: line-contact model invalid")
    return 2.0 * h.p / (math.pi * h.E_star) * (math.log(arg) + 0.407)


def hertz_line_stiffness(E_star: float, rho_eq: float, b: float,
                         width: float) -> float:
    """Stiffness F/delta of a Hertzian line contact at half-width b."""
    h = HertzParams(E_star=E_star, rho_eq=rho_eq, b=b, p=1.0)
    delta_per_p = hertz_line_deflection(h)  # deflection per unit line load
    return width / delta_per_p


def mesh_stiffness(components) -> float:
    """Series (harmonic) combination of stiffness components."""
    comps = np.asarray(list(components), dtype=float)
    if len(comps) == 0:
        raise NonPositiveStiffness("no stiffness components")
    if np.any(comps <= 0.0):
        raise NonPositiveStiffness(
            f"non-positive stiffness component in {comps}")
    return 1.0 / float(np.sum(1.0 / comps))


class StiffnessTable:
    """Structural stiffness sampled over the flank parameter u in [0, 1].

    Interpolation between grid points is piecewise-linear with clamped
    ends; querying a grid node returns the node value exactly.
    """

    def __init__(self, u_grid, k_struct):
        u = np.asarray(u_grid, dtype=float)
        k = np.asarray(k_struct, dtype=float)
        if len(u) < 2 or len(u) != len(k):
            raise ValueError("grid and values must match, length >= 2")
        if np.any(np.diff(u) <= 0.0):
            raise ValueError("u grid must be strictly increasing")
        if not (u[0] <= 0.0 + 1e-12 and u[-1] >= 1.0 - 1e-12):
            raise ValueError("u grid must cover [0, 1]")
        if np.any(k <= 0.0):
            raise NonPositiveStiffness("table values must be positive")
        self.u_grid = u
        self.k_struct = k

    def __call__(self, u):
        return np.interp(u, self.u_grid, self.k_struct)

    def export_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("u,k_struct\n")
            for u, k in zip(self.u_grid, self.k_struct):
                fh.write(f"{u:.17g},{k:.17g}\n")


def tooth_section_from_involute(profile: InvoluteProfile, E: float, G: float,
                                nu: float, B: float,
                                n_samples: int = DEFAULT_SECTION_SAMPLES,
                                min_thickness_frac: float = 0.05
                                ) -> ToothSection:
    """Slice a tooth between its two flank curves at each height.

    The flank crosses its reference ray at the pitch radius; relative to
    the physical tooth centerline it is offset by the half angular
    thickness there.  Thickness is clamped near the tip, where it would
    otherwise approach zero, at ``min_thickness_frac`` of the root
    thickness.
    """
    r_lo, r_hi = profile.r_min, profile.r_max
    xs = np.linspace(0.0, r_hi - r_lo, n_samples)
    us = xs / (r_hi - r_lo)
    radius = profile.radius_at(us)
    alpha_c = np.arccos(np.minimum(profile.r_b / radius, 1.0))
    theta_c = np.tan(alpha_c) - alpha_c
    psi_half = _pitch_half_thickness(profile)
    # angle from centerline to flank at each radius
    ang = psi_half + profile.theta_base - theta_c
    half_t = radius * np.sin(np.maximum(ang, 0.0))
    h_root = 2.0 * float(half_t[0])
    floor = min_thickness_frac * h_root
    h = np.maximum(2.0 * half_t, floor)
    i_arr = B * h ** 3 / 12.0
    a_arr = B * h
    return ToothSection(E=E, G=G, nu=nu, B=B, H_f=h_root,
                        x=xs, I=i_arr, A=a_arr)


def _pitch_half_thickness(profile: InvoluteProfile) -> float:
    """Half angular tooth thickness at the pitch circle."""
    return (math.pi / 2.0 + 2.0 * profile.x * math.tan(profile.alpha)) / profile.z


def build_stiffness_table(profile: InvoluteProfile, section: ToothSection,
                          n_grid: int, beta: float = 0.0,
                          ) -> StiffnessTable:
    """Structural (bending + shear + foundation) stiffness table over u.

    The contact height for parameter u is the radial distance from the
    root sample to the contact radius r(u), clamped to the sampled
    section range.
    """
    if n_grid < 8:
        raise ValueError("n_grid must be >= 8")
    us = np.linspace(0.0, 1.0, n_grid)
    x_max = section.x[-1]
    k = np.empty(n_grid)
    f_ref = 1.0
    for i, u in enumerate(us):
        L = min(float(u) * (profile.r_max - profile.r_min), x_max)
        d_b = bending_deflection(section, L, beta, f_ref)
        d_s = shear_deflection(section, L, beta, f_ref)
        d_f = foundation_deflection(section, L, beta, f_ref)
        k[i] = f_ref / (d_b + d_s + d_f)
    return StiffnessTable(us, k)
