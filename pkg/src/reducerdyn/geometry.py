"""Planar tooth-profile geometry.

Modified cycloid flanks, analytic involutes, curvature normals, signed
gaps and tip-probe ray casts.  All lengths are SI meters, all angles
radians.  Every function here is pure; polylines are treated as
immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    DegenerateCurvature,
    GeometryViolation,
    NonConvergence,
)

# Dense pre-sampling factor for equal-arc-length resampling.  Keeps the
# polyline arc-length interpolation error below the Newton tolerance.
DENSE_FACTOR = 200

# Newton solve on the arc-length residual.
NEWTON_CAP = 50
ARCLENGTH_TOL = 1e-12  # m, absolute


@dataclass(frozen=True)
class CycloidParams:
    """Parameters of a modified cycloidal disc profile.

    The three modifications are the radial modification ``delta_Rp``,
    the pin-radius modification ``delta_r`` and the equidistant
    modification ``delta`` (an angular offset inside the trig terms).
    """

    z_p: int           # pin count
    a: float           # eccentricity, m
    R_p: float         # pin distribution radius, m
    r_p: float         # pin radius, m
    delta_Rp: float = 0.0
    delta_r: float = 0.0
    delta: float = 0.0  # rad

    def __post_init__(self):
        if self.z_p < 3:
            raise GeometryViolation(f"pin count z_p={self.z_p} must be >= 3")
        if not (self.R_p > self.r_p > 0.0):
            raise GeometryViolation(
                f"need R_p > r_p > 0, got R_p={self.R_p}, r_p={self.r_p}")
        if self.a * self.z_p >= (self.R_p - self.delta_Rp):
            raise GeometryViolation(
                f"K_1 = a*z_p/(R_p - delta_Rp) = {self.K_1:.6g} >= 1: "
                "profile self-intersects")

    @property
    def i_H(self) -> float:
        """Rolling ratio z_p / (z_p - 1)."""
        return self.z_p / (self.z_p - 1)

    @property
    def K_1(self) -> float:
        return self.a * self.z_p / (self.R_p - self.delta_Rp)

    @property
    def lobe_count(self) -> int:
        return self.z_p - 1

    def S_prime(self, phi):
        """Auxiliary term 1 + K_1^2 - 2 K_1 cos(phi)."""
        k = self.K_1
        return 1.0 + k * k - 2.0 * k * np.cos(phi)


def cycloid_point(params: CycloidParams, phi):
    """Point of the modified cycloid profile at rolling angle ``phi``.

    Accepts a scalar or an array of angles; returns shape (2,) or (n, 2).
    One lobe spans ``phi`` in [0, 2*pi]; the full disc spans
    [0, 2*pi*(z_p - 1)].
    """
    phi = np.asarray(phi, dtype=float)
    rp_eff = params.R_p - params.delta_Rp
    pin_eff = params.r_p + params.delta_r
    i_h = params.i_H
    d = params.delta

    root_s = np.sqrt(params.S_prime(phi))
    outer = rp_eff - pin_eff / root_s
    inner = (params.a / rp_eff) * (rp_eff - params.z_p * pin_eff / root_s)
    ang_outer = (1.0 - i_h) * phi - d
    ang_inner = i_h * phi + d

    x = -outer * np.sin(ang_outer) - inner * np.sin(ang_inner)
    y = outer * np.cos(ang_outer) - inner * np.cos(ang_inner)
    return np.stack([x, y], axis=-1)


class ProfilePolyline:
    """Discretized planar curve stored as an ordered point list.

    After equal-arc-length resampling, the arc distances between
    consecutive points (measured on the originating dense curve) are
    equal within 1e-6 relative.  Per-segment axis-aligned bounding
    boxes with an inflation margin support fast contact rejection.
    """

    def __init__(self, points, is_closed: bool = False):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[0] < 2 or pts.shape[1] != 2:
            raise GeometryViolation("polyline needs >= 2 planar points")
        self.points = pts
        self.is_closed = bool(is_closed)
        self._aabbs = None
        self._aabb_margin = 0.0

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n_segments(self) -> int:
        return len(self.points) if self.is_closed else len(self.points) - 1

    def segments(self) -> np.ndarray:
        """Segment list, each entry [x0, y0, x1, y1]."""
        p = self.points
        if self.is_closed:
            q = np.roll(p, -1, axis=0)
        else:
            q = p[1:]
            p = p[:-1]
        return np.hstack([p, q])

    def cumulative_arclength(self) -> np.ndarray:
        """Cumulative chord length, including the closing chord if closed."""
        p = self.points
        seg = np.diff(p, axis=0)
        d = np.hypot(seg[:, 0], seg[:, 1])
        if self.is_closed:
            d = np.append(d, np.hypot(*(p[0] - p[-1])))
        return np.concatenate([[0.0], np.cumsum(d)])

    @property
    def total_length(self) -> float:
        return float(self.cumulative_arclength()[-1])

    def build_segment_aabbs(self, margin: float) -> np.ndarray:
        """Per-segment bounding boxes [xmin, ymin, xmax, ymax], inflated."""
        s = self.segments()
        xmin = np.minimum(s[:, 0], s[:, 2]) - margin
        ymin = np.minimum(s[:, 1], s[:, 3]) - margin
        xmax = np.maximum(s[:, 0], s[:, 2]) + margin
        ymax = np.maximum(s[:, 1], s[:, 3]) + margin
        self._aabbs = np.column_stack([xmin, ymin, xmax, ymax])
        self._aabb_margin = float(margin)
        return self._aabbs

    @property
    def segment_aabbs(self):
        return self._aabbs

    @property
    def aabb_margin(self) -> float:
        return self._aabb_margin


def resample_equal_arclength(dense: ProfilePolyline, n: int) -> ProfilePolyline:
    """Resample a dense polyline to ``n`` points at equal arc spacing.

    Each target arc length s_i is located on the dense curve with a
    Newton iteration on the arc-length residual,
    ``t <- t - (s(t) - s_i) / |dp/dt|``, safeguarded by bisection on the
    bracketing interval.  Endpoints are preserved for open curves; for
    closed curves the first point is preserved and n points cover the
    full loop.

    Raises NonConvergence if any Newton solve exceeds the iteration cap.
    """
    if n < 2:
        raise GeometryViolation("resampling needs n >= 2")
    if len(dense) < 2 * n:
        raise GeometryViolation(
            f"dense curve has {len(dense)} points; needs >= 2n = {2 * n}")

    pts = dense.points
    if dense.is_closed:
        pts = np.vstack([pts, pts[:1]])
    cum = np.concatenate(
        [[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    total = cum[-1]
    seg_len = np.diff(cum)
    m = len(pts) - 1  # segment count

    if dense.is_closed:
        targets = total * np.arange(n) / n
    else:
        targets = total * np.arange(n) / (n - 1)

    out = np.empty((n, 2))
    out[0] = pts[0]
    last = n if dense.is_closed else n - 1
    if not dense.is_closed:
        out[-1] = pts[-1]

    for i in range(1, last):
        s_i = targets[i]
        t = s_i / total * m  # initial guess: uniform parameter
        lo, hi = 0.0, float(m)
        converged = False
        for _ in range(NEWTON_CAP):
            k = min(int(t), m - 1)
            s_t = cum[k] + (t - k) * seg_len[k]
            resid = s_t - s_i
            if abs(resid) <= ARCLENGTH_TOL:
                converged = True
                break
            if resid > 0.0:
                hi = min(hi, t)
            else:
                lo = max(lo, t)
            deriv = seg_len[k]
            if deriv <= 0.0:
                t = 0.5 * (lo + hi)
                continue
            t_new = t - resid / deriv
            if not (lo < t_new < hi):
                t_new = 0.5 * (lo + hi)
            t = t_new
        if not converged:
            raise NonConvergence(
                f"arc-length Newton exceeded {NEWTON_CAP} iterations at "
                f"target {i} (s={s_i:.6g})")
        k = min(int(t), m - 1)
        w = t - k
        out[i] = (1.0 - w) * pts[k] + w * pts[k + 1]

    return ProfilePolyline(out, is_closed=dense.is_closed)


def cycloid_polyline(params: CycloidParams, n: int,
                     dense_factor: int = DENSE_FACTOR) -> ProfilePolyline:
    """Full closed disc profile resampled to ``n`` equal-arc points."""
    phi_max = 2.0 * math.pi * params.lobe_count
    n_dense = max(dense_factor * n, 4 * n)
    phi = np.linspace(0.0, phi_max, n_dense, endpoint=False)
    dense = ProfilePolyline(cycloid_point(params, phi), is_closed=True)
    return resample_equal_arclength(dense, n)


@dataclass(frozen=True)
class InvoluteProfile:
    """Analytic involute flank family of a spur gear.

    One instance describes a single flank side (selected by
    ``flank_sign``) of every tooth; points are evaluated on demand and
    the curve is never discretized for the analytic contact path.
    """

    is_inner: bool      # internal gear if True
    z: int              # tooth count
    m: float            # module, m
    alpha: float        # pressure angle, rad
    ha_star: float = 1.0
    c_star: float = 0.25
    x: float = 0.0      # profile-shift coefficient
    flank_sign: int = 1  # +1 right flank, -1 left flank
    base_rotation: float = 0.0
    delta_y: float = 0.0

    def __post_init__(self):
        if self.z < 3:
            raise GeometryViolation(f"tooth count z={self.z} must be >= 3")
        if self.m <= 0.0:
            raise GeometryViolation("module must be positive")
        if self.flank_sign not in (-1, 1):
            raise GeometryViolation("flank_sign must be +1 or -1")
        if self.r_b <= 0.0:
            raise GeometryViolation("base radius must be positive")
        if self.r_min > self.r_max:
            raise GeometryViolation(
                f"r_min={self.r_min:.6g} exceeds r_max={self.r_max:.6g}")

    @property
    def r_pitch(self) -> float:
        return 0.5 * self.m * self.z

    @property
    def r_b(self) -> float:
        return self.r_pitch * math.cos(self.alpha)

    @property
    def r_f(self) -> float:
        return self.r_pitch - self.m * (self.ha_star + self.c_star - self.x)

    @property
    def r_a(self) -> float:
        return self.r_pitch + self.m * (self.ha_star + self.x)

    @property
    def r_min(self) -> float:
        return max(self.r_f, self.r_b)

    @property
    def r_max(self) -> float:
        return self.r_a

    @property
    def theta_base(self) -> float:
        """Involute function of the pressure angle, tan(a) - a."""
        return math.tan(self.alpha) - self.alpha

    @property
    def center(self) -> np.ndarray:
        """Gear center in the profile's local frame."""
        return np.array([0.0, self.delta_y])

    def radius_at(self, u):
        return self.r_min + np.asarray(u, dtype=float) * (self.r_max - self.r_min)

    def pitch_angle(self, tooth_index) -> np.ndarray:
        """Reference ray of a tooth: standard tooth spacing plus offset."""
        k = np.asarray(tooth_index, dtype=float)
        return 2.0 * math.pi * k / self.z + self.base_rotation


def involute_point(profile: InvoluteProfile, tooth_index, u):
    """Point on the involute flank of tooth ``tooth_index`` at parameter u.

    ``u`` in [0, 1] spans root (u=0) to tip (u=1); the returned point
    satisfies ||p - center|| == r(u) exactly.  Scalar or array inputs
    broadcast; the result is shape (2,) or (n, 2).
    """
    u = np.asarray(u, dtype=float)
    r_u = profile.radius_at(u)
    ratio = profile.r_b / r_u
    # With profile invariants r(u) >= r_min >= r_b, so arccos is defined.
    assert np.all(ratio <= 1.0 + 1e-12), "r_b > r(u): arccos undefined"
    alpha_c = np.arccos(np.minimum(ratio, 1.0))
    theta_c = np.tan(alpha_c) - alpha_c
    pitch = profile.pitch_angle(tooth_index)
    if profile.is_inner:
        phi_c = pitch + profile.flank_sign * (theta_c - profile.theta_base)
    else:
        phi_c = pitch + profile.flank_sign * (profile.theta_base - theta_c)
    p = np.stack([r_u * np.cos(phi_c), r_u * np.sin(phi_c)], axis=-1)
    return p + profile.center


def involute_tangent(profile: InvoluteProfile, tooth_index, u):
    """Unit tangent dp/du (normalized) of the flank at parameter u."""
    u = np.asarray(u, dtype=float)
    r_u = profile.radius_at(u)
    dr = profile.r_max - profile.r_min
    alpha_c = np.arccos(np.minimum(profile.r_b / r_u, 1.0))
    # d(theta_c)/du = tan^2(alpha_c) * d(alpha_c)/du with
    # d(alpha_c)/dr = r_b / (r sqrt(r^2 - r_b^2))
    root = np.sqrt(np.maximum(r_u * r_u - profile.r_b ** 2, 1e-300))
    dalpha = profile.r_b / (r_u * root) * dr
    dtheta = np.tan(alpha_c) ** 2 * dalpha
    sign = 1.0 if profile.is_inner else -1.0
    dphi = profile.flank_sign * sign * dtheta

    theta_c = np.tan(alpha_c) - alpha_c
    pitch = profile.pitch_angle(tooth_index)
    if profile.is_inner:
        phi_c = pitch + profile.flank_sign * (theta_c - profile.theta_base)
    else:
        phi_c = pitch + profile.flank_sign * (profile.theta_base - theta_c)
    c, s = np.cos(phi_c), np.sin(phi_c)
    tx = dr * c - r_u * dphi * s
    ty = dr * s + r_u * dphi * c
    t = np.stack([tx, ty], axis=-1)
    return t / np.linalg.norm(t, axis=-1, keepdims=True)


def involute_surface_normal(profile: InvoluteProfile, tooth_index, u):
    """Unit normal of the flank pointing out of the tooth material.

    The normal to an involute passes through its base-circle unwind
    point, which lies on the filled side for an external gear and on
    the open side for an internal one, hence the direction flip.
    """
    u = np.asarray(u, dtype=float)
    r_u = profile.radius_at(u)
    alpha_c = np.arccos(np.minimum(profile.r_b / r_u, 1.0))
    theta_c = np.tan(alpha_c) - alpha_c
    pitch = profile.pitch_angle(tooth_index)
    if profile.is_inner:
        phi_c = pitch + profile.flank_sign * (theta_c - profile.theta_base)
        sigma = float(profile.flank_sign)   # sign of d(phi_c)/du
    else:
        phi_c = pitch + profile.flank_sign * (profile.theta_base - theta_c)
        sigma = -float(profile.flank_sign)
    phi_b = phi_c + sigma * alpha_c
    p_rel = np.stack([r_u * np.cos(phi_c), r_u * np.sin(phi_c)], axis=-1)
    b_rel = profile.r_b * np.stack([np.cos(phi_b), np.sin(phi_b)], axis=-1)
    k_vec = b_rel - p_rel  # toward the center of curvature
    k_norm = np.linalg.norm(k_vec, axis=-1, keepdims=True)
    # On the base circle itself the unwind point coincides with p; the
    # limit direction is tangential.
    tangential = sigma * np.stack([-np.sin(phi_c), np.cos(phi_c)], axis=-1)
    tiny = k_norm < 1e-14 * profile.r_b
    k_hat = np.where(tiny, tangential, k_vec / np.where(tiny, 1.0, k_norm))
    return k_hat if profile.is_inner else -k_hat


def curvature_normal(polyline: ProfilePolyline, index: int,
                     is_inner: bool = False) -> np.ndarray:
    """Unit curvature normal of a polyline at an interior vertex.

    The curvature vector is the tangential-orthogonal component of the
    second difference; it points toward the center of curvature.  For
    internal gears the direction is reversed.

    Raises DegenerateCurvature when the three local points are
    (numerically) collinear.
    """
    pts = polyline.points
    n_pts = len(pts)
    if n_pts < 3:
        raise GeometryViolation("curvature needs >= 3 points")
    if polyline.is_closed:
        pm, p0, pp = pts[(index - 1) % n_pts], pts[index % n_pts], pts[(index + 1) % n_pts]
    else:
        if not (0 < index < n_pts - 1):
            raise GeometryViolation(f"index {index} not interior")
        pm, p0, pp = pts[index - 1], pts[index], pts[index + 1]

    tangent = pp - pm
    t_norm = np.hypot(*tangent)
    if t_norm < 1e-300:
        raise DegenerateCurvature("zero tangent at vertex")
    t_hat = tangent / t_norm
    second = pp - 2.0 * p0 + pm
    kappa = second - (second @ t_hat) * t_hat
    k_norm = np.hypot(*kappa)
    if k_norm < 1e-14:
        raise DegenerateCurvature(
            f"|kappa| = {k_norm:.3e} < 1e-14 at index {index}")
    n_hat = kappa / k_norm
    return -n_hat if is_inner else n_hat


def signed_gap(p_outer, p_inner, n) -> float:
    """Signed distance from p_inner to p_outer along unit normal n.

    Negative values indicate geometric penetration.
    """
    d = np.asarray(p_outer, dtype=float) - np.asarray(p_inner, dtype=float)
    dist = float(np.hypot(*d))
    dot = float(np.dot(n, d))
    return math.copysign(dist, dot) if dot != 0.0 else 0.0


def tip_probe(tip, normal, probe_len: float, target: ProfilePolyline):
    """Cast a ray of length probe_len from a tooth tip onto a polyline.

    Returns the distance from the tip to the first ray-segment
    intersection, or None when no segment is hit within the probe
    length.  Segment endpoints count as hits (closed interval); ties
    resolve to the nearest intersection.
    """
    if probe_len <= 0.0:
        raise GeometryViolation("probe_len must be positive")
    o = np.asarray(tip, dtype=float)
    d = np.asarray(normal, dtype=float)
    segs = target.segments()
    p0 = segs[:, 0:2]
    e = segs[:, 2:4] - p0

    # Solve o + t d = p0 + s e for each segment via 2x2 cross products.
    denom = d[0] * e[:, 1] - d[1] * e[:, 0]
    rel = p0 - o
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rel[:, 0] * e[:, 1] - rel[:, 1] * e[:, 0]) / denom
        s = (rel[:, 0] * d[1] - rel[:, 1] * d[0]) / denom
    valid = (np.abs(denom) > 1e-300) & (s >= 0.0) & (s <= 1.0) \
        & (t >= 0.0) & (t <= probe_len)
    if not np.any(valid):
        return None
    return float(np.min(t[valid]))


def export_profile_csv(polyline: ProfilePolyline, path) -> None:
    """Write the polyline as CSV ``x,y`` in meters, 17 significant digits."""
    with open(path, "w", newline="\n") as fh:
        fh.write("x,y\n")
        for px, py in polyline.points:
            fh.write(f"{px:.17g},{py:.17g}\n")
