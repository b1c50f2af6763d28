"""Contact primitives, penalty force laws and accelerated search.

Three primitives cover the reducer interaction patterns: circle vs
circle (needle bearings, crank pins), piecewise-linear curve vs circle
array (cycloid disc vs pin ring) and analytic involute pair (small
tooth-difference meshing).  Each owns a persistent data-node cache
carried between time steps; caches are only advanced by ``commit`` so
that rejected solver iterations leave them untouched.

Sign conventions.  ``n_gap`` denotes the unit direction along which
motion of body 1 *increases* the signed gap; the normal force on body 1
is ``+f_n * n_gap`` and body 0 receives the opposite.  The gap rate
``g_dot`` is the true time derivative of the signed gap (negative while
approaching), which keeps the damping mask physical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    CoincidentCenters,
    DimensionMismatch,
    NoIntersection,
    SearchFailure,
)
from .geometry import (
    InvoluteProfile,
    ProfilePolyline,
    involute_point,
    involute_surface_normal,
    tip_probe,
)

OPEN_GAP_SENTINEL = 1.0  # m, stored in caches when no exact gap is available
HERTZ_EXPONENT = 10.0 / 9.0


@dataclass(frozen=True)
class ContactParams:
    """Penalty/friction parameters of one contact object."""

    k_c: float              # contact stiffness, N/m
    d_c: float = 0.0        # contact damping, N*s/m
    mu: float = 0.0         # dynamic friction coefficient
    v_reg: float = 1e-3     # friction regularization velocity, m/s
    contact_model: int = 0  # 0 = point penetration, 1 = area integral
    friction_law: str = "smooth"  # 'smooth' or 'stribeck'

    def __post_init__(self):
        if self.k_c <= 0.0 or self.d_c < 0.0 or self.mu < 0.0 \
                or self.v_reg <= 0.0:
            raise ValueError("invalid contact parameters")
        if self.contact_model not in (0, 1):
            raise ValueError("contact_model must be 0 or 1")
        if self.friction_law not in ("smooth", "stribeck"):
            raise ValueError("friction_law must be 'smooth' or 'stribeck'")


@dataclass(frozen=True)
class ScreeningConfig:
    """Multi-stage search windows and thresholds.

    ``delta_theta_max`` >= pi disables the angular stage.  ``d_far`` and
    ``aabb_margin`` default to geometry-derived values at build time
    (3x max circle radius, and 1.1x max circle radius respectively).
    """

    delta_theta_max: float = math.pi
    d_far: float | None = None
    n_block: int = 8
    n_fine: int = 36
    probe_len: float = 1e-3
    aabb_margin: float | None = None
    refine: bool = False  # optional golden-section polish of stage 3

    def __post_init__(self):
        if self.delta_theta_max <= 0.0 or self.n_block < 1 \
                or self.n_fine < 8 or self.probe_len <= 0.0:
            raise ValueError("invalid screening configuration")


# ------------------------------------------------------------ force laws

def penalty_normal_force(g, g_dot, params: ContactParams):
    """Penalty normal force with Hertz-type exponent and damping mask.

    Force appears only for penetration (g < 0); the damping term acts
    only while approaching (g_dot < 0) and the total is clamped at zero
    so no adhesion is possible.  Elastic part is continuous at g = 0
    with vanishing one-sided slope.
    """
    g = np.asarray(g, dtype=float)
    g_dot = np.asarray(g_dot, dtype=float)
    pen = np.maximum(0.0, -g)
    elastic = params.k_c * pen ** HERTZ_EXPONENT
    damping = params.d_c * np.maximum(0.0, -g_dot)
    f = np.where(g < 0.0, elastic + damping, 0.0)
    return np.maximum(f, 0.0)[()] if f.ndim == 0 else np.maximum(f, 0.0)


def friction_force(f_n, v_t, params: ContactParams, law: str | None = None):
    """Regularized Coulomb friction; odd in v_t, |f_t| <= mu*f_n."""
    law = law or params.friction_law
    f_n = np.asarray(f_n, dtype=float)
    v_t = np.asarray(v_t, dtype=float)
    if law == "smooth":
        f = -params.mu * f_n * v_t / np.sqrt(v_t ** 2 + params.v_reg ** 2)
    elif law == "stribeck":
        f = -params.mu * np.abs(f_n) * np.sign(v_t) \
            * np.minimum(1.0, np.abs(v_t) / params.v_reg)
    else:
        raise ValueError(f"unknown friction law {law!r}")
    return f[()] if f.ndim == 0 else f


def cc_gap_normal(p0, r0: float, p1, r1: float):
    """Planar circle-circle gap and contact normal.

    ``r1 >= 0`` is convex-convex; ``r1 < 0`` marks a concave
    counterpart (circle 0 inside a bore of radius ``|r1|``).  The
    returned normal follows the force-on-body-0 convention:
    ``-(p1-p0)/d`` for convex and ``+(p1-p0)/d`` for concave pairs.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    dvec = p1 - p0
    d = float(np.hypot(*dvec))
    if d < 1e-12:
        raise CoincidentCenters("circle centers coincide")
    u = dvec / d
    if r1 >= 0.0:
        return d - (r0 + r1), -u
    return abs(r1) - (d + r0), u


def contact_velocities(v0, omega0, p0, v1, omega1, p1, p_c, n):
    """Gap rate and tangential slip at a contact point.

    Point velocities include the rotational contribution
    ``v + omega x r`` (planar cross product); ``g_dot`` is the normal
    projection of the relative velocity onto ``n`` and ``v_t`` the
    tangential residual (scalar along ``n`` rotated +90 degrees).
    """
    p_c = np.asarray(p_c, dtype=float)
    r0 = p_c - np.asarray(p0, dtype=float)
    r1 = p_c - np.asarray(p1, dtype=float)
    vc0 = np.asarray(v0, dtype=float) + omega0 * np.array([-r0[1], r0[0]])
    vc1 = np.asarray(v1, dtype=float) + omega1 * np.array([-r1[1], r1[0]])
    v_rel = vc1 - vc0
    n = np.asarray(n, dtype=float)
    g_dot = float(v_rel @ n)
    t_hat = np.array([-n[1], n[0]])
    v_t = float(v_rel @ t_hat)
    return g_dot, v_t


def assemble_generalized_forces(entries, ndof: int) -> np.ndarray:
    """Pull contact wrenches back to generalized coordinates.

    ``entries`` is an iterable of ``(f0, J0, J1)`` with ``f0`` the
    Cartesian force on body 0 at the contact point and ``J0``/``J1`` the
    translational point jacobians (2 x ndof) of the two bodies there;
    body 1 receives ``-f0``.  Equal and opposite wrenches guarantee a
    zero net momentum contribution per pair.
    """
    q_force = np.zeros(ndof)
    for f0, j0, j1 in entries:
        f0 = np.asarray(f0, dtype=float)
        if f0.shape != (2,):
            raise DimensionMismatch(f"force shape {f0.shape} != (2,)")
        for j_mat in (j0, j1):
            if j_mat.shape != (2, ndof):
                raise DimensionMismatch(
                    f"jacobian shape {j_mat.shape} != (2, {ndof})")
        q_force += j0.T @ f0 + j1.T @ (-f0)
    return q_force


# --------------------------------------------------------- body kinematics

@dataclass
class BodyKin:
    """Planar kinematic state of one body frame."""

    p: np.ndarray      # origin position, world
    theta: float
    v: np.ndarray      # origin velocity, world
    omega: float

    @property
    def R(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def to_world(self, local) -> np.ndarray:
        return self.p + self.R @ np.asarray(local, dtype=float)

    def point_velocity(self, p_world) -> np.ndarray:
        r = np.asarray(p_world, dtype=float) - self.p
        return self.v + self.omega * np.array([-r[1], r[0]])


@dataclass
class SubContact:
    """One resolved geometric contact inside a contact object."""

    point: np.ndarray       # world contact point
    n_gap: np.ndarray       # unit, motion of body 1 along it opens the gap
    gap: float
    g_dot: float
    v_t: float
    f_n: float
    f_t: float
    closed: bool
    index: int = -1         # primitive-specific (segment/circle/tooth)

    def force_on_body1(self) -> np.ndarray:
        t_hat = np.array([-self.n_gap[1], self.n_gap[0]])
        return self.f_n * self.n_gap + self.f_t * t_hat


@dataclass
class ContactResult:
    """Evaluation output plus the cache payload for a later commit."""

    subs: list
    states: np.ndarray      # int flags, one per sub-pair slot
    fn: np.ndarray          # normal force per sub-pair slot
    cache_payload: object = None


# ------------------------------------------------------------ primitives

class CircleCircleContact:
    """Penalty contact between two body-attached circles.

    The 6-slot data node holds [g, g_dot, f_n, f_tx, f_ty, state].
    """

    NODE_SIZE = 6

    def __init__(self, marker0, r0: float, marker1, r1: float,
                 params: ContactParams, pair_id: str = "cc"):
        self.marker0 = np.asarray(marker0, dtype=float)  # local on body 0
        self.marker1 = np.asarray(marker1, dtype=float)  # local on body 1
        self.r0 = float(r0)
        self.r1 = float(r1)
        self.params = params
        self.pair_id = pair_id
        self.node = np.zeros(self.NODE_SIZE)
        self.n_subpairs = 1

    @property
    def clearance(self) -> float:
        """Concentric gap; meaningful for concave (bearing) pairs."""
        return abs(self.r1) - self.r0 if self.r1 < 0 else -(self.r0 + self.r1)

    def evaluate(self, kin0: BodyKin, kin1: BodyKin) -> ContactResult:
        p0 = kin0.to_world(self.marker0)
        p1 = kin1.to_world(self.marker1)
        if self.r1 < 0.0 and float(np.hypot(*(p1 - p0))) < 1e-12:
            # journal floating concentric in its bore: open by the full
            # clearance, no defined normal and no force
            payload = np.array([self.clearance, 0.0, 0.0, 0.0, 0.0, 0.0])
            return ContactResult(subs=[], states=np.array([0]),
                                 fn=np.array([0.0]), cache_payload=payload)
        gap, n_force0 = cc_gap_normal(p0, self.r0, p1, self.r1)
        n_gap = -n_force0
        u = (p1 - p0) / np.hypot(*(p1 - p0))
        if self.r1 >= 0.0:
            s0 = p0 + self.r0 * u
            s1 = p1 - self.r1 * u
        else:
            s0 = p0 - self.r0 * u
            s1 = p1 - abs(self.r1) * u
        p_c = 0.5 * (s0 + s1)
        g_dot, v_t = contact_velocities(
            kin0.v, kin0.omega, kin0.p, kin1.v, kin1.omega, kin1.p, p_c, n_gap)
        f_n = float(penalty_normal_force(gap, g_dot, self.params))
        f_t = float(friction_force(f_n, v_t, self.params)) if f_n > 0 else 0.0
        closed = gap < 0.0
        sub = SubContact(point=p_c, n_gap=n_gap, gap=gap, g_dot=g_dot,
                         v_t=v_t, f_n=f_n, f_t=f_t, closed=closed)
        t_hat = np.array([-n_gap[1], n_gap[0]])
        ft_vec = f_t * t_hat
        payload = np.array([gap, g_dot, f_n, ft_vec[0], ft_vec[1],
                            1.0 if closed else 0.0])
        return ContactResult(subs=[sub],
                             states=np.array([1 if closed else 0]),
                             fn=np.array([f_n]),
                             cache_payload=payload)

    def commit(self, result: ContactResult) -> None:
        self.node[:] = result.cache_payload

    def committed_states(self) -> np.ndarray:
        return np.array([int(self.node[5])])

    def committed_fn(self) -> np.ndarray:
        return np.array([self.node[2]])


def _point_segment_distance(c, seg):
    """Distance from point to one segment plus the nearest point.

    The component-wise arithmetic mirrors the vectorized variant
    exactly so both paths round identically.
    """
    ex = seg[2] - seg[0]
    ey = seg[3] - seg[1]
    l2 = ex * ex + ey * ey
    if l2 <= 0.0:
        t = 0.0
    else:
        t = min(1.0, max(0.0, ((c[0] - seg[0]) * ex + (c[1] - seg[1]) * ey) / l2))
    nx = seg[0] + t * ex
    ny = seg[1] + t * ey
    return float(np.hypot(nx - c[0], ny - c[1])), np.array([nx, ny])


def _point_segments_distance(c, segs):
    """Vectorized point-to-segment distances; returns (d, nearest)."""
    p0x, p0y = segs[:, 0], segs[:, 1]
    ex = segs[:, 2] - p0x
    ey = segs[:, 3] - p0y
    l2 = ex * ex + ey * ey
    safe = np.where(l2 <= 0.0, 1.0, l2)
    t = np.clip(((c[0] - p0x) * ex + (c[1] - p0y) * ey) / safe, 0.0, 1.0)
    t = np.where(l2 <= 0.0, 0.0, t)
    nx = p0x + t * ex
    ny = p0y + t * ey
    d = np.hypot(nx - c[0], ny - c[1])
    return d, np.column_stack([nx, ny])


def _chains_intersect(pts_a, pts_b) -> bool:
    """True when the two sampled polyline chains cross anywhere."""
    a0 = pts_a[:-1]
    a1 = pts_a[1:]
    b0 = pts_b[:-1]
    b1 = pts_b[1:]

    def orient(p, q, r):
        # sign of the cross product (q-p) x (r-p), broadcast (i, j)
        return ((q[:, None, 0] - p[:, None, 0]) * (r[None, :, 1] - p[:, None, 1])
                - (q[:, None, 1] - p[:, None, 1]) * (r[None, :, 0] - p[:, None, 0]))

    d1 = orient(a0, a1, b0)
    d2 = orient(a0, a1, b1)
    d3 = orient(b0, b1, a0).T
    d4 = orient(b0, b1, a1).T
    straddle = (d1 * d2 <= 0.0) & (d3 * d4 <= 0.0) \
        & ((d1 != 0.0) | (d2 != 0.0)) & ((d3 != 0.0) | (d4 != 0.0))
    return bool(np.any(straddle))


class CurveCirclesContact:
    """Piecewise-linear curve (body 0) against a circle array (body 1).

    The search reproduces the exhaustive nearest-segment result exactly
    for every circle whose true best gap does not exceed the AABB
    inflation margin; further circles report the open sentinel.  Stages:
    angular window, block skip (far-distance rule plus a sound
    lower-bound prune), per-segment AABB rejection, fine distance scan
    seeded by the warm-start segment.

    Per-segment data node: [active circle index (-1 open), gap, v_t].
    """

    NODE_SLOTS = 3

    def __init__(self, curve: ProfilePolyline, circle_markers, radii,
                 params: ContactParams, cfg: ScreeningConfig,
                 pair_id: str = "curve-circles"):
        self.curve = curve
        self.circle_markers = np.atleast_2d(np.asarray(circle_markers, float))
        self.radii = np.asarray(radii, dtype=float)
        if len(self.radii) != len(self.circle_markers):
            raise DimensionMismatch("one radius per circle marker required")
        if np.any(self.radii <= 0.0):
            raise ValueError("circle radii must be positive")
        self.params = params
        self.cfg = cfg
        self.pair_id = pair_id

        r_max = float(np.max(self.radii))
        self.margin = cfg.aabb_margin if cfg.aabb_margin is not None \
            else 1.1 * r_max
        self.d_far_base = cfg.d_far if cfg.d_far is not None else 3.0 * r_max

        self.segs = curve.segments()
        self.n_seg = len(self.segs)
        self.aabbs = curve.build_segment_aabbs(self.margin)

        # static block decomposition of the curve (body-0 frame)
        nb = cfg.n_block
        starts = np.arange(0, self.n_seg, nb)
        self.block_slices = [(int(s), int(min(s + nb, self.n_seg)))
                             for s in starts]
        self.block_p0 = np.array([self.segs[s][0:2] for s, _ in self.block_slices])
        self.block_p1 = np.array([self.segs[e - 1][2:4] for _, e in self.block_slices])
        seg_len = np.hypot(self.segs[:, 2] - self.segs[:, 0],
                           self.segs[:, 3] - self.segs[:, 1])
        self.block_len = np.array([float(np.sum(seg_len[s:e]))
                                   for s, e in self.block_slices])
        # far rule must keep every block that could still hold a gap
        # within the margin band, whatever the paper-style d_far says
        self.d_far_eff = max(self.d_far_base,
                             r_max + self.margin + float(np.max(self.block_len)) / 2.0)

        n_circ = len(self.radii)
        self.n_subpairs = n_circ
        self.node = np.zeros((self.n_seg, self.NODE_SLOTS))
        self.node[:, 0] = -1.0
        self.node[:, 1] = OPEN_GAP_SENTINEL
        self._warm = np.full(n_circ, -1, dtype=int)       # circle -> segment
        self._committed_state = np.zeros(n_circ, dtype=int)
        self._committed_fn = np.zeros(n_circ)
        self.counters = {"segment_evals": 0, "point_evals": 0,
                         "blocks_skipped": 0, "circles_screened": 0}

    def reset_counters(self) -> None:
        for k in self.counters:
            self.counters[k] = 0

    # -- search ----------------------------------------------------------

    def search_circle(self, c, r: float, warm_seg: int = -1,
                      d_start=None, d_end=None):
        """Best (gap, segment) for one circle center in the curve frame.

        ``d_start``/``d_end`` may carry precomputed block boundary
        distances (shared across circles by the batch path).
        """
        g_best = math.inf
        j_best = -1
        near_best = None

        def consider(j, d, near):
            nonlocal g_best, j_best, near_best
            g = d - r
            if g < g_best or (g == g_best and j < j_best):
                g_best, j_best, near_best = g, int(j), near

        if 0 <= warm_seg < self.n_seg:
            d, near = _point_segment_distance(c, self.segs[warm_seg])
            self.counters["segment_evals"] += 1
            consider(warm_seg, d, near)

        if d_start is None:
            d_start = np.hypot(self.block_p0[:, 0] - c[0],
                               self.block_p0[:, 1] - c[1])
            d_end = np.hypot(self.block_p1[:, 0] - c[0],
                             self.block_p1[:, 1] - c[1])
        self.counters["point_evals"] += 2 * len(self.block_slices)

        # sound prunes: chain-length lower bound against the incumbent,
        # then the far-distance rule (floored so the margin band is safe)
        lower = 0.5 * (d_start + d_end - self.block_len) - r
        candidates = np.nonzero(~((lower > g_best)
                                  | ((d_start > self.d_far_eff)
                                     & (d_end > self.d_far_eff))))[0]
        self.counters["blocks_skipped"] += len(self.block_slices) - len(candidates)
        for b in candidates:
            if lower[b] > g_best:  # incumbent may have tightened
                continue
            s, e = self.block_slices[b]
            boxes = self.aabbs[s:e]
            inside = ((c[0] >= boxes[:, 0]) & (c[0] <= boxes[:, 2])
                      & (c[1] >= boxes[:, 1]) & (c[1] <= boxes[:, 3]))
            idx = np.nonzero(inside)[0]
            if len(idx) == 0:
                continue
            segs = self.segs[s + idx]
            d, near = _point_segments_distance(c, segs)
            self.counters["segment_evals"] += len(idx)
            order = np.argsort(d, kind="stable")
            k = order[0]
            consider(s + idx[k], d[k], near[k])
            # exact index tie-break against ascending brute force
            for k2 in order[1:]:
                if d[k2] != d[k]:
                    break
                consider(s + idx[k2], d[k2], near[k2])
        return g_best, j_best, near_best

    def evaluate(self, kin0: BodyKin, kin1: BodyKin) -> ContactResult:
        r_mat0 = kin0.R
        centers_world = kin1.p + (kin1.R @ self.circle_markers.T).T
        centers = (centers_world - kin0.p) @ r_mat0  # = R0^T (cw - p0)

        window_on = self.cfg.delta_theta_max < math.pi
        keep = np.arange(len(self.radii))
        if window_on:
            ecc = r_mat0.T @ (kin0.p - kin1.p)
            if float(np.hypot(*ecc)) < 1e-12:
                window_on = False
            else:
                theta_ecc = math.atan2(ecc[1], ecc[0])
                dth = np.arctan2(centers[:, 1], centers[:, 0]) - theta_ecc
                dth = (dth + math.pi) % (2.0 * math.pi) - math.pi
                keep = np.nonzero(np.abs(dth) <= self.cfg.delta_theta_max)[0]
                self.counters["circles_screened"] += len(self.radii) - len(keep)

        n_circ = len(self.radii)
        states = np.zeros(n_circ, dtype=int)
        fns = np.zeros(n_circ)
        payload_segs = np.zeros((self.n_seg, self.NODE_SLOTS))
        payload_segs[:, 0] = -1.0
        payload_segs[:, 1] = OPEN_GAP_SENTINEL
        warm_next = np.full(n_circ, -1, dtype=int)

        # block boundary distances for all kept circles in one shot
        ckeep = centers[keep]
        d_start_all = np.hypot(self.block_p0[None, :, 0] - ckeep[:, None, 0],
                               self.block_p0[None, :, 1] - ckeep[:, None, 1])
        d_end_all = np.hypot(self.block_p1[None, :, 0] - ckeep[:, None, 0],
                             self.block_p1[None, :, 1] - ckeep[:, None, 1])

        found = []  # (k, gap, j, near local)
        for row, k in enumerate(keep):
            g, j, near = self.search_circle(
                centers[k], float(self.radii[k]), int(self._warm[k]),
                d_start=d_start_all[row], d_end=d_end_all[row])
            if j >= 0:
                found.append((int(k), g, j, near))

        subs = []
        if found:
            ks = np.array([f[0] for f in found])
            gaps = np.array([f[1] for f in found])
            segs_j = np.array([f[2] for f in found])
            near_loc = np.array([f[3] for f in found])
            radii = self.radii[ks]
            near_w = kin0.p + near_loc @ r_mat0.T
            cw = centers_world[ks]
            dvec = cw - near_w
            dist = np.hypot(dvec[:, 0], dvec[:, 1])
            if np.any(dist < 1e-12):
                raise CoincidentCenters(
                    f"circle center on the curve ({self.pair_id})")
            n_gap = dvec / dist[:, None]
            p_c = near_w + 0.5 * (dist - radii)[:, None] * n_gap

            # point velocities with rotational terms, both bodies
            r0v = p_c - kin0.p
            r1v = p_c - kin1.p
            vc0 = kin0.v + kin0.omega * np.column_stack([-r0v[:, 1], r0v[:, 0]])
            vc1 = kin1.v + kin1.omega * np.column_stack([-r1v[:, 1], r1v[:, 0]])
            v_rel = vc1 - vc0
            g_dot = np.sum(v_rel * n_gap, axis=1)
            t_hat = np.column_stack([-n_gap[:, 1], n_gap[:, 0]])
            v_t = np.sum(v_rel * t_hat, axis=1)

            f_n = penalty_normal_force(gaps, g_dot, self.params)
            if self.params.contact_model == 1:
                for i in range(len(ks)):
                    if f_n[i] > 0.0:
                        f_n[i] = self._area_integral_scale(
                            centers[ks[i]], float(radii[i]), gaps[i], f_n[i])
            f_t = np.where(f_n > 0.0,
                           friction_force(f_n, v_t, self.params), 0.0)

            closed = gaps < 0.0
            states[ks] = closed.astype(int)
            fns[ks] = f_n
            warm_next[ks] = segs_j
            for i in np.nonzero(closed)[0]:
                payload_segs[segs_j[i]] = [float(ks[i]), gaps[i], v_t[i]]
            for i in range(len(ks)):
                subs.append(SubContact(
                    point=p_c[i], n_gap=n_gap[i], gap=float(gaps[i]),
                    g_dot=float(g_dot[i]), v_t=float(v_t[i]),
                    f_n=float(f_n[i]), f_t=float(f_t[i]),
                    closed=bool(closed[i]), index=int(ks[i])))
        payload = (payload_segs, warm_next, states.copy(), fns.copy())
        return ContactResult(subs=subs, states=states, fn=fns,
                             cache_payload=payload)

    # -- area-integral force model (contact_model == 1) -------------------

    def _area_integral_scale(self, c, r: float, g: float, f_n: float) -> float:
        """Scale f_n by the penetration-area integral between the
        circle's chain intersection points."""
        crossings = []
        for j in range(self.n_seg):
            seg = self.segs[j]
            p0 = seg[0:2]
            e = seg[2:4] - p0
            a = float(e @ e)
            if a <= 0.0:
                continue
            b = 2.0 * float((p0 - c) @ e)
            cc = float((p0 - c) @ (p0 - c)) - r * r
            disc = b * b - 4 * a * cc
            if disc < 0.0:
                continue
            sq = math.sqrt(disc)
            for t in ((-b - sq) / (2 * a), (-b + sq) / (2 * a)):
                if 0.0 <= t <= 1.0:
                    crossings.append((j, t))
        if len(crossings) < 2:
            raise NoIntersection(
                "area-integral model requires the circle to cross the chain")
        crossings.sort()
        (j0, t0), (j1, t1) = crossings[0], crossings[-1]
        # closed-form integral of sqrt(r^2 - d^2(s)) per segment: with
        # d^2 = h^2 + x^2 along the segment line this is the circular
        # antiderivative (x sqrt(w^2-x^2) + w^2 asin(x/w)) / 2
        integral = 0.0
        for j in range(j0, j1 + 1):
            seg = self.segs[j]
            p0 = seg[0:2]
            e = seg[2:4] - p0
            ln = float(np.hypot(*e))
            if ln <= 0.0:
                continue
            t_lo = t0 if j == j0 else 0.0
            t_hi = t1 if j == j1 else 1.0
            if t_hi <= t_lo:
                continue
            e_hat = e / ln
            foot = float((c - p0) @ e_hat)      # projection of center
            h2 = float((c - p0) @ (c - p0)) - foot * foot
            w2 = r * r - h2
            if w2 <= 0.0:
                continue
            w = math.sqrt(w2)
            x_lo = max(t_lo * ln - foot, -w)
            x_hi = min(t_hi * ln - foot, w)
            if x_hi <= x_lo:
                continue

            def anti(x):
                return 0.5 * (x * math.sqrt(max(w2 - x * x, 0.0))
                              + w2 * math.asin(min(1.0, max(-1.0, x / w))))

            integral += anti(x_hi) - anti(x_lo)
        return f_n * integral / abs(g)

    # -- cache ------------------------------------------------------------

    def commit(self, result: ContactResult) -> None:
        payload_segs, warm_next, states, fns = result.cache_payload
        self.node[:] = payload_segs
        self._warm[:] = warm_next
        self._committed_state[:] = states
        self._committed_fn[:] = fns

    def committed_states(self) -> np.ndarray:
        return self._committed_state.copy()

    def committed_fn(self) -> np.ndarray:
        return self._committed_fn.copy()


class InvolutePairContact:
    """Analytic involute gear-pair contact (no curve discretization).

    Profile A is conventionally the internal/outer gear on body 0,
    profile B the external/inner gear on body 1.  The four search
    stages: angular flank windows, warm-started tooth pair, fine
    sampling of the parametric flanks, tip-probe fallback.

    7-slot data node: [g, g_dot, f_n, tooth_a, u_a, tooth_b, u_b].
    """

    NODE_SIZE = 7

    def __init__(self, profile_a: InvoluteProfile, profile_b: InvoluteProfile,
                 params: ContactParams, cfg: ScreeningConfig,
                 table_a=None, table_b=None, k_hertz: float | None = None,
                 pair_id: str = "involute-pair"):
        self.profile_a = profile_a
        self.profile_b = profile_b
        self.params = params
        self.cfg = cfg
        self.table_a = table_a
        self.table_b = table_b
        self.k_hertz = k_hertz
        self.pair_id = pair_id
        self.node = np.zeros(self.NODE_SIZE)
        self.node[0] = OPEN_GAP_SENTINEL
        self.node[3] = -1.0
        self.node[5] = -1.0
        self.n_subpairs = 1
        self._u = np.linspace(0.0, 1.0, cfg.n_fine)
        # penetrations beyond one module are geometrically impossible for
        # meshing teeth; deeper negatives are wrong-side artifacts
        self._depth_cap = min(profile_a.m, profile_b.m)
        self.counters = {"pairs_evaluated": 0, "samples_evaluated": 0,
                         "cold_sweeps": 0, "probe_calls": 0}

    def reset_counters(self) -> None:
        for k in self.counters:
            self.counters[k] = 0

    # -- helpers -----------------------------------------------------------

    def _flank_world(self, profile, kin: BodyKin, tooth: int):
        pts = involute_point(profile, tooth, self._u)
        normals = involute_surface_normal(profile, tooth, self._u)
        pts_w = kin.p + (kin.R @ pts.T).T
        n_w = (kin.R @ normals.T).T
        return pts_w, n_w

    def _pair_min_gap(self, kin0: BodyKin, kin1: BodyKin,
                      tooth_a: int, tooth_b: int):
        """Stage-3 fine evaluation of one tooth pair.

        Samples of flank A are projected onto the sampled chain of
        flank B; the projection is signed with B's outward surface
        normal.  A negative gap additionally requires the two chains to
        intersect: signed projections onto an open curve are unreliable
        beyond its span, and true penetration of smooth flanks always
        produces a crossing.  The minimum signed value over A-samples
        wins.
        """
        n_s = len(self._u)
        pts_a, _ = self._flank_world(self.profile_a, kin0, tooth_a)
        pts_b, n_b = self._flank_world(self.profile_b, kin1, tooth_b)
        self.counters["pairs_evaluated"] += 1
        self.counters["samples_evaluated"] += n_s * n_s

        p0 = pts_b[:-1]
        e = pts_b[1:] - p0
        l2 = np.maximum(e[:, 0] ** 2 + e[:, 1] ** 2, 1e-300)
        # per-segment outward normal, oriented by the analytic normals
        seg_n = np.column_stack([-e[:, 1], e[:, 0]])
        seg_n /= np.sqrt(l2)[:, None]
        flip = np.einsum("ij,ij->i", seg_n, n_b[:-1] + n_b[1:]) < 0.0
        seg_n[flip] *= -1.0

        rel = pts_a[:, None, :] - p0[None, :, :]
        t = (rel[..., 0] * e[:, 0] + rel[..., 1] * e[:, 1]) / l2
        t_cl = np.clip(t, 0.0, 1.0)
        near = p0[None, :, :] + t_cl[..., None] * e[None, :, :]
        dvec = pts_a[:, None, :] - near
        dist = np.hypot(dvec[..., 0], dvec[..., 1])
        j_near = np.argmin(dist, axis=1)
        rows = np.arange(n_s)
        d_min = dist[rows, j_near]
        t_near = t_cl[rows, j_near]
        crossed = _chains_intersect(pts_a, pts_b)
        if crossed:
            interior = ~(((j_near == 0) & (t_near <= 0.0))
                         | ((j_near == len(e) - 1) & (t_near >= 1.0)))
            side = np.sign(np.einsum("ij,ij->i", seg_n[j_near],
                                     dvec[rows, j_near]))
            side = np.where(side == 0.0, 1.0, side)
            g_all = np.where(interior, side * d_min, d_min)
            g_all = np.where(g_all < -self._depth_cap, math.inf, g_all)
        else:
            g_all = d_min
        i_best = int(np.argmin(g_all))
        j_best = int(j_near[i_best])
        u_b = (j_best + float(t_near[i_best])) / (n_s - 1)
        p_b_best = near[i_best, j_best]
        return (float(g_all[i_best]), i_best, u_b,
                pts_a[i_best], p_b_best, seg_n[j_best], crossed)

    def _teeth_in_window(self, profile, kin: BodyKin, ref_angle: float):
        # Loadable sector per flank side around the reference direction:
        # right flanks in [-w, 0], left flanks in [0, +w] with the
        # window half-width w from the screening config (pi/4 for a
        # conventional mesh; wide-engagement small tooth-difference
        # pairs need more).  Two tooth pitches of margin keep boundary
        # teeth inspectable, since a flank reaches well past its
        # reference ray.
        teeth = np.arange(profile.z)
        if self.cfg.delta_theta_max >= math.pi:
            return teeth
        pitch = profile.pitch_angle(teeth) + kin.theta
        dth = (pitch - ref_angle + math.pi) % (2.0 * math.pi) - math.pi
        w = self.cfg.delta_theta_max
        m = 4.0 * math.pi / profile.z
        if profile.flank_sign > 0:
            mask = (dth >= -w - m) & (dth <= m)
        else:
            mask = (dth >= -m) & (dth <= w + m)
        return teeth[mask]

    def evaluate(self, kin0: BodyKin, kin1: BodyKin) -> ContactResult:
        was_closed = bool(self.node[0] < 0.0)
        cached_a, cached_b = int(self.node[3]), int(self.node[5])

        best = None  # (g, ta, tb, i, u_b, p_a, p_b, n_b, crossed)

        def run_pair(ta: int, tb: int):
            nonlocal best
            g, i, u_b, p_a, p_b, n_b, crossed = self._pair_min_gap(
                kin0, kin1, ta, tb)
            key = (g, ta, tb)
            if best is None or key < (best[0], best[1], best[2]):
                best = (g, ta, tb, i, u_b, p_a, p_b, n_b, crossed)

        # Stage 2: warm start on the cached tooth pair
        if 0 <= cached_a < self.profile_a.z and 0 <= cached_b < self.profile_b.z:
            run_pair(cached_a, cached_b)
            if best[0] >= 0.0:
                # widen to +-2 neighbours before a full sweep
                za, zb = self.profile_a.z, self.profile_b.z
                for da in range(-2, 3):
                    for db in range(-2, 3):
                        if da == 0 and db == 0:
                            continue
                        run_pair((cached_a + da) % za, (cached_b + db) % zb)

        if best is None or best[0] >= 0.0:
            # Stage 1 sweep: angular pre-screen relative to the line
            # from gear A's center toward gear B's center
            c_a = kin0.to_world(self.profile_a.center)
            c_b = kin1.to_world(self.profile_b.center)
            dvec = c_b - c_a
            if np.hypot(*dvec) > 1e-12:
                ref = math.atan2(dvec[1], dvec[0])
            else:
                ref = 0.0
            self.counters["cold_sweeps"] += 1
            teeth_a = self._teeth_in_window(self.profile_a, kin0, ref)
            teeth_b = self._teeth_in_window(self.profile_b, kin1, ref)
            for ta in teeth_a:
                for tb in teeth_b:
                    if best is not None and (ta, tb) == (best[1], best[2]):
                        continue
                    run_pair(int(ta), int(tb))

        if best is None or not math.isfinite(best[0]):
            if was_closed:
                raise SearchFailure(
                    f"{self.pair_id}: no candidate teeth in the angular "
                    "window while the previous step was closed")
            return self._open_result()

        g, ta, tb, i, u_b, p_a, p_b, n_b, crossed = best
        u_a = float(self._u[i])
        u_b = float(u_b)

        # Stage 4: tip probe when the analytic stage failed near the
        # parameter boundary.  A negative probe gap needs the crossing
        # witness, for the same reason stage 3 does.
        if g >= 0.0 and (i in (0, len(self._u) - 1) or u_b <= 0.0 or u_b >= 1.0):
            probed = self._tip_probe_gap(kin0, kin1, ta, tb)
            if probed is not None:
                if probed >= 0.0:
                    g = min(g, probed)
                elif crossed:
                    g = probed

        if g >= 0.0 and was_closed and g > self.cfg.probe_len:
            raise SearchFailure(
                f"{self.pair_id}: analytic and probe stages both failed "
                "on a previously closed pair")

        n_gap = -n_b  # B moving along its outward normal closes the gap
        p_c = 0.5 * (p_a + p_b)
        g_dot, v_t = contact_velocities(
            kin0.v, kin0.omega, kin0.p, kin1.v, kin1.omega, kin1.p, p_c, n_gap)
        k_mesh = self._mesh_stiffness(u_a, u_b)
        params = self.params if k_mesh is None else ContactParams(
            k_c=k_mesh, d_c=self.params.d_c, mu=self.params.mu,
            v_reg=self.params.v_reg, contact_model=self.params.contact_model,
            friction_law=self.params.friction_law)
        f_n = float(penalty_normal_force(g, g_dot, params))
        f_t = float(friction_force(f_n, v_t, params)) if f_n > 0 else 0.0
        closed = g < 0.0
        sub = SubContact(point=p_c, n_gap=n_gap, gap=g, g_dot=g_dot,
                         v_t=v_t, f_n=f_n, f_t=f_t, closed=closed,
                         index=ta)
        payload = np.array([g, g_dot, f_n, float(ta), u_a, float(tb), u_b])
        return ContactResult(subs=[sub],
                             states=np.array([1 if closed else 0]),
                             fn=np.array([f_n]), cache_payload=payload)

    def _open_result(self) -> ContactResult:
        payload = np.array([OPEN_GAP_SENTINEL, 0.0, 0.0, -1.0, 0.0, -1.0, 0.0])
        return ContactResult(subs=[], states=np.array([0]),
                             fn=np.array([0.0]), cache_payload=payload)

    def _tip_probe_gap(self, kin0, kin1, tooth_a: int, tooth_b: int):
        """Ray from B's tooth tip along its local normal onto flank A."""
        self.counters["probe_calls"] += 1
        tip = involute_point(self.profile_b, tooth_b, 1.0)
        n_tip = involute_surface_normal(self.profile_b, tooth_b, 1.0)
        tip_w = kin1.p + kin1.R @ tip
        n_w = kin1.R @ n_tip
        pts_a, n_a = self._flank_world(self.profile_a, kin0, tooth_a)
        target = ProfilePolyline(pts_a)
        hit = tip_probe(tip_w, n_w, self.cfg.probe_len, target)
        direction = 1.0
        if hit is None:
            hit = tip_probe(tip_w, -n_w, self.cfg.probe_len, target)
            direction = -1.0
        if hit is None:
            return None
        hit_pt = tip_w + direction * hit * n_w
        j = int(np.argmin(np.hypot(*(pts_a - hit_pt).T)))
        side = math.copysign(1.0, float(n_a[j] @ (tip_w - hit_pt)))
        return side * hit

    def _mesh_stiffness(self, u_a: float, u_b: float):
        if self.table_a is None and self.table_b is None \
                and self.k_hertz is None:
            return None
        inv = 0.0
        if self.table_a is not None:
            inv += 1.0 / float(self.table_a(u_a))
        if self.table_b is not None:
            inv += 1.0 / float(self.table_b(u_b))
        if self.k_hertz is not None:
            inv += 1.0 / self.k_hertz
        return 1.0 / inv if inv > 0.0 else None

    def commit(self, result: ContactResult) -> None:
        self.node[:] = result.cache_payload

    def committed_states(self) -> np.ndarray:
        return np.array([1 if self.node[0] < 0.0 else 0])

    def committed_fn(self) -> np.ndarray:
        return np.array([self.node[2]])
