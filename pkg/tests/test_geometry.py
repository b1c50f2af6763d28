import math

import mpmath as mp
import numpy as np
import pytest

from reducerdyn.exceptions import (
    DegenerateCurvature,
    GeometryViolation,
)
from reducerdyn.geometry import (
    CycloidParams,
    InvoluteProfile,
    ProfilePolyline,
    curvature_normal,
    cycloid_point,
    cycloid_polyline,
    export_profile_csv,
    involute_point,
    involute_surface_normal,
    resample_equal_arclength,
    signed_gap,
    tip_probe,
)


# ---------------------------------------------------------------- oracles

def cycloid_point_mp(params: CycloidParams, phi, dps=50):
    """Independent high-precision evaluation of the modified profile."""
    with mp.workdps(dps):
        phi = mp.mpf(phi)
        rp_eff = mp.mpf(params.R_p) - mp.mpf(params.delta_Rp)
        pin_eff = mp.mpf(params.r_p) + mp.mpf(params.delta_r)
        zp = mp.mpf(params.z_p)
        a = mp.mpf(params.a)
        d = mp.mpf(params.delta)
        i_h = zp / (zp - 1)
        k1 = a * zp / rp_eff
        s = 1 + k1 ** 2 - 2 * k1 * mp.cos(phi)
        rs = mp.sqrt(s)
        outer = rp_eff - pin_eff / rs
        inner = (a / rp_eff) * (rp_eff - zp * pin_eff / rs)
        x = -outer * mp.sin((1 - i_h) * phi - d) - inner * mp.sin(i_h * phi + d)
        y = outer * mp.cos((1 - i_h) * phi - d) - inner * mp.cos(i_h * phi + d)
        return float(x), float(y)


def involute_point_mp(profile: InvoluteProfile, tooth, u, dps=50):
    """Arbitrary-precision involute construction via inv(alpha_c)."""
    with mp.workdps(dps):
        m = mp.mpf(profile.m)
        z = mp.mpf(profile.z)
        alpha = mp.mpf(profile.alpha)
        r = m * z / 2
        r_b = r * mp.cos(alpha)
        r_f = r - m * (mp.mpf(profile.ha_star) + mp.mpf(profile.c_star) - mp.mpf(profile.x))
        r_a = r + m * (mp.mpf(profile.ha_star) + mp.mpf(profile.x))
        r_min = max(r_f, r_b)
        r_u = r_min + mp.mpf(u) * (r_a - r_min)
        alpha_c = mp.acos(r_b / r_u)
        theta_c = mp.tan(alpha_c) - alpha_c
        theta_base = mp.tan(alpha) - alpha
        pitch = 2 * mp.pi * tooth / z + mp.mpf(profile.base_rotation)
        s = profile.flank_sign
        if profile.is_inner:
            phi_c = pitch + s * (theta_c - theta_base)
        else:
            phi_c = pitch + s * (theta_base - theta_c)
        return (float(r_u * mp.cos(phi_c)),
                float(r_u * mp.sin(phi_c) + mp.mpf(profile.delta_y)))


def brute_force_ray_hit(tip, direction, probe_len, polyline):
    """Exhaustive ray-segment intersection over all segments."""
    best = None
    for x0, y0, x1, y1 in polyline.segments():
        ex, ey = x1 - x0, y1 - y0
        denom = direction[0] * ey - direction[1] * ex
        if abs(denom) < 1e-300:
            continue
        rx, ry = x0 - tip[0], y0 - tip[1]
        t = (rx * ey - ry * ex) / denom
        s = (rx * direction[1] - ry * direction[0]) / denom
        if 0.0 <= s <= 1.0 and 0.0 <= t <= probe_len:
            if best is None or t < best:
                best = t
    return best


# ------------------------------------------------------------- cycloid

class TestCycloidPoint:
    def test_phi_zero_no_modifications(self):
        p = CycloidParams(z_p=40, a=1.5e-3, R_p=80e-3, r_p=3e-3)
        k1 = p.K_1
        # S'(0) = (1 - K_1)^2 collapses the expression analytically
        y_expected = (p.R_p - p.r_p / (1 - k1)) \
            - (p.a / p.R_p) * (p.R_p - p.z_p * p.r_p / (1 - k1))
        pt = cycloid_point(p, 0.0)
        assert pt[0] == pytest.approx(0.0, abs=1e-15)
        assert pt[1] == pytest.approx(y_expected, rel=1e-14)

    def test_phi_pi_against_high_precision_oracle(self):
        p = CycloidParams(z_p=40, a=1.5e-3, R_p=80e-3, r_p=3e-3)
        x_mp, y_mp = cycloid_point_mp(p, math.pi)
        pt = cycloid_point(p, math.pi)
        assert pt[0] == pytest.approx(x_mp, rel=1e-12, abs=1e-15)
        assert pt[1] == pytest.approx(y_mp, rel=1e-12)

    def test_random_phi_matches_oracle_to_1e12(self):
        p = CycloidParams(z_p=40, a=1.5e-3, R_p=80e-3, r_p=3e-3,
                          delta_Rp=4e-5, delta_r=3e-5, delta=2e-4)
        rng = np.random.default_rng(7)
        phis = rng.uniform(0.0, 2 * math.pi * p.lobe_count, 1000)
        pts = cycloid_point(p, phis)
        for phi, pt in zip(phis, pts):
            x_mp, y_mp = cycloid_point_mp(p, phi)
            ref = math.hypot(x_mp, y_mp)
            assert math.hypot(pt[0] - x_mp, pt[1] - y_mp) <= 1e-12 * ref

    def test_modification_continuity(self):
        base = dict(z_p=40, a=1.5e-3, R_p=80e-3, r_p=3e-3)
        p0 = CycloidParams(**base)
        phis = np.linspace(0, 2 * math.pi, 17)
        ref = cycloid_point(p0, phis)
        for eps in (1e-9, 1e-12):
            p_eps = CycloidParams(**base, delta_Rp=eps, delta_r=eps, delta=eps)
            moved = cycloid_point(p_eps, phis)
            assert np.max(np.abs(moved - ref)) < 100 * eps + 1e-12

    def test_point_within_pin_circle(self):
        p = CycloidParams(z_p=40, a=1.5e-3, R_p=80e-3, r_p=3e-3)
        phis = np.linspace(0, 2 * math.pi * p.lobe_count, 5000)
        r = np.hypot(*cycloid_point(p, phis).T)
        assert np.all(r <= p.R_p)

    def test_invariant_k1_below_one(self):
        with pytest.raises(GeometryViolation):
            CycloidParams(z_p=40, a=2.1e-3, R_p=80e-3, r_p=3e-3)

    def test_invariant_radii(self):
        with pytest.raises(GeometryViolation):
            CycloidParams(z_p=40, a=1e-3, R_p=2e-3, r_p=3e-3)


# ------------------------------------------------------------ resampling

class TestResample:
    def test_straight_line(self):
        x = np.linspace(0.0, 1.0, 1000)
        dense = ProfilePolyline(np.column_stack([x, np.zeros_like(x)]))
        out = resample_equal_arclength(dense, 11)
        assert np.allclose(out.points[:, 0], np.linspace(0, 1, 11), atol=1e-9)
        assert np.allclose(out.points[:, 1], 0.0)

    def test_circle_quarters(self):
        th = np.linspace(0.0, 2 * math.pi, 20000, endpoint=False)
        dense = ProfilePolyline(
            np.column_stack([np.cos(th), np.sin(th)]), is_closed=True)
        out = resample_equal_arclength(dense, 4)
        angles = np.unwrap(np.arctan2(out.points[:, 1], out.points[:, 0]))
        steps = np.diff(angles)
        assert np.allclose(steps, math.pi / 2, rtol=1e-6)

    def test_cycloid_flank_uniformity_vs_dense_oracle(self):
        # Arc distances between output points, measured on a much denser
        # version of the same curve, must have CoV < 1e-6.
        p = CycloidParams(z_p=40, a=1.5e-3, R_p=80e-3, r_p=3e-3)
        phi_dense = np.linspace(0.0, 2 * math.pi, 64 * 200)
        dense = ProfilePolyline(cycloid_point(p, phi_dense))
        out = resample_equal_arclength(dense, 64)

        phi_oracle = np.linspace(0.0, 2 * math.pi, 10 ** 6)
        ref = cycloid_point(p, phi_oracle)
        cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(ref, axis=0).T))])

        # arc position of each output point: continuous projection onto
        # the oracle polyline near the closest vertex
        arc = []
        for q in out.points:
            i = int(np.argmin(np.hypot(ref[:, 0] - q[0], ref[:, 1] - q[1])))
            best = cum[i]
            best_d2 = float((ref[i, 0] - q[0]) ** 2 + (ref[i, 1] - q[1]) ** 2)
            for j in (i - 1, i):
                if j < 0 or j + 1 >= len(ref):
                    continue
                e = ref[j + 1] - ref[j]
                L2 = float(e @ e)
                t = float(np.clip((q - ref[j]) @ e / L2, 0.0, 1.0))
                proj = ref[j] + t * e
                d2 = float((proj[0] - q[0]) ** 2 + (proj[1] - q[1]) ** 2)
                if d2 < best_d2:
                    best_d2 = d2
                    best = cum[j] + t * math.sqrt(L2)
            arc.append(best)
        d = np.diff(arc)
        assert np.std(d) / np.mean(d) < 1e-6

    def test_endpoints_preserved(self):
        x = np.linspace(0.0, 2.0, 500)
        dense = ProfilePolyline(np.column_stack([x, x ** 2]))
        out = resample_equal_arclength(dense, 13)
        assert np.allclose(out.points[0], dense.points[0])
        assert np.allclose(out.points[-1], dense.points[-1])

    def test_needs_enough_dense_points(self):
        dense = ProfilePolyline(np.column_stack([np.linspace(0, 1, 10),
                                                 np.zeros(10)]))
        with pytest.raises(GeometryViolation):
            resample_equal_arclength(dense, 8)


# ------------------------------------------------------------- involute

class TestInvolutePoint:
    def make(self, **kw):
        base = dict(is_inner=False, z=40, m=1e-3, alpha=math.radians(20))
        base.update(kw)
        return InvoluteProfile(**base)

    def test_endpoint_radii(self):
        prof = self.make()
        p0 = involute_point(prof, 0, 0.0)
        p1 = involute_point(prof, 0, 1.0)
        assert math.hypot(*(p0 - prof.center)) == pytest.approx(prof.r_min, rel=1e-14)
        assert math.hypot(*(p1 - prof.center)) == pytest.approx(prof.r_max, rel=1e-14)

    def test_midpoint_against_mpmath_oracle(self):
        prof = self.make()
        x_mp, y_mp = involute_point_mp(prof, 0, 0.5)
        pt = involute_point(prof, 0, 0.5)
        assert pt[0] == pytest.approx(x_mp, rel=1e-12)
        assert pt[1] == pytest.approx(y_mp, rel=1e-12)
        r_u = prof.radius_at(0.5)
        assert r_u == pytest.approx((prof.r_min + prof.r_max) / 2, rel=1e-15)

    def test_radius_identity_1000_random(self):
        prof = self.make(x=0.2, base_rotation=0.3, delta_y=2e-3)
        rng = np.random.default_rng(11)
        teeth = rng.integers(0, prof.z, 1000)
        us = rng.uniform(0.0, 1.0, 1000)
        pts = involute_point(prof, teeth, us)
        r = np.hypot(*(pts - prof.center).T)
        r_exp = prof.radius_at(us)
        assert np.max(np.abs(r - r_exp) / r_exp) < 1e-12

    def test_flank_sign_mirrors_across_centerline(self):
        right = self.make(flank_sign=1)
        left = self.make(flank_sign=-1)
        for u in (0.0, 0.3, 0.9):
            pr = involute_point(right, 3, u)
            pl = involute_point(left, 3, u)
            pitch = right.pitch_angle(3)
            # reflect pr across the ray at angle pitch
            c, s = math.cos(2 * pitch), math.sin(2 * pitch)
            mirrored = np.array([c * pr[0] + s * pr[1],
                                 s * pr[0] - c * pr[1]])
            assert np.allclose(mirrored, pl, atol=1e-15)

    def test_internal_branch_against_oracle(self):
        prof = self.make(is_inner=True, z=42)
        x_mp, y_mp = involute_point_mp(prof, 5, 0.7)
        pt = involute_point(prof, 5, 0.7)
        assert pt[0] == pytest.approx(x_mp, rel=1e-12)
        assert pt[1] == pytest.approx(y_mp, rel=1e-12)

    def test_surface_normal_is_unit_and_orthogonal(self):
        for is_inner in (False, True):
            prof = self.make(is_inner=is_inner)
            us = np.linspace(0.01, 1.0, 20)
            n = involute_surface_normal(prof, 2, us)
            assert np.allclose(np.hypot(n[:, 0], n[:, 1]), 1.0, atol=1e-12)
            # orthogonal to a finite-difference tangent
            p_lo = involute_point(prof, 2, us - 1e-7)
            p_hi = involute_point(prof, 2, us + 1e-7)
            t = p_hi - p_lo
            t /= np.linalg.norm(t, axis=1, keepdims=True)
            assert np.max(np.abs(np.sum(n * t, axis=1))) < 1e-5

    def test_external_normal_points_off_material(self):
        # The flank_sign=+1 family sweeps toward smaller angles from
        # root to tip, so its tooth material lies on the clockwise side;
        # the outward normal must point counterclockwise (n . e_t > 0).
        prof_r = self.make(flank_sign=1)
        u = 0.5
        p = involute_point(prof_r, 0, u)
        n = involute_surface_normal(prof_r, 0, u)
        e_t = np.array([-p[1], p[0]]) / np.hypot(*p)
        assert float(n @ e_t) > 0.0
        # mirrored flank: outward normal flips to the clockwise side
        prof_l = self.make(flank_sign=-1)
        p2 = involute_point(prof_l, 0, u)
        n2 = involute_surface_normal(prof_l, 0, u)
        e_t2 = np.array([-p2[1], p2[0]]) / np.hypot(*p2)
        assert float(n2 @ e_t2) < 0.0


# ------------------------------------------------------- curvature, gap

class TestCurvatureNormal:
    def test_circle_points_toward_center(self):
        th = np.linspace(0, 2 * math.pi, 100, endpoint=False)
        ring = ProfilePolyline(
            3.0 * np.column_stack([np.cos(th), np.sin(th)]), is_closed=True)
        for i in (0, 10, 57):
            n = curvature_normal(ring, i)
            expected = -ring.points[i] / np.hypot(*ring.points[i])
            assert np.allclose(n, expected, atol=1e-10)

    def test_inner_flag_reverses(self):
        th = np.linspace(0, 2 * math.pi, 100, endpoint=False)
        ring = ProfilePolyline(
            np.column_stack([np.cos(th), np.sin(th)]), is_closed=True)
        n_out = curvature_normal(ring, 4, is_inner=False)
        n_in = curvature_normal(ring, 4, is_inner=True)
        assert np.allclose(n_out, -n_in)

    def test_collinear_raises(self):
        line = ProfilePolyline([[0, 0], [1, 0], [2, 0]])
        with pytest.raises(DegenerateCurvature):
            curvature_normal(line, 1)


class TestSignedGap:
    def test_zero(self):
        assert signed_gap([1, 2], [1, 2], [0, 1]) == 0.0

    def test_aligned(self):
        g = signed_gap([2e-5, 0], [0, 0], [1, 0])
        assert g == pytest.approx(2e-5, rel=1e-15)

    def test_penetration_sign(self):
        g = signed_gap([-1e-5, 0], [0, 0], [1, 0])
        assert g == pytest.approx(-1e-5, rel=1e-15)

    def test_antisymmetry_in_normal(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            a = rng.normal(size=2)
            b = rng.normal(size=2)
            n = rng.normal(size=2)
            n /= np.hypot(*n)
            assert signed_gap(a, b, n) == pytest.approx(
                -signed_gap(a, b, -n), abs=1e-300)


class TestTipProbe:
    def test_axis_aligned_hit(self):
        seg = ProfilePolyline([[1.0, -1.0], [1.0, 1.0]])
        assert tip_probe([0, 0], [1, 0], 2.0, seg) == pytest.approx(1.0)

    def test_out_of_range(self):
        seg = ProfilePolyline([[1.0, -1.0], [1.0, 1.0]])
        assert tip_probe([0, 0], [1, 0], 0.5, seg) is None

    def test_endpoint_grazing_accepted(self):
        seg = ProfilePolyline([[1.0, 0.0], [1.0, 1.0]])
        assert tip_probe([0, 0], [1, 0], 2.0, seg) == pytest.approx(1.0)

    def test_matches_brute_force_on_random_fixtures(self):
        rng = np.random.default_rng(4)
        for _ in range(300):
            pts = rng.uniform(-1, 1, size=(rng.integers(2, 30), 2))
            poly = ProfilePolyline(pts, is_closed=bool(rng.integers(0, 2)))
            tip = rng.uniform(-1.5, 1.5, 2)
            ang = rng.uniform(0, 2 * math.pi)
            d = np.array([math.cos(ang), math.sin(ang)])
            ln = rng.uniform(0.1, 3.0)
            got = tip_probe(tip, d, ln, poly)
            ref = brute_force_ray_hit(tip, d, ln, poly)
            if ref is None:
                assert got is None
            else:
                assert got == pytest.approx(ref, abs=1e-12)


class TestPolyline:
    def test_aabbs_contain_endpoints(self):
        rng = np.random.default_rng(5)
        poly = ProfilePolyline(rng.normal(size=(50, 2)), is_closed=True)
        boxes = poly.build_segment_aabbs(margin=0.1)
        segs = poly.segments()
        assert np.all(boxes[:, 0] <= np.minimum(segs[:, 0], segs[:, 2]))
        assert np.all(boxes[:, 2] >= np.maximum(segs[:, 0], segs[:, 2]))
        assert np.all(boxes[:, 1] <= np.minimum(segs[:, 1], segs[:, 3]))
        assert np.all(boxes[:, 3] >= np.maximum(segs[:, 1], segs[:, 3]))

    def test_export_csv_roundtrip(self, tmp_path):
        p = CycloidParams(z_p=20, a=1e-3, R_p=40e-3, r_p=2e-3)
        poly = cycloid_polyline(p, 64)
        path = tmp_path / "profile.csv"
        export_profile_csv(poly, path)
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert np.array_equal(data, poly.points)  # 17 sig digits round-trip
