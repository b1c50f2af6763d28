import math

import numpy as np
import pytest

from reducerdyn.exceptions import (
    InsufficientBranchData,
    MissingCrossing,
    OutOfSchedule,
)
from reducerdyn.loading import (
    ARCMIN,
    LOADING,
    RELOADING,
    REVERSE_LOADING,
    REVERSE_UNLOADING,
    UNLOADING,
    HysteresisLoop,
    TorqueSchedule,
    compute_metrics,
    export_branch_csv,
    offset_correction,
    split_branches,
    torque_at,
)


def parallelogram_loop(T_r=3200.0, t_seg=0.5, k=1000.0, c=0.5, n_per=400,
                       offset=0.0):
    """Synthetic loop: descending sweep on theta = T/k + c, ascending on
    theta = T/k - c (k in N*m/arcmin, c in arcmin).  Built stage-wise so
    the reversal corners sit exactly on their sweep's line."""
    sched = TorqueSchedule(T_r, t_seg)
    t = np.linspace(0.0, sched.duration, 5 * n_per + 1)
    torque = np.array([torque_at(sched, ti) for ti in t])
    shift = np.empty_like(torque)
    shift[:n_per + 1] = -c                      # initial (virgin) ramp
    shift[n_per + 1:3 * n_per + 1] = +c         # descending sweep
    shift[3 * n_per + 1:] = -c                  # ascending sweep
    theta = (torque / k + shift) * ARCMIN + offset
    return HysteresisLoop(t, torque, theta)


class TestTorqueSchedule:
    def test_stage_boundary_values(self):
        s = TorqueSchedule(3200.0, 0.5)
        assert torque_at(s, 0.0) == 0.0
        assert torque_at(s, 0.5) == pytest.approx(3200.0)
        assert torque_at(s, 1.0) == pytest.approx(0.0)
        assert torque_at(s, 1.5) == pytest.approx(-3200.0)
        assert torque_at(s, 2.0) == pytest.approx(0.0)
        assert torque_at(s, 2.5) == pytest.approx(3200.0)

    def test_stage3_midpoint(self):
        s = TorqueSchedule(3200.0, 0.5)
        assert torque_at(s, 1.25) == pytest.approx(-1600.0)

    def test_out_of_schedule(self):
        s = TorqueSchedule(3200.0, 0.5)
        with pytest.raises(OutOfSchedule):
            torque_at(s, -0.1)
        with pytest.raises(OutOfSchedule):
            torque_at(s, 2.6)

    def test_lipschitz_continuity(self):
        s = TorqueSchedule(3200.0, 0.5)
        rng = np.random.default_rng(5)
        slope = s.T_r / s.t_seg
        for _ in range(2000):
            t = rng.uniform(0.0, 2.5 - 1e-6)
            eps = rng.uniform(0.0, min(1e-3, 2.5 - t))
            assert abs(torque_at(s, t + eps) - torque_at(s, t)) \
                <= slope * eps + 1e-9

    def test_machine_precision_piecewise(self):
        s = TorqueSchedule(3200.0, 0.5)
        ts = np.linspace(0.0, 2.5, 10001)
        for t in ts:
            tr, seg = 3200.0, 0.5
            if t < seg:
                exp = tr / seg * t
            elif t < 2 * seg:
                exp = tr * (1 - (t - seg) / seg)
            elif t < 3 * seg:
                exp = -tr / seg * (t - 2 * seg)
            elif t < 4 * seg:
                exp = -tr * (1 - (t - 3 * seg) / seg)
            else:
                exp = tr / seg * (t - 4 * seg)
            assert torque_at(s, t) == exp


class TestOffsetCorrection:
    def test_symmetric_loop_identity(self):
        loop = parallelogram_loop()
        corr = offset_correction(loop)
        assert np.max(np.abs(corr.theta - loop.theta)) < 1e-12

    def test_pure_translation_removed(self):
        loop = parallelogram_loop(offset=0.01)
        corr = offset_correction(loop)
        ref = parallelogram_loop()
        assert np.max(np.abs(corr.theta - ref.theta)) < 1e-9

    def test_idempotent(self):
        loop = parallelogram_loop(offset=0.003)
        once = offset_correction(loop)
        twice = offset_correction(once)
        assert np.max(np.abs(once.theta - twice.theta)) < 1e-12

    def test_noisy_loop_centered(self):
        rng = np.random.default_rng(9)
        loop = parallelogram_loop(offset=0.02)
        noisy = loop.copy_with(theta=loop.theta + rng.normal(0, 1e-7,
                                                             len(loop)))
        corr = offset_correction(noisy)
        from reducerdyn.loading import _zero_crossings
        pos, neg = _zero_crossings(corr)
        assert abs(pos + neg) < 1e-6

    def test_missing_crossing(self):
        t = np.linspace(0, 1, 50)
        loop = HysteresisLoop(t, np.linspace(0, 100, 50), t * 0.01)
        with pytest.raises(MissingCrossing):
            offset_correction(loop)


class TestSplitBranches:
    def test_monotone_ramp_all_loading(self):
        t = np.linspace(0, 1, 100)
        loop = HysteresisLoop(t, 100 * t, 0.001 * t)
        lab = split_branches(loop)
        assert all(l == LOADING for l in lab.labels)

    def test_five_stage_boundaries(self):
        loop = parallelogram_loop(n_per=200)
        lab = split_branches(loop)
        n = 200
        # sample well inside each stage
        assert lab.labels[n // 2] == LOADING
        assert lab.labels[n + n // 2] == UNLOADING
        assert lab.labels[2 * n + n // 2] == REVERSE_LOADING
        assert lab.labels[3 * n + n // 2] == REVERSE_UNLOADING
        assert lab.labels[4 * n + n // 2] == RELOADING
        # transitions within one sample of the stage boundaries
        for k in (1, 2, 3, 4):
            assert lab.labels[k * n - 2] != lab.labels[k * n + 2]

    def test_plateau_inherits_previous_label(self):
        t = np.linspace(0, 3, 301)
        torque = np.concatenate([np.linspace(0, 100, 101),
                                 np.full(100, 100.0),
                                 np.linspace(100, 0, 100)])
        loop = HysteresisLoop(t, torque, 0.001 * torque)
        lab = split_branches(loop)
        assert lab.labels[150] == LOADING  # mid-plateau


class TestComputeMetrics:
    def test_parallelogram_exact(self):
        T_r, k, c = 3200.0, 1000.0, 0.5
        loop = split_branches(offset_correction(
            parallelogram_loop(T_r=T_r, k=k, c=c)))
        m = compute_metrics(loop, T_r)
        assert m.K_pos == pytest.approx(k, rel=1e-9)
        assert m.K_neg == pytest.approx(k, rel=1e-9)
        assert m.K_avg == pytest.approx(k, rel=1e-9)
        # median curve cancels +-c: LM = 0.06 T_r / k
        assert m.LM == pytest.approx(0.06 * T_r / k, rel=1e-9)
        # loop width at zero torque is 2c
        assert m.BL == pytest.approx(2 * c, rel=1e-9)

    def test_degenerate_zero_width(self):
        # zero loop width and (near-)rigid elasticity: both indicators
        # collapse; LM keeps its elastic term 0.06 T_r / k by definition,
        # which vanishes as k grows
        T_r, k = 3200.0, 1e12
        loop = split_branches(offset_correction(
            parallelogram_loop(T_r=T_r, k=k, c=0.0)))
        m = compute_metrics(loop, T_r)
        assert m.LM == pytest.approx(0.0, abs=1e-9)
        assert m.BL == pytest.approx(0.0, abs=1e-9)
        # finite stiffness, zero width: LM equals the elastic term alone
        loop2 = split_branches(offset_correction(
            parallelogram_loop(T_r=T_r, k=1000.0, c=0.0)))
        m2 = compute_metrics(loop2, T_r)
        assert m2.LM == pytest.approx(0.06 * T_r / 1000.0, rel=1e-9)
        assert m2.BL == pytest.approx(0.0, abs=1e-9)

    def test_metrics_invariant_under_time_reparameterization(self):
        T_r = 3200.0
        base = parallelogram_loop(T_r=T_r)
        m1 = compute_metrics(split_branches(offset_correction(base)), T_r)
        # smooth monotone reparameterization of time
        warped_t = np.sinh(2.0 * base.t) / np.sinh(5.0) + base.t * 1e-3
        warped = HysteresisLoop(warped_t, base.torque, base.theta)
        m2 = compute_metrics(split_branches(offset_correction(warped)), T_r)
        assert m1.K_avg == pytest.approx(m2.K_avg, rel=1e-9)
        assert m1.LM == pytest.approx(m2.LM, rel=1e-9)
        assert m1.BL == pytest.approx(m2.BL, rel=1e-9)

    def test_requires_labels(self):
        loop = parallelogram_loop()
        with pytest.raises(InsufficientBranchData):
            compute_metrics(loop, 3200.0)

    def test_export_csv(self, tmp_path):
        loop = split_branches(parallelogram_loop(n_per=20))
        path = tmp_path / "branches.csv"
        export_branch_csv(loop, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,T,theta,branch"
        assert len(lines) == len(loop) + 1
        assert lines[1].endswith(LOADING)
