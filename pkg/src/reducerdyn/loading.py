"""Quasi-static torque schedule and hysteresis post-processing.

The five-stage piecewise-linear torque sequence drives the output
through forward loading, unloading, reverse loading, reverse unloading
and reloading; the recorded (torque, output angle) loop yields the
torsional stiffness, lost motion and backlash indicators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    InsufficientBranchData,
    MissingCrossing,
    OutOfSchedule,
)

ARCMIN = math.pi / 10800.0  # rad per arcminute

LOADING = "loading"
UNLOADING = "unloading"
REVERSE_LOADING = "reverse-loading"
REVERSE_UNLOADING = "reverse-unloading"
RELOADING = "reloading"


@dataclass(frozen=True)
class TorqueSchedule:
    """Five-stage piecewise-linear schedule with rated torque T_r."""

    T_r: float
    t_seg: float = 0.5

    def __post_init__(self):
        if self.T_r <= 0.0 or self.t_seg <= 0.0:
            raise ValueError("T_r and t_seg must be positive")

    @property
    def duration(self) -> float:
        return 5.0 * self.t_seg

    def __call__(self, t: float) -> float:
        return torque_at(self, t)


def torque_at(schedule: TorqueSchedule, t: float) -> float:
    """Drive torque at time t.

    Stages: ramp to +T_r, back to zero, down to -T_r, back to zero,
    ramp to +T_r again; continuous everywhere.
    """
    tr, ts = schedule.T_r, schedule.t_seg
    if t < 0.0 or t > 5.0 * ts:
        raise OutOfSchedule(f"t={t:.6g} outside [0, {5 * ts:.6g}]")
    if t < ts:
        return tr / ts * t
    if t < 2.0 * ts:
        return tr * (1.0 - (t - ts) / ts)
    if t < 3.0 * ts:
        return -tr / ts * (t - 2.0 * ts)
    if t < 4.0 * ts:
        return -tr * (1.0 - (t - 3.0 * ts) / ts)
    return tr / ts * (t - 4.0 * ts)


class HysteresisLoop:
    """Time-ordered (t, T, theta) samples with optional branch labels."""

    def __init__(self, t, torque, theta, labels=None):
        self.t = np.asarray(t, dtype=float)
        self.torque = np.asarray(torque, dtype=float)
        self.theta = np.asarray(theta, dtype=float)
        if not (len(self.t) == len(self.torque) == len(self.theta)):
            raise ValueError("sample arrays must have equal length")
        if np.any(np.diff(self.t) <= 0.0):
            raise ValueError("sample times must be strictly increasing")
        self.labels = list(labels) if labels is not None else None

    def __len__(self):
        return len(self.t)

    def copy_with(self, theta=None, labels=None):
        return HysteresisLoop(self.t, self.torque,
                              self.theta if theta is None else theta,
                              self.labels if labels is None else labels)


def _zero_crossings(loop: HysteresisLoop):
    """Interpolated theta at the positive-side and negative-side
    zero-torque crossings (unloading end and reverse-unloading end)."""
    torque = loop.torque
    theta = loop.theta
    pos_cross = None  # T passes through 0 coming from the + excursion
    neg_cross = None  # T passes through 0 coming from the - excursion
    for i in range(len(torque) - 1):
        t0, t1 = torque[i], torque[i + 1]
        if t0 == 0.0 and t1 == 0.0:
            continue
        if t0 >= 0.0 > t1 or (t0 > 0.0 >= t1):
            w = t0 / (t0 - t1)
            pos_cross = theta[i] + w * (theta[i + 1] - theta[i])
        elif t0 <= 0.0 < t1 or (t0 < 0.0 <= t1):
            w = t0 / (t0 - t1)
            neg_cross = theta[i] + w * (theta[i + 1] - theta[i])
    return pos_cross, neg_cross


def offset_correction(loop: HysteresisLoop) -> HysteresisLoop:
    """Center the loop using zero-crossing interpolation.

    The positive and negative zero-torque crossings are located by
    linear interpolation in T and their angular average is subtracted
    from every sample, leaving the crossing pair symmetric about zero.
    """
    pos_cross, neg_cross = _zero_crossings(loop)
    if pos_cross is None or neg_cross is None:
        raise MissingCrossing(
            "loop must cross zero torque from both excursions")
    offset = 0.5 * (pos_cross + neg_cross)
    return loop.copy_with(theta=loop.theta - offset)


def split_branches(loop: HysteresisLoop) -> HysteresisLoop:
    """Label samples by the sign of dT/dt (central differences).

    Positive derivative means loading (reloading when it follows the
    reverse excursion, reverse-unloading while T < 0), negative means
    unloading (reverse-loading once T < 0).  Plateaus inherit the
    previous label.
    """
    if len(loop) < 3:
        raise InsufficientBranchData("need >= 3 samples to label branches")
    t = loop.t
    torque = loop.torque
    dT = np.gradient(torque, t)
    labels = []
    seen_negative = False
    prev = LOADING
    for i in range(len(t)):
        if torque[i] < 0.0:
            seen_negative = True
        if dT[i] > 0.0:
            if torque[i] < 0.0:
                lab = REVERSE_UNLOADING
            else:
                lab = RELOADING if seen_negative else LOADING
        elif dT[i] < 0.0:
            lab = REVERSE_LOADING if torque[i] < 0.0 else UNLOADING
        else:
            lab = prev
        labels.append(lab)
        prev = lab
    return loop.copy_with(labels=labels)


@dataclass(frozen=True)
class HysteresisMetrics:
    K_pos: float     # N*m/arcmin
    K_neg: float
    K_avg: float
    LM: float        # arcmin
    BL: float        # arcmin, magnitude
    BL_signed: float

    def as_dict(self):
        return {"K_pos": self.K_pos, "K_neg": self.K_neg,
                "K_avg": self.K_avg, "LM": self.LM, "BL": self.BL,
                "BL_signed": self.BL_signed}


def _branch_arrays(loop: HysteresisLoop, wanted):
    idx = [i for i, lab in enumerate(loop.labels) if lab in wanted]
    if len(idx) < 2:
        raise InsufficientBranchData(
            f"branch {wanted} has {len(idx)} samples")
    return loop.torque[idx], loop.theta[idx]


def _interp_theta(torque_b, theta_b, at):
    """Monotone piecewise-linear interpolation of theta(T) on a branch."""
    order = np.argsort(torque_b, kind="stable")
    t_sorted = torque_b[order]
    th_sorted = theta_b[order]
    return float(np.interp(at, t_sorted, th_sorted))


def _fit_slope(torque_b, theta_b, lo, hi):
    mask = (torque_b >= min(lo, hi)) & (torque_b <= max(lo, hi))
    if int(np.sum(mask)) < 2:
        raise InsufficientBranchData(
            f"fewer than 2 samples in torque window [{lo:.6g}, {hi:.6g}]")
    coeffs = np.polyfit(theta_b[mask] / ARCMIN, torque_b[mask], 1)
    return float(coeffs[0])  # N*m per arcmin


def compute_metrics(loop: HysteresisLoop, T_r: float) -> HysteresisMetrics:
    """Torsional stiffness, lost motion and backlash from a labeled,
    offset-corrected loop.

    K is the least-squares slope of the loading branch restricted to
    [0.66 T_r, T_r] (and its mirror on the reverse-loading branch); LM
    is the width of the median curve at +-3% T_r; BL is the distance
    between the two zero-torque crossings.
    """
    if loop.labels is None:
        raise InsufficientBranchData("loop must be branch-labeled")

    t_load, th_load = _branch_arrays(loop, {LOADING, RELOADING})
    t_unload, th_unload = _branch_arrays(loop, {UNLOADING})
    t_rev, th_rev = _branch_arrays(loop, {REVERSE_LOADING})
    t_revu, th_revu = _branch_arrays(loop, {REVERSE_UNLOADING})

    k_pos = _fit_slope(t_load, th_load, 0.66 * T_r, T_r)
    k_neg = _fit_slope(t_rev, th_rev, -T_r, -0.66 * T_r)

    # lost motion from the median curve at +-3% rated torque
    t3 = 0.03 * T_r
    th_mid_pos = 0.5 * (_interp_theta(t_load, th_load, t3)
                        + _interp_theta(t_unload, th_unload, t3))
    th_mid_neg = 0.5 * (_interp_theta(t_rev, th_rev, -t3)
                        + _interp_theta(t_revu, th_revu, -t3))
    lm = abs(th_mid_pos - th_mid_neg) / ARCMIN

    pos_cross, neg_cross = _zero_crossings(loop)
    if pos_cross is None or neg_cross is None:
        raise MissingCrossing("labeled loop lost its zero crossings")
    bl_signed = (pos_cross - neg_cross) / ARCMIN

    return HysteresisMetrics(K_pos=k_pos, K_neg=k_neg,
                             K_avg=0.5 * (k_pos + k_neg),
                             LM=lm, BL=abs(bl_signed), BL_signed=bl_signed)


def export_branch_csv(loop: HysteresisLoop, path) -> None:
    """Branch-labeled loop as CSV t,T,theta,branch."""
    labels = loop.labels or [""] * len(loop)
    with open(path, "w", newline="\n") as fh:
        fh.write("t,T,theta,branch\n")
        for t, torque, theta, lab in zip(loop.t, loop.torque, loop.theta,
                                         labels):
            fh.write(f"{t:.17g},{torque:.17g},{theta:.17g},{lab}\n")


def loop_area(loop: HysteresisLoop) -> float:
    """Work input over the recorded path, the integral of T dtheta."""
    return float(np.trapezoid(loop.torque, loop.theta))
