"""System assembly and implicit time integration.

Bodies are planar rigid bodies organized in a kinematic tree with
minimal coordinates: free bodies carry (x, y, theta), bodies on a
revolute mount carry one absolute angle, geared and fixed mounts carry
none.  Joints are therefore satisfied exactly by construction and the
equations of motion stay a plain ODE,

    M(q) q'' = Q(q, q', t) - h(q, q'),

integrated by the generalized-alpha method with Chung-Hulbert
parameters derived from the spectral radius.  Contact force
discontinuities are handled by a post-Newton-step callback, adaptive
step halving and active-set keyed Jacobian reuse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .contact import BodyKin, assemble_generalized_forces
from .exceptions import (
    DanglingMarker,
    DuplicateBodyId,
    NewtonDivergence,
    SchemaError,
    SingularJacobian,
    StepBelowMinimum,
)

S_ROT = np.array([[0.0, -1.0], [1.0, 0.0]])  # +90 degree rotation


def rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass
class RigidBody2D:
    """Planar rigid body and its mount in the kinematic tree."""

    body_id: str
    mass: float
    inertia: float
    mount: str = "free"                  # free | fixed | revolute | geared
    pose0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    anchor_local: np.ndarray = field(default_factory=lambda: np.zeros(2))
    anchor_world: np.ndarray = field(default_factory=lambda: np.zeros(2))
    parent: str | None = None
    parent_marker: str | None = None
    gear_ratio: float = 0.0
    gear_offset: float = 0.0
    markers: dict = field(default_factory=dict)   # name -> (local xy, angle)
    damping: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.mass <= 0.0 or self.inertia <= 0.0:
            raise SchemaError(
                f"body {self.body_id!r}: mass and inertia must be positive")
        if self.mount not in ("free", "fixed", "revolute", "geared"):
            raise SchemaError(
                f"body {self.body_id!r}: unknown mount {self.mount!r}")

    @property
    def n_coords(self) -> int:
        return {"free": 3, "fixed": 0, "revolute": 1, "geared": 0}[self.mount]


@dataclass
class FlexibleSupport:
    """Condensed radial/tangential spring element between two markers.

    Replaces distributed bore-wall flexibility; the radial axis is the
    x-axis of marker 0's frame rotated into the world.
    """

    marker0: tuple      # (body_id, marker_name)
    marker1: tuple
    k_radial: float
    k_tangent: float
    damping: float = 0.0

    def __post_init__(self):
        if self.k_radial < 0.0 or self.k_tangent < 0.0 or self.damping < 0.0:
            raise SchemaError("flexible support constants must be >= 0")


@dataclass
class SolverConfig:
    rho_inf: float = 0.8
    h0: float = 1e-3
    h_min: float = 1e-9
    newton_tol: float = 1e-8        # times the characteristic force
    disc_tol: float = 1e-3          # times the characteristic force
    max_newton: int = 25
    clean_steps_to_grow: int = 5
    characteristic_force: float = 1.0
    reuse_jacobian: bool = True
    fd_eps: float = 1e-6

    def __post_init__(self):
        if not 0.0 <= self.rho_inf <= 1.0:
            raise SchemaError(f"rho_inf={self.rho_inf} outside [0, 1]")
        if not self.h_min < self.h0:
            raise SchemaError("need h_min < h0")


def chung_hulbert(rho_inf: float):
    """Generalized-alpha parameters from the spectral radius."""
    alpha_m = (2.0 * rho_inf - 1.0) / (rho_inf + 1.0)
    alpha_f = rho_inf / (rho_inf + 1.0)
    gamma = 0.5 - alpha_m + alpha_f
    beta = 0.25 * (1.0 - alpha_m + alpha_f) ** 2
    return alpha_m, alpha_f, beta, gamma


@dataclass
class KinEntry:
    pose: np.ndarray    # (3,)
    vel: np.ndarray     # (3,)
    J: np.ndarray       # (3, n)
    bias: np.ndarray    # (3,) acceleration at q'' = 0


class SystemModel:
    """Bodies, supports, contact pairs and drives; immutable once built."""

    def __init__(self, bodies, contacts=None, flex_supports=None,
                 drives=None, solver: SolverConfig | None = None,
                 gravity=(0.0, 0.0), source_config=None,
                 observe_body: str | None = None):
        self.bodies = list(bodies)
        ids = [b.body_id for b in self.bodies]
        for i, b in enumerate(self.bodies):
            if b.body_id in ids[:i]:
                raise DuplicateBodyId(f"duplicate body id {b.body_id!r}")
        self.index = {b.body_id: i for i, b in enumerate(self.bodies)}
        # contacts: list of (contact_object, body0_id, body1_id)
        self.contacts = list(contacts or [])
        self.flex_supports = list(flex_supports or [])
        self.drives = list(drives or [])     # (body_id, torque_fn)
        self.solver = solver or SolverConfig()
        self.gravity = np.asarray(gravity, dtype=float)
        self.source_config = source_config
        self.observe_body = observe_body

        # coordinate layout
        self.coord_of = {}
        n = 0
        for b in self.bodies:
            self.coord_of[b.body_id] = n
            n += b.n_coords
        self.ndof = n
        self._validate_references()
        self.q0 = self._initial_coordinates()

    # -- validation --------------------------------------------------------

    def _validate_references(self):
        for b in self.bodies:
            if b.mount == "geared":
                if b.parent not in self.index:
                    raise DanglingMarker(
                        f"body {b.body_id!r}: parent {b.parent!r} not found")
                pm = self.bodies[self.index[b.parent]].markers
                if b.parent_marker not in pm:
                    raise DanglingMarker(
                        f"body {b.body_id!r}: parent marker "
                        f"{b.parent_marker!r} not on {b.parent!r}")
            if b.mount == "revolute" and b.parent is not None:
                if b.parent not in self.index:
                    raise DanglingMarker(
                        f"body {b.body_id!r}: parent {b.parent!r} not found")
                pm = self.bodies[self.index[b.parent]].markers
                if b.parent_marker not in pm:
                    raise DanglingMarker(
                        f"body {b.body_id!r}: parent marker "
                        f"{b.parent_marker!r} not on {b.parent!r}")
        for sup in self.flex_supports:
            for bid, mname in (sup.marker0, sup.marker1):
                if bid not in self.index:
                    raise DanglingMarker(f"support references body {bid!r}")
                if mname not in self.bodies[self.index[bid]].markers:
                    raise DanglingMarker(
                        f"support references marker {mname!r} on {bid!r}")
        for bid, _fn in self.drives:
            if bid not in self.index:
                raise DanglingMarker(f"drive references body {bid!r}")
        for _obj, b0, b1 in self.contacts:
            for bid in (b0, b1):
                if bid not in self.index:
                    raise DanglingMarker(f"contact references body {bid!r}")

    def _initial_coordinates(self) -> np.ndarray:
        q0 = np.zeros(self.ndof)
        for b in self.bodies:
            i = self.coord_of[b.body_id]
            if b.mount == "free":
                q0[i:i + 3] = b.pose0
            elif b.mount == "revolute":
                q0[i] = b.pose0[2]
        return q0

    # -- kinematics --------------------------------------------------------

    def kinematics(self, q, qd):
        """Per-body pose, velocity, jacobian and bias acceleration."""
        entries = {}
        n = self.ndof
        for b in self.bodies:
            i = self.coord_of[b.body_id]
            if b.mount == "free":
                pose = np.array([q[i], q[i + 1], q[i + 2]])
                jac = np.zeros((3, n))
                jac[0, i] = jac[1, i + 1] = jac[2, i + 2] = 1.0
                vel = jac @ qd
                bias = np.zeros(3)
            elif b.mount == "fixed":
                pose = b.pose0.copy()
                jac = np.zeros((3, n))
                vel = np.zeros(3)
                bias = np.zeros(3)
            elif b.mount == "revolute":
                theta = float(q[i])
                theta_d = float(qd[i])
                r_m = rot(theta)
                if b.parent is None:
                    anchor_p = b.anchor_world
                    j_anchor = np.zeros((2, n))
                    b_anchor = np.zeros(2)
                else:
                    pe = entries[b.parent]
                    pb = self.bodies[self.index[b.parent]]
                    anchor_p, j_anchor, _vm, b_anchor = _marker_kin(
                        pe, pb.markers[b.parent_marker][0])
                arm = r_m @ b.anchor_local
                pos = anchor_p - arm
                jac = np.zeros((3, n))
                jac[:2] = j_anchor
                jac[0:2, i] += -(S_ROT @ arm)
                jac[2, i] = 1.0
                vel = jac @ qd
                bias = np.zeros(3)
                bias[:2] = b_anchor + arm * theta_d ** 2
                pose = np.array([pos[0], pos[1], theta])
            else:  # geared
                pe = entries[b.parent]
                pb = self.bodies[self.index[b.parent]]
                anchor_p, j_anchor, _vm, b_anchor = _marker_kin(
                    pe, pb.markers[b.parent_marker][0])
                theta = b.gear_ratio * pe.pose[2] + b.gear_offset
                j_theta = b.gear_ratio * pe.J[2]
                theta_d = b.gear_ratio * pe.vel[2]
                b_theta = b.gear_ratio * pe.bias[2]
                r_m = rot(theta)
                arm = r_m @ b.anchor_local
                pos = anchor_p - arm
                jac = np.zeros((3, n))
                jac[:2] = j_anchor - np.outer(S_ROT @ arm, j_theta)
                jac[2] = j_theta
                vel = jac @ qd
                bias = np.zeros(3)
                bias[:2] = b_anchor + arm * theta_d ** 2 - (S_ROT @ arm) * b_theta
                bias[2] = b_theta
                pose = np.array([pos[0], pos[1], theta])
            entries[b.body_id] = KinEntry(pose=pose, vel=vel, J=jac, bias=bias)
        return entries

    def body_kin(self, entries, body_id: str) -> BodyKin:
        e = entries[body_id]
        return BodyKin(p=e.pose[:2], theta=float(e.pose[2]),
                       v=e.vel[:2], omega=float(e.vel[2]))

    def marker_world(self, entries, body_id: str, marker: str):
        b = self.bodies[self.index[body_id]]
        if marker not in b.markers:
            raise DanglingMarker(f"marker {marker!r} not on body {body_id!r}")
        return _marker_kin(entries[body_id], b.markers[marker][0])

    def point_jacobian(self, entries, body_id: str, p_world) -> np.ndarray:
        """Translational jacobian of a body-fixed point at p_world."""
        e = entries[body_id]
        r = np.asarray(p_world, dtype=float) - e.pose[:2]
        return e.J[:2] + np.outer(S_ROT @ r, e.J[2])

    # -- dynamics ----------------------------------------------------------

    def mass_and_bias(self, entries):
        m_mat = np.zeros((self.ndof, self.ndof))
        h_vec = np.zeros(self.ndof)
        for b in self.bodies:
            e = entries[b.body_id]
            m_b = np.diag([b.mass, b.mass, b.inertia])
            m_mat += e.J.T @ m_b @ e.J
            h_vec += e.J.T @ (m_b @ e.bias)
        return m_mat, h_vec

    def applied_forces(self, entries, t: float):
        """Gravity, viscous body damping, springs and drives."""
        q_f = np.zeros(self.ndof)
        for b in self.bodies:
            e = entries[b.body_id]
            if self.gravity.any():
                q_f += e.J[:2].T @ (b.mass * self.gravity)
            if b.damping.any():
                q_f -= e.J.T @ (b.damping * e.vel)
        for sup in self.flex_supports:
            p0, j0, v0, _ = self.marker_world(entries, *sup.marker0)
            p1, j1, v1, _ = self.marker_world(entries, *sup.marker1)
            b0 = self.bodies[self.index[sup.marker0[0]]]
            th0 = entries[sup.marker0[0]].pose[2] + b0.markers[sup.marker0[1]][1]
            e_r = np.array([math.cos(th0), math.sin(th0)])
            e_t = np.array([-e_r[1], e_r[0]])
            u = p1 - p0
            f1 = -(sup.k_radial * (u @ e_r)) * e_r \
                - (sup.k_tangent * (u @ e_t)) * e_t \
                - sup.damping * (v1 - v0)
            q_f += j1.T @ f1 + j0.T @ (-f1)
        for bid, fn in self.drives:
            e = entries[bid]
            q_f += e.J[2] * fn(t)
        return q_f

    def contact_forces(self, entries, collect=False):
        """Evaluate all contact pairs; returns (Q, results, states, fns)."""
        entry_list = []
        results = []
        states = []
        fns = []
        for obj, b0, b1 in self.contacts:
            k0 = self.body_kin(entries, b0)
            k1 = self.body_kin(entries, b1)
            res = obj.evaluate(k0, k1)
            results.append(res)
            states.append(res.states)
            fns.append(res.fn)
            for sub in res.subs:
                if sub.f_n == 0.0 and sub.f_t == 0.0:
                    continue
                f1 = sub.force_on_body1()
                j0 = self.point_jacobian(entries, b0, sub.point)
                j1 = self.point_jacobian(entries, b1, sub.point)
                entry_list.append((-f1, j0, j1))
        q_c = assemble_generalized_forces(entry_list, self.ndof)
        return q_c, results, states, fns

    def evaluate_eom(self, q, qd, t):
        """M, rhs and contact info at one state."""
        entries = self.kinematics(q, qd)
        m_mat, h_vec = self.mass_and_bias(entries)
        q_f = self.applied_forces(entries, t)
        q_c, results, states, fns = self.contact_forces(entries)
        return m_mat, q_f + q_c - h_vec, results, states, fns


def _marker_kin(entry: KinEntry, local):
    """World position, jacobian, velocity and bias of a body marker."""
    theta = float(entry.pose[2])
    r_w = rot(theta) @ np.asarray(local, dtype=float)
    p = entry.pose[:2] + r_w
    jac = entry.J[:2] + np.outer(S_ROT @ r_w, entry.J[2])
    omega = float(entry.vel[2])
    v = entry.vel[:2] + omega * (S_ROT @ r_w)
    bias = entry.bias[:2] + (S_ROT @ r_w) * entry.bias[2] - r_w * omega ** 2
    return p, jac, v, bias


# ---------------------------------------------------------------- stepping

@dataclass
class StepReport:
    converged: bool
    iterations: int
    eps_disc: float
    transitions: bool
    refactorizations: int
    residual_norm: float
    active_set: tuple


def post_newton_discontinuity(states_old, fns_old, states_new, fns_new):
    """Contact transition flag plus the discontinuity error estimate.

    Compares per-pair open/closed flags against the start of the step;
    epsilon_disc is the maximum normal-force change over transitioning
    pairs (max, not sum: conservative for the tolerance relaxation).
    """
    flag = False
    eps = 0.0
    for s_old, f_old, s_new, f_new in zip(states_old, fns_old,
                                          states_new, fns_new):
        changed = np.asarray(s_old) != np.asarray(s_new)
        if np.any(changed):
            flag = True
            eps = max(eps, float(np.max(np.abs(
                np.asarray(f_new)[changed] - np.asarray(f_old)[changed]))))
    return flag, eps


def adaptive_step_control(report: StepReport, h: float, cfg: SolverConfig,
                          clean_streak: int):
    """Next step size and retry decision from a step report.

    Discontinuity error above threshold (or Newton divergence) halves
    the step for a retry of the same interval; enough consecutive clean
    steps double it, capped at h0.
    """
    threshold = cfg.disc_tol * cfg.characteristic_force
    if (not report.converged) or report.eps_disc > threshold:
        h_half = 0.5 * h
        if h_half < cfg.h_min:
            raise StepBelowMinimum(
                f"step {h_half:.3e} s below minimum {cfg.h_min:.3e} s")
        return h_half, True, 0
    streak = clean_streak + 1
    if streak >= cfg.clean_steps_to_grow:
        return min(2.0 * h, cfg.h0), False, 0
    return h, False, streak


class GeneralizedAlphaIntegrator:
    """Implicit one-step solver with contact-aware Newton iteration."""

    def __init__(self, model: SystemModel):
        self.model = model
        cfg = model.solver
        self.alpha_m, self.alpha_f, self.beta, self.gamma = \
            chung_hulbert(cfg.rho_inf)
        self._lu = None
        self._jac_key = None
        self.stats = {"refactorizations": 0, "steps": 0, "newton_iters": 0}

    # -- initial acceleration ---------------------------------------------

    def initial_state(self, t0: float = 0.0):
        model = self.model
        q = model.q0.copy()
        qd = np.zeros(model.ndof)
        m_mat, rhs, _res, _s, _f = model.evaluate_eom(q, qd, t0)
        a = np.linalg.solve(m_mat, rhs) if model.ndof else np.zeros(0)
        return q, qd, a

    # -- committed contact snapshot -----------------------------------------

    def _committed(self):
        states = [obj.committed_states() for obj, _, _ in self.model.contacts]
        fns = [obj.committed_fn() for obj, _, _ in self.model.contacts]
        return states, fns

    def refactorize_on_active_set_change(self, residual_fn, a1, key):
        """LU handle for the Newton matrix, rebuilt only when the
        active set (or step size) changes."""
        if self.model.solver.reuse_jacobian and self._lu is not None \
                and self._jac_key == key:
            return self._lu, 0
        n = len(a1)
        r0 = residual_fn(a1)
        jac = np.empty((n, n))
        eps = self.model.solver.fd_eps
        for j in range(n):
            a_p = a1.copy()
            step = eps * max(1.0, abs(a1[j]))
            a_p[j] += step
            jac[:, j] = (residual_fn(a_p) - r0) / step
        try:
            lu = lu_factor(jac)
        except Exception as exc:
            raise SingularJacobian(str(exc)) from exc
        if not np.all(np.isfinite(jac)):
            raise SingularJacobian("non-finite Newton matrix")
        self._lu = lu
        self._jac_key = key
        self.stats["refactorizations"] += 1
        return lu, 1

    def step(self, q, qd, a, t: float, h: float):
        """One generalized-alpha step; returns new state plus report."""
        model = self.model
        cfg = model.solver
        am, af, beta, gamma = self.alpha_m, self.alpha_f, self.beta, self.gamma
        states0, fns0 = self._committed()

        last_eval = {}

        def alpha_state(a1):
            q1 = q + h * qd + h * h * ((0.5 - beta) * a + beta * a1)
            v1 = qd + h * ((1.0 - gamma) * a + gamma * a1)
            qa = (1.0 - af) * q1 + af * q
            va = (1.0 - af) * v1 + af * qd
            aa = (1.0 - am) * a1 + am * a
            ta = (1.0 - af) * (t + h) + af * t
            return q1, v1, qa, va, aa, ta

        def residual(a1):
            _q1, _v1, qa, va, aa, ta = alpha_state(a1)
            m_mat, rhs, results, states, fns = model.evaluate_eom(qa, va, ta)
            last_eval["states"] = states
            last_eval["fns"] = fns
            r = m_mat @ aa - rhs
            return r

        a1 = a.copy()
        tol0 = cfg.newton_tol * cfg.characteristic_force
        eps_latch = 0.0        # relaxes the tolerance during the solve
        eps_final = 0.0        # across-step discontinuity of the converged iterate
        trans_final = False
        refactor_count = 0
        converged = False
        res_norm = math.inf
        prev_norm = math.inf
        jac_dirty = False

        for it in range(1, cfg.max_newton + 1):
            r = residual(a1)
            res_norm = float(np.max(np.abs(r))) if len(r) else 0.0

            # post-Newton-step callback: any open/closed transition since
            # the start of the step relaxes the tolerance and forces a
            # Jacobian rebuild.  Transient iterate excursions may latch a
            # large eps for the tolerance; the step report carries the
            # converged iterate's value, which is what shrinks with h.
            flag, eps = post_newton_discontinuity(
                states0, fns0, last_eval["states"], last_eval["fns"])
            if flag:
                eps_latch = max(eps_latch, eps)
                jac_dirty = True
            eps_final = eps
            trans_final = flag

            if res_norm < tol0 + eps_latch:
                converged = True
                self.stats["newton_iters"] += it
                break
            if res_norm > 1e6 * max(prev_norm, tol0) or not math.isfinite(res_norm):
                break
            prev_norm = min(prev_norm, res_norm)

            key = (h, tuple(np.concatenate(last_eval["states"]).tolist())
                   if last_eval["states"] else ())
            if jac_dirty or it % 6 == 0:
                # stale reused Jacobians slow convergence on long solves
                self._jac_key = None
                jac_dirty = False
            lu, built = self.refactorize_on_active_set_change(
                residual, a1, key)
            refactor_count += built
            try:
                da = lu_solve(lu, -r)
            except Exception as exc:
                raise SingularJacobian(str(exc)) from exc
            a1 = a1 + da

        report = StepReport(converged=converged, iterations=it,
                            eps_disc=eps_final, transitions=trans_final,
                            refactorizations=refactor_count,
                            residual_norm=res_norm,
                            active_set=tuple(
                                np.concatenate(last_eval["states"]).tolist())
                            if last_eval.get("states") else ())
        if not converged:
            raise NewtonDivergence(
                f"Newton stalled at |r| = {res_norm:.3e} after "
                f"{report.iterations} iterations (t = {t:.6g})", )

        q1, v1, _qa, _va, _aa, _ta = alpha_state(a1)
        self.stats["steps"] += 1
        return q1, v1, a1, report

    def commit_contacts(self, q, qd, t):
        """Re-evaluate contacts at the accepted end-of-step state and
        advance their data nodes."""
        entries = self.model.kinematics(q, qd)
        committed = []
        for obj, b0, b1 in self.model.contacts:
            res = obj.evaluate(self.model.body_kin(entries, b0),
                               self.model.body_kin(entries, b1))
            obj.commit(res)
            committed.append(res)
        return committed


def simulate(model: SystemModel, t_end: float, recorder=None,
             t0: float = 0.0, record_every: int = 1):
    """Adaptive quasi-static/dynamic run over [t0, t_end].

    The recorder, when given, is called as
    ``recorder(t, q, qd, contact_results)`` after every accepted step.
    """
    integ = GeneralizedAlphaIntegrator(model)
    cfg = model.solver
    q, qd, a = integ.initial_state(t0)
    t = t0
    h = cfg.h0
    clean = 0
    if recorder is not None:
        recorder(t, q, qd, integ.commit_contacts(q, qd, t))
    accepted = 0
    while t < t_end - 1e-12:
        h_try = min(h, t_end - t)
        try:
            q1, v1, a1, report = integ.step(q, qd, a, t, h_try)
        except NewtonDivergence:
            report = StepReport(converged=False, iterations=cfg.max_newton,
                                eps_disc=math.inf, transitions=True,
                                refactorizations=0, residual_norm=math.inf,
                                active_set=())
            h, _retry, clean = adaptive_step_control(report, h_try, cfg, 0)
            integ._jac_key = None
            continue
        h_next, retry, clean = adaptive_step_control(report, h_try, cfg, clean)
        if retry:
            h = h_next
            continue
        q, qd, a = q1, v1, a1
        t += h_try
        # growth applies to the nominal step; an end-of-interval clamped
        # attempt must not shrink it
        if h_next > h_try:
            h = min(max(h_next, h), cfg.h0)
        elif h_try >= h:
            h = min(h_next, cfg.h0)
        results = integ.commit_contacts(q, qd, t)
        accepted += 1
        if recorder is not None and accepted % record_every == 0:
            recorder(t, q, qd, results)
    return q, qd, a, integ
