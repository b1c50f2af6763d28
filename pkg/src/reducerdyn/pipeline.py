"""Model assembly from normalized configs and the hysteresis pipeline.

The reducer topology is expanded into generic bodies, mounts and
contact pairs, so switching between an RV layout and test stand-ins is
purely a config matter.  In the RV layout the crank spin is frozen
relative to the flange through its mount ratio (the hysteresis
experiment locks the input shaft); journals therefore ride the crank
centers, the disc is carried on the journal bearings, and the disc
flanks mesh with the fixed pin ring.
"""

from __future__ import annotations

import math

import numpy as np

from .contact import (
    CircleCircleContact,
    ContactParams,
    CurveCirclesContact,
    ScreeningConfig,
)
from .dynamics import (
    FlexibleSupport,
    RigidBody2D,
    SolverConfig,
    SystemModel,
    simulate,
)
from .geometry import CycloidParams, cycloid_polyline
from .loading import (
    HysteresisLoop,
    TorqueSchedule,
    compute_metrics,
    offset_correction,
    split_branches,
)

ECC_PHASE = math.pi / 2  # journal offsets point +y; pins include one at +y


def unit_vec(angle: float) -> np.ndarray:
    return np.array([math.cos(angle), math.sin(angle)])


def build_model(norm: dict) -> SystemModel:
    if norm["topology"] == "linear_spring":
        return _build_linear_spring(norm)
    return _build_rv(norm)


def _solver_config(norm: dict, characteristic_force: float) -> SolverConfig:
    s = norm["solver"]
    return SolverConfig(rho_inf=s["rho_inf"], h0=s["h0"], h_min=s["h_min"],
                        newton_tol=s["newton_tol"], disc_tol=s["disc_tol"],
                        max_newton=s["max_newton"],
                        characteristic_force=characteristic_force)


def _build_linear_spring(norm: dict) -> SystemModel:
    """Single-rotor stand-in with a pure torsional spring."""
    p = norm["linear_spring"]
    radius = p["radius"]
    k_lin = p["k_torsion"] / radius ** 2
    rotor = RigidBody2D("rotor", 1.0, p["inertia"], mount="revolute",
                        anchor_world=np.zeros(2),
                        markers={"tip": (np.array([radius, 0.0]), 0.0)},
                        damping=np.array([0.0, 0.0, p["damping"]]))
    ground = RigidBody2D("ground", 1.0, 1.0, mount="fixed",
                         markers={"tip": (np.array([radius, 0.0]), 0.0)})
    sup = FlexibleSupport(("ground", "tip"), ("rotor", "tip"),
                          k_radial=k_lin, k_tangent=k_lin)
    sched = TorqueSchedule(norm["schedule"]["T_r"], norm["schedule"]["t_seg"])
    solver = _solver_config(norm, norm["schedule"]["T_r"] / radius)
    return SystemModel([ground, rotor], flex_supports=[sup],
                       drives=[("rotor", sched)], solver=solver,
                       source_config=norm, observe_body="rotor")


def _build_rv(norm: dict) -> SystemModel:
    cyc = norm["cycloid"]
    cr = norm["cranks"]
    err = norm["errors"]
    n_cranks = cr["count"]

    params = CycloidParams(z_p=cyc["z_p"], a=cyc["a"], R_p=cyc["R_p"],
                           r_p=cyc["r_p"], delta_Rp=cyc["delta_Rp"],
                           delta_r=cyc["delta_r"], delta=cyc["delta"])
    curve = cycloid_polyline(params, cyc["n_points"])

    ecc = cyc["a"] * unit_vec(ECC_PHASE)
    phases = [cr["phase0"] + 2.0 * math.pi * k / n_cranks
              for k in range(n_cranks)]

    ground = RigidBody2D("ground", 1.0, 1.0, mount="fixed")

    flange_markers = {}
    for k, phi in enumerate(phases):
        # crank-center position error on the flange side
        flange_markers[f"crank{k}"] = (
            cr["radius"] * unit_vec(phi + err["delta_phi"][k]), 0.0)
    b = norm["bodies"]["flange"]
    flange = RigidBody2D("flange", b["mass"], b["inertia"], mount="revolute",
                         anchor_world=np.zeros(2), markers=flange_markers,
                         damping=np.array([0.0, 0.0, b["damping"]]))

    cranks = []
    for k in range(n_cranks):
        a_k = cyc["a"] + err["delta_e"][k]
        cranks.append(RigidBody2D(
            f"crank{k}", cr["mass"], cr["inertia"], mount="geared",
            parent="flange", parent_marker=f"crank{k}",
            gear_ratio=cr["gear_ratio"], gear_offset=0.0,
            markers={"journal": (a_k * unit_vec(ECC_PHASE), 0.0)}))

    disc_markers = {}
    for k, phi in enumerate(phases):
        # bore pattern machined nominally in the disc
        disc_markers[f"bore{k}"] = (cr["radius"] * unit_vec(phi), 0.0)
    b = norm["bodies"]["disc"]
    disc = RigidBody2D("disc", b["mass"], b["inertia"], mount="free",
                       pose0=np.array([ecc[0], ecc[1], 0.0]),
                       markers=disc_markers,
                       damping=np.array([b["damping"], b["damping"],
                                         b["damping"] * 1e-2]))

    contacts = []
    bc = norm["bearing_contact"]
    bearing_params = ContactParams(k_c=bc["k_c"], d_c=bc["d_c"], mu=bc["mu"],
                                   v_reg=bc["v_reg"])
    for k in range(n_cranks):
        pair = CircleCircleContact(
            marker0=cranks[k].markers["journal"][0],
            r0=cr["journal_radius"] + err["delta_r"][k],
            marker1=disc.markers[f"bore{k}"][0],
            r1=-(cr["bore_radius"] + err["delta_c"]),
            params=bearing_params, pair_id=f"bearing{k}")
        contacts.append((pair, f"crank{k}", "disc"))

    mc = norm["mesh_contact"]
    mesh_params = ContactParams(k_c=mc["k_c"], d_c=mc["d_c"], mu=mc["mu"],
                                v_reg=mc["v_reg"],
                                contact_model=mc["model"])
    margin = mc["aabb_margin"] if mc["aabb_margin"] > 0.0 else None
    cfg = ScreeningConfig(delta_theta_max=mc["delta_theta_max"],
                          n_block=mc["n_block"], aabb_margin=margin)
    pin_markers = [cyc["R_p"] * unit_vec(2.0 * math.pi * j / cyc["z_p"])
                   for j in range(cyc["z_p"])]
    mesh = CurveCirclesContact(curve, pin_markers,
                               [cyc["r_p"]] * cyc["z_p"],
                               mesh_params, cfg, pair_id="mesh")
    contacts.append((mesh, "disc", "ground"))

    sched = TorqueSchedule(norm["schedule"]["T_r"], norm["schedule"]["t_seg"])
    solver = _solver_config(norm, norm["schedule"]["T_r"] / cyc["R_p"])
    return SystemModel([ground, flange] + cranks + [disc],
                       contacts=contacts, drives=[("flange", sched)],
                       solver=solver, source_config=norm,
                       observe_body="flange")


# ------------------------------------------------------------- experiments

class RunRecorder:
    """Collects the state trajectory and optional per-contact log."""

    def __init__(self, model: SystemModel, schedule: TorqueSchedule,
                 contact_log: bool = False):
        self.model = model
        self.schedule = schedule
        self.contact_log = contact_log
        self.t = []
        self.q = []
        self.qd = []
        self.torque = []
        self.theta_out = []
        self.log_rows = []
        obs = model.observe_body
        if obs is None:
            raise ValueError("model has no observe_body")
        body = model.bodies[model.index[obs]]
        self._obs_slice = model.coord_of[obs] + (2 if body.mount == "free"
                                                 else 0)

    def __call__(self, t, q, qd, results):
        self.t.append(t)
        self.q.append(q.copy())
        self.qd.append(qd.copy())
        self.torque.append(self.schedule(min(t, self.schedule.duration)))
        self.theta_out.append(q[self._obs_slice])
        if self.contact_log:
            for (obj, _b0, _b1), res in zip(self.model.contacts, results):
                for sub in res.subs:
                    self.log_rows.append(
                        (t, obj.pair_id, sub.gap, sub.f_n, sub.f_t,
                         1 if sub.closed else 0))

    def loop(self) -> HysteresisLoop:
        return HysteresisLoop(self.t, self.torque, self.theta_out)


def run_hysteresis(norm: dict, contact_log: bool = False,
                   record_every: int = 1):
    """Full five-stage schedule run plus metric extraction.

    Returns (metrics, labeled corrected loop, recorder).
    """
    model = build_model(norm)
    sched = TorqueSchedule(norm["schedule"]["T_r"], norm["schedule"]["t_seg"])
    rec = RunRecorder(model, sched, contact_log=contact_log)
    simulate(model, sched.duration, recorder=rec, record_every=record_every)
    loop = split_branches(offset_correction(rec.loop()))
    metrics = compute_metrics(loop, sched.T_r)
    return metrics, loop, rec
