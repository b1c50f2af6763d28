"""Configuration documents: parsing, units, validation, hashing.

A model is described by a single YAML document with sections mirroring
the engine's domain types.  Scalar quantities accept explicit unit
suffixes ("80 mm", "20 deg", "120 arcsec", "1.5 ms"); everything is
normalized to SI on ingestion.  Validation reports all problems with
the config path and, where available, the YAML line number.
"""

from __future__ import annotations

import hashlib
import json
import math

import yaml

from .exceptions import SchemaError

LENGTH_UNITS = {"m": 1.0, "mm": 1e-3, "cm": 1e-2, "um": 1e-6, "µm": 1e-6,
                "nm": 1e-9}
ANGLE_UNITS = {"rad": 1.0, "deg": math.pi / 180.0,
               "arcmin": math.pi / 10800.0, "arcsec": math.pi / 648000.0}
TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6}

_UNIT_TABLES = {"length": LENGTH_UNITS, "angle": ANGLE_UNITS,
                "time": TIME_UNITS}


def parse_quantity(value, kind: str, path: str = "", line=None) -> float:
    """Convert a config scalar to SI.

    Bare numbers are taken as SI; strings carry an explicit unit suffix
    from the table of the declared kind ('length', 'angle', 'time') or
    'plain' for dimensionless values.
    """
    if isinstance(value, bool):
        raise SchemaError(f"expected a number, got {value!r}", path, line)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        parts = value.split()
        try:
            num = float(parts[0])
        except (ValueError, IndexError):
            raise SchemaError(f"cannot parse number from {value!r}",
                              path, line) from None
        if len(parts) == 1:
            return num
        if len(parts) != 2:
            raise SchemaError(f"malformed quantity {value!r}", path, line)
        unit = parts[1]
        if kind == "plain":
            raise SchemaError(
                f"{path or 'value'} is dimensionless; got unit {unit!r}",
                path, line)
        table = _UNIT_TABLES.get(kind)
        if table is None or unit not in table:
            raise SchemaError(f"unknown {kind} unit {unit!r}", path, line)
        return num * table[unit]
    raise SchemaError(f"expected a scalar, got {type(value).__name__}",
                      path, line)


def _line_map(path) -> dict:
    """Dotted config path -> YAML line number, from the composed tree."""
    with open(path) as fh:
        try:
            root = yaml.compose(fh)
        except yaml.YAMLError:
            return {}
    lines = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for key_node, val_node in node.value:
                name = f"{prefix}.{key_node.value}" if prefix else key_node.value
                lines[name] = key_node.start_mark.line + 1
                walk(val_node, name)
        elif isinstance(node, yaml.SequenceNode):
            for i, item in enumerate(node.value):
                name = f"{prefix}[{i}]"
                lines[name] = item.start_mark.line + 1
                walk(item, name)

    if root is not None:
        walk(root, "")
    return lines


def config_hash(path) -> str:
    """sha256 of the raw config file bytes."""
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def load_config(path):
    """Raw YAML document plus its line map and content hash."""
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise SchemaError(f"YAML parse error: {exc}", str(path)) from exc
    if not isinstance(doc, dict):
        raise SchemaError("config document must be a mapping", str(path))
    return doc, _line_map(path), config_hash(path)


# --------------------------------------------------------------- validation

class Diagnostics:
    """Collects validation problems with path/line anchors."""

    def __init__(self, line_map=None):
        self.problems = []
        self.lines = line_map or {}

    def error(self, path: str, message: str):
        line = self.lines.get(path)
        anchor = f"{path}" + (f" (line {line})" if line else "")
        self.problems.append(f"{anchor}: {message}")

    @property
    def ok(self) -> bool:
        return not self.problems


def _need(cfg, diags, section, key, kind, default=None, positive=False,
          nonneg=False):
    sec = cfg.get(section, {})
    path = f"{section}.{key}"
    if key not in sec:
        if default is None:
            diags.error(path, "missing required key")
            return None
        return default
    try:
        val = parse_quantity(sec[key], kind, path)
    except SchemaError as exc:
        diags.error(path, str(exc))
        return None
    if positive and not val > 0.0:
        diags.error(path, f"must be positive, got {val}")
    if nonneg and val < 0.0:
        diags.error(path, f"must be >= 0, got {val}")
    return val


def normalize_config(cfg: dict, line_map=None):
    """Validate + convert an RV-topology document to SI.

    Returns (normalized dict, diagnostics).  The normalized dict is
    plain SI floats, suitable for model assembly and hashing into
    manifests.
    """
    diags = Diagnostics(line_map)
    topology = cfg.get("topology", "rv")
    if topology not in ("rv", "linear_spring"):
        diags.error("topology", f"unknown topology {topology!r}")
        return None, diags

    out = {"name": str(cfg.get("name", "unnamed")), "topology": topology}

    sched = {
        "T_r": _need(cfg, diags, "schedule", "T_r", "plain", positive=True),
        "t_seg": _need(cfg, diags, "schedule", "t_seg", "time",
                       default=0.5, positive=True),
    }
    out["schedule"] = sched

    solver = {
        "rho_inf": _need(cfg, diags, "solver", "rho_inf", "plain",
                         default=0.8),
        "h0": _need(cfg, diags, "solver", "h0", "time", default=1e-3,
                    positive=True),
        "h_min": _need(cfg, diags, "solver", "h_min", "time", default=1e-9,
                       positive=True),
        "newton_tol": _need(cfg, diags, "solver", "newton_tol", "plain",
                            default=1e-8, positive=True),
        "disc_tol": _need(cfg, diags, "solver", "disc_tol", "plain",
                          default=1e-3, positive=True),
        "max_newton": int(_need(cfg, diags, "solver", "max_newton", "plain",
                                default=25, positive=True) or 25),
    }
    rho = solver["rho_inf"]
    if rho is not None and not 0.0 <= rho <= 1.0:
        diags.error("solver.rho_inf", f"must lie in [0, 1], got {rho}")
    out["solver"] = solver

    if topology == "linear_spring":
        out["linear_spring"] = {
            "k_torsion": _need(cfg, diags, "linear_spring", "k_torsion",
                               "plain", positive=True),
            "radius": _need(cfg, diags, "linear_spring", "radius", "length",
                            default=0.1, positive=True),
            "inertia": _need(cfg, diags, "linear_spring", "inertia", "plain",
                             default=0.5, positive=True),
            "damping": _need(cfg, diags, "linear_spring", "damping", "plain",
                             default=0.0, nonneg=True),
        }
        return (out if diags.ok else None), diags

    cyc = {
        "z_p": int(_need(cfg, diags, "cycloid", "z_p", "plain",
                         positive=True) or 0),
        "a": _need(cfg, diags, "cycloid", "a", "length", positive=True),
        "R_p": _need(cfg, diags, "cycloid", "R_p", "length", positive=True),
        "r_p": _need(cfg, diags, "cycloid", "r_p", "length", positive=True),
        "delta_Rp": _need(cfg, diags, "cycloid", "delta_Rp", "length",
                          default=0.0),
        "delta_r": _need(cfg, diags, "cycloid", "delta_r", "length",
                         default=0.0),
        "delta": _need(cfg, diags, "cycloid", "delta", "angle", default=0.0),
        "n_points": int(_need(cfg, diags, "cycloid", "n_points", "plain",
                              default=2048, positive=True) or 2048),
    }
    # profile invariant K_1 < 1
    if None not in (cyc["a"], cyc["R_p"], cyc["delta_Rp"]) and cyc["z_p"]:
        k1 = cyc["a"] * cyc["z_p"] / (cyc["R_p"] - cyc["delta_Rp"])
        if k1 >= 1.0:
            diags.error("cycloid",
                        f"K_1 = a*z_p/(R_p - delta_Rp) = {k1:.4g} >= 1: "
                        "profile self-intersects")
    if cyc["r_p"] is not None and cyc["R_p"] is not None \
            and not cyc["R_p"] > cyc["r_p"]:
        diags.error("cycloid", "need R_p > r_p")
    out["cycloid"] = cyc

    cranks = {
        "count": int(_need(cfg, diags, "cranks", "count", "plain",
                           default=3, positive=True) or 3),
        "radius": _need(cfg, diags, "cranks", "radius", "length",
                        positive=True),
        "phase0": _need(cfg, diags, "cranks", "phase0", "angle",
                        default=math.pi / 2),
        "journal_radius": _need(cfg, diags, "cranks", "journal_radius",
                                "length", positive=True),
        "bore_radius": _need(cfg, diags, "cranks", "bore_radius", "length",
                             positive=True),
        "gear_ratio": _need(cfg, diags, "cranks", "gear_ratio", "plain",
                            default=0.0),
        "mass": _need(cfg, diags, "cranks", "mass", "plain", default=0.5,
                      positive=True),
        "inertia": _need(cfg, diags, "cranks", "inertia", "plain",
                         default=1e-4, positive=True),
    }
    if None not in (cranks["journal_radius"], cranks["bore_radius"]) \
            and cranks["bore_radius"] <= cranks["journal_radius"]:
        diags.error("cranks.bore_radius",
                    "bore radius must exceed the journal radius")
    out["cranks"] = cranks

    bodies = cfg.get("bodies", {})
    out["bodies"] = {}
    for name in ("flange", "disc"):
        sec = bodies.get(name)
        if not isinstance(sec, dict):
            diags.error(f"bodies.{name}", "missing body section")
            continue
        body = {}
        for key, positive in (("mass", True), ("inertia", True),
                              ("damping", False)):
            path = f"bodies.{name}.{key}"
            if key not in sec:
                if key == "damping":
                    body[key] = 0.0
                    continue
                diags.error(path, "missing required key")
                continue
            try:
                body[key] = parse_quantity(sec[key], "plain", path)
            except SchemaError as exc:
                diags.error(path, str(exc))
                continue
            if positive and body[key] <= 0.0:
                diags.error(path, "must be positive")
        out["bodies"][name] = body

    mesh = {
        "k_c": _need(cfg, diags, "mesh_contact", "k_c", "plain",
                     positive=True),
        "d_c": _need(cfg, diags, "mesh_contact", "d_c", "plain",
                     default=0.0, nonneg=True),
        "mu": _need(cfg, diags, "mesh_contact", "mu", "plain", default=0.0,
                    nonneg=True),
        "v_reg": _need(cfg, diags, "mesh_contact", "v_reg", "plain",
                       default=1e-3, positive=True),
        "model": int(_need(cfg, diags, "mesh_contact", "model", "plain",
                           default=0) or 0),
        "delta_theta_max": _need(cfg, diags, "mesh_contact",
                                 "delta_theta_max", "angle",
                                 default=math.pi),
        "n_block": int(_need(cfg, diags, "mesh_contact", "n_block", "plain",
                             default=8, positive=True) or 8),
        "aabb_margin": _need(cfg, diags, "mesh_contact", "aabb_margin",
                             "length", default=0.0),
    }
    out["mesh_contact"] = mesh

    bearing = {
        "k_c": _need(cfg, diags, "bearing_contact", "k_c", "plain",
                     positive=True),
        "d_c": _need(cfg, diags, "bearing_contact", "d_c", "plain",
                     default=0.0, nonneg=True),
        "mu": _need(cfg, diags, "bearing_contact", "mu", "plain",
                    default=0.0, nonneg=True),
        "v_reg": _need(cfg, diags, "bearing_contact", "v_reg", "plain",
                       default=1e-3, positive=True),
    }
    out["bearing_contact"] = bearing

    err = cfg.get("errors", {})
    out["errors"] = {
        "delta_r": [parse_quantity(v, "length", "errors.delta_r")
                    for v in err.get("delta_r", [0.0] * cranks["count"])],
        "delta_e": [parse_quantity(v, "length", "errors.delta_e")
                    for v in err.get("delta_e", [0.0] * cranks["count"])],
        "delta_phi": [parse_quantity(v, "angle", "errors.delta_phi")
                      for v in err.get("delta_phi", [0.0] * cranks["count"])],
        "delta_c": parse_quantity(err.get("delta_c", 0.0), "length",
                                  "errors.delta_c"),
    }
    for key in ("delta_r", "delta_e", "delta_phi"):
        if len(out["errors"][key]) != cranks["count"]:
            diags.error(f"errors.{key}",
                        f"needs one entry per crank ({cranks['count']})")

    return (out if diags.ok else None), diags


def normalized_hash(norm: dict) -> str:
    """Deterministic hash of a normalized (SI) config dict."""
    blob = json.dumps(norm, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()
