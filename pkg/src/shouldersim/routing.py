"""Routed wire paths as world-space geometry.

This is the inspection layer over the wire machinery: it turns a ligament
or muscle into a drawable polyline, an arc length and per-DOF moment arms.
Moment arms here are central finite differences of the path length under
small body-frame joint rotations (1e-6 rad), which keeps them independent
of the analytic gradients the dynamics engine uses, so the two can be
checked against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import cylinder_wrap_points, polyline_length, sphere_wrap_points
from .model import JointState
from .tissue import WirePath


class RoutingError(ValueError):
    """A wire cannot be routed, e.g. an unknown wrap obstacle kind."""


@dataclass
class PathGeometry:
    """World geometry of one routed wire.

    length is exactly the arc length of routed_points; moment_arms[d] is
    -dL/dq_d, positive where tension accelerates the DOF.
    """

    routed_points: np.ndarray  # (N, 3) world polyline
    length: float              # m, polyline arc length
    moment_arms: np.ndarray    # (D,) m


def route_segment(p_start, p_end, wrap=None, prev_side=None, arc_samples=64):
    """Route one segment, optionally over a wrap obstacle.

    wrap: None for a straight segment, or anything with kind ('cylinder' or
    'sphere'), center, radius and, for cylinders, axis, all in world
    coordinates (a mapping works too). Returns (points (N, 3), length)
    where length is the polyline arc length. An endpoint inside the
    obstacle leaves the segment straight, matching the length engine.
    """
    p = np.asarray(p_start, dtype=float)
    q = np.asarray(p_end, dtype=float)
    if wrap is None:
        points = np.stack([p, q])
        return points, float(np.linalg.norm(q - p))

    get = wrap.get if isinstance(wrap, dict) else lambda k, d=None: getattr(wrap, k, d)
    kind = get("kind")
    center = np.asarray(get("center", get("pos")), dtype=float)
    radius = float(get("radius"))
    try:
        if kind == "cylinder":
            axis = np.asarray(get("axis"), dtype=float)
            points, _ = cylinder_wrap_points(
                p, q, center, axis, radius,
                prev_side=prev_side, arc_samples=arc_samples,
            )
        elif kind == "sphere":
            points, _ = sphere_wrap_points(
                p, q, center, radius,
                prev_side=prev_side, arc_samples=arc_samples,
            )
        else:
            raise RoutingError(f"unknown wrap kind {kind!r}")
    except ValueError as exc:
        raise RoutingError(str(exc)) from None
    return points, float(polyline_length(points))


def _resolve_wire(model, wire):
    """Accept a wire name, a ligament/muscle element, or a bare WirePath."""
    if isinstance(wire, str):
        for el in model.wires:
            if el.name == wire:
                return el.path
        raise KeyError(f"unknown wire {wire!r}")
    if isinstance(wire, WirePath):
        return wire
    return wire.path


def _joint_state(state):
    return state.joints if hasattr(state, "joints") else state


def _wire_index(model, path):
    for i, el in enumerate(model.wires):
        if el.path is path or el.path == path:
            return i
    return None


def route_wire(wire, model, state, arc_samples=64):
    """Full PathGeometry of a wire at a joint state.

    state: JointState or SimState. The polyline concatenates every routed
    segment; its arc length is the returned length.
    """
    path = _resolve_wire(model, wire)
    js = _joint_state(state)
    cm = model.compiled
    R, t = cm.body_poses(js.quats)
    sp = cm.site_positions(R, t)

    pieces = []
    total = 0.0
    for k, (a, b) in enumerate(zip(path.sites, path.sites[1:])):
        p = sp[model.site_index[a]]
        q = sp[model.site_index[b]]
        wrap_name = path.wraps[k]
        wrap = None
        if wrap_name is not None:
            geom = model.wrap_geoms[model.wrap_index[wrap_name]]
            bi = model.body_index[geom.body]
            wrap = {
                "kind": geom.kind,
                "center": t[bi] + R[bi] @ geom.pos,
                "radius": geom.radius,
                "axis": R[bi] @ geom.axis if geom.axis is not None else None,
            }
        points, seg_len = route_segment(p, q, wrap, arc_samples=arc_samples)
        pieces.append(points if not pieces else points[1:])
        total += seg_len

    arms = moment_arms(wire, model, js)
    return PathGeometry(
        routed_points=np.vstack(pieces), length=float(total), moment_arms=arms
    )


def path_length(wire, model, state):
    """Exact routed length of a wire, in meters."""
    path = _resolve_wire(model, wire)
    js = _joint_state(state)
    idx = _wire_index(model, path)
    cm = model.compiled
    if idx is not None:
        lengths, _ = cm.wire_lengths(js.quats)
        value = float(lengths[idx])
    else:
        geom = route_wire(path, model, js, arc_samples=512)
        value = geom.length
    if not np.isfinite(value):
        raise RoutingError("wire cannot be routed in this pose")
    return value


def moment_arms(wire, model, state):
    """Per-DOF moment arms (D,): -dL/dq by central finite differences."""
    path = _resolve_wire(model, wire)
    js = _joint_state(state)
    cm = model.compiled
    idx = _wire_index(model, path)
    if idx is None:
        raise KeyError("moment arms need a wire that belongs to the model")
    _, _, jac = cm.fd_jacobian(js.quats)
    return -jac[idx]


def path_lengthening_rate(wire, model, state):
    """dL/dt in m/s, positive while the wire lengthens."""
    js = _joint_state(state)
    arms = moment_arms(wire, model, js)
    return float(-arms @ js.omegas.reshape(-1))
