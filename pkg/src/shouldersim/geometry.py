"""Rotation algebra and wire-wrapping primitives.

Quaternions are arrays whose last axis holds (w, x, y, z). Every function
broadcasts over leading axes, so the same code path serves a single pose or
a stacked batch of rollout states.

Wrapping follows the tangent/arc/tangent construction: the wire leaves each
endpoint along a tangent line to the obstacle circle and connects the two
tangent points with an arc. For a cylinder the circle lives in the plane
perpendicular to the axis; for a sphere it lives in the plane through both
endpoints and the center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])

GIMBAL_TOL = 1e-6


def vec_norm(v, keepdims=False):
    """Euclidean norm over the last axis, cheaper than np.linalg.norm for
    the small batched vectors used throughout."""
    return np.sqrt((v * v).sum(axis=-1, keepdims=keepdims))


def vec_cross(a, b):
    """Broadcasting 3-vector cross product without np.cross overhead."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def vec_dot(a, b):
    """Dot product over the last axis."""
    return (a * b).sum(axis=-1)


# ---------------------------------------------------------------------------
# quaternions


def quat_normalize(q):
    """Scale quaternions to unit norm along the last axis."""
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_conjugate(q):
    out = np.array(q, copy=True)
    out[..., 1:] *= -1.0
    return out


def quat_multiply(a, b):
    """Hamilton product of two quaternion arrays, broadcasting leading axes."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_to_matrix(q):
    """Rotation matrices (..., 3, 3) for unit quaternions (..., 4)."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1.0 - 2.0 * (yy + zz)
    m[..., 0, 1] = 2.0 * (xy - wz)
    m[..., 0, 2] = 2.0 * (xz + wy)
    m[..., 1, 0] = 2.0 * (xy + wz)
    m[..., 1, 1] = 1.0 - 2.0 * (xx + zz)
    m[..., 1, 2] = 2.0 * (yz - wx)
    m[..., 2, 0] = 2.0 * (xz - wy)
    m[..., 2, 1] = 2.0 * (yz + wx)
    m[..., 2, 2] = 1.0 - 2.0 * (xx + yy)
    return m


def quat_rotate(q, v):
    """Rotate vectors (..., 3) by quaternions (..., 4)."""
    m = quat_to_matrix(q)
    return np.einsum("...ij,...j->...i", m, v)


def quat_from_rotvec(v):
    """Exponential map: rotation vector (..., 3) to unit quaternion.

    Small angles use the series for sin(t/2)/t so the map stays smooth
    through zero.
    """
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v, axis=-1)
    half = 0.5 * angle
    small = angle < 1e-8
    # sin(half)/angle, with the limit 0.5 - angle^2/48 near zero
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(small, 0.5 - angle * angle / 48.0, np.sin(half) / np.where(small, 1.0, angle))
    q = np.empty(v.shape[:-1] + (4,))
    q[..., 0] = np.cos(half)
    q[..., 1:] = v * scale[..., None]
    return q


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    return quat_from_rotvec(axis * np.asarray(angle)[..., None])


def quat_integrate(q, omega, dt):
    """Advance unit quaternions by body-frame angular velocity over dt.

    Computes q' = q * exp(omega * dt) and renormalizes, so the result stays
    on the unit sphere regardless of step size.
    """
    dq = quat_from_rotvec(np.asarray(omega) * dt)
    return quat_normalize(quat_multiply(q, dq))


def euler_zyx(q):
    """Intrinsic Z-Y-X angles (yaw, pitch, roll) of unit quaternions.

    Returns an array (..., 3) ordered (z, y, x). Near the pitch singularity
    the yaw/roll split is ill conditioned; callers can detect that case with
    gimbal_proximity.
    """
    m = quat_to_matrix(q)
    pitch = np.arcsin(np.clip(-m[..., 2, 0], -1.0, 1.0))
    yaw = np.arctan2(m[..., 1, 0], m[..., 0, 0])
    roll = np.arctan2(m[..., 2, 1], m[..., 2, 2])
    return np.stack([yaw, pitch, roll], axis=-1)


def gimbal_proximity(angles, tol=GIMBAL_TOL):
    """True where the pitch angle sits within tol of +-pi/2."""
    return np.abs(np.abs(np.asarray(angles)[..., 1]) - np.pi / 2.0) < tol


def quat_from_euler_zyx(angles):
    """Inverse of euler_zyx: (yaw, pitch, roll) to unit quaternion."""
    angles = np.asarray(angles, dtype=float)
    qz = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), angles[..., 0])
    qy = quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), angles[..., 1])
    qx = quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), angles[..., 2])
    return quat_multiply(quat_multiply(qz, qy), qx)


def unwrap_series(angles, axis=0):
    """Remove 2*pi jumps from an angle time series along the given axis."""
    return np.unwrap(np.asarray(angles, dtype=float), axis=axis)


# ---------------------------------------------------------------------------
# planar wrap construction


@dataclass
class PlanarWrap:
    """Solution of the tangent/arc/tangent problem in the obstacle plane.

    All fields broadcast together. Angles are measured in the plane basis
    that produced the 2D coordinates. `side` is +1 (counterclockwise arc)
    or -1; `wrapped` is False where the straight segment clears the circle,
    and `invalid` is True where an endpoint lies inside the circle so no
    tangent exists.
    """

    wrapped: np.ndarray
    invalid: np.ndarray
    side: np.ndarray
    length: np.ndarray      # in-plane path length (chord where unwrapped)
    tangent_p: np.ndarray   # straight run from P to its tangent point
    tangent_q: np.ndarray
    arc_angle: np.ndarray
    angle_p: np.ndarray     # polar angle of the tangent point near P
    angle_q: np.ndarray


def _segment_origin_distance(p, q):
    """Distance from the origin to the 2D segment p-q, broadcasting."""
    d = q - p
    dd = vec_dot(d, d)
    t = -vec_dot(p, d) / np.where(dd < 1e-30, 1.0, dd)
    t = np.clip(t, 0.0, 1.0)
    closest = p + t[..., None] * d
    return vec_norm(closest)


def wrap_circle_2d(p, q, radius, side=None, prev_side=None):
    """Shortest path from p to q around a circle of given radius at the origin.

    p, q: (..., 2) endpoint coordinates in the obstacle plane.
    side: optional (...,) array of -1/0/+1; nonzero entries force the arc
        side (used to freeze the branch during finite differencing).
    prev_side: optional (...,) array consulted only to break near-ties, which
        keeps the selected branch sticky across consecutive frames.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    dp = vec_norm(p)
    dq = vec_norm(q)
    invalid = (dp < radius) | (dq < radius)
    seg_dist = _segment_origin_distance(p, q)
    wrapped = (seg_dist < radius) & ~invalid

    safe_dp = np.maximum(dp, radius)
    safe_dq = np.maximum(dq, radius)
    theta_p = np.arctan2(p[..., 1], p[..., 0])
    theta_q = np.arctan2(q[..., 1], q[..., 0])
    beta_p = np.arccos(np.clip(radius / safe_dp, -1.0, 1.0))
    beta_q = np.arccos(np.clip(radius / safe_dq, -1.0, 1.0))
    lt_p = np.sqrt(np.maximum(safe_dp**2 - radius**2, 0.0))
    lt_q = np.sqrt(np.maximum(safe_dq**2 - radius**2, 0.0))

    delta = theta_q - theta_p
    two_pi = 2.0 * np.pi
    arc_pos = np.mod(delta - beta_p - beta_q, two_pi)
    arc_neg = np.mod(-delta - beta_p - beta_q, two_pi)

    chosen = np.where(arc_pos <= arc_neg, 1.0, -1.0)
    if prev_side is not None:
        near_tie = np.abs(arc_pos - arc_neg) < 1e-9
        prev = np.asarray(prev_side, dtype=float)
        chosen = np.where(near_tie & (prev != 0.0), prev, chosen)
    if side is not None:
        forced = np.asarray(side, dtype=float)
        chosen = np.where(forced != 0.0, forced, chosen)

    arc = np.where(chosen > 0.0, arc_pos, arc_neg)
    wrap_len = lt_p + radius * arc + lt_q
    chord = vec_norm(q - p)
    length = np.where(wrapped, wrap_len, chord)
    length = np.where(invalid, np.nan, length)

    return PlanarWrap(
        wrapped=wrapped,
        invalid=invalid,
        side=np.where(wrapped, chosen, 0.0),
        length=length,
        tangent_p=lt_p,
        tangent_q=lt_q,
        arc_angle=np.where(wrapped, arc, 0.0),
        angle_p=theta_p + chosen * beta_p,
        angle_q=theta_q - chosen * beta_q,
    )


# ---------------------------------------------------------------------------
# 3D obstacles


def _plane_basis_cylinder(axis):
    """Two unit vectors spanning the plane perpendicular to axis (..., 3)."""
    axis = np.asarray(axis, dtype=float)
    # pick the world axis least aligned with the cylinder axis as a helper
    helper = np.zeros_like(axis)
    idx = np.argmin(np.abs(axis), axis=-1)
    np.put_along_axis(helper, idx[..., None], 1.0, axis=-1)
    e1 = vec_cross(axis, helper)
    e1 /= vec_norm(e1, keepdims=True)
    e2 = vec_cross(axis, e1)
    return e1, e2


def cylinder_wrap(p, q, center, axis, radius, side=None, prev_side=None, contacts=False):
    """Path length from p to q around an infinite cylinder.

    center, axis: (..., 3) point on the axis and unit direction.
    Returns (length, planar) where planar is the PlanarWrap solved in the
    cross-section. The full length unrolls the cylinder: the in-plane path
    and the axial travel combine as the hypotenuse, which is the exact
    geodesic length for a straight-tangent/helical-arc route.

    With contacts=True also returns the two 3D contact points where the
    straight runs touch the surface (zero-filled where not wrapped).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    center = np.asarray(center, dtype=float)
    axis = np.asarray(axis, dtype=float)
    axis = axis / vec_norm(axis, keepdims=True)

    e1, e2 = _plane_basis_cylinder(axis)
    rp = p - center
    rq = q - center
    zp = vec_dot(rp, axis)
    zq = vec_dot(rq, axis)
    p2 = np.stack([vec_dot(rp, e1), vec_dot(rp, e2)], axis=-1)
    q2 = np.stack([vec_dot(rq, e1), vec_dot(rq, e2)], axis=-1)

    planar = wrap_circle_2d(p2, q2, radius, side=side, prev_side=prev_side)
    dz = zq - zp
    length = np.where(
        planar.wrapped,
        np.sqrt(planar.length**2 + dz**2),
        vec_norm(q - p),
    )
    length = np.where(planar.invalid, np.nan, length)
    if not contacts:
        return length, planar

    # axial travel splits in proportion to in-plane arc length, which is the
    # straight line on the unrolled surface and therefore the true geodesic
    arc_len = radius * planar.arc_angle
    total = np.maximum(planar.tangent_p + arc_len + planar.tangent_q, 1e-30)
    z1 = zp + dz * planar.tangent_p / total
    z2 = zp + dz * (planar.tangent_p + arc_len) / total
    t_p = (
        center
        + radius * (np.cos(planar.angle_p)[..., None] * e1 + np.sin(planar.angle_p)[..., None] * e2)
        + z1[..., None] * axis
    )
    t_q = (
        center
        + radius * (np.cos(planar.angle_q)[..., None] * e1 + np.sin(planar.angle_q)[..., None] * e2)
        + z2[..., None] * axis
    )
    w = planar.wrapped[..., None]
    return length, planar, np.where(w, t_p, 0.0), np.where(w, t_q, 0.0)


def sphere_wrap(p, q, center, radius, side=None, prev_side=None, contacts=False):
    """Path length from p to q around a sphere.

    The geodesic stays in the plane through p, q and the center, so the
    problem reduces to the 2D circle case in that plane. Near-collinear
    configurations (p, q and the center on one line) pick an arbitrary
    stable plane. With contacts=True also returns the two 3D tangency
    points (zero-filled where not wrapped).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    center = np.asarray(center, dtype=float)

    rp = p - center
    rq = q - center
    e1_raw = rp
    norm_p = vec_norm(e1_raw, keepdims=True)
    e1 = e1_raw / np.where(norm_p < 1e-12, 1.0, norm_p)
    perp = rq - vec_dot(rq, e1)[..., None] * e1
    norm_perp = vec_norm(perp, keepdims=True)
    degen = norm_perp[..., 0] < 1e-12
    if np.any(degen):
        # collinear fallback: any direction orthogonal to e1
        helper = np.zeros_like(e1)
        idx = np.argmin(np.abs(e1), axis=-1)
        np.put_along_axis(helper, idx[..., None], 1.0, axis=-1)
        alt = vec_cross(e1, helper)
        alt /= vec_norm(alt, keepdims=True)
        perp = np.where(degen[..., None], alt, perp / np.where(norm_perp < 1e-12, 1.0, norm_perp))
        e2 = perp
    else:
        e2 = perp / norm_perp

    p2 = np.stack([norm_p[..., 0], np.zeros_like(norm_p[..., 0])], axis=-1)
    q2 = np.stack([vec_dot(rq, e1), vec_dot(rq, e2)], axis=-1)
    planar = wrap_circle_2d(p2, q2, radius, side=side, prev_side=prev_side)
    length = np.where(planar.wrapped, planar.length, vec_norm(q - p))
    length = np.where(planar.invalid, np.nan, length)
    if not contacts:
        return length, planar

    t_p = center + radius * (np.cos(planar.angle_p)[..., None] * e1 + np.sin(planar.angle_p)[..., None] * e2)
    t_q = center + radius * (np.cos(planar.angle_q)[..., None] * e1 + np.sin(planar.angle_q)[..., None] * e2)
    w = planar.wrapped[..., None]
    return length, planar, np.where(w, t_p, 0.0), np.where(w, t_q, 0.0)


def cylinder_wrap_points(p, q, center, axis, radius, side=None, prev_side=None, arc_samples=64):
    """Polyline (n, 3) for a single cylinder-wrapped segment.

    Returns (points, side). Straight segments return just the endpoints,
    as do segments with an endpoint inside the cylinder, where no tangent
    exists and the wire runs straight through. Arc points interpolate the
    helix between the tangent points so the polyline converges to the
    geodesic as arc_samples grows.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    center = np.asarray(center, dtype=float)
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)

    length, planar = cylinder_wrap(p, q, center, axis, radius, side=side, prev_side=prev_side)
    if not planar.wrapped:
        return np.stack([p, q]), 0.0

    e1, e2 = _plane_basis_cylinder(axis)
    s = float(planar.side)
    zp = float(np.dot(p - center, axis))
    zq = float(np.dot(q - center, axis))
    lt_p, lt_q = float(planar.tangent_p), float(planar.tangent_q)
    arc_len = radius * float(planar.arc_angle)
    total_plane = lt_p + arc_len + lt_q
    # axial travel splits in proportion to in-plane arc length
    z1 = zp + (zq - zp) * (lt_p / total_plane)
    z2 = zp + (zq - zp) * ((lt_p + arc_len) / total_plane)

    angles = float(planar.angle_p) + s * float(planar.arc_angle) * np.linspace(0.0, 1.0, arc_samples)
    zs = np.linspace(z1, z2, arc_samples)
    arc_points = (
        center
        + radius * (np.cos(angles)[:, None] * e1 + np.sin(angles)[:, None] * e2)
        + zs[:, None] * axis
    )
    points = np.vstack([p[None, :], arc_points, q[None, :]])
    return points, s


def sphere_wrap_points(p, q, center, radius, side=None, prev_side=None, arc_samples=64):
    """Polyline (n, 3) for a single sphere-wrapped segment. See cylinder_wrap_points."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    center = np.asarray(center, dtype=float)

    length, planar = sphere_wrap(p, q, center, radius, side=side, prev_side=prev_side)
    if not planar.wrapped:
        return np.stack([p, q]), 0.0

    rp = p - center
    e1 = rp / np.linalg.norm(rp)
    rq = q - center
    perp = rq - np.dot(rq, e1) * e1
    npr = np.linalg.norm(perp)
    if npr < 1e-12:
        helper = np.zeros(3)
        helper[int(np.argmin(np.abs(e1)))] = 1.0
        perp = np.cross(e1, helper)
        npr = np.linalg.norm(perp)
    e2 = perp / npr

    s = float(planar.side)
    angles = float(planar.angle_p) + s * float(planar.arc_angle) * np.linspace(0.0, 1.0, arc_samples)
    arc_points = center + radius * (np.cos(angles)[:, None] * e1 + np.sin(angles)[:, None] * e2)
    points = np.vstack([p[None, :], arc_points, q[None, :]])
    return points, s


def polyline_length(points):
    """Sum of chord lengths of a polyline (n, 3)."""
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())
