"""Array-packed kinematics engine.

CompiledModel flattens a MusculoskeletalModel into index arrays so that
forward kinematics, wire lengths and length Jacobians evaluate over an
arbitrary batch of joint configurations at once. The planner leans on this:
one call handles every rollout candidate together.

Length Jacobians are exact: straight segments differentiate as unit-vector
dotted endpoint velocities, and wrapped segments use the fact that the
tangent/arc/tangent path is length-stationary at its contact points, so
only endpoint and obstacle motion contribute. A frozen-side central
difference twin (fd_jacobian) exists as a cross-check.

Shapes follow the convention that quats is (..., J, 4) and all outputs
carry the same leading batch axes. The generalized coordinate layout is
D = 3*J body-frame rotations, ordered joint-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    cylinder_wrap,
    quat_from_rotvec,
    quat_multiply,
    quat_to_matrix,
    sphere_wrap,
    vec_cross as _cross,
    vec_norm as _vnorm,
)

FD_DELTA = 1e-6


class CompiledModel:
    """Flat-array twin of a MusculoskeletalModel."""

    def __init__(self, model):
        self.model = model
        bodies = model.bodies
        self.n_bodies = len(bodies)
        index = model.body_index
        self.parent_idx = np.array(
            [-1 if b.parent == "world" else index[b.parent] for b in bodies], dtype=int
        )
        self.pivot = np.stack([b.pivot for b in bodies])
        self.mass = np.array([b.mass for b in bodies])
        self.com = np.stack([b.com for b in bodies])
        self.inertia = np.stack([b.inertia for b in bodies])
        self.movable = np.array([b.movable for b in bodies], dtype=bool)

        self.joint_bodies = np.array([i for i, b in enumerate(bodies) if b.movable], dtype=int)
        self.n_joints = len(self.joint_bodies)
        self.n_dof = 3 * self.n_joints
        slot = np.full(self.n_bodies, -1, dtype=int)
        slot[self.joint_bodies] = np.arange(self.n_joints)
        self.joint_slot = slot

        # subtree[j, b] is True when body b moves with joint j
        self.subtree = np.zeros((self.n_joints, self.n_bodies), dtype=bool)
        for j, jb in enumerate(self.joint_bodies):
            for b in range(self.n_bodies):
                k = b
                while k >= 0:
                    if k == jb:
                        self.subtree[j, b] = True
                        break
                    k = self.parent_idx[k]

        self.site_body = np.array([index[s.body] for s in model.sites], dtype=int)
        self.site_local = np.stack([s.pos for s in model.sites])
        self.n_sites = len(model.sites)

        if model.wrap_geoms:
            self.wrap_body = np.array([index[w.body] for w in model.wrap_geoms], dtype=int)
            self.wrap_pos = np.stack([w.pos for w in model.wrap_geoms])
            self.wrap_axis = np.stack(
                [w.axis if w.axis is not None else np.zeros(3) for w in model.wrap_geoms]
            )
            self.wrap_radius = np.array([w.radius for w in model.wrap_geoms])
            self.wrap_is_cylinder = np.array(
                [w.kind == "cylinder" for w in model.wrap_geoms], dtype=bool
            )
        else:
            self.wrap_body = np.zeros(0, dtype=int)
            self.wrap_pos = np.zeros((0, 3))
            self.wrap_axis = np.zeros((0, 3))
            self.wrap_radius = np.zeros(0)
            self.wrap_is_cylinder = np.zeros(0, dtype=bool)

        # wires flatten to segments; ligaments come first, muscles after
        wires = model.wires
        self.n_wires = len(wires)
        self.n_ligaments = len(model.ligaments)
        self.wire_names = tuple(w.name for w in wires)
        seg_a, seg_b, seg_wire, seg_wrap = [], [], [], []
        sidx = model.site_index
        widx = model.wrap_index
        for wi, wire in enumerate(wires):
            chain = wire.path.sites
            for si in range(len(chain) - 1):
                seg_a.append(sidx[chain[si]])
                seg_b.append(sidx[chain[si + 1]])
                seg_wire.append(wi)
                wrap = wire.path.wraps[si]
                seg_wrap.append(-1 if wrap is None else widx[wrap])
        self.seg_a = np.array(seg_a, dtype=int)
        self.seg_b = np.array(seg_b, dtype=int)
        self.seg_wire = np.array(seg_wire, dtype=int)
        self.seg_wrap = np.array(seg_wrap, dtype=int)
        self.n_segments = len(seg_a)
        self.wire_matrix = np.zeros((self.n_segments, self.n_wires))
        self.wire_matrix[np.arange(self.n_segments), self.seg_wire] = 1.0
        self._wire_matrix_t = np.ascontiguousarray(self.wire_matrix.T)
        self.wrapped_segs = np.nonzero(self.seg_wrap >= 0)[0]
        self.n_wrapped = len(self.wrapped_segs)
        # wrapped segments grouped by obstacle so each wrap geom solves as
        # one batched call; ks indexes back into wrapped_segs order
        self.wrap_groups = []
        for g in np.unique(self.seg_wrap[self.wrapped_segs]):
            ks = np.nonzero(self.seg_wrap[self.wrapped_segs] == g)[0]
            self.wrap_groups.append((int(g), self.wrapped_segs[ks], ks))

        # joint-gating masks for the Jacobian: row s, column j is 1 when the
        # segment endpoint's body moves with joint j
        seg_body_a = self.site_body[self.seg_a]
        seg_body_b = self.site_body[self.seg_b]
        self._gate_a = self.subtree[:, seg_body_a].T.astype(float)
        self._gate_b = self.subtree[:, seg_body_b].T.astype(float)
        self._wrap_group_gates = [
            (
                self._gate_a[segs],
                self._gate_b[segs],
                np.repeat(
                    self.subtree[:, self.wrap_body[g]].astype(float)[None, :],
                    len(segs), axis=0,
                ),
            )
            for g, segs, ks in self.wrap_groups
        ]
        # signed gate blocks for the fused Jacobian call: straight segments
        # contribute +q, -p; a wrapped segment swaps those for its two
        # tangent spans +t_p, -p (direction u1) and +q, -t_q (direction u3)
        self._gate_straight_signed = np.concatenate(
            [self._gate_b, -self._gate_a], axis=0
        )
        self._wrap_gate_signed = [
            np.concatenate([g_ob, -g_a, g_b, -g_ob], axis=0)
            for g_a, g_b, g_ob in self._wrap_group_gates
        ]

        self.gravity = model.gravity
        self.damping = model.joint_damping

        # tissue parameters in wire order (ligaments then muscles)
        self.lig_rest = np.array([l.rest_length for l in model.ligaments])
        self.lig_stiffness = np.array([l.stiffness for l in model.ligaments])
        self.lig_damping = np.array([l.damping for l in model.ligaments])
        self.mus_fmax = np.array([m.f_max for m in model.muscles])
        self.mus_l0 = np.array([m.optimal_length for m in model.muscles])
        self.mus_tau = np.array([m.activation_tau for m in model.muscles])
        self.n_muscles = len(model.muscles)

        # quaternion increments for the difference cross-check
        eye = np.eye(3) * FD_DELTA
        self._dq_plus = quat_from_rotvec(eye)
        self._dq_minus = quat_from_rotvec(-eye)

    # -- kinematics ---------------------------------------------------------

    def body_poses(self, quats):
        """World rotation (..., B, 3, 3) and origin (..., B, 3) per body."""
        quats = np.asarray(quats, dtype=float)
        lead = quats.shape[:-2]
        rq = quat_to_matrix(quats)
        R = np.empty(lead + (self.n_bodies, 3, 3))
        t = np.empty(lead + (self.n_bodies, 3))
        eye = np.eye(3)
        for b in range(self.n_bodies):
            p = self.parent_idx[b]
            s = self.joint_slot[b]
            if p < 0:
                t[..., b, :] = self.pivot[b]
                R[..., b, :, :] = rq[..., s, :, :] if s >= 0 else eye
            else:
                rp = R[..., p, :, :]
                t[..., b, :] = t[..., p, :] + rp @ self.pivot[b]
                if s >= 0:
                    R[..., b, :, :] = rp @ rq[..., s, :, :]
                else:
                    R[..., b, :, :] = rp
        return R, t

    def site_positions(self, R, t):
        """World positions of all sites, (..., S, 3)."""
        rs = R[..., self.site_body, :, :]
        local = self.site_local[:, :, None]
        return t[..., self.site_body, :] + (rs @ local)[..., 0]

    def one_site_position(self, R, t, site):
        """World position (..., 3) of a single site by index."""
        b = self.site_body[site]
        return t[..., b, :] + R[..., b, :, :] @ self.site_local[site]

    def com_positions(self, R, t):
        return t + (R @ self.com[:, :, None])[..., 0]

    # -- wire lengths and derivatives ----------------------------------------

    def _solve_wrapped(self, R, t, p, q, sides, prev_sides, contacts):
        """Wrap solutions for every wrapped segment, one batched call per
        obstacle.

        Returns a list of tuples (segs, ks, length, planar, t_p, t_q) whose
        arrays carry a trailing per-segment axis; ks indexes the segments'
        positions in wrapped_segs order. The contact points are None unless
        contacts=True.
        """
        out = []
        for g, segs, ks in self.wrap_groups:
            wb = self.wrap_body[g]
            center = t[..., wb, :] + R[..., wb, :, :] @ self.wrap_pos[g]
            center = center[..., None, :]
            side_k = None if sides is None else sides[..., ks]
            prev_k = None if prev_sides is None else prev_sides[..., ks]
            if self.wrap_is_cylinder[g]:
                axis = (R[..., wb, :, :] @ self.wrap_axis[g])[..., None, :]
                res = cylinder_wrap(
                    p[..., segs, :], q[..., segs, :], center, axis, self.wrap_radius[g],
                    side=side_k, prev_side=prev_k, contacts=contacts,
                )
            else:
                res = sphere_wrap(
                    p[..., segs, :], q[..., segs, :], center, self.wrap_radius[g],
                    side=side_k, prev_side=prev_k, contacts=contacts,
                )
            if contacts:
                length, planar, t_p, t_q = res
            else:
                (length, planar), t_p, t_q = res, None, None
            out.append((segs, ks, length, planar, t_p, t_q))
        return out

    def wire_lengths_from_poses(self, R, t, sides=None, prev_sides=None):
        """Wire lengths (..., W) and realized wrap sides (..., K).

        `sides` forces the wrap branch per wrapped segment (nonzero entries
        only); `prev_sides` just breaks near-ties so the selected side stays
        sticky across frames. Where a wire endpoint sinks inside a wrap
        volume no tangent exists, so the segment falls back to the straight
        chord; obstacles only deflect wires they can actually support.
        """
        sp = self.site_positions(R, t)
        p = sp[..., self.seg_a, :]
        q = sp[..., self.seg_b, :]
        seglen = _vnorm(q - p)
        lead = seglen.shape[:-1]
        out_sides = np.zeros(lead + (self.n_wrapped,))

        for segs, ks, length, planar, _, _ in self._solve_wrapped(
            R, t, p, q, sides, prev_sides, contacts=False
        ):
            seglen[..., segs] = np.where(planar.wrapped, length, seglen[..., segs])
            out_sides[..., ks] = planar.side

        return seglen @ self.wire_matrix, out_sides

    def wire_lengths(self, quats, sides=None, prev_sides=None):
        R, t = self.body_poses(quats)
        return self.wire_lengths_from_poses(R, t, sides=sides, prev_sides=prev_sides)

    def _dof_frames(self, R, t):
        """Rotation-axis columns (..., J, 3, 3) [j, axis, component] and
        joint pivots (..., J, 3)."""
        rj = R[..., self.joint_bodies, :, :]
        cols = np.swapaxes(rj, -1, -2)
        origins = t[..., self.joint_bodies, :]
        return cols, origins

    def bundle(self, quats, prev_sides=None):
        """Lengths, realized sides, exact length Jacobian and poses.

        Returns (lengths (..., W), sides (..., K), jac (..., W, D), R, t).
        jac[w, d] is dL_w/dtheta_d for a body-frame rotation of joint d//3
        about its axis d%3; moment arms are the negative of this.

        The Jacobian comes from one fused triple-product evaluation. For a
        point P pulled along direction u, the velocity under a unit rotation
        e about joint pivot o is e x (P - o), whose component along u equals
        e . ((P - o) x u). Every segment endpoint and wrap tangent point
        contributes one such (point, direction) row; signed subtree gates
        accumulate them into dL/dtheta without materializing per-dof
        velocity vectors.
        """
        R, t = self.body_poses(quats)
        sp = self.site_positions(R, t)
        p = sp[..., self.seg_a, :]
        q = sp[..., self.seg_b, :]
        diff = q - p
        seglen = _vnorm(diff)
        lead = seglen.shape[:-1]

        cols, origins = self._dof_frames(R, t)
        unit = diff / np.maximum(seglen, 1e-12)[..., None]

        out_sides = np.zeros(lead + (self.n_wrapped,))

        # rows for straight spans; wrapped segments zero their straight
        # direction and append four tangent rows (+t_p, -p along u1 and
        # +q, -t_q along u3) instead
        straight_unit = unit
        extra_p, extra_u, gates, group_segs = [], [], [self._gate_straight_signed], []
        for (segs, ks, length, planar, t_p, t_q), gate in zip(
            self._solve_wrapped(R, t, p, q, None, prev_sides, contacts=True),
            self._wrap_gate_signed,
        ):
            out_sides[..., ks] = planar.side
            seglen[..., segs] = np.where(planar.wrapped, length, seglen[..., segs])
            wrapped = planar.wrapped
            if not np.any(wrapped):
                continue
            w3 = wrapped[..., None]
            if straight_unit is unit:
                straight_unit = unit.copy()
            pa = p[..., segs, :]
            qb = q[..., segs, :]
            straight_unit[..., segs, :] = np.where(w3, 0.0, unit[..., segs, :])
            # unwrapped rows keep finite dummy points so 0-direction rows
            # cannot turn NaN contacts into NaN contributions
            t_p = np.where(w3, t_p, pa)
            t_q = np.where(w3, t_q, qb)
            u1 = t_p - pa
            u3 = qb - t_q
            u1 = np.where(w3, u1 / np.maximum(_vnorm(u1), 1e-12)[..., None], 0.0)
            u3 = np.where(w3, u3 / np.maximum(_vnorm(u3), 1e-12)[..., None], 0.0)
            extra_p.extend((t_p, pa, qb, t_q))
            extra_u.extend((u1, u1, u3, u3))
            gates.append(gate)
            group_segs.append(segs)

        points = np.concatenate([q, p] + extra_p, axis=-2)
        units = np.concatenate([straight_unit, straight_unit] + extra_u, axis=-2)
        gate = gates[0] if len(gates) == 1 else np.concatenate(gates, axis=0)

        rel = points[..., :, None, :] - origins[..., None, :, :]
        m = _cross(rel, units[..., :, None, :])
        # contract per joint: (..., J, G, 3) @ (..., J, 3, 3) keeps the GEMM
        # batch small instead of dispatching one 3x3 product per row
        mj = np.swapaxes(m, -3, -2)
        dots = mj @ np.swapaxes(cols, -1, -2)
        dots = np.swapaxes(dots, -3, -2) * gate[:, :, None]
        contrib = dots.reshape(dots.shape[:-2] + (self.n_dof,))

        S = self.n_segments
        jac_seg = contrib[..., :S, :] + contrib[..., S : 2 * S, :]
        off = 2 * S
        for segs in group_segs:
            k = len(segs)
            blk = contrib[..., off : off + 4 * k, :]
            blk = blk.reshape(blk.shape[:-2] + (4, k, self.n_dof)).sum(axis=-3)
            jac_seg[..., segs, :] += blk
            off += 4 * k

        lengths = seglen @ self.wire_matrix
        jac = self._wire_matrix_t @ jac_seg
        return lengths, out_sides, jac, R, t

    # -- difference cross-check ----------------------------------------------

    def perturbed_quats(self, quats, delta=FD_DELTA):
        """Stack of 2*D joint configurations, + and - delta about each
        local joint axis, shaped (..., 2D, J, 4)."""
        quats = np.asarray(quats, dtype=float)
        lead = quats.shape[:-2]
        D = self.n_dof
        if delta == FD_DELTA:
            dq_plus, dq_minus = self._dq_plus, self._dq_minus
        else:
            eye = np.eye(3) * delta
            dq_plus, dq_minus = quat_from_rotvec(eye), quat_from_rotvec(-eye)
        pert = np.broadcast_to(
            quats[..., None, :, :], lead + (2 * D, self.n_joints, 4)
        ).copy()
        for d in range(D):
            j, a = divmod(d, 3)
            pert[..., d, j, :] = quat_multiply(quats[..., j, :], dq_plus[a])
            pert[..., D + d, j, :] = quat_multiply(quats[..., j, :], dq_minus[a])
        return pert

    def fd_jacobian(self, quats, prev_sides=None, delta=FD_DELTA):
        """Central-difference length Jacobian with the wrap side frozen at
        the nominal configuration. Returns (lengths, sides, jac)."""
        lengths, sides = self.wire_lengths(quats, prev_sides=prev_sides)
        pert = self.perturbed_quats(quats, delta)
        frozen = np.broadcast_to(
            sides[..., None, :], sides.shape[:-1] + (2 * self.n_dof, self.n_wrapped)
        )
        lp, _ = self.wire_lengths(pert, sides=frozen)
        D = self.n_dof
        jac = (lp[..., :D, :] - lp[..., D:, :]) / (2.0 * delta)
        return lengths, sides, np.swapaxes(jac, -1, -2)

    # -- dynamics ingredients --------------------------------------------------

    def gravity_torque(self, R, t):
        """Generalized gravity force (..., D): the torque of subtree weights
        about each joint pivot, expressed in the joint's child body frame."""
        coms = self.com_positions(R, t)
        weights = self.mass[:, None] * self.gravity
        lead = R.shape[:-3]
        tau = np.empty(lead + (self.n_joints, 3))
        for j, jb in enumerate(self.joint_bodies):
            mask = self.subtree[j]
            rel = coms[..., mask, :] - t[..., jb, None, :]
            moment = _cross(rel, weights[mask]).sum(axis=-2)
            tau[..., j, :] = (moment[..., None, :] @ R[..., jb, :, :])[..., 0, :]
        return tau.reshape(lead + (self.n_dof,))

    def joint_inertias(self, R, t):
        """Composite inertia (..., J, 3, 3) of each joint's distal subtree
        about the joint pivot, in the child body frame.

        Each joint accelerates everything distal to it as a single rigid
        body, so the subtree inertia is the sum of every member's inertia
        translated to the pivot."""
        coms = self.com_positions(R, t)
        # world-frame inertia of each body about its own com
        iw = (R * self.inertia[:, None, :]) @ np.swapaxes(R, -1, -2)
        lead = R.shape[:-3]
        out = np.empty(lead + (self.n_joints, 3, 3))
        eye = np.eye(3)
        for j, jb in enumerate(self.joint_bodies):
            mask = self.subtree[j]
            d = coms[..., mask, :] - t[..., jb, None, :]
            d2 = (d * d).sum(axis=-1)
            shift = d2[..., None, None] * eye - d[..., :, None] * d[..., None, :]
            total = (iw[..., mask, :, :] + self.mass[mask][:, None, None] * shift).sum(axis=-3)
            rj = R[..., jb, :, :]
            out[..., j, :, :] = np.swapaxes(rj, -1, -2) @ total @ rj
        return out

    def potential_energy(self, R, t):
        """Gravitational potential energy (...,) of all moving bodies."""
        moving = self.subtree.any(axis=0)
        coms = self.com_positions(R, t)
        return -(
            self.mass[moving, None] * self.gravity * coms[..., moving, :]
        ).sum(axis=(-1, -2))


@dataclass
class BodyPoses:
    """Forward-kinematics result with name-based lookups."""

    names: tuple
    rotations: np.ndarray     # (B, 3, 3)
    translations: np.ndarray  # (B, 3)
    _index: dict

    def body(self, name):
        i = self._index[name]
        return self.rotations[i], self.translations[i]

    def site_position(self, model, name):
        site = model.sites[model.site_index[name]]
        R, t = self.body(site.body)
        return t + R @ site.pos


def forward_kinematics(model, joint_state):
    """Pose of every body for the given joint state.

    Body frames sit at their joint pivots; a fixed body inherits its
    parent's rotation. The world-rooted trunk therefore stays at identity.
    """
    R, t = model.compiled.body_poses(joint_state.quats)
    return BodyPoses(
        names=tuple(b.name for b in model.bodies),
        rotations=R,
        translations=t,
        _index=model.body_index,
    )


def site_world_positions(model, joint_state):
    """World coordinates of every site as a dict name -> (3,) array."""
    R, t = model.compiled.body_poses(joint_state.quats)
    sp = model.compiled.site_positions(R, t)
    return {s.name: sp[i] for i, s in enumerate(model.sites)}
