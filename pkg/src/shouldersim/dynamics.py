"""Forward dynamics of the shoulder chain.

Each spherical joint accelerates its whole distal subtree as a single
rigid body: the composite subtree inertia about the joint pivot enters the
Euler rotation equation, driven by wire tensions (through their length
Jacobians), gravity and viscous joint damping. Integration is semi-implicit
Euler: angular velocity first, then the quaternion advances with the new
velocity, which keeps the free pendulum stable at millisecond steps.

The batched arrays path (`step_arrays`) is shared with the planner so a
rollout over candidate controls costs one vectorized call per time step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import quat_integrate, unwrap_series, vec_cross
from .model import JointState
from .tissue import (
    force_length,
    force_velocity,
    ligament_energy,
    passive_energy,
    passive_force,
    VEL_SCALE,
)

DEFAULT_DT = 1e-3


class IntegrationError(RuntimeError):
    """Raised when the state stops being finite; carries the last good state."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


@dataclass
class SimState:
    """Complete simulation state.

    wrap_sides remembers which side of each wrap obstacle every wrapped
    segment currently passes, so the routing branch stays continuous from
    step to step.
    """

    time: float
    joints: JointState
    activations: np.ndarray
    wrap_sides: np.ndarray

    @classmethod
    def initial(cls, model):
        cm = model.compiled
        state = cls(
            time=0.0,
            joints=model.neutral_state(),
            activations=np.zeros(cm.n_muscles),
            wrap_sides=np.zeros(cm.n_wrapped),
        )
        # realize the neutral wrap sides so the first step starts sticky
        _, sides = cm.wire_lengths(state.joints.quats)
        state.wrap_sides = sides
        return state

    def copy(self):
        return SimState(
            time=self.time,
            joints=self.joints.copy(),
            activations=self.activations.copy(),
            wrap_sides=self.wrap_sides.copy(),
        )


@dataclass
class TensionReport:
    """Per-wire diagnostics for one instant."""

    muscle_tensions: np.ndarray    # N, (M,)
    muscle_ratios: np.ndarray      # tension / f_max, (M,)
    ligament_tensions: np.ndarray  # N, (L,)
    wire_lengths: np.ndarray       # m, (L + M,)
    wire_rates: np.ndarray         # m/s, lengthening positive, (L + M,)


def wire_tensions(cm, lengths, rates, activations):
    """Vectorized tension of every wire, ligaments then muscles.

    Returns (tensions (..., W), muscle_ratios (..., M)).
    """
    n_lig = cm.n_ligaments
    lig_len = lengths[..., :n_lig]
    lig_rate = rates[..., :n_lig]
    stretch = lig_len - cm.lig_rest
    lig_t = cm.lig_stiffness * np.maximum(stretch, 0.0) + cm.lig_damping * np.maximum(lig_rate, 0.0)
    lig_t = np.where(stretch > 0.0, np.maximum(lig_t, 0.0), 0.0)

    mus_len = lengths[..., n_lig:]
    mus_rate = rates[..., n_lig:]
    norm_len = mus_len / cm.mus_l0
    norm_rate = mus_rate / (cm.mus_l0 * VEL_SCALE)
    a = np.clip(activations, 0.0, 1.0)
    ratios = np.maximum(0.0, a * force_length(norm_len) * force_velocity(norm_rate) + passive_force(norm_len))
    mus_t = cm.mus_fmax * ratios
    return np.concatenate([lig_t, mus_t], axis=-1), ratios


def generalized_forces(cm, jac, tensions, R, t, omega_flat):
    """Total generalized force (..., D): wire pulls, gravity, joint damping."""
    tau = -(tensions[..., None, :] @ jac)[..., 0, :]
    tau = tau + cm.gravity_torque(R, t)
    tau = tau - cm.damping * omega_flat
    return tau


def step_arrays(cm, quats, omegas, activations, sides, controls, dt):
    """One semi-implicit step over any batch shape.

    All arrays share leading batch axes: quats (..., J, 4), omegas
    (..., J, 3), activations/controls (..., M), sides (..., K). Returns the
    advanced arrays plus diagnostics; non-finite configurations propagate
    as NaN without raising, so batched rollouts can mask dead candidates.
    """
    # NaN states are legal inputs here (dead rollout candidates), so numeric
    # warnings from propagating them are noise
    with np.errstate(invalid="ignore", over="ignore"):
        u = np.clip(controls, 0.0, 1.0)
        acts = np.clip(activations + dt * (u - activations) / cm.mus_tau, 0.0, 1.0)

        lengths, new_sides, jac, R, t = cm.bundle(quats, prev_sides=sides)
        omega_flat = omegas.reshape(omegas.shape[:-2] + (cm.n_dof,))
        rates = (jac @ omega_flat[..., :, None])[..., 0]
        tensions, ratios = wire_tensions(cm, lengths, rates, acts)
        tau = generalized_forces(cm, jac, tensions, R, t, omega_flat)

        inertia = cm.joint_inertias(R, t)
        bad = ~np.isfinite(inertia).all(axis=(-1, -2))
        if np.any(bad):
            # keep the batched solve alive; the NaN right-hand side still
            # poisons these candidates
            inertia = np.where(bad[..., None, None], np.eye(3), inertia)
        tau_j = tau.reshape(tau.shape[:-1] + (cm.n_joints, 3))
        momentum = (inertia @ omegas[..., None])[..., 0]
        gyro = vec_cross(omegas, momentum)
        rhs = tau_j - gyro
        if np.any(bad):
            rhs = np.where(bad[..., None], np.nan, rhs)
        domega = np.linalg.solve(inertia, rhs[..., None])[..., 0]
        new_omegas = omegas + dt * domega
        new_quats = quat_integrate(quats, new_omegas, dt)

    return {
        "quats": new_quats,
        "omegas": new_omegas,
        "activations": acts,
        "sides": new_sides,
        "lengths": lengths,
        "rates": rates,
        "tensions": tensions,
        "ratios": ratios,
    }


def tension_report(model, state):
    """TensionReport for a state as it stands, without stepping."""
    cm = model.compiled
    lengths, _, jac, _, _ = cm.bundle(state.joints.quats, prev_sides=state.wrap_sides)
    rates = jac @ state.joints.omegas.reshape(cm.n_dof)
    tensions, ratios = wire_tensions(cm, lengths, rates, state.activations)
    n_lig = cm.n_ligaments
    return TensionReport(
        muscle_tensions=tensions[n_lig:],
        muscle_ratios=ratios,
        ligament_tensions=tensions[:n_lig],
        wire_lengths=lengths,
        wire_rates=rates,
    )


def step(model, state, controls, dt=DEFAULT_DT):
    """Advance one state by dt under muscle excitations `controls` (M,).

    Returns (new_state, TensionReport). Raises IntegrationError carrying
    the last finite state if the update produces non-finite values.
    """
    cm = model.compiled
    controls = np.asarray(controls, dtype=float)
    if controls.shape != (cm.n_muscles,):
        raise ValueError(f"controls must have shape ({cm.n_muscles},)")
    out = step_arrays(
        cm, state.joints.quats, state.joints.omegas, state.activations,
        state.wrap_sides, controls, dt,
    )
    if not (np.all(np.isfinite(out["quats"])) and np.all(np.isfinite(out["omegas"]))):
        raise IntegrationError(
            f"simulation diverged at t={state.time:.4f}s", last_state=state.copy()
        )
    new_state = SimState(
        time=state.time + dt,
        joints=JointState(out["quats"], out["omegas"]),
        activations=out["activations"],
        wrap_sides=out["sides"],
    )
    n_lig = cm.n_ligaments
    report = TensionReport(
        muscle_tensions=out["tensions"][n_lig:],
        muscle_ratios=out["ratios"],
        ligament_tensions=out["tensions"][:n_lig],
        wire_lengths=out["lengths"],
        wire_rates=out["rates"],
    )
    return new_state, report


@dataclass
class Trajectory:
    """Recorded time series of a simulation run."""

    times: np.ndarray              # (T,)
    quats: np.ndarray              # (T, J, 4)
    omegas: np.ndarray             # (T, J, 3)
    activations: np.ndarray        # (T, M)
    controls: np.ndarray           # (T, M) applied excitations
    muscle_tensions: np.ndarray    # (T, M)
    muscle_ratios: np.ndarray      # (T, M)
    ligament_tensions: np.ndarray  # (T, L)
    ee_positions: np.ndarray       # (T, 3)
    joint_names: tuple
    muscle_names: tuple
    ligament_names: tuple

    def __len__(self):
        return len(self.times)

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def euler_angles(self, unwrap=True):
        """Per-joint intrinsic Z-Y-X angles over time, (T, J, 3)."""
        from .geometry import euler_zyx

        angles = euler_zyx(self.quats)
        return unwrap_series(angles, axis=0) if unwrap else angles

    def to_csv(self, path):
        """Write one row per sample: time, joint Euler angles (rad, unwrapped),
        muscle tensions (N), tension ratios, ligament tensions (N), applied
        excitations and end-effector position (m)."""
        path = Path(path)
        angles = self.euler_angles()
        header = ["time"]
        for j in self.joint_names:
            header += [f"{j}_yaw", f"{j}_pitch", f"{j}_roll"]
        header += [f"tension_{m}" for m in self.muscle_names]
        header += [f"ratio_{m}" for m in self.muscle_names]
        header += [f"tension_{l}" for l in self.ligament_names]
        header += [f"u_{m}" for m in self.muscle_names]
        header += ["ee_x", "ee_y", "ee_z"]
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(len(self.times)):
                row = [f"{self.times[i]:.9f}"]
                row += [f"{v:.9g}" for v in angles[i].ravel()]
                row += [f"{v:.9g}" for v in self.muscle_tensions[i]]
                row += [f"{v:.9g}" for v in self.muscle_ratios[i]]
                row += [f"{v:.9g}" for v in self.ligament_tensions[i]]
                row += [f"{v:.9g}" for v in self.controls[i]]
                row += [f"{v:.9g}" for v in self.ee_positions[i]]
                writer.writerow(row)
        return path


def simulate(model, state, controls, duration, dt=DEFAULT_DT, record_every=1):
    """Run forward dynamics and record a Trajectory.

    controls: either a constant (M,) excitation array or a callable
    (time, SimState) -> (M,) evaluated every step. The end-effector column
    records the controller's end-effector site (the model must define one).
    Returns (final_state, Trajectory).
    """
    cm = model.compiled
    ee_idx = None
    if model.controller is not None:
        ee_idx = model.site_index[model.controller.end_effector]

    n_steps = int(round(duration / dt))
    fn = controls if callable(controls) else (lambda _t, _s: controls)

    times, quats, omegas, acts, us = [], [], [], [], []
    tensions, ratios, lig_tensions, ee = [], [], [], []

    def record(s, u, rep):
        times.append(s.time)
        quats.append(s.joints.quats.copy())
        omegas.append(s.joints.omegas.copy())
        acts.append(s.activations.copy())
        us.append(np.asarray(u, dtype=float).copy())
        tensions.append(rep.muscle_tensions)
        ratios.append(rep.muscle_ratios)
        lig_tensions.append(rep.ligament_tensions)
        if ee_idx is not None:
            R, t = cm.body_poses(s.joints.quats)
            ee.append(cm.site_positions(R, t)[ee_idx])
        else:
            ee.append(np.zeros(3))

    current = state
    # the initial state is sample zero, so 1 s at 1 ms gives 1001 rows
    record(current, fn(current.time, current), tension_report(model, current))
    for k in range(n_steps):
        u = np.asarray(fn(current.time, current), dtype=float)
        current, report = step(model, current, u, dt)
        if (k + 1) % record_every == 0:
            record(current, u, report)

    traj = Trajectory(
        times=np.array(times),
        quats=np.array(quats),
        omegas=np.array(omegas),
        activations=np.array(acts),
        controls=np.array(us),
        muscle_tensions=np.array(tensions),
        muscle_ratios=np.array(ratios),
        ligament_tensions=np.array(lig_tensions),
        ee_positions=np.array(ee),
        joint_names=model.joint_names,
        muscle_names=tuple(m.name for m in model.muscles),
        ligament_names=tuple(l.name for l in model.ligaments),
    )
    return current, traj


def mechanical_energy(model, state):
    """Total mechanical energy: subtree kinetic terms, gravitational
    potential, ligament elastic and muscle passive elastic energy.

    The muscle passive term belongs in the audit because the passive fiber
    force is conservative: leaving it out would let a stretched muscle
    "create" kinetic energy on recoil.
    """
    cm = model.compiled
    R, t = cm.body_poses(state.joints.quats)
    inertia = cm.joint_inertias(R, t)
    ke = 0.5 * float(
        np.einsum("ji,jik,jk->", state.joints.omegas, inertia, state.joints.omegas)
    )
    pe = float(cm.potential_energy(R, t))
    lengths, _ = cm.wire_lengths_from_poses(R, t, prev_sides=state.wrap_sides)
    n_lig = cm.n_ligaments
    e_lig = sum(
        float(ligament_energy(lig, lengths[i])) for i, lig in enumerate(model.ligaments)
    )
    norm_len = lengths[n_lig:] / cm.mus_l0
    e_mus = float(np.sum(cm.mus_fmax * cm.mus_l0 * passive_energy(norm_len)))
    return ke + pe + e_lig + e_mus
