"""Sampling-based predictive control.

The planner keeps a control spline of `knots` points per muscle, held
zero-order between knots. Every replan it rolls out a batch of candidate
splines with the forward dynamics and keeps the cheapest:

  candidate 0: the previous plan shifted forward by the replan interval
  candidate 1: zero excitation everywhere (the do-nothing baseline)
  candidates 2..: Gaussian perturbations of candidate 0, clamped to [0, 1]

Because the zero plan is always in the pool, the returned plan can never
cost more than doing nothing. All sampling flows through one seeded
generator, so a control session replays bit-exactly.

Cost is a running-sum quadrature over the rollout: at each step the
distance from end-effector to target (weighted by `position`) plus the
squared excitation magnitude (weighted by `effort`), times the step.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import DEFAULT_DT, SimState, Trajectory, step, step_arrays
from .model import JointState


class PlanningError(RuntimeError):
    """Every rollout candidate went non-finite."""


@dataclass(frozen=True)
class CostWeights:
    position: float = 10.0
    effort: float = 0.1


@dataclass(frozen=True)
class PlannerConfig:
    """Sampling planner settings.

    samples counts every rollout candidate including the shifted previous
    plan and the zero baseline; samples=1 degenerates to returning the
    shifted previous plan. plan_dt is the rollout integration step; it can
    be coarser than the simulation step, but explicit joint damping caps it
    at roughly 2x the smallest composite inertia over the damping
    coefficient, so keep inertias above damping * plan_dt / 2.
    """

    horizon: float = 0.5
    knots: int = 5
    samples: int = 64
    noise_sigma: float = 0.1
    replan_interval: float = 0.02
    plan_dt: float = 0.0025
    seed: int = 0
    elite_rule: str = "best"

    def __post_init__(self):
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if self.knots < 2:
            raise ValueError("need at least 2 knots")
        if self.samples < 1:
            raise ValueError("need at least 1 sample")
        if self.noise_sigma <= 0.0 or self.noise_sigma > 1.0:
            raise ValueError("noise_sigma must lie in (0, 1]")
        if not 0.0 < self.plan_dt <= 0.01:
            raise ValueError("plan_dt must lie in (0, 0.01]")
        if self.replan_interval < self.plan_dt:
            raise ValueError("replan_interval must be at least plan_dt")
        if self.elite_rule != "best":
            raise ValueError("only the 'best' elite rule is supported")

    @property
    def n_plan_steps(self):
        return max(1, int(round(self.horizon / self.plan_dt)))


def config_from_model(model):
    """PlannerConfig and CostWeights from the model's controller block."""
    c = model.controller
    if c is None:
        return PlannerConfig(), CostWeights()
    return (
        PlannerConfig(
            horizon=c.horizon, knots=c.knots, samples=c.samples,
            noise_sigma=c.noise_sigma, replan_interval=c.replan_interval,
            plan_dt=c.plan_dt, seed=c.seed,
        ),
        CostWeights(position=c.w_position, effort=c.w_effort),
    )


@dataclass
class PlanResult:
    """Chosen control spline and its rollout cost breakdown."""

    knots: np.ndarray           # (K, M) excitations in [0, 1]
    cost: float
    position_errors: np.ndarray  # (T,) distance to target per rollout step, m
    efforts: np.ndarray          # (T,) squared excitation magnitude per step
    candidate_index: int


def knots_to_schedule(knots, n_steps, horizon=None, dt=None, offset=0.0):
    """Zero-order-hold expansion of spline knots to per-step controls.

    knots: (K, M) or (N, K, M). Steps sample the spline at their start
    times (optionally shifted by `offset` seconds into the spline).
    """
    knots = np.asarray(knots, dtype=float)
    k = knots.shape[-2]
    if horizon is None or dt is None:
        idx = (np.arange(n_steps) * k) // n_steps
    else:
        times = offset + np.arange(n_steps) * dt
        idx = np.minimum((times / (horizon / k)).astype(int), k - 1)
    return knots[..., idx, :]


def shift_plan(knots, config):
    """Advance a spline by one replan interval: each knot takes the value
    the old spline had `replan_interval` later; the tail repeats."""
    knots = np.asarray(knots, dtype=float)
    k = knots.shape[-2]
    knot_dur = config.horizon / k
    times = np.arange(k) * knot_dur + config.replan_interval
    idx = np.minimum((times / knot_dur).astype(int), k - 1)
    return knots[..., idx, :]


def trajectory_cost(trajectory, controls, weights, target, dt=None):
    """Quadrature cost of a rolled-out trajectory.

    trajectory: a dynamics.Trajectory or an (T, 3) array of end-effector
    positions (then dt is required). controls: (T, M). Returns
    (total, position_errors, efforts) with the per-step series.
    """
    if isinstance(trajectory, Trajectory):
        ee = trajectory.ee_positions
        dt = trajectory.dt if dt is None else dt
    else:
        ee = np.asarray(trajectory, dtype=float)
        if dt is None:
            raise ValueError("dt is required when passing a raw position array")
    controls = np.asarray(controls, dtype=float)
    target = np.asarray(target, dtype=float)
    r1 = np.linalg.norm(target - ee, axis=-1)
    r2 = np.einsum("...m,...m->...", controls, controls)
    total = float(np.sum((weights.position * r1 + weights.effort * r2) * dt))
    return total, r1, r2


def _rollout(cm, state, schedules, dt, ee_site):
    """Batched rollout of candidate control schedules.

    schedules: (N, T, M). Returns post-step end-effector positions
    (N, T, 3) and a dead mask (N,) for candidates that went non-finite.
    """
    n, t_steps, _ = schedules.shape
    quats = np.broadcast_to(state.joints.quats, (n,) + state.joints.quats.shape).copy()
    omegas = np.broadcast_to(state.joints.omegas, (n,) + state.joints.omegas.shape).copy()
    acts = np.broadcast_to(state.activations, (n,) + state.activations.shape).copy()
    sides = np.broadcast_to(state.wrap_sides, (n,) + state.wrap_sides.shape).copy()
    ee = np.zeros((n, t_steps, 3))
    dead = np.zeros(n, dtype=bool)

    for k in range(t_steps):
        out = step_arrays(cm, quats, omegas, acts, sides, schedules[:, k, :], dt)
        bad = ~np.isfinite(out["quats"]).all(axis=(-1, -2))
        bad |= ~np.isfinite(out["omegas"]).all(axis=(-1, -2))
        newly_dead = bad & ~dead
        dead |= bad
        alive = ~dead
        if np.any(alive):
            quats[alive] = out["quats"][alive]
            omegas[alive] = out["omegas"][alive]
            acts[alive] = out["activations"][alive]
            sides[alive] = out["sides"][alive]
        if np.any(newly_dead):
            ee[newly_dead, k:, :] = np.nan
        if np.all(dead):
            break
        r, t = cm.body_poses(quats)
        ee[:, k, :] = cm.one_site_position(r, t, ee_site)
        ee[dead, k, :] = np.nan
    return ee, dead


def plan(model, state, target, prev_plan, config=None, weights=None, rng=None):
    """One predictive-sampling planning step.

    prev_plan: (K, M) knots of the previous plan or None. rng: a seeded
    numpy Generator; pass the same generator across calls for a
    deterministic session (a fresh one seeded from config is made
    otherwise). Raises PlanningError if every candidate diverges.
    """
    cm = model.compiled
    if config is None or weights is None:
        c0, w0 = config_from_model(model)
        config = config or c0
        weights = weights or w0
    if rng is None:
        rng = np.random.default_rng(config.seed)
    target = np.asarray(target, dtype=float).reshape(3)
    m = cm.n_muscles
    k = config.knots

    shifted = (
        shift_plan(prev_plan, config) if prev_plan is not None else np.zeros((k, m))
    )
    n = config.samples
    candidates = np.empty((n, k, m))
    candidates[0] = shifted
    if n > 1:
        candidates[1] = 0.0
    if n > 2:
        noise = rng.normal(0.0, config.noise_sigma, size=(n - 2, k, m))
        candidates[2:] = np.clip(shifted + noise, 0.0, 1.0)

    if model.controller is None:
        raise ValueError("model has no controller block naming an end effector")
    t_steps = config.n_plan_steps
    schedules = knots_to_schedule(candidates, t_steps, config.horizon, config.plan_dt)
    ee_site = model.site_index[model.controller.end_effector]
    ee, dead = _rollout(cm, state, schedules, config.plan_dt, ee_site)

    costs = np.full(n, np.inf)
    r1_all = np.linalg.norm(target - ee, axis=-1)
    r2_all = np.einsum("ntm,ntm->nt", schedules, schedules)
    alive = ~dead
    if np.any(alive):
        costs[alive] = np.sum(
            (weights.position * r1_all[alive] + weights.effort * r2_all[alive]) * config.plan_dt,
            axis=-1,
        )
    if not np.any(np.isfinite(costs)):
        raise PlanningError("every rollout candidate went non-finite")

    best = int(np.argmin(costs))
    return PlanResult(
        knots=candidates[best].copy(),
        cost=float(costs[best]),
        position_errors=r1_all[best].copy(),
        efforts=r2_all[best].copy(),
        candidate_index=best,
    )


class ControlSession:
    """Replanning loop state: current plan, seeded sampler and step logs.

    Drives the true simulation at `dt` while replanning every
    `config.replan_interval` seconds of simulated time. The same session
    object serves offline experiment runs and the interactive service.
    """

    def __init__(self, model, state=None, target=None, config=None, weights=None,
                 dt=DEFAULT_DT, record=True):
        if model.controller is None:
            raise ValueError("model has no controller block naming an end effector")
        c0, w0 = config_from_model(model)
        self.model = model
        self.cm = model.compiled
        self.config = config or c0
        self.weights = weights or w0
        self.dt = dt
        if self.config.replan_interval < dt:
            raise ValueError("replan interval must be at least one simulation step")
        self.state = state.copy() if state is not None else SimState.initial(model)
        self.rng = np.random.default_rng(self.config.seed)
        self.plan_result = None
        self.record = record
        self._ee_idx = model.site_index[model.controller.end_effector]
        if target is None:
            r, t = self.cm.body_poses(self.state.joints.quats)
            target = self.cm.site_positions(r, t)[self._ee_idx]
        self.target = np.asarray(target, dtype=float).reshape(3).copy()
        self._steps_per_cycle = max(1, int(round(self.config.replan_interval / dt)))
        self._logs = {key: [] for key in (
            "time", "quats", "omegas", "acts", "u", "tension", "ratio", "lig", "ee"
        )}

    def set_target(self, position):
        self.target = np.asarray(position, dtype=float).reshape(3).copy()

    def end_effector_position(self, state=None):
        s = state or self.state
        r, t = self.cm.body_poses(s.joints.quats)
        return self.cm.site_positions(r, t)[self._ee_idx]

    def replan(self):
        prev = self.plan_result.knots if self.plan_result is not None else None
        self.plan_result = plan(
            self.model, self.state, self.target, prev,
            config=self.config, weights=self.weights, rng=self.rng,
        )
        return self.plan_result

    @property
    def cycle_duration(self):
        """Simulated seconds covered by one run_cycle call."""
        return self._steps_per_cycle * self.dt

    def run_cycle(self):
        """One replan followed by one replan interval of fine simulation."""
        self.replan()
        knots = self.plan_result.knots
        for i in range(self._steps_per_cycle):
            offset = i * self.dt
            u = knots_to_schedule(
                knots, 1, self.config.horizon, self.dt, offset=offset
            )[0]
            self.state, report = step(self.model, self.state, u, self.dt)
            if self.record:
                self._record(u, report)
        return self.state

    def advance(self, duration):
        """Simulate `duration` seconds (whole replan cycles)."""
        cycles = max(1, int(round(duration / (self._steps_per_cycle * self.dt))))
        for _ in range(cycles):
            self.run_cycle()
        return self.state

    def _record(self, u, report):
        s = self.state
        logs = self._logs
        logs["time"].append(s.time)
        logs["quats"].append(s.joints.quats.copy())
        logs["omegas"].append(s.joints.omegas.copy())
        logs["acts"].append(s.activations.copy())
        logs["u"].append(np.asarray(u, dtype=float).copy())
        logs["tension"].append(report.muscle_tensions)
        logs["ratio"].append(report.muscle_ratios)
        logs["lig"].append(report.ligament_tensions)
        logs["ee"].append(self.end_effector_position())

    def trajectory(self):
        """Everything recorded so far as a Trajectory."""
        logs = self._logs
        return Trajectory(
            times=np.array(logs["time"]),
            quats=np.array(logs["quats"]),
            omegas=np.array(logs["omegas"]),
            activations=np.array(logs["acts"]),
            controls=np.array(logs["u"]),
            muscle_tensions=np.array(logs["tension"]),
            muscle_ratios=np.array(logs["ratio"]),
            ligament_tensions=np.array(logs["lig"]),
            ee_positions=np.array(logs["ee"]),
            joint_names=self.model.joint_names,
            muscle_names=tuple(m.name for m in self.model.muscles),
            ligament_names=tuple(l.name for l in self.model.ligaments),
        )


def control_loop(model, state, target, duration, config=None, weights=None, dt=DEFAULT_DT):
    """Run the replanning controller for `duration` seconds.

    target: a fixed (3,) position or a callable (time) -> (3,) evaluated at
    every replan tick. Returns (final_state, Trajectory).
    """
    session = ControlSession(
        model, state=state,
        target=target(0.0) if callable(target) else target,
        config=config, weights=weights, dt=dt,
    )
    moving = callable(target)
    elapsed = 0.0
    cycle = session._steps_per_cycle * dt
    while elapsed < duration - 1e-12:
        if moving:
            session.set_target(target(session.state.time))
        session.run_cycle()
        elapsed += cycle
    return session.state, session.trajectory()
