"""Scripted shoulder experiments: range of motion, ligament ablation and
load distribution across muscles.

Each scenario drives the replanning controller through a target schedule,
waits for the posture to stabilize where the protocol calls for it, and
reduces the recorded trajectories to a few headline numbers. `export`
writes the recordings as CSV plus a plain-text summary.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dynamics import DEFAULT_DT, Trajectory
from .model import MusculoskeletalModel
from .mpc import ControlSession, CostWeights, PlannerConfig
from .tissue import average_max_forces

# settling: the end effector must stay below this speed for the hold time;
# samples still moving after the timeout are flagged and excluded
SETTLE_SPEED = 0.01
SETTLE_HOLD = 0.2
SETTLE_TIMEOUT = 3.0

# horizontal unit vectors of the three raise directions (x anterior, y to
# the left for the default left shoulder)
DIRECTIONS = {
    "forward": np.array([1.0, 0.0, 0.0]),
    "lateral": np.array([0.0, 1.0, 0.0]),
    "backward": np.array([-1.0, 0.0, 0.0]),
}

# offline scenario planner: lighter than the interactive defaults so a full
# multi-trial scenario stays inside its runtime budget
SCENARIO_PLANNER = PlannerConfig(
    horizon=0.4,
    knots=5,
    samples=32,
    noise_sigma=0.1,
    replan_interval=0.04,
    plan_dt=0.004,
    seed=0,
)

# scenario cost weights: reaching dominates, with just enough effort
# penalty to stop full-force chattering once the target is held
SCENARIO_WEIGHTS = CostWeights(position=10.0, effort=0.02)


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run: scenario name plus its knobs."""

    scenario: str
    trials: int = 1
    seed: int = 0
    raise_duration: float = 1.0
    direction: str = "lateral"
    force_mode: str = "estimated"

    def __post_init__(self):
        if self.scenario not in ("rom", "ablation", "force_distribution"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.raise_duration <= 0.0:
            raise ValueError("raise_duration must be positive")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.force_mode not in ("estimated", "averaged"):
            raise ValueError(f"unknown force_mode {self.force_mode!r}")


# -- model variants ----------------------------------------------------------


def without_ligaments(model):
    """Same model with every ligament's stiffness and damping zeroed."""
    ligaments = tuple(
        replace(l, stiffness=0.0, damping=0.0) for l in model.ligaments
    )
    return MusculoskeletalModel(
        model.name, model.bodies, model.sites, model.wrap_geoms,
        ligaments, model.muscles, gravity=model.gravity,
        joint_damping=model.joint_damping, controller=model.controller,
    )


def with_averaged_forces(model):
    """Same model with every muscle's maximum force set to the common mean."""
    averaged = average_max_forces([m.f_max for m in model.muscles])
    muscles = tuple(
        replace(m, f_max=float(f)) for m, f in zip(model.muscles, averaged)
    )
    return MusculoskeletalModel(
        model.name, model.bodies, model.sites, model.wrap_geoms,
        model.ligaments, muscles, gravity=model.gravity,
        joint_damping=model.joint_damping, controller=model.controller,
    )


# -- shared machinery --------------------------------------------------------


def _advance_until_settled(session, timeout=SETTLE_TIMEOUT):
    """Run whole replan cycles until the end effector stays slow.

    Settled means speed below SETTLE_SPEED for SETTLE_HOLD consecutive
    seconds. Returns True when that happened within `timeout` simulated
    seconds, False otherwise.
    """
    cycle = session.cycle_duration
    quiet = 0.0
    elapsed = 0.0
    prev = session.end_effector_position()
    while elapsed < timeout:
        session.run_cycle()
        elapsed += cycle
        cur = session.end_effector_position()
        speed = np.linalg.norm(cur - prev) / cycle
        prev = cur
        quiet = quiet + cycle if speed < SETTLE_SPEED else 0.0
        if quiet >= SETTLE_HOLD:
            return True
    return False


def _ramp_target(session, arc, duration):
    """Move the session target along `arc` (a callable s in [0,1] -> xyz)
    over `duration` simulated seconds, one replan cycle at a time."""
    cycle = session.cycle_duration
    n = max(1, int(round(duration / cycle)))
    for i in range(1, n + 1):
        session.set_target(arc(i / n))
        session.run_cycle()


def _elevation_arc(center, radius, direction, start_deg, end_deg):
    """Target path on the vertical semicircle around `center` that tilts
    from straight-down toward the horizontal `direction`."""
    d = DIRECTIONS[direction]

    def arc(s):
        th = np.radians(start_deg + (end_deg - start_deg) * s)
        return center + radius * (np.sin(th) * d - np.cos(th) * np.array([0.0, 0.0, 1.0]))

    return arc


def _humerus_elevation_deg(session, direction):
    """Angle of the shoulder-to-elbow line away from straight down,
    measured in the raise plane, using the current shoulder position."""
    cm = session.cm
    hum = session.model.body_index["humerus"]
    _, t = cm.body_poses(session.state.joints.quats)
    u = session.end_effector_position() - t[hum]
    d = DIRECTIONS[direction]
    angle = np.degrees(np.arctan2(u @ d, -u[2]))
    # past vertical the plane angle wraps negative; report it as > 180
    return float(angle + 360.0) if angle < -90.0 else float(angle)


def _session(model, planner, weights, seed=None, dt=DEFAULT_DT):
    config = planner if planner is not None else SCENARIO_PLANNER
    if seed is not None:
        config = replace(config, seed=seed)
    if weights is None:
        weights = SCENARIO_WEIGHTS
    return ControlSession(model, config=config, weights=weights, dt=dt)


# -- range of motion ---------------------------------------------------------


@dataclass(frozen=True)
class RomSample:
    target_deg: float
    achieved_deg: float
    settled: bool


@dataclass
class RomResult:
    direction: str
    max_elevation_deg: float
    samples: list
    trajectory: Trajectory

    def summary_lines(self):
        settled = sum(1 for s in self.samples if s.settled)
        return [
            f"rom[{self.direction}] max elevation: {self.max_elevation_deg:.1f} deg",
            f"rom[{self.direction}] settled samples: {settled}/{len(self.samples)}",
        ]


def run_rom(model, direction, weights=None, planner=None, step_deg=20.0,
            dt=DEFAULT_DT, settle_timeout=SETTLE_TIMEOUT):
    """Sweep the target up a vertical semicircle and report how far the
    humerus rises.

    The target climbs in `step_deg` increments; after each step the
    controller gets up to `settle_timeout` simulated seconds to stabilize.
    Samples that never settle are flagged and excluded from the maximum.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    if planner is None:
        # this sweep runs on the model's own controller defaults
        planner = _model_planner(model)
    if weights is None:
        weights = SCENARIO_WEIGHTS
    session = ControlSession(model, config=planner, weights=weights, dt=dt)
    cm = session.cm
    hum = model.body_index["humerus"]
    _, t = cm.body_poses(session.state.joints.quats)
    shoulder = t[hum].copy()
    radius = float(np.linalg.norm(session.end_effector_position() - shoulder))

    # let the resting posture quiet down before sweeping
    _advance_until_settled(session, timeout=1.5)

    samples = []
    best = _humerus_elevation_deg(session, direction)
    arc = _elevation_arc(shoulder, radius, direction, 0.0, 180.0)
    for target_deg in np.arange(step_deg, 180.0 + 0.5 * step_deg, step_deg):
        session.set_target(arc(target_deg / 180.0))
        settled = _advance_until_settled(session, timeout=settle_timeout)
        achieved = _humerus_elevation_deg(session, direction)
        samples.append(RomSample(float(target_deg), achieved, settled))
        if settled:
            best = max(best, achieved)
    return RomResult(direction, best, samples, session.trajectory())


def _model_planner(model):
    from .mpc import config_from_model

    config, _ = config_from_model(model)
    return config


# -- ligament ablation -------------------------------------------------------


@dataclass(frozen=True)
class GirdleMetrics:
    scap_spine_distance: float
    oscillation_index: float
    settled: bool


@dataclass
class AblationTrial:
    seed: int
    intact: GirdleMetrics
    ablated: GirdleMetrics


@dataclass
class AblationResult:
    trials: list
    trajectories: dict

    def agreement(self):
        """(distance sign agreements, oscillation sign agreements)."""
        closer = sum(
            1 for t in self.trials
            if t.ablated.scap_spine_distance < t.intact.scap_spine_distance
        )
        rougher = sum(
            1 for t in self.trials
            if t.ablated.oscillation_index > t.intact.oscillation_index
        )
        return closer, rougher

    def summary_lines(self):
        closer, rougher = self.agreement()
        n = len(self.trials)
        lines = [
            f"ablation scapula closer to spine without ligaments: {closer}/{n}",
            f"ablation more oscillatory without ligaments: {rougher}/{n}",
        ]
        for t in self.trials:
            lines.append(
                f"ablation seed {t.seed}: distance {t.intact.scap_spine_distance:.4f}"
                f" -> {t.ablated.scap_spine_distance:.4f} m,"
                f" oscillation {t.intact.oscillation_index:.2f}"
                f" -> {t.ablated.oscillation_index:.2f} rad/s^2"
            )
        return lines


def _scap_spine_distance(session):
    """Horizontal distance from the scapula's medial border to the spine
    axis (the vertical line through the spine segment)."""
    cm = session.cm
    model = session.model
    R, t = cm.body_poses(session.state.joints.quats)
    scap = cm.one_site_position(R, t, model.site_index["scap_medial"])
    spine = t[model.body_index["spine"]]
    return float(np.hypot(scap[0] - spine[0], scap[1] - spine[1]))


def _oscillation_index(trajectory, t0, t1):
    """Mean absolute finite-difference angular acceleration of the clavicle
    and scapula Euler angles inside the window [t0, t1]."""
    times = trajectory.times
    mask = (times >= t0) & (times <= t1)
    angles = trajectory.euler_angles()[mask][:, :2, :]
    if len(angles) < 3:
        return 0.0
    dt = trajectory.dt
    acc = np.diff(angles, n=2, axis=0) / dt**2
    return float(np.mean(np.abs(acc)))


def _raise_and_measure(model, seed, weights, planner, raise_duration, dt,
                       end_deg=90.0):
    """One lateral raise; returns (GirdleMetrics, Trajectory)."""
    session = _session(model, planner, weights, seed=seed, dt=dt)
    hum = model.body_index["humerus"]
    _, t = session.cm.body_poses(session.state.joints.quats)
    shoulder = t[hum].copy()
    radius = float(np.linalg.norm(session.end_effector_position() - shoulder))
    start = _humerus_elevation_deg(session, "lateral")

    _advance_until_settled(session, timeout=1.0)
    t0 = session.state.time
    arc = _elevation_arc(shoulder, radius, "lateral", start, end_deg)
    _ramp_target(session, arc, raise_duration)
    t1 = session.state.time
    settled = _advance_until_settled(session)

    trajectory = session.trajectory()
    metrics = GirdleMetrics(
        scap_spine_distance=_scap_spine_distance(session),
        oscillation_index=_oscillation_index(trajectory, t0, t1),
        settled=settled,
    )
    return metrics, trajectory


def run_ablation(model, weights=None, planner=None, seeds=(0, 1, 2),
                 raise_duration=1.0, dt=DEFAULT_DT):
    """Raise the arm with and without ligaments and compare the girdle.

    For every seed the same raise runs twice: on the given model and on a
    copy whose ligaments produce no force. Reported per run: horizontal
    scapula-to-spine distance after settling, and the oscillation index
    (mean |angular acceleration| of clavicle + scapula angles) during the
    raise itself.
    """
    bare = without_ligaments(model)
    trials = []
    trajectories = {}
    for seed in seeds:
        intact, traj_a = _raise_and_measure(
            model, seed, weights, planner, raise_duration, dt)
        ablated, traj_b = _raise_and_measure(
            bare, seed, weights, planner, raise_duration, dt)
        trials.append(AblationTrial(seed, intact, ablated))
        trajectories[f"seed{seed}_with_ligaments"] = traj_a
        trajectories[f"seed{seed}_without_ligaments"] = traj_b
    return AblationResult(trials, trajectories)


# -- force distribution ------------------------------------------------------


@dataclass
class TrialStats:
    """Aggregated tension-ratio statistics over repeated raises."""

    mode: str
    times: np.ndarray          # (T,)
    ratio_mean: np.ndarray     # (T, M)
    ratio_std: np.ndarray      # (T, M)
    angles: np.ndarray         # (T, J, 3) mean unwrapped Euler angles
    scap_spine: np.ndarray     # (T,) mean distance series
    muscle_names: tuple
    joint_names: tuple
    flagged: list              # trial indices that never settled
    trajectories: list = field(default_factory=list)

    def max_ratio(self, muscle=None):
        """Largest mean tension ratio over time, for one muscle or all."""
        if muscle is None:
            return float(self.ratio_mean.max())
        idx = self.muscle_names.index(muscle)
        return float(self.ratio_mean[:, idx].max())

    def summary_lines(self):
        lines = [
            f"force_distribution[{self.mode}] global max mean ratio: "
            f"{self.max_ratio():.3f}",
            f"force_distribution[{self.mode}] flagged trials: "
            f"{sorted(self.flagged)}",
        ]
        order = np.argsort(self.ratio_mean.max(axis=0))[::-1]
        for idx in order[:5]:
            lines.append(
                f"force_distribution[{self.mode}] {self.muscle_names[idx]}: "
                f"max mean ratio {self.ratio_mean[:, idx].max():.3f}"
            )
        return lines


def _spine_distance_series(model, trajectory):
    """Scapula-to-spine horizontal distance for every recorded sample."""
    cm = model.compiled
    R, t = cm.body_poses(trajectory.quats)
    scap = cm.one_site_position(R, t, model.site_index["scap_medial"])
    spine = t[..., model.body_index["spine"], :]
    return np.hypot(scap[..., 0] - spine[..., 0], scap[..., 1] - spine[..., 1])


def run_force_distribution(model, mode="estimated", trials=8, seed=0,
                           weights=None, planner=None, raise_duration=1.0,
                           dt=DEFAULT_DT, end_deg=170.0):
    """Repeat a seeded one-second raise and aggregate the tension ratios.

    mode "estimated" keeps the model's per-muscle maximum forces;
    "averaged" runs the variant where every muscle gets the common mean.
    Trial k draws its planner noise from seed + k. The statistics cover
    the raise window, which is the same length for every trial; trials
    whose posture never settles afterwards are flagged and excluded.
    """
    if mode not in ("estimated", "averaged"):
        raise ValueError(f"unknown force mode {mode!r}")
    work = model if mode == "estimated" else with_averaged_forces(model)

    per_trial_ratio = []
    per_trial_angles = []
    per_trial_spine = []
    flagged = []
    kept_trajectories = []
    n_steps = None
    for k in range(trials):
        session = _session(work, planner, weights, seed=seed + k, dt=dt)
        hum = work.body_index["humerus"]
        _, t = session.cm.body_poses(session.state.joints.quats)
        shoulder = t[hum].copy()
        radius = float(np.linalg.norm(session.end_effector_position() - shoulder))
        start = _humerus_elevation_deg(session, "lateral")

        t0 = session.state.time
        arc = _elevation_arc(shoulder, radius, "lateral", start, end_deg)
        _ramp_target(session, arc, raise_duration)
        settled = _advance_until_settled(session)
        trajectory = session.trajectory()

        window = trajectory.times <= t0 + raise_duration + 1e-9
        if not settled:
            flagged.append(k)
            continue
        if n_steps is None:
            n_steps = int(window.sum())
        per_trial_ratio.append(trajectory.muscle_ratios[window][:n_steps])
        per_trial_angles.append(trajectory.euler_angles()[window][:n_steps])
        per_trial_spine.append(
            _spine_distance_series(work, trajectory)[window][:n_steps])
        kept_trajectories.append(trajectory)

    if not per_trial_ratio:
        raise RuntimeError("every trial was flagged as non-settling")

    ratio = np.stack(per_trial_ratio)
    angles = np.stack(per_trial_angles)
    spine = np.stack(per_trial_spine)
    times = kept_trajectories[0].times[:n_steps]
    return TrialStats(
        mode=mode,
        times=times,
        ratio_mean=ratio.mean(axis=0),
        ratio_std=ratio.std(axis=0),
        angles=angles.mean(axis=0),
        scap_spine=spine.mean(axis=0),
        muscle_names=tuple(m.name for m in work.muscles),
        joint_names=work.joint_names,
        flagged=flagged,
        trajectories=kept_trajectories,
    )


# -- export ------------------------------------------------------------------


def _write_summary(path, lines):
    path.write_text("".join(line + "\n" for line in lines))
    return path


def _stats_csv(stats, path):
    import csv

    header = ["time"]
    header += [f"mu_{m}" for m in stats.muscle_names]
    header += [f"sigma_{m}" for m in stats.muscle_names]
    for j in stats.joint_names:
        header += [f"{j}_yaw", f"{j}_pitch", f"{j}_roll"]
    header += ["scap_spine_distance"]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(stats.times)):
            row = [f"{stats.times[i]:.9f}"]
            row += [f"{v:.9g}" for v in stats.ratio_mean[i]]
            row += [f"{v:.9g}" for v in stats.ratio_std[i]]
            row += [f"{v:.9g}" for v in stats.angles[i].ravel()]
            row.append(f"{stats.scap_spine[i]:.9g}")
            writer.writerow(row)
    return path


def export(result, out_dir):
    """Write a scenario result (or a bare Trajectory) under `out_dir`.

    Produces one CSV per recorded trajectory in the simulator's export
    schema, a stats CSV for aggregated runs, and summary.txt with the
    scenario's headline metrics. Returns the list of written paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    if isinstance(result, Trajectory):
        written.append(result.to_csv(out / "trajectory.csv"))
        written.append(_write_summary(
            out / "summary.txt",
            [f"samples: {len(result)}",
             f"final time: {result.times[-1] if len(result) else 0.0:.3f} s"],
        ))
        return written

    if isinstance(result, RomResult):
        written.append(result.trajectory.to_csv(
            out / f"rom_{result.direction}.csv"))
        written.append(_write_summary(out / "summary.txt", result.summary_lines()))
        return written

    if isinstance(result, AblationResult):
        for name, trajectory in result.trajectories.items():
            written.append(trajectory.to_csv(out / f"ablation_{name}.csv"))
        written.append(_write_summary(out / "summary.txt", result.summary_lines()))
        return written

    if isinstance(result, TrialStats):
        written.append(_stats_csv(result, out / f"force_{result.mode}_stats.csv"))
        if result.trajectories:
            written.append(result.trajectories[0].to_csv(
                out / f"force_{result.mode}_trial0.csv"))
        written.append(_write_summary(out / "summary.txt", result.summary_lines()))
        return written

    raise TypeError(f"don't know how to export {type(result).__name__}")
