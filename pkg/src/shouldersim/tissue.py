"""Force laws for the elastic and contractile wires.

Muscles follow a Hill-type law: an activation-scaled force-length and
force-velocity product plus a passive elastic term, all normalized by the
muscle's maximum isometric force. Ligaments are one-sided springs with
damping that only resists further stretch. Both act along routed wire
paths, so tension is always nonnegative and a slack wire produces nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Hill curve constants (dimensionless except where noted)
FL_WIDTH = 4.0            # parabola steepness of the active force-length curve
FV_MAX = 1.4              # eccentric force ceiling
VEL_SCALE = 10.0          # lengthening rate that saturates f_v, in optimal lengths per second
PASSIVE_GAIN = 5.2        # passive stiffness beyond optimal length
PASSIVE_CAP = 1.3         # passive force ceiling as a fraction of f_max
ACTIVATION_TAU = 0.04     # first-order activation time constant, s

# specific-tension style constant mapping effective cross-section to force
DEFAULT_FORCE_PER_AREA = 59.0


@dataclass(frozen=True)
class WirePath:
    """An ordered chain of model sites with optional per-segment wrapping.

    `wraps` holds one entry per segment (len(sites) - 1): either None for a
    straight segment or the name of a wrap geometry the segment may bend
    around.
    """

    sites: tuple[str, ...]
    wraps: tuple[str | None, ...] = ()

    def __post_init__(self):
        if len(self.sites) < 2:
            raise ValueError("a wire needs at least two sites")
        wraps = self.wraps if self.wraps else (None,) * (len(self.sites) - 1)
        if len(wraps) != len(self.sites) - 1:
            raise ValueError("wraps must list one entry per wire segment")
        object.__setattr__(self, "wraps", tuple(wraps))


@dataclass(frozen=True)
class LigamentElement:
    """One-sided elastic wire: taut beyond rest length, slack below it."""

    name: str
    path: WirePath
    rest_length: float
    stiffness: float          # N/m while stretched
    damping: float = 0.0      # N.s/m, resists lengthening only

    def __post_init__(self):
        if self.rest_length <= 0.0 or self.stiffness < 0.0 or self.damping < 0.0:
            raise ValueError(f"ligament {self.name}: nonpositive rest length or negative coefficients")


@dataclass(frozen=True)
class MuscleElement:
    """Hill-type contractile wire."""

    name: str
    path: WirePath
    f_max: float              # maximum isometric force, N
    optimal_length: float     # wire length at which active force peaks, m
    pennation: float = 0.0    # fiber angle relative to the wire line, rad
    activation_tau: float = ACTIVATION_TAU

    def __post_init__(self):
        if self.f_max <= 0.0 or self.optimal_length <= 0.0:
            raise ValueError(f"muscle {self.name}: f_max and optimal_length must be positive")
        if not 0.0 <= self.pennation < np.pi / 2.0:
            raise ValueError(f"muscle {self.name}: pennation must lie in [0, pi/2)")


def force_length(norm_length):
    """Active force-length curve, peaking at 1 for norm_length 1.

    Parabolic with zeros at 0.5 and 1.5 optimal lengths, clamped at zero
    outside that range.
    """
    x = np.asarray(norm_length, dtype=float)
    return np.maximum(0.0, 1.0 - FL_WIDTH * (x - 1.0) ** 2)


def force_velocity(norm_rate):
    """Force-velocity scaling: shortening reduces force, lengthening boosts it.

    norm_rate is the lengthening rate in optimal lengths per second divided
    by VEL_SCALE, so -1 is maximal shortening and the eccentric side clamps
    at FV_MAX.
    """
    v = np.asarray(norm_rate, dtype=float)
    return np.clip(1.0 + v, 0.0, FV_MAX)


def passive_force(norm_length):
    """Parallel elastic force, zero at or below optimal length, capped above."""
    x = np.asarray(norm_length, dtype=float)
    stretch = np.maximum(0.0, x - 1.0)
    return np.minimum(PASSIVE_GAIN * stretch**2, PASSIVE_CAP)


def passive_energy(norm_length):
    """Integral of passive_force over normalized length from 1 upward.

    Multiply by f_max * optimal_length to get joules.
    """
    x = np.asarray(norm_length, dtype=float)
    s_cap = np.sqrt(PASSIVE_CAP / PASSIVE_GAIN)
    stretch = np.maximum(0.0, x - 1.0)
    s = np.minimum(stretch, s_cap)
    return PASSIVE_GAIN * s**3 / 3.0 + PASSIVE_CAP * np.maximum(0.0, stretch - s_cap)


def muscle_tension(muscle, length, lengthening_rate, activation):
    """Wire tension of a Hill-type muscle in newtons.

    At activation 1, optimal length and zero rate this returns exactly
    f_max. Tension never goes negative: a muscle can only pull.
    """
    x = np.asarray(length, dtype=float) / muscle.optimal_length
    v = np.asarray(lengthening_rate, dtype=float) / (muscle.optimal_length * VEL_SCALE)
    a = np.clip(np.asarray(activation, dtype=float), 0.0, 1.0)
    active = a * force_length(x) * force_velocity(v)
    return muscle.f_max * np.maximum(0.0, active + passive_force(x))


def ligament_tension(ligament, length, lengthening_rate):
    """Wire tension of a one-sided elastic ligament in newtons.

    Zero at or below rest length. While stretched, a linear spring plus
    damping that only opposes further lengthening; the total is clamped at
    zero so damping can never push.
    """
    stretch = np.asarray(length, dtype=float) - ligament.rest_length
    rate = np.asarray(lengthening_rate, dtype=float)
    taut = stretch > 0.0
    tension = ligament.stiffness * np.maximum(stretch, 0.0) + ligament.damping * np.maximum(rate, 0.0)
    return np.where(taut, np.maximum(tension, 0.0), 0.0)


def ligament_energy(ligament, length):
    """Elastic energy stored in a stretched ligament, joules."""
    stretch = np.maximum(0.0, np.asarray(length, dtype=float) - ligament.rest_length)
    return 0.5 * ligament.stiffness * stretch**2


def activation_step(activation, excitation, dt, tau=ACTIVATION_TAU):
    """First-order activation dynamics, clamped to [0, 1].

    da/dt = (u - a) / tau, integrated explicitly over dt.
    """
    a = np.asarray(activation, dtype=float)
    u = np.clip(np.asarray(excitation, dtype=float), 0.0, 1.0)
    return np.clip(a + dt * (u - a) / tau, 0.0, 1.0)


# ---------------------------------------------------------------------------
# maximum-force estimation from morphology


@dataclass(frozen=True)
class MaxForceInputs:
    """Morphological inputs for estimating a muscle's maximum force.

    Provide either the tissue volume directly or a mass plus density from
    which volume follows. Fiber length is the muscle's working length and
    pennation the fiber angle against the line of action.
    """

    fiber_length: float                 # m
    pennation: float = 0.0              # rad
    volume: float | None = None         # m^3
    mass: float | None = None           # kg
    density: float = 1056.0             # kg/m^3, skeletal muscle
    force_per_area: float = DEFAULT_FORCE_PER_AREA

    def resolved_volume(self):
        if self.volume is not None:
            return self.volume
        if self.mass is not None:
            return self.mass / self.density
        raise ValueError("need either volume or mass to estimate force")


def physiological_cross_section(inputs):
    """Effective cross-sectional area: volume over fiber length, projected
    onto the line of action by the pennation angle."""
    if inputs.fiber_length <= 0.0:
        raise ValueError("fiber length must be positive")
    return inputs.resolved_volume() / inputs.fiber_length * np.cos(inputs.pennation)


def estimate_max_force(inputs):
    """Maximum isometric force from morphology: force_per_area times the
    physiological cross-section."""
    return inputs.force_per_area * physiological_cross_section(inputs)


def average_max_forces(forces):
    """Replace every entry with the arithmetic mean, preserving the total.

    Returns a new array of the same length where each element equals
    sum(forces) / len(forces).
    """
    forces = np.asarray(forces, dtype=float)
    if forces.ndim != 1 or len(forces) == 0:
        raise ValueError("expected a nonempty 1D array of forces")
    return np.full_like(forces, forces.sum() / len(forces))


# ---------------------------------------------------------------------------
# mesh volume for morphology pipelines


def mesh_volume(vertices, faces):
    """Volume enclosed by a closed, consistently oriented triangle mesh.

    Uses the divergence theorem: the sum of signed tetrahedron volumes
    spanned by each face and the origin. Raises ValueError if any edge is
    not shared by exactly two faces with opposite direction, which catches
    open or inconsistently wound meshes.
    """
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces, dtype=int)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise ValueError("vertices must be an (n, 3) array")
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise ValueError("faces must be an (m, 3) index array")

    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    directed = {}
    for i, j in edges:
        key = (int(i), int(j))
        directed[key] = directed.get(key, 0) + 1
    for (i, j), count in directed.items():
        if count != 1 or directed.get((j, i), 0) != 1:
            raise ValueError(f"mesh is not closed and consistently oriented near edge {(i, j)}")

    v0 = vertices[faces[:, 0]]
    v1 = vertices[faces[:, 1]]
    v2 = vertices[faces[:, 2]]
    signed = np.einsum("ij,ij->i", v0, np.cross(v1, v2)) / 6.0
    return float(abs(signed.sum()))
