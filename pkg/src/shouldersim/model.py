"""Shoulder model types, file loading and validation.

A model is a short chain of rigid bodies: a fixed thorax, then clavicle,
scapula and humerus connected by three spherical joints (sternoclavicular,
acromioclavicular, glenohumeral). Sites are named points fixed to bodies;
ligament and muscle wires run between sites, optionally bending around wrap
geometry. Models load from a YAML file and are immutable once built.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .geometry import IDENTITY_QUAT, euler_zyx, gimbal_proximity, quat_normalize
from .tissue import LigamentElement, MuscleElement, WirePath

WORLD = "world"

DEFAULT_REST_SLACK = 1.02


class ModelError(Exception):
    """Base class for model loading problems."""


class ModelParseError(ModelError):
    """The file or mapping does not match the expected schema."""


class ModelValidationError(ModelError):
    """The schema parsed but the model is inconsistent (bad references,
    broken tree, nonphysical parameters)."""


def _vec3(value, where):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelParseError(f"{where}: expected a 3-vector, got {value!r}") from None
    if arr.shape != (3,):
        raise ModelParseError(f"{where}: expected a 3-vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Site:
    """A named point rigidly attached to a body, in that body's frame."""

    name: str
    body: str
    pos: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pos", np.asarray(self.pos, dtype=float).reshape(3))


@dataclass(frozen=True)
class Body:
    """A rigid body attached to its parent at a spherical or welded joint.

    `pivot` is the joint center in the parent frame; the body frame has its
    origin at that pivot. `inertia` is the diagonal of the inertia tensor
    about the center of mass in the body frame.
    """

    name: str
    parent: str
    pivot: np.ndarray
    mass: float
    com: np.ndarray
    inertia: np.ndarray
    movable: bool = True

    def __post_init__(self):
        object.__setattr__(self, "pivot", np.asarray(self.pivot, dtype=float).reshape(3))
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float).reshape(3))
        object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=float).reshape(3))
        if self.mass <= 0.0:
            raise ModelValidationError(f"body {self.name}: mass must be positive")
        ix, iy, iz = self.inertia
        if min(ix, iy, iz) <= 0.0:
            raise ModelValidationError(f"body {self.name}: inertia diagonal must be positive")
        if ix > iy + iz or iy > ix + iz or iz > ix + iy:
            raise ModelValidationError(
                f"body {self.name}: inertia diagonal violates the triangle inequality"
            )


@dataclass(frozen=True)
class WrapGeom:
    """Obstacle a wire segment may bend around: a cylinder about `axis` or
    a sphere (axis ignored), attached to `body`.

    half_length bounds the cylinder for rendering and sanity checks; the
    wrap construction itself treats the cylinder as infinite, which is
    exact as long as wires cross well inside the bounded extent.
    """

    name: str
    kind: str
    body: str
    pos: np.ndarray
    radius: float
    axis: np.ndarray | None = None
    half_length: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "pos", np.asarray(self.pos, dtype=float).reshape(3))
        if self.kind not in ("cylinder", "sphere"):
            raise ModelValidationError(f"wrap {self.name}: kind must be cylinder or sphere")
        if self.radius <= 0.0:
            raise ModelValidationError(f"wrap {self.name}: radius must be positive")
        if self.kind == "cylinder":
            if self.axis is None:
                raise ModelValidationError(f"wrap {self.name}: cylinder needs an axis")
            if self.half_length <= 0.0:
                raise ModelValidationError(f"wrap {self.name}: half_length must be positive")
            axis = np.asarray(self.axis, dtype=float).reshape(3)
            norm = np.linalg.norm(axis)
            if norm < 1e-12:
                raise ModelValidationError(f"wrap {self.name}: axis must be nonzero")
            object.__setattr__(self, "axis", axis / norm)
        else:
            object.__setattr__(self, "axis", None)


@dataclass(frozen=True)
class ControllerDefaults:
    """Planner settings shipped with the model file."""

    end_effector: str
    horizon: float = 0.5
    knots: int = 5
    samples: int = 64
    noise_sigma: float = 0.1
    replan_interval: float = 0.02
    plan_dt: float = 0.0025
    seed: int = 0
    w_position: float = 10.0
    w_effort: float = 0.1


class JointState:
    """Orientation and body-frame angular velocity of every movable joint.

    quats: (J, 4) unit quaternions (w, x, y, z), child relative to parent.
    omegas: (J, 3) angular velocities in the child body frame, rad/s.
    """

    __slots__ = ("quats", "omegas")

    def __init__(self, quats, omegas):
        quats = np.array(quats, dtype=float)
        omegas = np.array(omegas, dtype=float)
        if quats.ndim != 2 or quats.shape[1] != 4:
            raise ValueError("quats must have shape (J, 4)")
        if omegas.shape != (quats.shape[0], 3):
            raise ValueError("omegas must have shape (J, 3)")
        norms = np.linalg.norm(quats, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("joint quaternions must be unit length")
        self.quats = quat_normalize(quats)
        self.omegas = omegas

    @classmethod
    def neutral(cls, n_joints):
        return cls(np.tile(IDENTITY_QUAT, (n_joints, 1)), np.zeros((n_joints, 3)))

    def copy(self):
        return JointState(self.quats.copy(), self.omegas.copy())

    def __repr__(self):
        return f"JointState(n_joints={len(self.quats)})"


class MusculoskeletalModel:
    """Immutable description of one (or two mirrored) shoulder chains.

    Construction validates the body tree, all site and wrap references and
    the joint count: each shoulder contributes exactly three movable joints.
    """

    def __init__(self, name, bodies, sites, wrap_geoms, ligaments, muscles,
                 gravity=(0.0, 0.0, -9.81), joint_damping=0.5,
                 controller=None):
        self.name = str(name)
        self.bodies = tuple(bodies)
        self.sites = tuple(sites)
        self.wrap_geoms = tuple(wrap_geoms)
        self.ligaments = tuple(ligaments)
        self.muscles = tuple(muscles)
        self.gravity = np.asarray(gravity, dtype=float).reshape(3)
        self.joint_damping = float(joint_damping)
        self.controller = controller
        self._validate()
        self.body_index = {b.name: i for i, b in enumerate(self.bodies)}
        self.site_index = {s.name: i for i, s in enumerate(self.sites)}
        self.wrap_index = {w.name: i for i, w in enumerate(self.wrap_geoms)}
        self.joint_names = tuple(b.name for b in self.bodies if b.movable)
        self._compiled = None

    # -- structure ---------------------------------------------------------

    @property
    def n_joints(self):
        return len(self.joint_names)

    @property
    def wires(self):
        """All wires, ligaments first then muscles."""
        return self.ligaments + self.muscles

    @property
    def compiled(self):
        """Array-packed form used by the kinematics and dynamics engines."""
        if self._compiled is None:
            from .kinematics import CompiledModel

            self._compiled = CompiledModel(self)
        return self._compiled

    def neutral_state(self):
        return JointState.neutral(self.n_joints)

    def site(self, name):
        try:
            return self.sites[self.site_index[name]]
        except KeyError:
            raise ModelValidationError(f"unknown site {name!r}") from None

    def _validate(self):
        seen = {WORLD}
        for i, body in enumerate(self.bodies):
            if body.name in seen or body.name == WORLD:
                raise ModelValidationError(f"bodies[{i}]: duplicate body name {body.name!r}")
            if body.parent not in seen:
                raise ModelValidationError(
                    f"bodies[{i}] ({body.name}): parent {body.parent!r} is not defined "
                    "earlier in the body list, so the chain is not a rooted tree"
                )
            seen.add(body.name)

        n_movable = sum(1 for b in self.bodies if b.movable)
        if n_movable not in (3, 6):
            raise ModelValidationError(
                f"expected exactly 3 movable joints per shoulder (3 or 6 total), found {n_movable}"
            )

        site_names = set()
        body_names = {b.name for b in self.bodies}
        for i, site in enumerate(self.sites):
            if site.name in site_names:
                raise ModelValidationError(f"sites[{i}]: duplicate site name {site.name!r}")
            if site.body not in body_names:
                raise ModelValidationError(f"sites[{i}] ({site.name}): unknown body {site.body!r}")
            site_names.add(site.name)

        wrap_names = set()
        for i, wrap in enumerate(self.wrap_geoms):
            if wrap.name in wrap_names:
                raise ModelValidationError(f"wrap_geoms[{i}]: duplicate wrap name {wrap.name!r}")
            if wrap.body not in body_names:
                raise ModelValidationError(f"wrap_geoms[{i}] ({wrap.name}): unknown body {wrap.body!r}")
            wrap_names.add(wrap.name)

        for kind, elements in (("ligaments", self.ligaments), ("muscles", self.muscles)):
            names = set()
            for i, el in enumerate(elements):
                where = f"{kind}[{i}] ({el.name})"
                if el.name in names:
                    raise ModelValidationError(f"{where}: duplicate name")
                names.add(el.name)
                for s in el.path.sites:
                    if s not in site_names:
                        raise ModelValidationError(f"{where}: unknown site {s!r}")
                for a, b in zip(el.path.sites, el.path.sites[1:]):
                    if a == b:
                        raise ModelValidationError(f"{where}: consecutive sites repeat {a!r}")
                for w in el.path.wraps:
                    if w is not None and w not in wrap_names:
                        raise ModelValidationError(f"{where}: unknown wrap geometry {w!r}")


def joint_euler_angles(joint_state):
    """Intrinsic Z-Y-X (yaw, pitch, roll) angles per joint, shape (J, 3).

    Purely a reporting convenience; the state itself stays quaternion-based
    so no singularity is ever integrated through. Use gimbal_flags to check
    which joints sit near the pitch singularity where yaw and roll become
    ill conditioned.
    """
    return euler_zyx(joint_state.quats)


def gimbal_flags(joint_state):
    """Boolean (J,) array, True where a joint is near the Euler pitch
    singularity."""
    return gimbal_proximity(euler_zyx(joint_state.quats))


# ---------------------------------------------------------------------------
# file loading


def default_model_path():
    """Path of the shoulder model shipped with the package."""
    return Path(__file__).parent / "data" / "shoulder.yaml"


def load_default_model(bilateral=False):
    return load_model(default_model_path(), bilateral=bilateral)


def load_model(source, bilateral=False):
    """Build a model from a YAML file path or an equivalent mapping.

    With bilateral=True the file's single (left) shoulder is mirrored
    across the sagittal plane; mirrored bodies, sites, wraps and wires get
    a `_r` suffix.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ModelParseError(f"cannot read model file {path}: {exc}") from exc
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ModelParseError(f"model file {path} is not valid YAML: {exc}") from exc
    else:
        raw = source
    if not isinstance(raw, dict):
        raise ModelParseError("model root must be a mapping")

    model = _build_model(raw)
    if bilateral:
        model = _mirror(model)
    return model


_REQUIRED = object()


def _get(mapping, key, where, types, default=_REQUIRED):
    if key not in mapping:
        if default is not _REQUIRED:
            return default
        raise ModelParseError(f"{where}: missing required key {key!r}")
    value = mapping[key]
    if types is not None and not isinstance(value, types):
        raise ModelParseError(f"{where}.{key}: expected {types.__name__ if isinstance(types, type) else types}, got {type(value).__name__}")
    return value


def _number(mapping, key, where, default=_REQUIRED):
    value = _get(mapping, key, where, (int, float), default)
    return float(value) if value is not None else None


def _parse_wire(entry, where):
    sites = _get(entry, "sites", where, list)
    if not all(isinstance(s, str) for s in sites):
        raise ModelParseError(f"{where}.sites: expected a list of site names")
    wraps_raw = _get(entry, "wraps", where, list, default=None)
    if wraps_raw is None:
        wraps = (None,) * (len(sites) - 1)
    else:
        if len(wraps_raw) != len(sites) - 1:
            raise ModelParseError(f"{where}.wraps: need one entry per segment ({len(sites) - 1})")
        wraps = tuple(w if isinstance(w, str) or w is None else _bad_wrap(w, where) for w in wraps_raw)
    try:
        return WirePath(tuple(sites), wraps)
    except ValueError as exc:
        raise ModelParseError(f"{where}: {exc}") from None


def _bad_wrap(value, where):
    raise ModelParseError(f"{where}.wraps: entries must be wrap names or null, got {value!r}")


def _build_model(raw):
    name = raw.get("name", "shoulder")
    where = "model"

    bodies = []
    for i, entry in enumerate(_get(raw, "bodies", where, list)):
        w = f"bodies[{i}]"
        if not isinstance(entry, dict):
            raise ModelParseError(f"{w}: expected a mapping")
        joint = _get(entry, "joint", w, str, default="spherical")
        if joint not in ("spherical", "fixed"):
            raise ModelParseError(f"{w}.joint: expected 'spherical' or 'fixed', got {joint!r}")
        bodies.append(
            Body(
                name=_get(entry, "name", w, str),
                parent=_get(entry, "parent", w, str),
                pivot=_vec3(_get(entry, "pivot", w, list), f"{w}.pivot"),
                mass=_number(entry, "mass", w),
                com=_vec3(_get(entry, "com", w, list), f"{w}.com"),
                inertia=_vec3(_get(entry, "inertia", w, list), f"{w}.inertia"),
                movable=joint == "spherical",
            )
        )

    sites = []
    for i, entry in enumerate(_get(raw, "sites", where, list)):
        w = f"sites[{i}]"
        if not isinstance(entry, dict):
            raise ModelParseError(f"{w}: expected a mapping")
        sites.append(
            Site(
                name=_get(entry, "name", w, str),
                body=_get(entry, "body", w, str),
                pos=_vec3(_get(entry, "pos", w, list), f"{w}.pos"),
            )
        )

    wraps = []
    for i, entry in enumerate(_get(raw, "wrap_geoms", where, list, default=[]) or []):
        w = f"wrap_geoms[{i}]"
        if not isinstance(entry, dict):
            raise ModelParseError(f"{w}: expected a mapping")
        kind = _get(entry, "kind", w, str)
        axis = entry.get("axis")
        wraps.append(
            WrapGeom(
                name=_get(entry, "name", w, str),
                kind=kind,
                body=_get(entry, "body", w, str),
                pos=_vec3(_get(entry, "pos", w, list), f"{w}.pos"),
                radius=_number(entry, "radius", w),
                axis=_vec3(axis, f"{w}.axis") if axis is not None else None,
                half_length=_number(entry, "half_length", w, default=0.1),
            )
        )

    lig_specs = []
    for i, entry in enumerate(_get(raw, "ligaments", where, list, default=[]) or []):
        w = f"ligaments[{i}]"
        if not isinstance(entry, dict):
            raise ModelParseError(f"{w}: expected a mapping")
        lig_specs.append(
            dict(
                name=_get(entry, "name", w, str),
                path=_parse_wire(entry, w),
                stiffness=_number(entry, "stiffness", w),
                damping=_number(entry, "damping", w, default=0.0),
                rest_length=_number(entry, "rest_length", w, default=None),
                rest_slack=_number(entry, "rest_slack", w, default=DEFAULT_REST_SLACK),
                where=w,
            )
        )

    mus_specs = []
    for i, entry in enumerate(_get(raw, "muscles", where, list, default=[]) or []):
        w = f"muscles[{i}]"
        if not isinstance(entry, dict):
            raise ModelParseError(f"{w}: expected a mapping")
        mus_specs.append(
            dict(
                name=_get(entry, "name", w, str),
                path=_parse_wire(entry, w),
                f_max=_number(entry, "f_max", w),
                optimal_length=_number(entry, "optimal_length", w, default=None),
                optimal_scale=_number(entry, "optimal_scale", w, default=1.0),
                pennation=_number(entry, "pennation", w, default=0.0),
                activation_tau=_number(entry, "activation_tau", w, default=None),
                where=w,
            )
        )

    controller = None
    if "controller" in raw:
        c = raw["controller"]
        w = "controller"
        if not isinstance(c, dict):
            raise ModelParseError(f"{w}: expected a mapping")
        controller = ControllerDefaults(
            end_effector=_get(c, "end_effector", w, str),
            horizon=_number(c, "horizon", w, default=0.5),
            knots=int(_number(c, "knots", w, default=5)),
            samples=int(_number(c, "samples", w, default=64)),
            noise_sigma=_number(c, "noise_sigma", w, default=0.1),
            replan_interval=_number(c, "replan_interval", w, default=0.02),
            plan_dt=_number(c, "plan_dt", w, default=0.0025),
            seed=int(_number(c, "seed", w, default=0)),
            w_position=_number(c, "w_position", w, default=10.0),
            w_effort=_number(c, "w_effort", w, default=0.1),
        )

    gravity = raw.get("gravity", [0.0, 0.0, -9.81])
    damping = raw.get("joint_damping", 0.5)

    # first pass: placeholder lengths so the model validates and compiles,
    # then resolve the 'auto' rest and optimal lengths from the neutral pose
    ligaments = [
        LigamentElement(
            name=s["name"], path=s["path"],
            rest_length=s["rest_length"] if s["rest_length"] is not None else 1.0,
            stiffness=s["stiffness"], damping=s["damping"],
        )
        for s in lig_specs
    ]
    muscles = [
        MuscleElement(
            name=s["name"], path=s["path"],
            f_max=s["f_max"],
            optimal_length=s["optimal_length"] if s["optimal_length"] is not None else 1.0,
            pennation=s["pennation"],
            **(
                {"activation_tau": s["activation_tau"]}
                if s["activation_tau"] is not None
                else {}
            ),
        )
        for s in mus_specs
    ]

    model = MusculoskeletalModel(
        name=name, bodies=bodies, sites=sites, wrap_geoms=wraps,
        ligaments=ligaments, muscles=muscles, gravity=_vec3(gravity, "model.gravity"),
        joint_damping=float(damping), controller=controller,
    )
    if controller is not None and controller.end_effector not in model.site_index:
        raise ModelValidationError(f"controller.end_effector: unknown site {controller.end_effector!r}")

    needs_auto = any(s["rest_length"] is None for s in lig_specs) or any(
        s["optimal_length"] is None for s in mus_specs
    )
    if not needs_auto:
        return model

    neutral_lengths, _ = model.compiled.wire_lengths(model.neutral_state().quats)
    if not np.all(np.isfinite(neutral_lengths)):
        bad = [model.wires[i].name for i in np.nonzero(~np.isfinite(neutral_lengths))[0]]
        raise ModelValidationError(
            f"wires {bad} are invalid in the neutral pose (endpoint inside a wrap geometry)"
        )

    n_lig = len(ligaments)
    ligaments = [
        lig if spec["rest_length"] is not None
        else replace(lig, rest_length=float(neutral_lengths[i]) * spec["rest_slack"])
        for i, (lig, spec) in enumerate(zip(ligaments, lig_specs))
    ]
    muscles = [
        mus if spec["optimal_length"] is not None
        else replace(mus, optimal_length=float(neutral_lengths[n_lig + i]) * spec["optimal_scale"])
        for i, (mus, spec) in enumerate(zip(muscles, mus_specs))
    ]
    return MusculoskeletalModel(
        name=name, bodies=model.bodies, sites=model.sites, wrap_geoms=model.wrap_geoms,
        ligaments=ligaments, muscles=muscles, gravity=model.gravity,
        joint_damping=model.joint_damping, controller=controller,
    )


def _mirror_vec(v):
    return np.array([v[0], -v[1], v[2]])


def _mirror(model):
    """Append a right-side copy mirrored across the x-z plane."""

    def rename(n):
        return None if n is None else n + "_r"

    # world-fixed trunk bodies (thorax) are shared between the two sides
    shared = {b.name for b in model.bodies if not b.movable and b.parent == WORLD}

    bodies = list(model.bodies)
    for b in model.bodies:
        if b.name in shared:
            continue
        parent = b.parent if b.parent == WORLD or b.parent in shared else b.parent + "_r"
        bodies.append(
            Body(
                name=b.name + "_r",
                parent=parent,
                pivot=_mirror_vec(b.pivot),
                mass=b.mass,
                com=_mirror_vec(b.com),
                inertia=b.inertia.copy(),
                movable=b.movable,
            )
        )
    sites = list(model.sites)
    for s in model.sites:
        body = s.body if s.body in shared else s.body + "_r"
        sites.append(Site(name=s.name + "_r", body=body, pos=_mirror_vec(s.pos)))

    wraps = list(model.wrap_geoms)
    for w in model.wrap_geoms:
        body = w.body if w.body in shared else w.body + "_r"
        wraps.append(
            WrapGeom(
                name=w.name + "_r", kind=w.kind, body=body, pos=_mirror_vec(w.pos),
                radius=w.radius, axis=None if w.axis is None else _mirror_vec(w.axis),
                half_length=w.half_length,
            )
        )

    def mirror_path(path):
        return WirePath(
            tuple(s + "_r" for s in path.sites),
            tuple(rename(w) for w in path.wraps),
        )

    ligaments = list(model.ligaments) + [
        replace(l, name=l.name + "_r", path=mirror_path(l.path)) for l in model.ligaments
    ]
    muscles = list(model.muscles) + [
        replace(m, name=m.name + "_r", path=mirror_path(m.path)) for m in model.muscles
    ]

    return MusculoskeletalModel(
        name=model.name + "-bilateral", bodies=bodies, sites=sites, wrap_geoms=wraps,
        ligaments=ligaments, muscles=muscles, gravity=model.gravity,
        joint_damping=model.joint_damping, controller=model.controller,
    )
