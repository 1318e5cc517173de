"""Shared test fixtures: two small models with the standard three-joint layout.

chain_model routes one muscle over a cylinder and a sphere, so it exercises
the full wrapping path. pendulum_model is a fully actuated triple pendulum
with an antagonist muscle trio per joint, strong enough to hold poses
against gravity, which the controller tests rely on.
"""

import numpy as np
import pytest

from shouldersim import geometry as geo
from shouldersim.dynamics import SimState
from shouldersim.model import load_model


CHAIN_SPEC = {
    "name": "chain",
    "bodies": [
        {"name": "base", "parent": "world", "joint": "fixed", "pivot": [0, 0, 0],
         "mass": 5.0, "com": [0, 0, -0.1], "inertia": [0.1, 0.1, 0.1]},
        {"name": "a", "parent": "base", "joint": "spherical", "pivot": [0, 0.1, 0],
         "mass": 1.0, "com": [0, 0.1, 0], "inertia": [2e-3, 2e-3, 2e-3]},
        {"name": "b", "parent": "a", "joint": "spherical", "pivot": [0, 0.2, 0],
         "mass": 1.0, "com": [0, 0.1, 0], "inertia": [2e-3, 2e-3, 2e-3]},
        {"name": "c", "parent": "b", "joint": "spherical", "pivot": [0, 0.2, 0],
         "mass": 1.0, "com": [0, 0, -0.15], "inertia": [1e-2, 1e-2, 2e-3]},
    ],
    "sites": [
        {"name": "anchor", "body": "base", "pos": [0.05, 0.0, 0.05]},
        {"name": "mid", "body": "b", "pos": [0.02, 0.1, 0.0]},
        {"name": "tip", "body": "c", "pos": [0.0, 0.0, -0.3]},
        {"name": "n1", "body": "a", "pos": [0.0, 0.05, 0.02]},
    ],
    "wrap_geoms": [
        {"name": "roller", "kind": "cylinder", "body": "b", "pos": [0, -0.1, 0.02],
         "axis": [1, 0, 0], "radius": 0.03},
        {"name": "ball", "kind": "sphere", "body": "c", "pos": [0, -0.04, -0.14],
         "radius": 0.04},
    ],
    "ligaments": [
        {"name": "lig1", "sites": ["anchor", "n1"], "stiffness": 3000, "damping": 5},
    ],
    "muscles": [
        {"name": "m1", "sites": ["anchor", "mid", "tip"], "wraps": ["roller", "ball"],
         "f_max": 100.0},
        {"name": "m2", "sites": ["n1", "tip"], "f_max": 50.0},
    ],
    "controller": {"end_effector": "tip"},
}


def _pendulum_spec():
    bodies = [
        {"name": "base", "parent": "world", "joint": "fixed", "pivot": [0, 0, 0],
         "mass": 4.0, "com": [0, 0, 0.05], "inertia": [0.05, 0.05, 0.05]},
        {"name": "link1", "parent": "base", "joint": "spherical", "pivot": [0, 0, 0],
         "mass": 0.4, "com": [0, 0, -0.075], "inertia": [2.5e-3, 2.5e-3, 2e-3]},
        {"name": "link2", "parent": "link1", "joint": "spherical", "pivot": [0, 0, -0.15],
         "mass": 0.4, "com": [0, 0, -0.075], "inertia": [2.5e-3, 2.5e-3, 2e-3]},
        {"name": "link3", "parent": "link2", "joint": "spherical", "pivot": [0, 0, -0.15],
         "mass": 0.8, "com": [0, 0, -0.075], "inertia": [3e-3, 3e-3, 2e-3]},
    ]
    sites = []
    muscles = []
    anchor_z = {"base": 0.03, "link1": -0.12, "link2": -0.12}
    for j, (par, chi) in enumerate(zip(("base", "link1", "link2"),
                                       ("link1", "link2", "link3"))):
        for k, ang in enumerate((0.0, 2.0944, -2.0944)):
            sites.append({"name": f"anc{j}{k}", "body": par,
                          "pos": [0.09 * np.cos(ang), 0.09 * np.sin(ang), anchor_z[par]]})
            sites.append({"name": f"ins{j}{k}", "body": chi,
                          "pos": [0.045 * np.cos(ang), 0.045 * np.sin(ang), -0.09]})
            muscles.append({"name": f"mus{j}{k}", "sites": [f"anc{j}{k}", f"ins{j}{k}"],
                            "f_max": 80.0, "optimal_scale": 1.15})
    sites.append({"name": "tip", "body": "link3", "pos": [0.0, 0.0, -0.15]})
    return {
        "name": "triple_pendulum",
        "bodies": bodies,
        "sites": sites,
        "muscles": muscles,
        "controller": {"end_effector": "tip"},
    }


PENDULUM_SPEC = _pendulum_spec()


@pytest.fixture(scope="session")
def chain_model():
    return load_model(CHAIN_SPEC)


@pytest.fixture(scope="session")
def pendulum_model():
    return load_model(PENDULUM_SPEC)


def random_state(model, rng, max_angle=0.6, spin=0.0):
    """A SimState with random joint tilts and realized wrap sides."""
    cm = model.compiled
    state = SimState.initial(model)
    n = cm.n_joints
    axes = rng.normal(size=(n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.uniform(-max_angle, max_angle, n)
    state.joints.quats[:] = np.array(
        [geo.quat_from_axis_angle(ax, th) for ax, th in zip(axes, angles)]
    )
    if spin:
        state.joints.omegas[:] = rng.uniform(-spin, spin, (n, 3))
    _, sides = cm.wire_lengths(state.joints.quats)
    state.wrap_sides = sides
    return state


def tilted_pendulum_state(model):
    """The standard displaced start used by the controller tests."""
    cm = model.compiled
    state = SimState.initial(model)
    q = state.joints.quats.copy()
    q[0] = geo.quat_from_axis_angle([0.0, 1.0, 0.0], 0.25)
    q[1] = geo.quat_from_axis_angle([1.0, 0.0, 0.0], 0.15)
    state.joints.quats[:] = q
    _, sides = cm.wire_lengths(state.joints.quats)
    state.wrap_sides = sides
    return state
