"""Rotation algebra and wrap construction against independent oracles."""

import numpy as np
from scipy.spatial.transform import Rotation

from shouldersim import geometry as geo


def _to_scipy(q):
    # scipy stores (x, y, z, w)
    q = np.asarray(q)
    return Rotation.from_quat(np.concatenate([q[..., 1:], q[..., :1]], axis=-1))


def test_multiply_matches_rotation_composition():
    rng = np.random.default_rng(11)
    a = geo.quat_normalize(rng.standard_normal((200, 4)))
    b = geo.quat_normalize(rng.standard_normal((200, 4)))
    ours = geo.quat_to_matrix(geo.quat_multiply(a, b))
    ref = (_to_scipy(a) * _to_scipy(b)).as_matrix()
    assert np.max(np.abs(ours - ref)) < 1e-12


def test_to_matrix_and_rotate():
    rng = np.random.default_rng(12)
    q = geo.quat_normalize(rng.standard_normal((300, 4)))
    v = rng.standard_normal((300, 3))
    ref = _to_scipy(q).as_matrix()
    assert np.max(np.abs(geo.quat_to_matrix(q) - ref)) < 1e-12
    assert np.max(np.abs(geo.quat_rotate(q, v) - np.einsum("nij,nj->ni", ref, v))) < 1e-12


def test_from_rotvec_matches_scipy_including_tiny_angles():
    rng = np.random.default_rng(13)
    v = rng.standard_normal((200, 3))
    v[:50] *= 1e-10  # exercise the small-angle series
    ours = geo.quat_from_rotvec(v)
    ref = Rotation.from_rotvec(v).as_quat()
    ref = np.concatenate([ref[:, 3:], ref[:, :3]], axis=-1)
    sign = np.sign(np.sum(ours * ref, axis=-1, keepdims=True))
    assert np.max(np.abs(ours - sign * ref)) < 1e-12


def test_euler_zyx_reference_cases():
    assert np.allclose(geo.euler_zyx(geo.IDENTITY_QUAT), [0.0, 0.0, 0.0], atol=1e-15)
    q30 = geo.quat_from_axis_angle([0.0, 0.0, 1.0], np.deg2rad(30.0))
    angles = geo.euler_zyx(q30)
    assert abs(angles[0] - 0.5236) < 1e-4
    assert abs(angles[1]) < 1e-12 and abs(angles[2]) < 1e-12


def test_euler_zyx_matches_scipy_and_round_trips():
    rng = np.random.default_rng(14)
    q = geo.quat_normalize(rng.standard_normal((500, 4)))
    ours = geo.euler_zyx(q)
    ref = _to_scipy(q).as_euler("ZYX")
    assert np.max(np.abs(ours - ref)) < 1e-10
    back = geo.quat_from_euler_zyx(ours)
    assert np.max(np.abs(geo.quat_to_matrix(back) - geo.quat_to_matrix(q))) < 1e-10


def test_gimbal_proximity_flags_near_singularity():
    q = geo.quat_from_euler_zyx(np.array([0.3, np.pi / 2.0 - 1e-8, 0.1]))
    assert geo.gimbal_proximity(geo.euler_zyx(q))
    q_far = geo.quat_from_euler_zyx(np.array([0.3, 1.2, 0.1]))
    assert not geo.gimbal_proximity(geo.euler_zyx(q_far))


def test_integrate_preserves_norm_per_step():
    rng = np.random.default_rng(15)
    q = geo.quat_normalize(rng.standard_normal(4))
    for _ in range(2000):
        omega = rng.standard_normal(3) * 20.0
        q = geo.quat_integrate(q, omega, 1e-3)
        assert abs(np.linalg.norm(q) - 1.0) < 1e-9


def test_integrate_matches_axis_angle_for_constant_rate():
    # constant body rate about a fixed axis is an exact exponential
    omega = np.array([0.0, 0.0, 2.0])
    q = geo.IDENTITY_QUAT.copy()
    for _ in range(500):
        q = geo.quat_integrate(q, omega, 1e-3)
    expected = geo.quat_from_axis_angle([0.0, 0.0, 1.0], 2.0 * 0.5)
    assert np.max(np.abs(geo.quat_to_matrix(q) - geo.quat_to_matrix(expected))) < 1e-9


def test_unwrap_series_removes_jumps():
    t = np.linspace(0.0, 4.0 * np.pi, 400)
    wrapped = np.mod(t + np.pi, 2.0 * np.pi) - np.pi
    un = geo.unwrap_series(wrapped)
    assert np.max(np.abs(np.diff(un) - (t[1] - t[0]))) < 1e-9


# ---------------------------------------------------------------------------
# wrap geometry


def _seg_origin_dist(a, b):
    d = b - a
    t = np.clip(-np.dot(a, d) / np.dot(d, d), 0.0, 1.0)
    return np.linalg.norm(a + t * d)


def _brute_force_circle_path(a, b, radius, m=3000):
    """Shortest a->circle->b path by dense sampling of contact points."""
    gamma = np.linspace(0.0, 2.0 * np.pi, m, endpoint=False)
    pts = radius * np.stack([np.cos(gamma), np.sin(gamma)], axis=1)

    def leg_ok(end):
        # straight leg must stay outside the circle
        d = pts - end
        t = np.clip(-np.einsum("ij,ij->i", np.broadcast_to(end, pts.shape), d) / np.einsum("ij,ij->i", d, d), 0.0, 1.0)
        closest = end + t[:, None] * d
        return np.linalg.norm(closest, axis=1) >= radius - 1e-9

    fa = np.linalg.norm(pts - a, axis=1)
    fb = np.linalg.norm(pts - b, axis=1)
    ok_a = leg_ok(np.asarray(a, dtype=float))
    ok_b = leg_ok(np.asarray(b, dtype=float))
    fa[~ok_a] = np.inf
    fb[~ok_b] = np.inf

    diff = np.abs(gamma[:, None] - gamma[None, :])
    arc = radius * np.minimum(diff, 2.0 * np.pi - diff)
    total = fa[:, None] + arc + fb[None, :]
    return float(total.min())


def test_wrap_circle_matches_brute_force_shortest_path():
    cases = [
        ((-5.0, 0.5), (5.0, 0.5), 1.0),
        ((-3.0, -0.5), (3.0, -0.5), 1.0),
        ((-2.0, 0.3), (4.0, -0.2), 0.8),
        ((-1.5, 0.0), (0.0, 1.4), 1.2),
    ]
    for a, b, r in cases:
        a = np.array(a)
        b = np.array(b)
        sol = geo.wrap_circle_2d(a, b, r)
        assert bool(sol.wrapped)
        oracle = _brute_force_circle_path(a, b, r, m=4000)
        assert abs(float(sol.length) - oracle) < 1e-5, (a, b, r)


def test_wrap_circle_straight_when_clear():
    a = np.array([-3.0, 2.0])
    b = np.array([3.0, 2.0])
    sol = geo.wrap_circle_2d(a, b, 1.0)
    assert not bool(sol.wrapped)
    assert abs(float(sol.length) - 6.0) < 1e-12


def test_wrap_circle_symmetric_analytic():
    # symmetric endpoints: tangents of length sqrt(d^2 - r^2) and the arc
    # angle follows from the polar angles minus the two tangent half-angles
    r = 1.0
    a = np.array([-3.0, -0.5])
    b = np.array([3.0, -0.5])
    d = np.linalg.norm(a)
    beta = np.arccos(r / d)
    theta_a = np.arctan2(a[1], a[0])
    theta_b = np.arctan2(b[1], b[0])
    delta = theta_b - theta_a
    arc = min(np.mod(delta - 2.0 * beta, 2.0 * np.pi), np.mod(-delta - 2.0 * beta, 2.0 * np.pi))
    expected = 2.0 * np.sqrt(d**2 - r**2) + r * arc
    sol = geo.wrap_circle_2d(a, b, r)
    assert abs(float(sol.length) - expected) < 1e-12
    assert abs(float(sol.side)) == 1.0


def test_wrap_circle_grazing_continuity():
    # length must be continuous through the engage/disengage boundary
    r = 1.0
    eps = 1e-9
    a_in = np.array([-4.0, r - eps])
    a_out = np.array([-4.0, r + eps])
    just_in = geo.wrap_circle_2d(a_in, np.array([4.0, a_in[1]]), r)
    just_out = geo.wrap_circle_2d(a_out, np.array([4.0, a_out[1]]), r)
    assert bool(just_in.wrapped) and not bool(just_out.wrapped)
    assert abs(float(just_in.length) - float(just_out.length)) < 1e-7


def test_wrap_circle_endpoint_inside_is_invalid():
    sol = geo.wrap_circle_2d(np.array([0.2, 0.0]), np.array([3.0, 0.0]), 1.0)
    assert bool(sol.invalid)
    assert np.isnan(float(sol.length))


def test_wrap_side_forced_and_sticky():
    a = np.array([-3.0, 0.2])
    b = np.array([3.0, 0.2])
    free = geo.wrap_circle_2d(a, b, 1.0)
    forced = geo.wrap_circle_2d(a, b, 1.0, side=np.array(-float(free.side)))
    assert float(forced.side) == -float(free.side)
    assert float(forced.length) > float(free.length)
    # near-symmetric tie keeps the previous side
    tie_a = np.array([-3.0, 0.0])
    tie_b = np.array([3.0, 0.0])
    kept = geo.wrap_circle_2d(tie_a, tie_b, 1.0, prev_side=np.array(-1.0))
    assert float(kept.side) == -1.0


def test_cylinder_wrap_oblique_matches_dense_polyline():
    # unrolled hypotenuse length vs a very fine sampled helix polyline
    p = np.array([-5.0, 0.5, -1.0])
    q = np.array([5.0, 0.5, 2.0])
    center = np.zeros(3)
    axis = np.array([0.0, 0.0, 1.0])
    length, planar = geo.cylinder_wrap(p, q, center, axis, 1.0)
    assert bool(planar.wrapped)
    points, _ = geo.cylinder_wrap_points(p, q, center, axis, 1.0, arc_samples=5000)
    assert abs(geo.polyline_length(points) - float(length)) < 1e-6
    # the planar projection must agree with the 2D brute force
    oracle2d = _brute_force_circle_path(p[:2], q[:2], 1.0, m=4000)
    assert abs(np.sqrt(oracle2d**2 + 9.0) - float(length)) < 2e-5


def test_cylinder_wrap_arbitrary_axis_by_rotation():
    rng = np.random.default_rng(16)
    p = np.array([-5.0, 0.5, -1.0])
    q = np.array([5.0, 0.5, 2.0])
    base_len, _ = geo.cylinder_wrap(p, q, np.zeros(3), np.array([0.0, 0.0, 1.0]), 1.0)
    for _ in range(20):
        rot = Rotation.random(rng=rng)
        shift = rng.standard_normal(3)
        length, _ = geo.cylinder_wrap(
            rot.apply(p) + shift, rot.apply(q) + shift, shift, rot.apply([0.0, 0.0, 1.0]), 1.0
        )
        assert abs(float(length) - float(base_len)) < 1e-9


def test_sphere_wrap_matches_planar_solution():
    # sphere geodesic lives in the endpoint/center plane, so a planar
    # configuration must reproduce the 2D answer exactly
    p = np.array([-3.0, -0.5, 0.0])
    q = np.array([3.0, -0.5, 0.0])
    length, planar = geo.sphere_wrap(p, q, np.zeros(3), 1.0)
    flat = geo.wrap_circle_2d(p[:2], q[:2], 1.0)
    assert bool(planar.wrapped)
    assert abs(float(length) - float(flat.length)) < 1e-12
    # and it is rotation invariant
    rot = Rotation.from_rotvec([0.4, -0.3, 0.9])
    length_rot, _ = geo.sphere_wrap(rot.apply(p), rot.apply(q), np.zeros(3), 1.0)
    assert abs(float(length_rot) - float(length)) < 1e-9


def test_sphere_wrap_points_arc_converges():
    p = np.array([-2.0, 0.3, 0.4])
    q = np.array([1.5, -0.4, 0.8])
    center = np.array([0.0, 0.0, 0.5])
    length, planar = geo.sphere_wrap(p, q, center, 0.9)
    assert bool(planar.wrapped)
    points, _ = geo.sphere_wrap_points(p, q, center, 0.9, arc_samples=5000)
    assert abs(geo.polyline_length(points) - float(length)) < 1e-6


def test_wrap_batched_matches_scalar():
    rng = np.random.default_rng(17)
    n = 200
    p = rng.uniform(-4.0, -2.0, (n, 3))
    q = rng.uniform(2.0, 4.0, (n, 3))
    center = rng.uniform(-0.3, 0.3, (n, 3))
    lengths, planar = geo.sphere_wrap(p, q, center, 0.8)
    for i in range(0, n, 17):
        li, _ = geo.sphere_wrap(p[i], q[i], center[i], 0.8)
        assert abs(float(li) - lengths[i]) < 1e-12
    assert lengths.shape == (n,)
    assert planar.side.shape == (n,)
