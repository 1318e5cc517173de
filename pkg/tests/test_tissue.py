"""Force laws, activation dynamics and morphology-based force estimation.

Numeric expectations are worked out by hand from the published curve
shapes, not recomputed through the code under test.
"""

import numpy as np
import pytest

from shouldersim.tissue import (
    LigamentElement,
    MaxForceInputs,
    MuscleElement,
    WirePath,
    activation_step,
    average_max_forces,
    estimate_max_force,
    force_length,
    force_velocity,
    ligament_energy,
    ligament_tension,
    mesh_volume,
    muscle_tension,
    passive_energy,
    passive_force,
    physiological_cross_section,
)


def make_muscle(f_max=100.0, l0=0.2):
    return MuscleElement(
        name="m", path=WirePath(("p", "q")), f_max=f_max, optimal_length=l0
    )


def make_ligament(rest=0.2, k=3000.0, c=5.0):
    return LigamentElement(
        name="l", path=WirePath(("p", "q")), rest_length=rest, stiffness=k, damping=c
    )


class TestMuscleCurves:
    def test_peak_at_optimal(self):
        # a = 1, x = 1, v = 0 is exactly f_max
        m = make_muscle()
        assert muscle_tension(m, 0.2, 0.0, 1.0) == pytest.approx(100.0, abs=1e-12)

    def test_force_length_zeros(self):
        # parabola 1 - 4(x-1)^2 crosses zero at half and one-and-a-half optima
        assert force_length(0.5) == pytest.approx(0.0, abs=1e-12)
        assert force_length(1.5) == pytest.approx(0.0, abs=1e-12)
        assert force_length(0.3) == 0.0
        assert force_length(1.25) == pytest.approx(0.75)

    def test_force_velocity_clamps(self):
        assert force_velocity(-1.5) == 0.0
        assert force_velocity(0.0) == 1.0
        assert force_velocity(0.2) == pytest.approx(1.2)
        assert force_velocity(3.0) == pytest.approx(1.4)

    def test_passive_engages_beyond_optimal(self):
        assert passive_force(0.9) == 0.0
        assert passive_force(1.0) == 0.0
        assert passive_force(1.1) == pytest.approx(5.2 * 0.01)
        assert passive_force(3.0) == pytest.approx(1.3)  # capped

    def test_generic_point_by_hand(self):
        # x = 1.1, rate 0.1 m/s, a = 0.5 with L0 = 0.2:
        #   fL = 1 - 4*0.01 = 0.96, v = 0.1/2 = 0.05 -> fV = 1.05
        #   fP = 5.2*0.01 = 0.052
        #   F = 100*(0.5*0.96*1.05 + 0.052) = 55.6
        m = make_muscle()
        assert muscle_tension(m, 0.22, 0.1, 0.5) == pytest.approx(55.6, abs=1e-12)

    def test_never_pushes(self):
        m = make_muscle()
        lengths = np.linspace(0.05, 0.5, 40)
        rates = np.linspace(-3, 3, 40)
        acts = np.linspace(0, 1, 40)
        t = muscle_tension(m, lengths, rates, acts)
        assert np.all(t >= 0.0)

    def test_activation_clamped_outside_unit_range(self):
        m = make_muscle()
        assert muscle_tension(m, 0.2, 0.0, 2.0) == pytest.approx(100.0)
        assert muscle_tension(m, 0.2, 0.0, -1.0) == pytest.approx(0.0)

    def test_passive_energy_is_integral_of_force(self):
        # numeric quadrature of the passive curve must match the closed form
        for x in (1.2, 1.4, 1.6, 2.0):
            grid = np.linspace(1.0, x, 100001)
            expected = np.trapezoid(passive_force(grid), grid)
            assert passive_energy(x) == pytest.approx(expected, abs=1e-6)

    def test_validation(self):
        with pytest.raises(ValueError):
            make_muscle(f_max=-1.0)
        with pytest.raises(ValueError):
            make_muscle(l0=0.0)
        with pytest.raises(ValueError):
            MuscleElement(name="m", path=WirePath(("p", "q")), f_max=1.0,
                          optimal_length=0.1, pennation=2.0)


class TestLigament:
    def test_slack_is_silent(self):
        l = make_ligament()
        assert ligament_tension(l, 0.15, 5.0) == 0.0
        assert ligament_tension(l, 0.2, 1.0) == 0.0

    def test_stretched_by_hand(self):
        # 10 mm stretch at 3000 N/m plus 0.3 m/s lengthening at 5 N.s/m
        l = make_ligament()
        assert ligament_tension(l, 0.21, 0.3) == pytest.approx(31.5, abs=1e-12)

    def test_damping_never_pushes(self):
        # shortening contributes nothing; the spring term alone remains
        l = make_ligament()
        assert ligament_tension(l, 0.21, -2.0) == pytest.approx(30.0)
        assert ligament_tension(l, 0.2001, -50.0) == pytest.approx(0.3)

    def test_energy_quadratic(self):
        l = make_ligament()
        assert ligament_energy(l, 0.19) == 0.0
        assert ligament_energy(l, 0.22) == pytest.approx(0.5 * 3000 * 0.02**2)

    def test_validation(self):
        with pytest.raises(ValueError):
            make_ligament(rest=0.0)
        with pytest.raises(ValueError):
            make_ligament(k=-1.0)


class TestActivation:
    def test_first_order_step_by_hand(self):
        # a' = a + dt*(u - a)/tau = 0.2 + 1e-3*0.6/0.04 = 0.215
        assert activation_step(0.2, 0.8, 1e-3) == pytest.approx(0.215, abs=1e-15)

    def test_excitation_clamped(self):
        assert activation_step(0.0, 7.0, 1e-3) == pytest.approx(0.025)
        assert activation_step(0.5, -3.0, 1e-3) == pytest.approx(0.5 - 0.0125)

    def test_converges_to_excitation(self):
        a = 0.0
        for _ in range(4000):
            a = activation_step(a, 0.7, 1e-3)
        assert a == pytest.approx(0.7, abs=1e-6)

    def test_stays_in_unit_interval(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(0, 1, 50)
        for _ in range(100):
            a = activation_step(a, rng.uniform(-2, 3, 50), 5e-3)
            assert np.all((0.0 <= a) & (a <= 1.0))


class TestMaxForceEstimation:
    def test_cross_section_by_hand(self):
        # 60 cm^3 over 10 cm fiber length, no pennation: 60e-6/0.1 = 6e-4 m^2
        inputs = MaxForceInputs(fiber_length=0.1, volume=60e-6)
        assert physiological_cross_section(inputs) == pytest.approx(6e-4)

    def test_pennation_projects(self):
        inputs = MaxForceInputs(fiber_length=0.1, volume=60e-6, pennation=np.pi / 3)
        assert physiological_cross_section(inputs) == pytest.approx(3e-4)

    def test_mass_route_uses_density(self):
        inputs = MaxForceInputs(fiber_length=0.1, mass=0.1056)
        assert physiological_cross_section(inputs) == pytest.approx(1e-3)

    def test_force_scales_with_area(self):
        inputs = MaxForceInputs(fiber_length=0.1, volume=60e-6, force_per_area=59.0)
        assert estimate_max_force(inputs) == pytest.approx(59.0 * 6e-4)

    def test_round_trip_from_known_force(self):
        # inverting F = k*V*cos(p)/Lf for volume reproduces the force
        rng = np.random.default_rng(1)
        for _ in range(20):
            f_target = rng.uniform(5, 3000)
            lf = rng.uniform(0.02, 0.3)
            pen = rng.uniform(0, 1.2)
            vol = f_target * lf / (59.0 * np.cos(pen))
            inputs = MaxForceInputs(fiber_length=lf, volume=vol, pennation=pen)
            assert estimate_max_force(inputs) == pytest.approx(f_target, rel=1e-12)

    def test_needs_volume_or_mass(self):
        with pytest.raises(ValueError):
            MaxForceInputs(fiber_length=0.1).resolved_volume()

    def test_averaging_preserves_total(self):
        forces = np.array([10.0, 20.0, 60.0, 110.0])
        averaged = average_max_forces(forces)
        np.testing.assert_allclose(averaged, 50.0)
        assert averaged.sum() == pytest.approx(forces.sum())


class TestMeshVolume:
    def test_unit_tetrahedron(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]])
        faces = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
        assert mesh_volume(verts, faces) == pytest.approx(1.0 / 6.0)

    def test_translated_cube(self):
        v = np.array([[x, y, z] for x in (0, 2) for y in (0, 2) for z in (0, 2)],
                     dtype=float) + 5.0
        f = np.array([
            [0, 1, 3], [0, 3, 2],
            [4, 6, 7], [4, 7, 5],
            [0, 4, 5], [0, 5, 1],
            [2, 3, 7], [2, 7, 6],
            [0, 2, 6], [0, 6, 4],
            [1, 5, 7], [1, 7, 3],
        ])
        assert mesh_volume(v, f) == pytest.approx(8.0)

    def test_open_mesh_rejected(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]])
        faces = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2]])
        with pytest.raises(ValueError, match="closed"):
            mesh_volume(verts, faces)


class TestWirePath:
    def test_needs_two_sites(self):
        with pytest.raises(ValueError):
            WirePath(("only",))

    def test_wraps_default_to_straight(self):
        path = WirePath(("a", "b", "c"))
        assert path.wraps == (None, None)

    def test_wrap_count_must_match_segments(self):
        with pytest.raises(ValueError):
            WirePath(("a", "b"), ("w1", "w2"))
