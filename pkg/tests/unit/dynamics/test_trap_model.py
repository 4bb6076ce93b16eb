"""Unit tests for the trap and Coulomb forces in trap_model.py"""
import numpy as np
import pytest

from trapmodes.data.exceptions import SingularConfigurationError
from trapmodes.data.models import IonState, TrapConfig
from trapmodes.dynamics import trap_model


@pytest.fixture()
def single_ion_config():
    return TrapConfig.linear(1, a=-0.01, q=0.3, omega_rf=TrapConfig.axial_omega_rf(0.02))


@pytest.fixture()
def three_ion_config():
    return TrapConfig.linear(3, a=-0.02, q=0.35, omega_rf=TrapConfig.axial_omega_rf(0.04), dc_asymmetry=0.05)


@pytest.fixture()
def three_ion_positions():
    return np.array([[0.9, 0.1, -0.05], [0.0, -0.2, 0.1], [-0.8, 0.15, 0.02]])


class TestEquationsOfMotion:
    """Tests for the right-hand side of the nonlinear equations of motion"""

    def test_single_ion_feels_only_the_trap(self, single_ion_config):
        """
        GIVEN one ion at (1, 1, 1) in a linear trap with a = -0.01, q = 0.3,
        WHEN the acceleration is evaluated at t = 0,
        THEN each axis gets −(a_α − 2q_α)R_α, with a_x = +0.02.
        """
        state = IonState(np.array([[1.0, 1.0, 1.0]]))
        np.testing.assert_allclose(trap_model.eom_rhs(single_ion_config, state), [[-0.02, 0.61, -0.59]])

    def test_coulomb_repulsion_of_a_unit_pair(self):
        """
        GIVEN two ions one unit apart along x,
        WHEN the Coulomb acceleration is evaluated,
        THEN each is pushed away from the other with unit strength.
        """
        acc = trap_model.coulomb_acceleration(np.array([[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0]]))
        np.testing.assert_allclose(acc, [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])

    def test_acceleration_is_the_negative_gradient_of_the_rescaled_potential(self, three_ion_config,
                                                                              three_ion_positions):
        """
        GIVEN three ions at generic positions and time,
        WHEN the rescaled potential is differentiated numerically,
        THEN its negative gradient equals the equations-of-motion right-hand side.
        """
        t, h = 0.4, 1e-6
        gradient = np.zeros(9)
        for k in range(9):
            step = np.zeros(9)
            step[k] = h
            plus = IonState(three_ion_positions + step.reshape(3, 3), time=t)
            minus = IonState(three_ion_positions - step.reshape(3, 3), time=t)
            gradient[k] = (trap_model.rescaled_potential(three_ion_config, plus)
                           - trap_model.rescaled_potential(three_ion_config, minus)) / (2 * h)
        rhs = trap_model.eom_rhs(three_ion_config, IonState(three_ion_positions, time=t))
        np.testing.assert_allclose(rhs.ravel(), -gradient, atol=1e-7)

    def test_stacked_positions_match_single_evaluations(self, three_ion_config, three_ion_positions):
        """
        GIVEN a stack of configurations and one time per configuration,
        WHEN acceleration() is called once on the stack,
        THEN every slice matches evaluating that configuration on its own.
        """
        times = np.array([0.0, 0.3, 1.1])
        stack = np.stack([three_ion_positions * scale for scale in (1.0, 1.1, 0.9)])
        batched = trap_model.acceleration(three_ion_config, stack, times)
        for k, t in enumerate(times):
            np.testing.assert_allclose(batched[k], trap_model.acceleration(three_ion_config, stack[k], t))

    def test_ion_count_mismatch(self, single_ion_config, three_ion_positions):
        """
        GIVEN a state with three ions and a single-ion config,
        WHEN eom_rhs() is called,
        THEN a ValueError is raised.
        """
        with pytest.raises(ValueError):
            trap_model.eom_rhs(single_ion_config, IonState(three_ion_positions))

    def test_trap_frequencies_follow_the_drive(self, single_ion_config):
        """
        GIVEN a trap,
        WHEN the instantaneous trap frequencies are evaluated a quarter period apart,
        THEN they equal (Ω²/4)(a ∓ 2q).
        """
        scale = single_ion_config.omega_rf ** 2 / 4
        a, q = single_ion_config.mathieu_a, single_ion_config.mathieu_q
        np.testing.assert_allclose(trap_model.trap_frequencies(single_ion_config, 0.0), scale * (a - 2 * q))
        np.testing.assert_allclose(trap_model.trap_frequencies(single_ion_config, np.pi / 2), scale * (a + 2 * q))


class TestPairGeometry:
    """Tests for pair_geometry and the dynamic matrix"""

    def test_coincident_ions_are_rejected(self):
        """
        GIVEN two ions at the same point,
        WHEN pair_geometry() is called,
        THEN a SingularConfigurationError is raised.
        """
        with pytest.raises(SingularConfigurationError):
            trap_model.pair_geometry(np.array([[0.1, 0.2, 0.3], [0.1, 0.2, 0.3]]))

    def test_inverse_distances_vanish_on_the_diagonal(self, three_ion_positions):
        """
        GIVEN three ions,
        WHEN pair_geometry() is called,
        THEN inv_r is symmetric with zeros on the diagonal and d is antisymmetric.
        """
        d, inv_r = trap_model.pair_geometry(three_ion_positions)
        np.testing.assert_array_equal(np.diag(inv_r), 0.0)
        np.testing.assert_allclose(inv_r, inv_r.T)
        np.testing.assert_allclose(d, -np.swapaxes(d, 0, 1))
        assert inv_r[0, 2] == pytest.approx(1 / np.linalg.norm(three_ion_positions[0] - three_ion_positions[2]))

    def test_dynamic_matrix_rows_sum_to_zero(self, three_ion_positions):
        """
        GIVEN three ions,
        WHEN the dynamic matrix is built,
        THEN it is symmetric with vanishing row sums.
        """
        g = trap_model.dynamic_matrix(three_ion_positions)
        np.testing.assert_allclose(g, g.T)
        np.testing.assert_allclose(g.sum(axis=1), 0.0, atol=1e-12)


class TestPotential:
    """Tests for potential_energy and the Laplace condition of the presets"""

    def test_unit_pair_without_a_trap(self):
        """
        GIVEN two ions at ±0.5 on x and a = q = 0,
        WHEN the potential energy is evaluated,
        THEN only the Coulomb term 1/‖R₁ − R₂‖ = 1 remains.
        """
        config = TrapConfig(2, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0), omega_rf=10.0)
        state = IonState(np.array([[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0]]))
        assert trap_model.potential_energy(config, state) == pytest.approx(1.0)

    def test_single_ion_at_the_centre(self, single_ion_config):
        """
        GIVEN one ion at the trap centre,
        WHEN the potential energy is evaluated at any time,
        THEN it vanishes.
        """
        for t in (0.0, 0.7):
            assert trap_model.potential_energy(single_ion_config, IonState(np.zeros((1, 3)), time=t)) == 0.0

    @pytest.mark.parametrize("preset", [TrapConfig.linear, TrapConfig.hyperbolic])
    def test_presets_satisfy_laplace(self, preset):
        """
        GIVEN a preset trap with a radial DC asymmetry,
        WHEN its Mathieu parameters are read,
        THEN the a and q parameters each sum to zero.
        """
        config = preset(2, a=-0.03, q=0.4, omega_rf=8.0, dc_asymmetry=0.05)
        assert config.mathieu_a.sum() == pytest.approx(0.0, abs=1e-15)
        assert config.mathieu_q.sum() == pytest.approx(0.0, abs=1e-15)
