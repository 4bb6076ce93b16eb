import math
import unittest

import numpy as np
import pytest

from trapmodes.data.exceptions import ConfigurationError, SingularConfigurationError
from trapmodes.data.models import DampingSchedule, ExponentSpectrum, FloquetMode, HillSystem, IonState, \
    PeriodicOrbit, PseudoConfig, TrapConfig, Trajectory


class TestTrapConfig(unittest.TestCase):
    "Basic testing of TrapConfig presets and derived parameters"

    def test_linear_preset(self):
        """
        GIVEN scalar a, q
        WHEN a linear trap is built
        THEN a = (-2a, a, a) and q = (0, q, -q)
        """
        config = TrapConfig.linear(2, -0.01, 0.3, 20.0)
        assert config.a == (0.02, -0.01, -0.01)
        assert config.q == (0.0, 0.3, -0.3)
        assert config.geometry == "linear"
        assert config.dim == 6

    def test_hyperbolic_preset(self):
        """
        GIVEN scalar a, q
        WHEN a hyperbolic trap is built
        THEN q = (-2q, q, q)
        """
        config = TrapConfig.hyperbolic(1, 0.0, 0.2, 10.0)
        assert config.q == (-0.4, 0.2, 0.2)

    def test_dc_asymmetry(self):
        """
        GIVEN a DC asymmetry δ
        WHEN the effective a parameters are read
        THEN a_y is scaled by 1+δ and a_z by 1-δ
        """
        config = TrapConfig.linear(1, -0.02, 0.3, 20.0, dc_asymmetry=0.1)
        np.testing.assert_allclose(config.mathieu_a, [0.04, -0.022, -0.018])
        assert config.a == (0.04, -0.02, -0.02)

    def test_axial_omega_normalises_gamma_x(self):
        """
        GIVEN a_x and q_x
        WHEN Ω is chosen by axial_omega_rf
        THEN γ_x = 1 and ε = a_x + q_x²/2
        """
        config = TrapConfig.linear(2, -0.002, 0.3, TrapConfig.axial_omega_rf(0.004))
        assert config.epsilon == pytest.approx(0.004)
        np.testing.assert_allclose(config.pseudo_gamma, [1.0, 10.75, 10.75])

    def test_axial_omega_needs_a_confining_axis(self):
        """
        WHEN axial_omega_rf is asked for a non-confining axis
        THEN a ConfigurationError is raised
        """
        with pytest.raises(ConfigurationError):
            TrapConfig.axial_omega_rf(-0.01)

    def test_laplace_condition(self):
        """
        GIVEN a parameters that do not sum to zero
        WHEN a general trap is built
        THEN a ConfigurationError is raised
        """
        with pytest.raises(ConfigurationError):
            TrapConfig(1, (0.1, 0.0, 0.0), (0.0, 0.0, 0.0), 10.0)

    def test_invalid_values(self):
        """
        GIVEN zero ions, a boolean ion count, a negative Ω or an unknown geometry
        WHEN a trap is built
        THEN a ConfigurationError is raised
        """
        for kwargs in ({"n_ions": 0}, {"n_ions": True}, {"omega_rf": -1.0}, {"geometry": "toroidal"}):
            arguments = {"n_ions": 1, "a": (0, 0, 0), "q": (0, 0, 0), "omega_rf": 1.0, **kwargs}
            with self.subTest(kwargs=kwargs), pytest.raises(ConfigurationError):
                TrapConfig(**arguments)

    def test_with_mathieu_keeps_the_preset(self):
        """
        GIVEN a linear trap
        WHEN new Mathieu parameters are set
        THEN the geometry, Ω and δ are kept
        """
        config = TrapConfig.linear(3, -0.01, 0.3, 20.0, 0.05).with_mathieu(-0.02, 0.4)
        assert config.geometry == "linear"
        assert config.q == (0.0, 0.4, -0.4)
        assert config.omega_rf == 20.0
        assert config.dc_asymmetry == 0.05


class TestPseudoConfig:
    """Tests for PseudoConfig.from_trap"""

    def test_from_trap(self):
        """
        GIVEN an axially normalised trap with δ = 0.1
        WHEN its pseudopotential is built
        THEN γ = (1, 0.35, 0.45)
        """
        config = TrapConfig.linear(2, -0.025, 0.3, TrapConfig.axial_omega_rf(0.05), 0.1)
        pseudo = PseudoConfig.from_trap(config)
        np.testing.assert_allclose(pseudo.gamma, (1.0, 0.35, 0.45))
        assert pseudo.n_ions == 2

    def test_unnormalised_trap_gets_a_hint(self):
        """
        GIVEN a trap whose Ω does not normalise γ_x
        WHEN its pseudopotential is built
        THEN the error names the Ω that would
        """
        config = TrapConfig.linear(2, -0.025, 0.3, 10.0)
        with pytest.raises(ConfigurationError, match="omega_rf = 8.94"):
            PseudoConfig.from_trap(config)

    def test_gamma_x_must_be_one(self):
        with pytest.raises(ConfigurationError):
            PseudoConfig((2.0, 1.0, 1.0), 1)


class TestIonState:
    """Tests for IonState and Trajectory"""

    def test_velocities_default_to_zero(self):
        state = IonState([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
        np.testing.assert_array_equal(state.velocities, np.zeros((2, 3)))
        assert state.n_ions == 2

    def test_state_is_read_only(self):
        """
        GIVEN an IonState
        WHEN its positions are written to
        THEN numpy refuses
        """
        state = IonState([[1.0, 0.0, 0.0]])
        with pytest.raises(ValueError):
            state.positions[0, 0] = 2.0

    def test_flat_layout(self):
        """
        GIVEN an IonState
        WHEN it is flattened
        THEN positions come first, ion-major, and from_flat inverts it
        """
        state = IonState([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], [[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]], 1.5)
        flat = state.flatten()
        np.testing.assert_array_equal(flat[:6], [1, 2, 3, 4, 5, 6])
        again = IonState.from_flat(flat, 1.5)
        np.testing.assert_array_equal(again.velocities, state.velocities)

    @pytest.mark.parametrize("positions, error", [
        ([[0.0, 0.0, 0.0], [0.0, 0.0, 1e-12]], SingularConfigurationError),
        ([[np.nan, 0.0, 0.0]], ValueError),
        ([[0.0, 0.0]], ValueError),
    ])
    def test_invalid_states(self, positions, error):
        with pytest.raises(error):
            IonState(positions)

    def test_trajectory_indexing(self):
        """
        GIVEN a trajectory of three samples
        WHEN it is indexed and iterated
        THEN IonStates with the right times come back
        """
        positions = np.arange(9, dtype=float).reshape(3, 1, 3)
        trajectory = Trajectory(np.array([0.0, 0.5, 1.0]), positions, np.zeros_like(positions))
        assert len(trajectory) == 3
        assert trajectory[1].time == 0.5
        assert [state.time for state in trajectory] == [0.0, 0.5, 1.0]
        assert len(trajectory[1:]) == 2


class TestDampingSchedule:
    """Tests for DampingSchedule"""

    def test_profile(self):
        """
        GIVEN a schedule held for π then decaying with time constant π
        WHEN it is evaluated
        THEN it is constant, then exponential, then zero
        """
        schedule = DampingSchedule(0.4, np.pi, np.pi, 3, 0.5)
        assert schedule(0.5) == 0.4
        assert schedule(2 * np.pi) == pytest.approx(0.4 / math.e)
        assert schedule(4.1 * np.pi) == 0.0
        assert schedule.decay_end == pytest.approx(4 * np.pi)

    def test_duration_is_whole_periods(self):
        schedule = DampingSchedule(0.4, np.pi, np.pi, 3, 0.5)
        assert schedule.duration == pytest.approx(5 * np.pi)

    def test_slower(self):
        assert DampingSchedule().slower().time_constant == pytest.approx(100 * np.pi)

    def test_invalid(self):
        with pytest.raises(ValueError):
            DampingSchedule(time_constant=0.0)


class TestPeriodicOrbit:
    """Tests for PeriodicOrbit"""

    @pytest.fixture
    def orbit(self):
        return PeriodicOrbit({0: [[1.0, 0.0, 0.0]], 2: [[0.1, 0.0, 0.0]]}, n_max=2)

    def test_missing_harmonics_are_zero(self, orbit):
        assert sorted(orbit.coefficients) == [0, 2, 4]
        np.testing.assert_array_equal(orbit.coefficient(-4), np.zeros((1, 3)))
        assert orbit.stacked().shape == (3, 1, 3)

    def test_cosine_reconstruction(self, orbit):
        """
        GIVEN B₀ = 1 and B₂ = 0.1 on x
        WHEN the orbit is evaluated
        THEN x(0) = 1.2, x(π/2) = 0.8 and the velocity vanishes at t = 0
        """
        assert orbit.positions_at(0.0)[0, 0] == pytest.approx(1.2)
        assert orbit.positions_at(np.pi / 2)[0, 0] == pytest.approx(0.8)
        assert orbit.velocities_at(0.0)[0, 0] == pytest.approx(0.0)
        assert orbit.accelerations_at(0.0)[0, 0] == pytest.approx(-0.8)

    def test_truncation(self, orbit):
        truncated = orbit.truncated(1)
        assert truncated.n_max == 1
        assert math.isnan(truncated.residual)

    def test_rejects_stray_harmonics(self):
        with pytest.raises(ValueError):
            PeriodicOrbit({0: [[0.0, 0.0, 0.0]], 3: [[0.0, 0.0, 0.0]]}, n_max=2)
        with pytest.raises(ValueError):
            PeriodicOrbit({2: [[0.0, 0.0, 0.0]]})


class TestHillSystem:
    """Tests for HillSystem"""

    def test_defaults(self):
        """
        GIVEN A and Q2 for one ion
        WHEN a Hill system is built without Q4 or labels
        THEN Q4 is zero and coordinates are labelled by ion and axis
        """
        hill = HillSystem(np.eye(3), np.diag([0.0, 0.1, -0.1]))
        assert not hill.has_q4
        assert hill.labels == ((0, "x"), (0, "y"), (0, "z"))
        np.testing.assert_allclose(hill.coefficient_matrix(np.pi / 2), np.diag([1.0, 1.2, 0.8]))

    def test_asymmetric_matrix(self):
        with pytest.raises(ValueError, match="symmetric"):
            HillSystem(np.array([[1.0, 0.1], [0.0, 1.0]]), np.zeros((2, 2)))

    def test_label_count(self):
        with pytest.raises(ValueError):
            HillSystem(np.eye(2), np.zeros((2, 2)), labels=((0, "x"),))


class TestExponentSpectrum:

    def test_multiplicity_counts_kernel_dimensions(self):
        spectrum = ExponentSpectrum((FloquetMode(0.2), FloquetMode(0.5, kernel_dim=2)))
        assert len(spectrum) == 2
        assert spectrum.multiplicity == 3
        np.testing.assert_array_equal(spectrum.betas, [0.2, 0.5])


class TestFloquetMode:

    @pytest.mark.parametrize("beta, kernel_dim", [(5e-7, 1), (1 - 5e-7, 1), (1.0, 1), (0.0, 1), (0.3, 0), (0.3, 1.5)])
    def test_invalid_modes(self, beta, kernel_dim):
        with pytest.raises(ValueError):
            FloquetMode(beta, kernel_dim=kernel_dim)

    def test_beta_is_stored_as_float(self):
        mode = FloquetMode(np.float32(0.25))
        assert type(mode.beta) is float
        assert mode.n_max == 0
