"""Unit tests for the static pseudopotential crystal in pseudopotential.py"""
import numpy as np
import pytest
from scipy.integrate import solve_ivp

from trapmodes.data.models import ModeCouplingSet, PeriodicOrbit, PseudoConfig, TrapConfig
from trapmodes.dynamics import pseudopotential as pp
from trapmodes.dynamics.linearization import assemble_hill, hessian_harmonics

PAIR_SPACING = 0.25 ** (1 / 3)


@pytest.fixture(scope="module")
def axial_pair():
    return TrapConfig.linear(2, a=-0.002, q=0.3, omega_rf=2 / np.sqrt(0.004))


@pytest.fixture(scope="module")
def axial_pair_basis(axial_pair):
    pseudo = PseudoConfig.from_trap(axial_pair)
    return pp.normal_modes(pseudo, pp.find_equilibrium(pseudo))


@pytest.fixture(scope="module")
def twisted_six():
    return TrapConfig.linear(6, a=-0.02883, q=0.41, omega_rf=2 / np.sqrt(0.05766), dc_asymmetry=0.01)


@pytest.fixture(scope="module")
def twisted_six_basis(twisted_six):
    pseudo = PseudoConfig.from_trap(twisted_six)
    return pp.normal_modes(pseudo, pp.find_equilibrium(pseudo))


class TestInitialGuess:
    """Tests for the deterministic seed"""

    def test_single_ion_starts_at_the_centre(self):
        """
        GIVEN one ion,
        WHEN the initial guess is generated,
        THEN it sits at the origin.
        """
        np.testing.assert_array_equal(pp.initial_guess(1), np.zeros((1, 3)))

    @pytest.mark.parametrize("n_ions", [2, 6, 13])
    def test_ions_lie_on_a_sphere(self, n_ions):
        """
        GIVEN several ions,
        WHEN the initial guess is generated twice,
        THEN both are identical and every ion lies on the default sphere.
        """
        guess = pp.initial_guess(n_ions)
        np.testing.assert_array_equal(guess, pp.initial_guess(n_ions))
        np.testing.assert_allclose(np.linalg.norm(guess, axis=1), (n_ions / 4) ** (1 / 3))


class TestEquilibrium:
    """Tests for find_equilibrium"""

    def test_pair_aligns_with_the_weakest_axis(self):
        """
        GIVEN two ions with a weak x confinement,
        WHEN the equilibrium is found,
        THEN they sit at ±(1/4)^(1/3) on x with the gradient vanishing.
        """
        pseudo = PseudoConfig((1.0, 10.75, 10.75), 2)
        equilibrium = pp.find_equilibrium(pseudo)
        np.testing.assert_allclose(np.sort(equilibrium[:, 0]), [-PAIR_SPACING, PAIR_SPACING], atol=1e-9)
        np.testing.assert_allclose(equilibrium[:, 1:], 0.0, atol=1e-9)
        assert np.linalg.norm(pp.pseudo_gradient(pseudo, equilibrium)) < 1e-10

    def test_pair_turns_radial_when_the_radial_trap_is_weaker(self):
        """
        GIVEN two ions with γ_y = 0.35 < 1 < γ_z,
        WHEN the equilibrium is found,
        THEN the pair lies along y with γ_y s = 1/(4s²).
        """
        pseudo = PseudoConfig((1.0, 0.35, 1.4), 2)
        equilibrium = pp.find_equilibrium(pseudo)
        spacing = (1 / (4 * 0.35)) ** (1 / 3)
        np.testing.assert_allclose(np.sort(equilibrium[:, 1]), [-spacing, spacing], atol=1e-9)
        np.testing.assert_allclose(equilibrium[:, [0, 2]], 0.0, atol=1e-9)

    def test_minimum_has_a_positive_hessian(self):
        """
        GIVEN a six-ion crystal,
        WHEN the equilibrium is found,
        THEN the Hessian there has no negative eigenvalue.
        """
        pseudo = PseudoConfig((1.0, 1.9, 2.1), 6)
        equilibrium = pp.find_equilibrium(pseudo)
        assert np.linalg.eigvalsh(pp.pseudo_hessian(pseudo, equilibrium))[0] > -1e-8

    def test_six_ion_crystal_is_centred(self, twisted_six_basis):
        """
        GIVEN the six-ion crystal of a linear trap with a small radial asymmetry,
        WHEN the equilibrium is found,
        THEN its centre of mass sits at the trap centre.
        """
        np.testing.assert_allclose(twisted_six_basis.equilibrium.mean(axis=0), 0.0, atol=1e-8)

    def test_wrong_seed_shape(self):
        """
        GIVEN a seed for the wrong number of ions,
        WHEN find_equilibrium() is called,
        THEN a ValueError is raised.
        """
        with pytest.raises(ValueError):
            pp.find_equilibrium(PseudoConfig((1.0, 2.0, 2.0), 3), seed=np.zeros((2, 3)))


class TestNormalModes:
    """Tests for normal_modes"""

    def test_axial_pair_frequencies(self, axial_pair_basis):
        """
        GIVEN the axial pair,
        WHEN its normal modes are computed,
        THEN the frequencies are 1, √3, √(γ−1) twice and √γ twice.
        """
        gamma = 10.75
        expected = np.sort([1.0, np.sqrt(3.0), np.sqrt(gamma - 1), np.sqrt(gamma - 1), np.sqrt(gamma), np.sqrt(gamma)])
        np.testing.assert_allclose(axial_pair_basis.frequencies, expected, rtol=1e-8)

    def test_breathing_mode_is_the_stretch(self, axial_pair_basis):
        """
        GIVEN the axial pair,
        WHEN its normal modes are computed,
        THEN the breathing mode is R⁰/ξ_b with ξ_b = √2 (1/4)^(1/3).
        """
        index = axial_pair_basis.breathing_index
        assert index == 1
        assert axial_pair_basis.xi_b == pytest.approx(np.sqrt(2) * PAIR_SPACING)
        np.testing.assert_allclose(axial_pair_basis.mode_matrix[:, index],
                                   axial_pair_basis.equilibrium.ravel() / axial_pair_basis.xi_b, atol=1e-8)

    def test_basis_is_orthonormal_and_sign_fixed(self, axial_pair_basis):
        """
        GIVEN any mode basis,
        WHEN inspected,
        THEN D is orthogonal and every column except the breathing mode has a positive largest entry.
        """
        d = axial_pair_basis.mode_matrix
        np.testing.assert_allclose(d.T @ d, np.eye(6), atol=1e-10)
        for j in set(range(6)) - {axial_pair_basis.breathing_index}:
            assert d[np.argmax(np.abs(d[:, j])), j] > 0

    def test_degenerate_rocking_modes_follow_the_axes(self, axial_pair_basis):
        """
        GIVEN the two degenerate rocking modes of the axial pair,
        WHEN their basis is fixed,
        THEN the first rocks along y and the second along z.
        """
        rocking_y = np.array([0, 1, 0, 0, -1, 0]) / np.sqrt(2)
        rocking_z = np.array([0, 0, 1, 0, 0, -1]) / np.sqrt(2)
        assert abs(axial_pair_basis.mode_matrix[:, 2] @ rocking_y) == pytest.approx(1.0)
        assert abs(axial_pair_basis.mode_matrix[:, 3] @ rocking_z) == pytest.approx(1.0)

    def test_single_ion_has_no_breathing_mode(self):
        """
        GIVEN one ion,
        WHEN its normal modes are computed,
        THEN there is no breathing mode and ξ_b = 0.
        """
        pseudo = PseudoConfig((1.0, 4.0, 9.0), 1)
        basis = pp.normal_modes(pseudo, pp.find_equilibrium(pseudo))
        assert basis.breathing_index is None
        assert basis.xi_b == 0.0
        np.testing.assert_allclose(basis.frequencies, [1.0, 2.0, 3.0])

    def test_breathing_mode_must_follow_a_harmonic_trap_force(self):
        """
        GIVEN three ions on the axis away from equilibrium, so that the trap force is parallel to R⁰
        but R⁰ is not a mode of the Hessian,
        WHEN the normal modes are computed,
        THEN a BreathingModeError reports the deviation.
        """
        pseudo = PseudoConfig((1.0, 10.0, 10.0), 3)
        positions = np.array([[-0.9, 0.0, 0.0], [0.1, 0.0, 0.0], [1.0, 0.0, 0.0]])
        with pytest.raises(pp.BreathingModeError) as ex:
            pp.normal_modes(pseudo, positions)
        assert ex.value.deviation > 1e-8


class TestModeCoupling:
    """Tests for mode_coupling, symmetric_mode_mathieu and driven_response"""

    def test_axial_modes_are_not_driven(self, axial_pair, axial_pair_basis):
        """
        GIVEN the axial pair with Ω normalised to the axial frequency,
        WHEN the rf coupling of the modes is built,
        THEN the breathing mode obeys its own Mathieu equation with a = 3ε, q = 0 and the static drive vanishes.
        """
        coupling = pp.mode_coupling(axial_pair, axial_pair_basis)
        np.testing.assert_allclose(coupling.G_vec, 0.0, atol=1e-12)
        np.testing.assert_allclose(coupling.F_vec, 0.0, atol=1e-12)
        mathieu = pp.symmetric_mode_mathieu(axial_pair, axial_pair_basis, axial_pair_basis.breathing_index)
        assert mathieu.a_eff == pytest.approx(3 * axial_pair.epsilon)
        assert mathieu.q_eff == pytest.approx(0.0, abs=1e-12)
        assert mathieu.drive == pytest.approx(axial_pair_basis.xi_b)

    def test_radial_modes_carry_the_rf(self, axial_pair, axial_pair_basis):
        """
        GIVEN the axial pair,
        WHEN the rf coupling is built,
        THEN a mode rocking along y has q_eff = q_y.
        """
        coupling = pp.mode_coupling(axial_pair, axial_pair_basis)
        assert coupling.Q_modes[2, 2] == pytest.approx(0.3)
        np.testing.assert_allclose(coupling.Q_modes, coupling.Q_modes.T)

    def test_coupled_mode_is_rejected(self):
        """
        GIVEN a three-dimensional six-ion crystal whose modes mix the y and z axes,
        WHEN the Mathieu parameters of a coupled mode are requested,
        THEN a NotDecoupledError is raised.
        """
        config = TrapConfig.linear(6, a=-0.02883, q=0.41, omega_rf=2 / np.sqrt(0.05766), dc_asymmetry=0.01)
        pseudo = PseudoConfig.from_trap(config)
        basis = pp.normal_modes(pseudo, pp.find_equilibrium(pseudo))
        coupling = pp.mode_coupling(config, basis)
        off_diagonal = np.abs(coupling.Q_modes - np.diag(np.diag(coupling.Q_modes)))
        mode = int(np.argmax(off_diagonal.max(axis=1)))
        assert off_diagonal[mode].max() > 1e-8
        with pytest.raises(pp.NotDecoupledError):
            pp.symmetric_mode_mathieu(config, basis, mode)

    def test_driven_response_satisfies_the_balance(self):
        """
        GIVEN a small coupled system,
        WHEN the driven response is solved with three harmonics,
        THEN the zeroth and first balance equations hold.
        """
        coupling = ModeCouplingSet(np.diag([0.3, 0.5]), np.array([[0.1, 0.02], [0.02, 0.05]]),
                                   np.array([0.1, 0.2]), np.array([0.05, 0.0]))
        response = pp.driven_response(coupling, n_max=3)
        a, q = coupling.A_modes, coupling.Q_modes
        c = response.coefficients
        np.testing.assert_allclose(a @ c[0] - 2 * q @ c[2], coupling.G_vec, atol=1e-12)
        np.testing.assert_allclose((a - 4 * np.eye(2)) @ c[2] - q @ (c[0] + c[4]), coupling.F_vec, atol=1e-12)
        np.testing.assert_allclose(response.at(0.0), c[0] + 2 * (c[2] + c[4] + c[6]))

    def test_resonant_drive(self):
        """
        GIVEN a mode with A = 4 and no rf coupling,
        WHEN the driven response is solved,
        THEN a ResonantDriveError is raised.
        """
        coupling = ModeCouplingSet(np.array([[4.0]]), np.array([[0.0]]), np.array([0.0]), np.array([1.0]))
        with pytest.raises(pp.ResonantDriveError):
            pp.driven_response(coupling)

    def test_mode_coupling_is_the_rotated_hill_system(self, twisted_six, twisted_six_basis):
        """
        GIVEN the six-ion crystal frozen at its pseudopotential equilibrium,
        WHEN the Hill system of that static orbit is rotated into the mode basis,
        THEN it reproduces A and Q of the mode coupling.
        """
        orbit = PeriodicOrbit({0: twisted_six_basis.equilibrium}, n_max=2)
        hill = assemble_hill(twisted_six, hessian_harmonics(orbit))
        coupling = pp.mode_coupling(twisted_six, twisted_six_basis)
        d = twisted_six_basis.mode_matrix
        np.testing.assert_allclose(d.T @ hill.A @ d, coupling.A_modes, atol=1e-10)
        np.testing.assert_allclose(d.T @ hill.Q2 @ d, coupling.Q_modes, atol=1e-10)

    def test_driven_response_matches_direct_integration(self):
        """
        GIVEN a stable coupled system driven by G + 2F cos 2t,
        WHEN the driven response is started at t = 0 and integrated directly over ten periods,
        THEN the trajectory stays on the harmonic-balance solution.
        """
        coupling = ModeCouplingSet(np.diag([0.3, 0.5]), np.array([[0.1, 0.02], [0.02, 0.05]]),
                                   np.array([0.1, 0.2]), np.array([0.05, 0.0]))
        response = pp.driven_response(coupling, n_max=8)

        def rhs(t, y):
            theta, velocity = y[:2], y[2:]
            force = coupling.G_vec + 2 * coupling.F_vec * np.cos(2 * t)
            stiffness = coupling.A_modes - 2 * coupling.Q_modes * np.cos(2 * t)
            return np.concatenate([velocity, force - stiffness @ theta])

        times = np.linspace(0.0, 10 * np.pi, 81)
        start = np.concatenate([response.at(0.0), response.velocity_at(0.0)])
        solution = solve_ivp(rhs, (0.0, times[-1]), start, t_eval=times, rtol=1e-12, atol=1e-12, method="DOP853")
        expected = np.array([response.at(t) for t in times])
        np.testing.assert_allclose(solution.y[:2].T, expected, atol=1e-6)
