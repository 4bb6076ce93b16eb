"""
Static pseudopotential crystal: equilibrium, normal modes and the rf coupling of those modes.

Energies are in units where the pseudopotential reads ½ Σ γ_α R²_{i,α} + Σ_{i<j} 1/‖R_i − R_j‖ with γ_x = 1.
Writing R = R⁰ + DΘ, the rf equations of motion become Θ̈ + [A − 2Q cos 2t]Θ = G + 2F cos 2t.
"""
import logging
from typing import List, Optional

import numpy as np
import scipy.linalg
from scipy import optimize

from ..data.exceptions import SingularConfigurationError, TrapModesException
from ..data.models import (
    DecoupledMathieu, DrivenResponse, ModeCouplingSet, NormalModeBasis, PseudoConfig, TrapConfig, check_separation,
)
from .linearization import coulomb_hessian
from .trap_model import coulomb_acceleration, pair_geometry

LOGGER = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-10
SADDLE_TOLERANCE = 1e-8
DEGENERACY_TOLERANCE = 1e-8
DECOUPLING_TOLERANCE = 1e-8
BREATHING_TOLERANCE = 1e-8
HARMONIC_TOLERANCE = 1e-10
RESONANCE_CONDITION = 1e12
GOLDEN_ANGLE = np.pi * (3 - np.sqrt(5))


class ConvergenceFailureError(TrapModesException):
    """The equilibrium search ran out of iterations before the gradient vanished"""

    def __init__(self, message: str, gradient_norm: float):
        super().__init__(message)
        self.gradient_norm = gradient_norm


class SaddlePointError(TrapModesException):
    """A stationary point of the pseudopotential is not a minimum"""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class NotDecoupledError(TrapModesException):
    """A mode is coupled to others, so it has no Mathieu equation of its own"""


class ResonantDriveError(TrapModesException):
    """The harmonic-balance system of the driven response is singular"""


class BreathingModeError(TrapModesException):
    """In a harmonic trap the breathing mode is not proportional to the equilibrium positions"""

    def __init__(self, message: str, deviation: float):
        super().__init__(message)
        self.deviation = deviation


def initial_guess(n_ions: int, radius: Optional[float] = None) -> np.ndarray:
    """
    Deterministic seed with the ions spread over a Fibonacci sphere whose polar axis is x.

    The default radius is roughly the size of an isotropic crystal of the same ion number.
    """
    if n_ions < 1:
        raise ValueError(f"n_ions must be positive, got {n_ions}")
    if n_ions == 1:
        return np.zeros((1, 3))
    radius = (n_ions / 4) ** (1 / 3) if radius is None else radius
    k = np.arange(n_ions)
    x = 1 - (2 * k + 1) / n_ions
    rho = np.sqrt(1 - x ** 2)
    phi = GOLDEN_ANGLE * k
    return radius * np.column_stack([x, rho * np.cos(phi), rho * np.sin(phi)])


def pseudo_energy(pseudo: PseudoConfig, positions: np.ndarray) -> float:
    positions = np.reshape(positions, (pseudo.n_ions, 3))
    _, inv_r = pair_geometry(positions)
    return float(0.5 * np.sum(np.asarray(pseudo.gamma) * positions ** 2) + 0.5 * np.sum(inv_r))


def pseudo_gradient(pseudo: PseudoConfig, positions: np.ndarray) -> np.ndarray:
    """Gradient of the static potential, same shape as `positions`"""
    shape = np.shape(positions)
    positions = np.reshape(positions, (pseudo.n_ions, 3))
    gradient = np.asarray(pseudo.gamma) * positions - coulomb_acceleration(positions)
    return gradient.reshape(shape)


def pseudo_hessian(pseudo: PseudoConfig, positions: np.ndarray) -> np.ndarray:
    """3N×3N Hessian diag(γ) + K of the static potential"""
    positions = np.reshape(positions, (pseudo.n_ions, 3))
    return np.diag(np.tile(pseudo.gamma, pseudo.n_ions)) + coulomb_hessian(positions)


def _descend(pseudo: PseudoConfig, flat: np.ndarray) -> np.ndarray:
    try:
        result = optimize.minimize(
            lambda x: pseudo_energy(pseudo, x), flat, jac=lambda x: pseudo_gradient(pseudo, x),
            method="BFGS", options={"gtol": 1e-8, "maxiter": 2000})
    except SingularConfigurationError:
        LOGGER.debug("BFGS pre-relaxation stepped onto a collision, continuing from the seed")
        return flat
    LOGGER.debug(f"BFGS pre-relaxation: {result.message} after {result.nit} iterations")
    return result.x


def _newton(pseudo: PseudoConfig, flat: np.ndarray, tolerance: float, max_iterations: int) -> np.ndarray:
    gradient = pseudo_gradient(pseudo, flat)
    norm = np.linalg.norm(gradient)
    for iteration in range(max_iterations):
        if norm < tolerance:
            LOGGER.debug(f"Newton refinement converged after {iteration} iterations (|g| = {norm:.3e})")
            return flat
        step = scipy.linalg.lstsq(pseudo_hessian(pseudo, flat), -gradient)[0]
        scale = 1.0
        while scale > 1e-4:
            trial = flat + scale * step
            try:
                trial_gradient = pseudo_gradient(pseudo, trial)
            except SingularConfigurationError:
                trial_gradient = None
            if trial_gradient is not None and np.linalg.norm(trial_gradient) < norm:
                break
            scale /= 2
        else:
            break
        flat, gradient = trial, trial_gradient
        norm = np.linalg.norm(gradient)
    if norm < tolerance:
        return flat
    raise ConvergenceFailureError(f"Equilibrium search stalled with gradient norm {norm:.3e}", float(norm))


def find_equilibrium(pseudo: PseudoConfig, seed: Optional[np.ndarray] = None, tolerance: float = GRADIENT_TOLERANCE,
                     max_iterations: int = 100, escape_attempts: int = 3) -> np.ndarray:
    """
    Local minimum of the static pseudopotential reached from `seed`.

    BFGS descent brings the seed close to a stationary point, Newton steps with a backtracking line search then
    polish it to `tolerance`. A saddle is escaped along its most negative curvature direction at most
    `escape_attempts` times.

    :param pseudo: Trap anisotropy and ion number
    :param seed: N×3 starting positions with distinct rows; a Fibonacci-sphere seed when omitted
    :return: N×3 equilibrium positions
    """
    seed = initial_guess(pseudo.n_ions) if seed is None else np.array(seed, dtype=float)
    if seed.shape != (pseudo.n_ions, 3):
        raise ValueError(f"Seed must have shape ({pseudo.n_ions}, 3), got {seed.shape}")
    check_separation(seed)
    flat = seed.ravel()
    for attempt in range(escape_attempts + 1):
        flat = _newton(pseudo, _descend(pseudo, flat), tolerance, max_iterations)
        eigenvalues, eigenvectors = np.linalg.eigh(pseudo_hessian(pseudo, flat))
        if eigenvalues[0] >= -SADDLE_TOLERANCE:
            return flat.reshape(pseudo.n_ions, 3)
        LOGGER.info(f"Stationary point is a saddle (curvature {eigenvalues[0]:.3e}), escape attempt {attempt + 1}")
        flat = flat + 0.05 * eigenvectors[:, 0]
    raise SaddlePointError(
        f"Still at a saddle after {escape_attempts} escape attempts (curvature {eigenvalues[0]:.3e})",
        float(eigenvalues[0]))


def _sign_fixed(vector: np.ndarray) -> np.ndarray:
    return -vector if vector[np.argmax(np.abs(vector))] < 0 else vector


def lexicographic_basis(subspace: np.ndarray, preferred: List[np.ndarray]) -> np.ndarray:
    """Orthonormal basis of span(subspace) built by Gram-Schmidt on projected preferred directions"""
    projector = subspace @ subspace.T
    basis = []
    for direction in preferred:
        candidate = projector @ direction
        for vector in basis:
            candidate = candidate - (vector @ candidate) * vector
        norm = np.linalg.norm(candidate)
        if norm > 1e-6:
            basis.append(candidate / norm)
        if len(basis) == subspace.shape[1]:
            break
    return np.column_stack(basis)


def normal_modes(pseudo: PseudoConfig, equilibrium: np.ndarray) -> NormalModeBasis:
    """
    Diagonalises the pseudopotential Hessian at an equilibrium.

    Degenerate frequencies get a deterministic basis from the projected coordinate axes (the equilibrium direction
    first, when it lies in the cluster). The breathing mode is the one with the largest overlap with R⁰.

    :raises SaddlePointError: The Hessian has a negative eigenvalue
    :raises BreathingModeError: The trap force is parallel to R⁰ (a harmonic trap for this crystal) but the
        breathing mode differs from R⁰/ξ_b by more than 1e-8
    """
    equilibrium = np.asarray(equilibrium, dtype=float)
    gradient_norm = np.linalg.norm(pseudo_gradient(pseudo, equilibrium))
    if gradient_norm > 1e3 * GRADIENT_TOLERANCE:
        LOGGER.warning(f"Normal modes requested away from equilibrium (gradient norm {gradient_norm:.3e})")
    eigenvalues, eigenvectors = np.linalg.eigh(pseudo_hessian(pseudo, equilibrium))
    if eigenvalues[0] < -SADDLE_TOLERANCE:
        raise SaddlePointError(f"Hessian has a negative eigenvalue {eigenvalues[0]:.3e}", float(eigenvalues[0]))
    frequencies = np.sqrt(np.clip(eigenvalues, 0.0, None))
    dim = len(frequencies)

    flat_equilibrium = equilibrium.ravel()
    xi_b = float(np.linalg.norm(flat_equilibrium))
    axes = list(np.eye(dim))
    preferred = ([flat_equilibrium / xi_b] if xi_b > 0 else []) + axes

    modes = eigenvectors.copy()
    start = 0
    while start < dim:
        stop = start + 1
        while stop < dim and frequencies[stop] - frequencies[stop - 1] < DEGENERACY_TOLERANCE:
            stop += 1
        if stop - start > 1:
            modes[:, start:stop] = lexicographic_basis(eigenvectors[:, start:stop], preferred)
        start = stop
    modes = np.column_stack([_sign_fixed(modes[:, j]) for j in range(dim)])

    breathing_index = None
    if xi_b > 0:
        overlaps = modes.T @ flat_equilibrium / xi_b
        breathing_index = int(np.argmax(np.abs(overlaps)))
        if overlaps[breathing_index] < 0:
            modes[:, breathing_index] *= -1
        deviation = np.linalg.norm(modes[:, breathing_index] - flat_equilibrium / xi_b)
        trap_force = np.tile(pseudo.gamma, pseudo.n_ions) * flat_equilibrium
        parallel = np.linalg.norm(trap_force - (trap_force @ flat_equilibrium) / xi_b ** 2 * flat_equilibrium)
        if parallel < HARMONIC_TOLERANCE and deviation > BREATHING_TOLERANCE:
            raise BreathingModeError(
                f"Breathing mode deviates from R⁰/ξ_b by {deviation:.3e} although the trap force is parallel to R⁰",
                float(deviation))
        LOGGER.debug(f"Breathing mode {breathing_index}: ω = {frequencies[breathing_index]:.6f}, "
                     f"deviation from R⁰/ξ_b {deviation:.3e}")
    return NormalModeBasis(equilibrium, modes, frequencies, breathing_index, xi_b, pseudo.gamma)


def mode_coupling(config: TrapConfig, basis: NormalModeBasis) -> ModeCouplingSet:
    """A, Q, G and F of the pseudopotential-mode equations, with ε and the Mathieu parameters taken from `config`"""
    if config.n_ions != basis.n_ions:
        raise ValueError(f"Config has {config.n_ions} ions, the mode basis {basis.n_ions}")
    eps = config.epsilon
    d = basis.mode_matrix
    offset = np.tile(config.mathieu_a - eps * basis.gamma, config.n_ions)
    q = np.tile(config.mathieu_q, config.n_ions)
    r0 = basis.equilibrium.ravel()
    a_modes = eps * np.diag(basis.frequencies ** 2) + d.T @ (offset[:, None] * d)
    q_modes = d.T @ (q[:, None] * d)
    return ModeCouplingSet(
        0.5 * (a_modes + a_modes.T), 0.5 * (q_modes + q_modes.T), -d.T @ (offset * r0), d.T @ (q * r0))


def symmetric_mode_mathieu(config: TrapConfig, basis: NormalModeBasis, mode: int,
                           tolerance: float = DECOUPLING_TOLERANCE) -> DecoupledMathieu:
    """
    Mathieu parameters of a mode that decouples from all others.

    :raises NotDecoupledError: Row `mode` of Q (or A) has off-diagonal entries above `tolerance`
    """
    coupling = mode_coupling(config, basis)
    for name, matrix in (("Q", coupling.Q_modes), ("A", coupling.A_modes)):
        off_diagonal = np.delete(matrix[mode], mode)
        if off_diagonal.size and np.max(np.abs(off_diagonal)) > tolerance:
            raise NotDecoupledError(
                f"Mode {mode} couples to others through {name} (|{name}_mj| up to {np.max(np.abs(off_diagonal)):.3e})")
    drive = basis.xi_b if mode == basis.breathing_index else 0.0
    return DecoupledMathieu(float(coupling.A_modes[mode, mode]), float(coupling.Q_modes[mode, mode]), drive)


def driven_response(coupling: ModeCouplingSet, n_max: int = 2) -> DrivenResponse:
    """
    π-periodic particular solution by harmonic balance over harmonics 0, 2, ..., 2n_max.

    With Θ = Σ Θ_{2n} e^{i2nt} and Θ_{−2n} = Θ_{2n}, the balance reads
    AΘ₀ − 2QΘ₂ = G and (A − 4n²)Θ_{2n} − Q(Θ_{2n−2} + Θ_{2n+2}) = F δ_{n1} for n ≥ 1.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be at least 1, got {n_max}")
    dim = coupling.dim
    blocks = n_max + 1
    matrix = np.zeros((blocks * dim, blocks * dim))
    rhs = np.zeros(blocks * dim)

    def block(row, col):
        return slice(row * dim, (row + 1) * dim), slice(col * dim, (col + 1) * dim)

    for n in range(blocks):
        matrix[block(n, n)] = coupling.A_modes - 4 * n ** 2 * np.eye(dim)
        if n == 0:
            matrix[block(0, 1)] = -2 * coupling.Q_modes
        else:
            matrix[block(n, n - 1)] = -coupling.Q_modes
            if n + 1 < blocks:
                matrix[block(n, n + 1)] = -coupling.Q_modes
    rhs[:dim] = coupling.G_vec
    rhs[dim:2 * dim] = coupling.F_vec

    condition = np.linalg.cond(matrix)
    if not np.isfinite(condition) or condition > RESONANCE_CONDITION:
        raise ResonantDriveError(f"Harmonic-balance matrix is singular (condition number {condition:.3e})")
    solution = scipy.linalg.solve(matrix, rhs).reshape(blocks, dim)
    return DrivenResponse({2 * n: solution[n] for n in range(blocks)})
