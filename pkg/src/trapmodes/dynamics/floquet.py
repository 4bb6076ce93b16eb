"""
Floquet analysis of the Hill system by infinite continued matrix inversions.

A solution u = e^{iβt} Σ C_{2n} e^{i2nt} turns the Hill system into the recursion

    R_{2n} C_{2n} − Q2 (C_{2n−2} + C_{2n+2}) − Q4 (C_{2n−4} + C_{2n+4}) = 0,   R_{2n} = A − (2n + β)².

Without Q4 this is block tridiagonal in the harmonics. With Q4 the harmonics are grouped in pairs
P_j = (C_{4j−2}, C_{4j}), which makes it block tridiagonal again. Either way the recursion
𝓡_j P_j − L P_{j−1} − Lᵀ P_{j+1} = 0 is closed from both ends by continued inversions, leaving a symmetric
matrix Y(β) acting on C₀ alone. Its kernel gives the exponents and the ladders.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy import optimize

from ..data.exceptions import TrapModesException
from ..data.models import (
    INTEGRAL_EXCLUSION, ExponentSpectrum, FloquetMode, FLTransform, HillSystem, IntegratorSettings,
)
from .integrator import matrizant
from .pseudopotential import lexicographic_basis

LOGGER = logging.getLogger(__name__)

DEFAULT_DEPTH = 20
DEFAULT_N_MAX = 6
SCAN_POINTS_PER_MODE = 64
SCAN_MARGIN = 1e-4
BISECTION_TOLERANCE = 1e-9
ROOT_TOLERANCE = 1e-12
CONDITION_LIMIT = 1e14
KERNEL_TOLERANCE = 1e-6
DEPTH_CHECK_TOLERANCE = 1e-10
PAIRING_TOLERANCE = 1e-8
NORMALIZATION_TOLERANCE = 1e-9


class ExpansionBreakdownError(TrapModesException):
    """A matrix in the continued inversion is numerically singular"""

    def __init__(self, message: str, level: int, condition: float):
        super().__init__(message)
        self.level = level
        self.condition = condition


class IncompleteSpectrumError(TrapModesException):
    """The exponent search found fewer (or more) exponents than degrees of freedom in a stable system"""

    def __init__(self, message: str, oracle_exponents: Sequence[float]):
        super().__init__(message)
        self.oracle_exponents = tuple(oracle_exponents)


class DepthConvergenceError(TrapModesException):
    """An exponent moves by more than the tolerance when the continued inversion is taken five levels deeper"""

    def __init__(self, message: str, beta: float, shift: float):
        super().__init__(message)
        self.beta = beta
        self.shift = shift


class StaleRootError(TrapModesException):
    """Y(β) has no numerical kernel at the requested exponent"""


class DegenerateModePairingError(TrapModesException):
    """The mode normalisation matrix cannot be inverted or is not positive"""


def _checked_inverse(matrix: np.ndarray, level: int) -> np.ndarray:
    condition = np.linalg.cond(matrix)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise ExpansionBreakdownError(
            f"Continued inversion broke down at level {level} (condition number {condition:.3e})", level, condition)
    return np.linalg.inv(matrix)


@dataclass
class _ContinuedInversion:
    """Upward and downward continued inversions of the harmonic recursion at one β"""
    hill: HillSystem
    beta: float
    depth: int

    def __post_init__(self):
        f = self.hill.dim
        self.paired = self.hill.has_q4
        if self.paired:
            self.levels = -(-self.depth // 2)
            zeros = np.zeros((f, f))
            self.coupling = np.block([[self.hill.Q4, self.hill.Q2], [zeros, self.hill.Q4]])
        else:
            self.levels = self.depth
            self.coupling = self.hill.Q2
        self.upward: Dict[int, np.ndarray] = {}
        self.downward: Dict[int, np.ndarray] = {}
        L = self.coupling
        inverse = None
        for j in range(self.levels, 0, -1):
            block = self.block(j) if inverse is None else self.block(j) - L.T @ inverse @ L
            inverse = self.upward[j] = _checked_inverse(block, j)
        inverse = None
        for j in range(-self.levels, 0):
            block = self.block(j) if inverse is None else self.block(j) - L @ inverse @ L.T
            inverse = self.downward[j] = _checked_inverse(block, j)
        self.centre = self.block(0) - L @ self.downward[-1] @ L.T - L.T @ self.upward[1] @ L
        self.centre = 0.5 * (self.centre + self.centre.T)

    def harmonic_block(self, harmonic: int) -> np.ndarray:
        return self.hill.A - (harmonic + self.beta) ** 2 * np.eye(self.hill.dim)

    def block(self, j: int) -> np.ndarray:
        if not self.paired:
            return self.harmonic_block(2 * j)
        q2 = self.hill.Q2
        return np.block([[self.harmonic_block(4 * j - 2), -q2], [-q2, self.harmonic_block(4 * j)]])

    @property
    def Y(self) -> np.ndarray:
        """The matrix acting on C₀ (a Schur complement of the central pair when harmonics are paired)"""
        if not self.paired:
            return self.centre
        f = self.hill.dim
        c11, c12 = self.centre[:f, :f], self.centre[:f, f:]
        c21, c22 = self.centre[f:, :f], self.centre[f:, f:]
        y = c22 - c21 @ _checked_inverse(c11, 0) @ c12
        return 0.5 * (y + y.T)

    def ladder(self, c0: np.ndarray, n_max: int) -> Dict[int, np.ndarray]:
        """C_{2n} for |n| <= n_max from C₀ by running the inversions outwards"""
        f = self.hill.dim
        L = self.coupling
        if self.paired:
            c_minus2 = -np.linalg.solve(self.centre[:f, :f], self.centre[:f, f:] @ c0)
            centre = np.concatenate([c_minus2, c0])
        else:
            centre = c0
        ladder = {}

        def record(j, vector):
            if self.paired:
                ladder[4 * j - 2], ladder[4 * j] = vector[:f], vector[f:]
            else:
                ladder[2 * j] = vector

        record(0, centre)
        vector = centre
        for j in range(1, self.levels + 1):
            vector = self.upward[j] @ L @ vector
            record(j, vector)
        vector = centre
        for j in range(-1, -self.levels - 1, -1):
            vector = self.downward[j] @ L.T @ vector
            record(j, vector)
        return {h: ladder[h] for h in range(-2 * n_max, 2 * n_max + 1, 2) if h in ladder}


def _check_beta(beta: float, depth: int):
    if depth < 5:
        raise ValueError(f"Continued-inversion depth must be at least 5, got {depth}")
    if abs(beta - round(beta)) < INTEGRAL_EXCLUSION:
        raise ValueError(f"β = {beta} is within {INTEGRAL_EXCLUSION} of an integer, which is excluded")


def y_determinant(hill: HillSystem, beta: float, depth: int = DEFAULT_DEPTH) -> Tuple[float, np.ndarray]:
    """
    det Y(β) and Y(β) itself, from continued inversions truncated after `depth` harmonics on each side.

    :raises ExpansionBreakdownError: An intermediate matrix had condition number above 1e14
    """
    _check_beta(beta, depth)
    y = _ContinuedInversion(hill, beta, depth).Y
    return float(np.linalg.det(y)), y


def _negative_count(hill: HillSystem, beta: float, depth: int) -> int:
    return int(np.count_nonzero(np.linalg.eigvalsh(y_determinant(hill, beta, depth)[1]) < 0))


def _sorted_eigenvalue(hill: HillSystem, beta: float, depth: int, index: int) -> float:
    return float(np.linalg.eigvalsh(y_determinant(hill, beta, depth)[1])[index])


def _locate(hill, depth, lo, hi, c_lo, c_hi) -> List[Tuple[float, float, int, int]]:
    """Brackets narrower than the bisection tolerance around every change of the negative-eigenvalue count"""
    if hi - lo < BISECTION_TOLERANCE:
        return [(lo, hi, c_lo, c_hi)]
    mid = 0.5 * (lo + hi)
    c_mid = _negative_count(hill, mid, depth)
    brackets = []
    if c_mid != c_lo:
        brackets += _locate(hill, depth, lo, mid, c_lo, c_mid)
    if c_mid != c_hi:
        brackets += _locate(hill, depth, mid, hi, c_mid, c_hi)
    return brackets


def _root_in_bracket(hill: HillSystem, depth: int, bracket, scale: float) -> Optional[FloquetMode]:
    lo, hi, c_lo, c_hi = bracket
    mid = 0.5 * (lo + hi)
    eigenvalues = np.linalg.eigvalsh(y_determinant(hill, mid, depth)[1])
    threshold = KERNEL_TOLERANCE * scale
    if np.min(np.abs(eigenvalues)) > threshold:
        LOGGER.debug(f"Sign change near β = {mid:.10f} is a pole of Y")
        return None
    index = min(c_lo, c_hi)
    f_lo = _sorted_eigenvalue(hill, lo, depth, index)
    f_hi = _sorted_eigenvalue(hill, hi, depth, index)
    if f_lo * f_hi < 0:
        beta = optimize.brentq(lambda b: _sorted_eigenvalue(hill, b, depth, index), lo, hi, xtol=ROOT_TOLERANCE)
    else:
        beta = mid
    eigenvalues = np.linalg.eigvalsh(y_determinant(hill, beta, depth)[1])
    kernel_dim = max(int(np.count_nonzero(np.abs(eigenvalues) < threshold)), abs(c_hi - c_lo))

    step = 1e-7
    slope = (_sorted_eigenvalue(hill, beta + step, depth, index)
             - _sorted_eigenvalue(hill, beta - step, depth, index)) / (2 * step)
    deeper = _sorted_eigenvalue(hill, beta, depth + 5, index) - _sorted_eigenvalue(hill, beta, depth, index)
    shift = deeper / slope if slope else 0.0
    if abs(shift) > DEPTH_CHECK_TOLERANCE:
        raise DepthConvergenceError(
            f"Exponent β = {beta:.12f} moves by {shift:.3e} when the depth grows from {depth} to {depth + 5}",
            float(beta), float(shift))
    return FloquetMode(float(beta), kernel_dim=kernel_dim)


def _scan(hill: HillSystem, scan_points: int, depth: int) -> List[FloquetMode]:
    grid = np.linspace(SCAN_MARGIN, 1 - SCAN_MARGIN, scan_points)
    counts = [_negative_count(hill, beta, depth) for beta in grid]
    scale = 1.0 + np.linalg.norm(hill.A, 2)
    modes = []
    for lo, hi, c_lo, c_hi in zip(grid[:-1], grid[1:], counts[:-1], counts[1:]):
        if c_lo == c_hi:
            continue
        for bracket in _locate(hill, depth, lo, hi, c_lo, c_hi):
            mode = _root_in_bracket(hill, depth, bracket, scale)
            if mode is not None:
                modes.append(mode)
    return modes


def find_exponents(hill: HillSystem, scan_points: Optional[int] = None, depth: int = DEFAULT_DEPTH,
                   settings: Optional[IntegratorSettings] = None) -> ExponentSpectrum:
    """
    Characteristic exponents β in (0, 1) of a Hill system.

    The number of negative eigenvalues of Y(β) is scanned on a uniform grid; each change is bisected, kept when Y
    has a kernel there (rather than a pole) and polished with brentq. When the exponents found, counted with
    multiplicity, do not add up to the dimension the scan is repeated four times denser, then the monodromy is
    consulted: an unstable system returns the stable subset with the instability report attached.

    :param scan_points: Grid size, at least 10 per degree of freedom (64 per degree of freedom by default)
    :raises IncompleteSpectrumError: The system is stable but exponents are still missing
    """
    f = hill.dim
    scan_points = SCAN_POINTS_PER_MODE * f if scan_points is None else scan_points
    if scan_points < 10 * f:
        raise ValueError(f"Need at least {10 * f} scan points for {f} degrees of freedom, got {scan_points}")
    modes = _scan(hill, scan_points, depth)
    if sum(mode.kernel_dim for mode in modes) != f:
        LOGGER.info(f"Found {sum(mode.kernel_dim for mode in modes)} of {f} exponents, rescanning more densely")
        modes = _scan(hill, 4 * scan_points, depth)
    found = sum(mode.kernel_dim for mode in modes)
    if found == f:
        LOGGER.debug("Exponents: " + ", ".join(f"{mode.beta:.10f}" for mode in modes))
        return ExponentSpectrum(tuple(modes))

    oracle = matrizant(hill, settings)
    if not oracle.stable:
        LOGGER.warning(f"Hill system is unstable: max |λ| = {oracle.instability.max_modulus:.6g}; "
                       f"returning {found} stable exponents")
        return ExponentSpectrum(tuple(modes), oracle.instability, oracle)
    raise IncompleteSpectrumError(
        f"Found {found} exponents for {f} degrees of freedom; the monodromy gives {list(oracle.exponents)}",
        oracle.exponents)


def mode_ladder(hill: HillSystem, beta: float, depth: int = DEFAULT_DEPTH, n_max: int = DEFAULT_N_MAX,
                kernel_dim: Optional[int] = None) -> List[FloquetMode]:
    """
    Harmonic ladders C_{2n}, |n| <= n_max, of the solutions with exponent `beta`.

    C₀ spans the kernel of Y(β), one ladder per kernel vector; degenerate kernels get a deterministic orthonormal
    basis. Each C₀ is a unit vector whose largest entry is positive.

    :raises StaleRootError: Y(β) has no eigenvalue below 1e-6·‖Y‖
    """
    depth = max(depth, n_max + 5)
    _check_beta(beta, depth)
    inversion = _ContinuedInversion(hill, beta, depth)
    y = inversion.Y
    eigenvalues, eigenvectors = np.linalg.eigh(y)
    threshold = KERNEL_TOLERANCE * max(np.linalg.norm(y, 2), 1.0)
    order = np.argsort(np.abs(eigenvalues))
    if abs(eigenvalues[order[0]]) > threshold:
        raise StaleRootError(f"No kernel at β = {beta:.12f}: smallest |eigenvalue| of Y is "
                             f"{abs(eigenvalues[order[0]]):.3e}")
    if kernel_dim is None:
        kernel_dim = max(1, int(np.count_nonzero(np.abs(eigenvalues) < threshold)))
    kernel = eigenvectors[:, order[:kernel_dim]]
    if kernel_dim > 1:
        kernel = lexicographic_basis(kernel, list(np.eye(hill.dim)))
    modes = []
    for c0 in kernel.T:
        if c0[np.argmax(np.abs(c0))] < 0:
            c0 = -c0
        ladder = {h: vector.astype(complex) for h, vector in inversion.ladder(c0, n_max).items()}
        modes.append(FloquetMode(float(beta), ladder, kernel_dim))
    return modes


def ladder_residual(hill: HillSystem, mode: FloquetMode, samples: int = 64) -> float:
    """Largest |ü + [A − 2Q2cos2t − 2Q4cos4t]u| over a period for u = e^{iβt} Σ C_{2n} e^{i2nt}"""
    worst = 0.0
    for t in np.pi * np.arange(samples) / samples:
        u = sum(c * np.exp(1j * (h + mode.beta) * t) for h, c in mode.ladder.items())
        u_ddot = sum(-(h + mode.beta) ** 2 * c * np.exp(1j * (h + mode.beta) * t) for h, c in mode.ladder.items())
        worst = max(worst, float(np.max(np.abs(u_ddot + hill.coefficient_matrix(t) @ u))))
    return worst


def build_fl_transform(modes: Sequence[FloquetMode], tolerance: float = NORMALIZATION_TOLERANCE) -> FLTransform:
    """
    Floquet-Lyapunov transformation from one ladder per degree of freedom.

    U has the ladders as columns and V their time derivatives, V_{2n} = i(2n + β)C_{2n}. Columns are rescaled by the
    inverse square root of N = −2iVᵀ(0)U(0) so that Vᵀ(0)U(0) = i/2, which makes the block inverse
    Γ⁻¹ = [[iV†, −iU†], [−iVᵀ, iUᵀ]] exact.

    :raises DegenerateModePairingError: N is singular or has a non-positive eigenvalue
    """
    if not modes:
        raise ValueError("Need at least one mode")
    modes = sorted(modes, key=lambda mode: mode.beta)
    f = len(next(iter(modes[0].ladder.values())))
    if len(modes) != f:
        raise ValueError(f"Need exactly {f} ladders for {f} degrees of freedom, got {len(modes)}")
    betas = np.array([mode.beta for mode in modes], dtype=float)
    if np.any(betas <= 0) or np.any(betas >= 1):
        raise ValueError(f"Only stable exponents in (0, 1) can be transformed, got {betas}")
    harmonics = sorted(set().union(*(mode.ladder for mode in modes)))
    zeros = np.zeros(f, dtype=complex)
    u_fourier = {h: np.column_stack([mode.ladder.get(h, zeros) for mode in modes]) for h in harmonics}
    v_fourier = {h: 1j * (h + betas)[None, :] * u_fourier[h] for h in harmonics}

    u0 = sum(u_fourier.values())
    v0 = sum(v_fourier.values())
    normalization = -2j * v0.T @ u0
    distinct = np.abs(betas[:, None] - betas[None, :]) > PAIRING_TOLERANCE
    normalization[distinct] = 0.0
    normalization = np.real_if_close(0.5 * (normalization + normalization.T), tol=1e6)
    if np.linalg.matrix_rank(normalization) < f:
        raise DegenerateModePairingError("Mode normalisation matrix is singular")
    eigenvalues = np.linalg.eigvals(normalization)
    if np.any(eigenvalues.real <= 0):
        raise DegenerateModePairingError(
            f"Mode normalisation matrix is not positive (eigenvalues {np.sort(eigenvalues.real)})")
    scaling = np.linalg.inv(scipy.linalg.sqrtm(normalization))
    u_fourier = {h: matrix @ scaling for h, matrix in u_fourier.items()}
    v_fourier = {h: matrix @ scaling for h, matrix in v_fourier.items()}

    transform = FLTransform(betas, u_fourier, v_fourier, normalization_applied=True)
    defect = np.max(np.abs(transform.V(0.0).T @ transform.U(0.0) - 0.5j * np.eye(f)))
    if defect > tolerance:
        raise DegenerateModePairingError(f"Normalisation VᵀU = i/2 only holds to {defect:.3e}")
    LOGGER.debug(f"Built FL transform for {f} modes, normalisation defect {defect:.3e}")
    return transform


def evolve_modes(transform: FLTransform, initial: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Propagates a real phase-space vector through the mode coordinates.

    :return: χ(t) = e^{Bt} Γ⁻¹(0) x(0), and the phase-space vector Γ(t) χ(t)
    """
    initial = np.asarray(initial, dtype=float)
    if initial.shape != (2 * transform.dim,):
        raise ValueError(f"Initial phase-space vector must have length {2 * transform.dim}, got {initial.shape}")
    chi = transform.propagator(t) * (transform.gamma_inverse(0.0) @ initial)
    phase_space = transform.gamma(t) @ chi
    imaginary = np.max(np.abs(phase_space.imag), initial=0.0)
    if imaginary > 1e-9 * max(1.0, np.max(np.abs(phase_space.real), initial=0.0)):
        LOGGER.warning(f"Reconstructed phase-space vector has imaginary part {imaginary:.3e}")
    return chi, phase_space.real


def gamma_samples(transform: FLTransform, times) -> np.ndarray:
    """Γ(t) at each of the given times, shape (T, 2f, 2f)"""
    return np.stack([transform.gamma(t) for t in np.atleast_1d(times)])
