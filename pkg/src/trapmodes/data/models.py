"""
Immutable value types shared by the dynamics modules.

Coordinates are nondimensional (unit d) and time is rescaled as t -> Ωt/2, so the rf period is π.
Flattened coordinate vectors are ion-major: index 3*i + α for ion i and axis α in (x, y, z).
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import pdist

from .exceptions import ConfigurationError, SingularConfigurationError
from ..util.fourier import cosine_series

LOGGER = logging.getLogger(__name__)

AXES = ("x", "y", "z")
GEOMETRIES = ("linear", "hyperbolic", "general")
LAPLACE_TOLERANCE = 1e-12
COINCIDENCE_THRESHOLD = 1e-9
SYMMETRY_TOLERANCE = 1e-12
INTEGRAL_EXCLUSION = 1e-6


def frozen_array(values, shape: Optional[tuple] = None, dtype=float) -> np.ndarray:
    """Copies `values` into a read-only numpy array, optionally checking its shape"""
    array = np.array(values, dtype=dtype)
    if shape is not None and array.shape != shape:
        raise ValueError(f"Expected an array of shape {shape}, got {array.shape}")
    array.setflags(write=False)
    return array


def check_separation(positions: np.ndarray) -> None:
    """Raises SingularConfigurationError if any two rows of `positions` are closer than the coincidence threshold"""
    if positions.shape[0] < 2:
        return
    distances = pdist(positions)
    closest = distances.min()
    if closest < COINCIDENCE_THRESHOLD:
        raise SingularConfigurationError(f"Two ions are only {closest:.3e} apart")


def _vector3(values, name: str) -> Tuple[float, float, float]:
    try:
        vector = tuple(float(v) for v in values)
    except TypeError as ex:
        raise ConfigurationError(f"'{name}' must be a sequence of 3 numbers, got {values!r}") from ex
    if len(vector) != 3:
        raise ConfigurationError(f"'{name}' must have 3 entries (x, y, z), got {len(vector)}")
    return vector


@dataclass(frozen=True)
class TrapConfig:
    """Per-axis Mathieu parameters, rf frequency and ion count of a quadrupole trap"""
    n_ions: int
    a: Tuple[float, float, float]  # Mathieu a per axis (x, y, z), before the DC asymmetry
    q: Tuple[float, float, float]  # Mathieu q per axis (x, y, z)
    omega_rf: float  # Ω in units of the characteristic secular frequency
    dc_asymmetry: float = 0.0  # δ: a_y -> a_y(1+δ), a_z -> a_z(1-δ)
    geometry: str = "general"  # Preset the parameters were built from

    def __post_init__(self):
        if isinstance(self.n_ions, bool) or int(self.n_ions) != self.n_ions or self.n_ions < 1:
            raise ConfigurationError(f"n_ions must be a positive integer, got {self.n_ions!r}")
        object.__setattr__(self, "n_ions", int(self.n_ions))
        object.__setattr__(self, "a", _vector3(self.a, "a"))
        object.__setattr__(self, "q", _vector3(self.q, "q"))
        object.__setattr__(self, "omega_rf", float(self.omega_rf))
        object.__setattr__(self, "dc_asymmetry", float(self.dc_asymmetry))
        if not (math.isfinite(self.omega_rf) and self.omega_rf > 0):
            raise ConfigurationError(f"omega_rf must be positive, got {self.omega_rf}")
        if self.geometry not in GEOMETRIES:
            raise ConfigurationError(f"Unrecognised geometry '{self.geometry}', expected one of {GEOMETRIES}")
        for name, values in (("a", self.a), ("q", self.q)):
            if abs(sum(values)) > LAPLACE_TOLERANCE:
                raise ConfigurationError(
                    f"Mathieu '{name}' parameters must sum to zero (Laplace), got {values} with sum {sum(values):.3e}")

    @classmethod
    def linear(cls, n_ions: int, a: float, q: float, omega_rf: float, dc_asymmetry: float = 0.0) -> "TrapConfig":
        """Linear Paul trap: a_y = a_z = a, a_x = -2a; q_y = -q_z = q, q_x = 0"""
        return cls(n_ions, (-2 * a, a, a), (0.0, q, -q), omega_rf, dc_asymmetry, "linear")

    @classmethod
    def hyperbolic(cls, n_ions: int, a: float, q: float, omega_rf: float, dc_asymmetry: float = 0.0) -> "TrapConfig":
        """Hyperbolic (3D) Paul trap: a_y = a_z = a, a_x = -2a; q_y = q_z = q, q_x = -2q"""
        return cls(n_ions, (-2 * a, a, a), (-2 * q, q, q), omega_rf, dc_asymmetry, "hyperbolic")

    @classmethod
    def from_preset(cls, geometry: str, n_ions: int, a, q, omega_rf: float, dc_asymmetry: float = 0.0):
        """Builds a config from a geometry name; "general" takes 3-vectors, the presets take scalars"""
        if geometry == "linear":
            return cls.linear(n_ions, float(a), float(q), omega_rf, dc_asymmetry)
        if geometry == "hyperbolic":
            return cls.hyperbolic(n_ions, float(a), float(q), omega_rf, dc_asymmetry)
        if geometry == "general":
            return cls(n_ions, a, q, omega_rf, dc_asymmetry, "general")
        raise ConfigurationError(f"Unrecognised geometry '{geometry}', expected one of {GEOMETRIES}")

    @staticmethod
    def axial_omega_rf(a_x: float, q_x: float = 0.0) -> float:
        """The Ω that makes ω̄ equal to the lowest-order axial secular frequency (so γ_x = 1)"""
        beta_squared = a_x + q_x ** 2 / 2
        if beta_squared <= 0:
            raise ConfigurationError(f"Axis is not confining at lowest order (a + q²/2 = {beta_squared})")
        return 2.0 / math.sqrt(beta_squared)

    @property
    def epsilon(self) -> float:
        return 4.0 / self.omega_rf ** 2

    @property
    def mathieu_a(self) -> np.ndarray:
        """The a parameters with the radial DC asymmetry applied"""
        a_x, a_y, a_z = self.a
        return frozen_array((a_x, a_y * (1 + self.dc_asymmetry), a_z * (1 - self.dc_asymmetry)))

    @property
    def mathieu_q(self) -> np.ndarray:
        return frozen_array(self.q)

    @property
    def pseudo_gamma(self) -> np.ndarray:
        """Lowest-order squared secular frequencies (a_α + q_α²/2)/ε in units of ω̄²"""
        return frozen_array((self.mathieu_a + self.mathieu_q ** 2 / 2) / self.epsilon)

    @property
    def dim(self) -> int:
        return 3 * self.n_ions

    def with_mathieu(self, a, q) -> "TrapConfig":
        """Same trap with new preset-level (scalar for presets) Mathieu parameters"""
        return TrapConfig.from_preset(self.geometry, self.n_ions, a, q, self.omega_rf, self.dc_asymmetry)

    def with_changes(self, **changes) -> "TrapConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class IonState:
    """Positions and velocities of every ion at one rescaled time"""
    positions: np.ndarray  # N×3
    velocities: Optional[np.ndarray] = None  # N×3, zero when omitted
    time: float = 0.0

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ValueError(f"positions must be an N×3 array, got shape {positions.shape}")
        velocities = np.zeros_like(positions) if self.velocities is None else self.velocities
        object.__setattr__(self, "positions", frozen_array(positions))
        object.__setattr__(self, "velocities", frozen_array(velocities, shape=positions.shape))
        object.__setattr__(self, "time", float(self.time))
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))):
            raise ValueError("IonState entries must be finite")
        check_separation(self.positions)

    @property
    def n_ions(self) -> int:
        return self.positions.shape[0]

    def flatten(self) -> np.ndarray:
        """Positions then velocities as one 6N vector"""
        return np.concatenate([self.positions.ravel(), self.velocities.ravel()])

    @classmethod
    def from_flat(cls, values: np.ndarray, time: float) -> "IonState":
        half = len(values) // 2
        return cls(np.reshape(values[:half], (-1, 3)), np.reshape(values[half:], (-1, 3)), time)


@dataclass(frozen=True)
class Trajectory(Sequence):
    """Sampled solution of the nonlinear equations of motion"""
    times: np.ndarray  # T
    positions: np.ndarray  # T×N×3
    velocities: np.ndarray  # T×N×3

    def __post_init__(self):
        object.__setattr__(self, "times", frozen_array(self.times))
        object.__setattr__(self, "positions", frozen_array(self.positions))
        object.__setattr__(self, "velocities", frozen_array(self.velocities, shape=self.positions.shape))

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, index) -> IonState:
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        return IonState(self.positions[index], self.velocities[index], self.times[index])

    def __iter__(self) -> Iterator[IonState]:
        return (self[i] for i in range(len(self)))


@dataclass(frozen=True)
class PseudoConfig:
    """Static pseudopotential: squared secular ratios with γ_x = 1"""
    gamma: Tuple[float, float, float]
    n_ions: int

    def __post_init__(self):
        gamma = _vector3(self.gamma, "gamma")
        if gamma[0] != 1.0:
            raise ConfigurationError(f"gamma_x must be exactly 1 (ω̄ = ω_x), got {gamma[0]!r}")
        if min(gamma) <= 0:
            raise ConfigurationError(f"All gamma entries must be positive, got {gamma}")
        if int(self.n_ions) != self.n_ions or self.n_ions < 1:
            raise ConfigurationError(f"n_ions must be a positive integer, got {self.n_ions!r}")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "n_ions", int(self.n_ions))

    @classmethod
    def from_trap(cls, config: TrapConfig, tolerance: float = 1e-6) -> "PseudoConfig":
        """
        Lowest-order pseudopotential of a trap.

        :param config: The trap; omega_rf must normalise ω̄ to the axial secular frequency
        :param tolerance: How far γ_x may deviate from 1 before the normalisation is rejected
        """
        gamma = config.pseudo_gamma
        if abs(gamma[0] - 1.0) > tolerance:
            a_x, q_x = config.mathieu_a[0], config.mathieu_q[0]
            hint = f"{TrapConfig.axial_omega_rf(a_x, q_x):.17g}" if a_x + q_x ** 2 / 2 > 0 else "n/a"
            raise ConfigurationError(
                f"omega_rf does not normalise to the axial frequency (γ_x = {gamma[0]:.6g}); use omega_rf = {hint}")
        if min(gamma) <= 0:
            raise ConfigurationError(f"Trap is not confining in the pseudopotential approximation: γ = {gamma}")
        return cls((1.0, float(gamma[1]), float(gamma[2])), config.n_ions)


@dataclass(frozen=True)
class NormalModeBasis:
    """Pseudopotential equilibrium with its normal modes"""
    equilibrium: np.ndarray  # R⁰, N×3
    mode_matrix: np.ndarray  # D, 3N×3N orthogonal, columns are mode vectors
    frequencies: np.ndarray  # ω_j ascending
    breathing_index: Optional[int]  # None when R⁰ = 0 (a single ion)
    xi_b: float  # ‖R⁰‖
    gamma: np.ndarray  # The squared secular ratios the basis was computed with

    def __post_init__(self):
        equilibrium = frozen_array(self.equilibrium)
        dim = equilibrium.size
        object.__setattr__(self, "equilibrium", equilibrium)
        object.__setattr__(self, "mode_matrix", frozen_array(self.mode_matrix, shape=(dim, dim)))
        object.__setattr__(self, "frequencies", frozen_array(self.frequencies, shape=(dim,)))
        object.__setattr__(self, "gamma", frozen_array(self.gamma, shape=(3,)))

    @property
    def n_ions(self) -> int:
        return self.equilibrium.shape[0]

    def mode(self, index: int) -> np.ndarray:
        """Mode vector D^j reshaped to N×3"""
        return self.mode_matrix[:, index].reshape(-1, 3)


@dataclass(frozen=True)
class ModeCouplingSet:
    """rf coupling of the pseudopotential modes: Θ̈ + [A − 2Q cos2t]Θ = G + 2F cos2t"""
    A_modes: np.ndarray
    Q_modes: np.ndarray
    G_vec: np.ndarray
    F_vec: np.ndarray

    def __post_init__(self):
        dim = len(self.G_vec)
        for name in ("A_modes", "Q_modes"):
            matrix = frozen_array(getattr(self, name), shape=(dim, dim))
            if np.max(np.abs(matrix - matrix.T), initial=0.0) > SYMMETRY_TOLERANCE:
                raise ValueError(f"{name} must be symmetric")
            object.__setattr__(self, name, matrix)
        object.__setattr__(self, "G_vec", frozen_array(self.G_vec, shape=(dim,)))
        object.__setattr__(self, "F_vec", frozen_array(self.F_vec, shape=(dim,)))

    @property
    def dim(self) -> int:
        return len(self.G_vec)


@dataclass(frozen=True)
class DecoupledMathieu:
    """A single mode obeying its own inhomogeneous Mathieu equation"""
    a_eff: float
    q_eff: float
    drive: float  # ξ_b for the breathing mode, 0 otherwise


@dataclass(frozen=True)
class DrivenResponse:
    """π-periodic particular solution Θ(t) = Θ⁰ + 2Σ Θ^{2n} cos 2nt"""
    coefficients: Mapping[int, np.ndarray]

    @property
    def theta0(self) -> np.ndarray:
        return self.coefficients[0]

    @property
    def theta2(self) -> np.ndarray:
        return self.coefficients.get(2, np.zeros_like(self.theta0))

    def at(self, t):
        return cosine_series(self.coefficients, t)

    def velocity_at(self, t):
        return cosine_series(self.coefficients, t, derivative=1)


@dataclass(frozen=True)
class IntegratorSettings:
    """Error control for the embedded Runge-Kutta integrations"""
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = np.inf
    method_order: int = 8  # 8 selects DOP853, 4 to 7 select RK45

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError(f"Tolerances must be positive, got rel_tol={self.rel_tol}, abs_tol={self.abs_tol}")
        if self.rel_tol < 1e-14:
            raise ValueError(f"rel_tol must be at least 1e-14, got {self.rel_tol}")
        if not self.max_step > 0:
            raise ValueError(f"max_step must be positive, got {self.max_step}")
        if int(self.method_order) != self.method_order or self.method_order < 4:
            raise ValueError(f"method_order must be an integer >= 4, got {self.method_order}")

    @property
    def method(self) -> str:
        return "DOP853" if self.method_order >= 8 else "RK45"

    def solve_ivp_kwargs(self) -> dict:
        return {"method": self.method, "rtol": self.rel_tol, "atol": self.abs_tol, "max_step": self.max_step}

    def halved(self) -> "IntegratorSettings":
        return replace(self, rel_tol=max(self.rel_tol / 2, 1e-14), abs_tol=self.abs_tol / 2)


@dataclass(frozen=True)
class InstabilityReport:
    """Monodromy eigenvalues found off the unit circle"""
    moduli: Tuple[float, ...]  # |λ| of every off-circle eigenvalue, descending
    eigenvalues: Tuple[complex, ...]

    @property
    def max_modulus(self) -> float:
        return max(self.moduli)


@dataclass(frozen=True)
class Monodromy:
    """The matrizant Φ(π) and its spectrum"""
    matrix: np.ndarray  # 2f×2f
    eigenvalues: np.ndarray  # 2f complex
    exponents: np.ndarray  # β_j in (0, 1) of the stable pairs, ascending
    instability: Optional[InstabilityReport] = None
    pairing_defect: float = 0.0  # max |λμ − 1| over the matched pairs

    @property
    def stable(self) -> bool:
        return self.instability is None

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))

    @property
    def max_modulus(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))


@dataclass(frozen=True)
class DampingSchedule:
    """Viscous damping held, decayed exponentially, then switched off; times relative to the start"""
    initial: float = 0.5
    hold: float = 100 * np.pi
    time_constant: float = 50 * np.pi
    decay_constants: float = 16.0  # the decay lasts this many time constants
    settle: float = 50 * np.pi

    def __post_init__(self):
        if min(self.initial, self.hold, self.decay_constants, self.settle) < 0 or self.time_constant <= 0:
            raise ValueError(f"Invalid damping schedule {self}")

    @property
    def decay_end(self) -> float:
        return self.hold + self.decay_constants * self.time_constant

    @property
    def duration(self) -> float:
        """Total length, rounded up to a whole number of rf periods"""
        return math.ceil((self.decay_end + self.settle) / np.pi - 1e-12) * np.pi

    def __call__(self, t: float) -> float:
        if t < self.hold:
            return self.initial
        if t < self.decay_end:
            return self.initial * math.exp(-(t - self.hold) / self.time_constant)
        return 0.0

    def slower(self, factor: float = 2.0) -> "DampingSchedule":
        return replace(self, time_constant=self.time_constant * factor)


@dataclass(frozen=True)
class PeriodicOrbit:
    """
    π-periodic, time-reversal invariant crystal solution R(t) = B₀ + 2Σ_{n≥1} B_{2n} cos 2nt.

    Only the non-negative harmonics are stored; B_{-2n} = B_{2n}.
    """
    coefficients: Mapping[int, np.ndarray]  # harmonic 2n -> N×3
    n_max: int = 4
    residual: float = float("nan")  # max e.o.m. defect over a period
    time_reversal_defect: float = 0.0  # max |Im B| or |B_2n − B_−2n| of the projection it came from

    def __post_init__(self):
        if 0 not in self.coefficients:
            raise ValueError("An orbit needs at least the average positions B_0")
        template = np.asarray(self.coefficients[0], dtype=float)
        coefficients = {}
        for n in range(self.n_max + 1):
            value = self.coefficients.get(2 * n, np.zeros_like(template))
            coefficients[2 * n] = frozen_array(value, shape=template.shape)
        extra = [h for h in self.coefficients if h not in coefficients]
        if extra:
            raise ValueError(f"Harmonics {extra} are outside 0..{2 * self.n_max} in steps of 2")
        object.__setattr__(self, "coefficients", coefficients)

    @property
    def n_ions(self) -> int:
        return self.coefficients[0].shape[0]

    @property
    def average_positions(self) -> np.ndarray:
        return self.coefficients[0]

    def coefficient(self, harmonic: int) -> np.ndarray:
        return self.coefficients[abs(harmonic)]

    def stacked(self, n_max: Optional[int] = None) -> np.ndarray:
        """(n_max+1)×N×3 array of B_0, B_2, ..."""
        n_max = self.n_max if n_max is None else n_max
        zeros = np.zeros_like(self.coefficients[0])
        return np.stack([self.coefficients.get(2 * n, zeros) for n in range(n_max + 1)])

    def truncated(self, n_max: int) -> "PeriodicOrbit":
        kept = {h: c for h, c in self.coefficients.items() if h <= 2 * n_max}
        return PeriodicOrbit(kept, n_max, float("nan"), self.time_reversal_defect)

    def positions_at(self, t) -> np.ndarray:
        return cosine_series(self.coefficients, t)

    def velocities_at(self, t) -> np.ndarray:
        return cosine_series(self.coefficients, t, derivative=1)

    def accelerations_at(self, t) -> np.ndarray:
        return cosine_series(self.coefficients, t, derivative=2)


@dataclass(frozen=True)
class MicromotionPrediction:
    """Micromotion amplitudes predicted from candidate average positions"""
    b2: np.ndarray  # predicted B_2, N×3
    ratio: np.ndarray  # B_2/B_0, NaN where |B_0| is below the threshold
    axial_bound_symmetric: float  # ½(q/4)³, x <-> -x symmetric crystals
    axial_bound_generic: float  # (ε/4)(q/4), no symmetry
    g2: Optional[np.ndarray] = None  # G_2 used for the rf-free axes
    warnings: Tuple[str, ...] = ()


@dataclass(frozen=True)
class HillSystem:
    """ü + [A − 2Q2 cos2t − 2Q4 cos4t] u = 0"""
    A: np.ndarray
    Q2: np.ndarray
    Q4: Optional[np.ndarray] = None
    labels: Tuple[Tuple[int, str], ...] = ()  # (ion, axis) per coordinate

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        dim = A.shape[0]
        Q4 = np.zeros((dim, dim)) if self.Q4 is None else np.atleast_2d(self.Q4)
        for name, matrix in (("A", A), ("Q2", np.atleast_2d(self.Q2)), ("Q4", Q4)):
            matrix = frozen_array(matrix, shape=(dim, dim))
            if np.max(np.abs(matrix - matrix.T)) > SYMMETRY_TOLERANCE:
                raise ValueError(f"Hill matrix {name} must be symmetric")
            object.__setattr__(self, name, matrix)
        labels = tuple((int(i), str(axis)) for i, axis in self.labels) or tuple(
            (i // 3, AXES[i % 3]) for i in range(dim))
        if len(labels) != dim:
            raise ValueError(f"Expected {dim} coordinate labels, got {len(labels)}")
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def has_q4(self) -> bool:
        return bool(np.any(self.Q4 != 0))

    def coefficient_matrix(self, t: float) -> np.ndarray:
        return self.A - 2 * self.Q2 * np.cos(2 * t) - 2 * self.Q4 * np.cos(4 * t)


@dataclass(frozen=True)
class FloquetMode:
    """A characteristic exponent with its ladder of harmonic vectors C_{2n}"""
    beta: float
    ladder: Mapping[int, np.ndarray] = field(default_factory=dict)  # 2n -> C_{2n}
    kernel_dim: int = 1

    def __post_init__(self):
        beta = float(self.beta)
        if not INTEGRAL_EXCLUSION < beta < 1 - INTEGRAL_EXCLUSION:
            raise ValueError(f"Exponent β = {beta} must lie in (0, 1) at least {INTEGRAL_EXCLUSION} from either end")
        if int(self.kernel_dim) != self.kernel_dim or self.kernel_dim < 1:
            raise ValueError(f"kernel_dim must be a positive integer, got {self.kernel_dim!r}")
        object.__setattr__(self, "beta", beta)

    @property
    def n_max(self) -> int:
        return max((abs(h) for h in self.ladder), default=0) // 2

    def ladder_norms(self) -> Dict[int, float]:
        return {h: float(np.linalg.norm(c)) for h, c in sorted(self.ladder.items())}


@dataclass(frozen=True)
class ExponentSpectrum(Sequence):
    """Exponents found by the continued-inversion search, plus oracle diagnostics when incomplete"""
    modes: Tuple[FloquetMode, ...]
    instability: Optional[InstabilityReport] = None
    oracle: Optional[Monodromy] = None

    def __len__(self) -> int:
        return len(self.modes)

    def __getitem__(self, index):
        return self.modes[index]

    @property
    def betas(self) -> np.ndarray:
        return np.array([mode.beta for mode in self.modes])

    @property
    def multiplicity(self) -> int:
        return sum(mode.kernel_dim for mode in self.modes)


@dataclass(frozen=True)
class FLTransform:
    """
    Floquet-Lyapunov transformation Γ(t) = [[U, U*], [V, V*]] with B = diag(iβ) ⊕ diag(−iβ),
    so that the matrizant factorises as Φ(t) = Γ(t) e^{Bt} Γ⁻¹(0).
    """
    betas: np.ndarray  # ascending
    U_fourier: Mapping[int, np.ndarray]  # 2n -> f×f complex
    V_fourier: Mapping[int, np.ndarray]
    normalization_applied: bool = False

    @property
    def dim(self) -> int:
        return len(self.betas)

    def _series(self, fourier: Mapping[int, np.ndarray], t: float) -> np.ndarray:
        return sum(matrix * np.exp(1j * h * t) for h, matrix in fourier.items())

    def U(self, t: float) -> np.ndarray:
        return self._series(self.U_fourier, t)

    def V(self, t: float) -> np.ndarray:
        return self._series(self.V_fourier, t)

    def gamma(self, t: float) -> np.ndarray:
        u, v = self.U(t), self.V(t)
        return np.block([[u, u.conj()], [v, v.conj()]])

    def gamma_inverse(self, t: float) -> np.ndarray:
        """Closed-form inverse, valid once VᵀU = i/2"""
        u, v = self.U(t), self.V(t)
        return np.block([[1j * v.conj().T, -1j * u.conj().T], [-1j * v.T, 1j * u.T]])

    @property
    def exponent_matrix(self) -> np.ndarray:
        return np.diag(np.concatenate([1j * self.betas, -1j * self.betas]))

    def propagator(self, t: float) -> np.ndarray:
        """e^{Bt} as its diagonal"""
        return np.exp(np.concatenate([1j * self.betas, -1j * self.betas]) * t)

    def matrizant(self, t: float) -> np.ndarray:
        return (self.gamma(t) * self.propagator(t)[None, :]) @ self.gamma_inverse(0.0)
