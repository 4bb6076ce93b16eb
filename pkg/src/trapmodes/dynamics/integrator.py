"""
Error-controlled integration of the nonlinear and linearised equations of motion.

The matrizant Φ(t) of a Hill system, and its monodromy Φ(π), are the oracle every spectral result is checked against.
"""
import logging
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import optimize
from scipy.integrate import solve_ivp

from ..data.exceptions import SingularConfigurationError, TrapModesException
from ..data.models import (
    HillSystem, InstabilityReport, IntegratorSettings, IonState, Monodromy, TrapConfig, Trajectory,
)
from .trap_model import acceleration

LOGGER = logging.getLogger(__name__)

ESCAPE_RADIUS = 1e3
UNIT_CIRCLE_TOLERANCE = 1e-6


class StiffnessError(TrapModesException):
    """The step size collapsed, usually because two ions nearly collided"""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


class IonEscapeError(TrapModesException):
    """An ion left the escape radius, so the configuration is not confined"""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


def integrate_nonlinear(config: TrapConfig, state: IonState, t_final: float,
                        damping: Optional[Callable[[float], float]] = None,
                        settings: Optional[IntegratorSettings] = None, sample_times=None,
                        escape_radius: float = ESCAPE_RADIUS) -> Trajectory:
    """
    Integrates R̈ = −(a − 2q cos2t)R + εΣ(R_i − R_j)/r³ − damping(t)Ṙ from `state` to `t_final`.

    :param damping: Friction rate as a function of absolute time; none when omitted
    :param sample_times: Output times in [state.time, t_final]; the accepted solver steps when omitted
    :param escape_radius: Any coordinate beyond this raises IonEscapeError
    :raises StiffnessError: The step size underflowed (near collision); carries the last time reached
    """
    settings = settings or IntegratorSettings()
    if state.n_ions != config.n_ions:
        raise ValueError(f"State has {state.n_ions} ions, config expects {config.n_ions}")
    n = config.n_ions
    reached = [state.time]

    def rhs(t, y):
        reached[0] = t
        positions = y[:3 * n].reshape(n, 3)
        velocities = y[3 * n:]
        acc = acceleration(config, positions, t).ravel()
        if damping is not None:
            acc = acc - damping(t) * velocities
        return np.concatenate([velocities, acc])

    def escape(t, y):
        return escape_radius - np.max(np.abs(y[:3 * n]))

    escape.terminal = True
    t_eval = None if sample_times is None else np.asarray(sample_times, dtype=float)
    try:
        solution = solve_ivp(rhs, (state.time, t_final), state.flatten(), t_eval=t_eval, events=escape,
                             **settings.solve_ivp_kwargs())
    except SingularConfigurationError as ex:
        raise StiffnessError(f"Ions collided near t = {reached[0]:.6g}", reached[0]) from ex
    if solution.status == -1:
        raise StiffnessError(f"Integration failed near t = {solution.t[-1]:.6g}: {solution.message}",
                             float(solution.t[-1]))
    if solution.status == 1:
        time = float(solution.t_events[0][0])
        raise IonEscapeError(f"An ion left radius {escape_radius} at t = {time:.6g}", time)
    positions = solution.y[:3 * n].T.reshape(-1, n, 3)
    velocities = solution.y[3 * n:].T.reshape(-1, n, 3)
    return Trajectory(solution.t, positions, velocities)


def _phase_space_matrix(hill: HillSystem, t: float) -> np.ndarray:
    f = hill.dim
    return np.block([[np.zeros((f, f)), np.eye(f)], [-hill.coefficient_matrix(t), np.zeros((f, f))]])


def integrate_hill(hill: HillSystem, initial: np.ndarray, times, settings: Optional[IntegratorSettings] = None
                   ) -> np.ndarray:
    """
    Direct integration of ü + [A − 2Q2 cos2t − 2Q4 cos4t]u = 0 from t = 0.

    :param initial: Phase-space vector (u, u̇) at t = 0
    :param times: Non-negative output times, ascending
    :return: Array (T, 2f) of phase-space vectors
    """
    settings = settings or IntegratorSettings()
    times = np.atleast_1d(np.asarray(times, dtype=float))
    initial = np.asarray(initial, dtype=float)
    if initial.shape != (2 * hill.dim,):
        raise ValueError(f"Initial phase-space vector must have length {2 * hill.dim}, got {initial.shape}")
    solution = solve_ivp(lambda t, y: _phase_space_matrix(hill, t) @ y, (0.0, float(times[-1])), initial,
                         t_eval=times, **settings.solve_ivp_kwargs())
    if not solution.success:
        raise StiffnessError(f"Hill integration failed: {solution.message}", float(solution.t[-1]))
    return solution.y.T


def matrizant_at(hill: HillSystem, t: float, settings: Optional[IntegratorSettings] = None) -> np.ndarray:
    """Φ(t) with Φ(0) = 1, one integration per column of the identity"""
    settings = settings or IntegratorSettings()
    size = 2 * hill.dim
    if t == 0:
        return np.eye(size)

    columns = []
    for k, start in enumerate(np.eye(size)):
        solution = solve_ivp(lambda time, y: _phase_space_matrix(hill, time) @ y, (0.0, t), start,
                             **settings.solve_ivp_kwargs())
        if not solution.success:
            raise StiffnessError(f"Matrizant column {k} failed: {solution.message}", float(solution.t[-1]))
        columns.append(solution.y[:, -1])
    return np.column_stack(columns)


def pair_eigenvalues(eigenvalues: np.ndarray) -> Tuple[List[Tuple[complex, complex]], float]:
    """
    Matches each eigenvalue λ with the partner μ that brings λμ closest to 1.

    Eigenvalues are visited by ascending argument, which also breaks ties between candidate partners.

    :return: The pairs and the largest |λμ − 1| among them
    """
    remaining = sorted((complex(value) for value in eigenvalues), key=lambda value: (np.angle(value), abs(value)))
    pairs, defect = [], 0.0
    while len(remaining) > 1:
        first = remaining.pop(0)
        products = [abs(first * other - 1) for other in remaining]
        partner = remaining.pop(int(np.argmin(products)))
        defect = max(defect, min(products))
        pairs.append((first, partner))
    if remaining:
        raise ValueError(f"Cannot pair an odd number of eigenvalues ({len(eigenvalues)})")
    return pairs, defect


def monodromy_from_matrix(matrix: np.ndarray, tolerance: float = UNIT_CIRCLE_TOLERANCE) -> Monodromy:
    """Spectrum, exponents and instability report of a one-period matrizant"""
    eigenvalues = np.linalg.eigvals(matrix)
    pairs, defect = pair_eigenvalues(eigenvalues)
    exponents, off_circle = [], []
    for first, second in pairs:
        if max(abs(abs(first) - 1), abs(abs(second) - 1)) > tolerance:
            off_circle.extend([first, second])
        else:
            exponents.append(abs(np.angle(first)) / np.pi)
    instability = None
    if off_circle:
        off_circle.sort(key=abs, reverse=True)
        instability = InstabilityReport(tuple(abs(value) for value in off_circle), tuple(off_circle))
        LOGGER.info(f"Monodromy has {len(off_circle)} eigenvalues off the unit circle, max |λ| = "
                    f"{instability.max_modulus:.6g}")
    return Monodromy(matrix, eigenvalues, np.sort(exponents), instability, defect)


def matrizant(hill: HillSystem, settings: Optional[IntegratorSettings] = None,
              tolerance: float = UNIT_CIRCLE_TOLERANCE) -> Monodromy:
    """
    Monodromy Φ(π) of a Hill system with its paired spectrum.

    Stable pairs e^{±iβπ} yield exponents β = |arg λ|/π in [0, 1]; eigenvalues whose modulus differs from 1 by more
    than `tolerance` are reported in an InstabilityReport instead.
    """
    monodromy = monodromy_from_matrix(matrizant_at(hill, np.pi, settings), tolerance)
    LOGGER.debug(f"Monodromy determinant {monodromy.determinant:.12f}, pairing defect {monodromy.pairing_defect:.3e}")
    return monodromy


def mathieu_hill(a: float, q: float) -> HillSystem:
    return HillSystem(np.array([[a]]), np.array([[q]]))


def mathieu_exponent(a: float, q: float, settings: Optional[IntegratorSettings] = None) -> float:
    """Characteristic exponent of ü + (a − 2q cos2t)u = 0, NaN outside the stability zones"""
    monodromy = matrizant(mathieu_hill(a, q), settings)
    if not monodromy.stable:
        return float("nan")
    return float(monodromy.exponents[0])


def mathieu_stability_edge(a: float, q_lo: float, q_hi: float, settings: Optional[IntegratorSettings] = None,
                           xtol: float = 1e-9) -> float:
    """
    Boundary of the scalar Mathieu stability zone between q_lo (stable) and q_hi (unstable).

    A scalar Hill equation is stable while |tr Φ(π)| < 2, which has a sign change at the edge.
    """
    def margin(q):
        return abs(np.trace(matrizant_at(mathieu_hill(a, q), np.pi, settings))) - 2

    if margin(q_lo) >= 0 or margin(q_hi) <= 0:
        raise ValueError(f"q range [{q_lo}, {q_hi}] does not bracket a stability edge at a = {a}")
    return float(optimize.brentq(margin, q_lo, q_hi, xtol=xtol))
