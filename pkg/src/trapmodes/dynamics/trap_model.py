"""
Nondimensional trap + Coulomb potential and the nonlinear equations of motion.

Time is rescaled as t -> Ωt/2 throughout, so the rf period is π and the drive is cos 2t:

    R̈_i = −(a − 2q cos 2t) R_i + ε Σ_{j≠i} (R_i − R_j) / ‖R_i − R_j‖³
"""
import logging
from typing import Tuple

import numpy as np

from ..data.exceptions import SingularConfigurationError
from ..data.models import COINCIDENCE_THRESHOLD, IonState, TrapConfig

LOGGER = logging.getLogger(__name__)


def pair_geometry(positions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pairwise separations of one configuration, or of a stack of them.

    Args:
        positions: array of shape (..., N, 3)

    Returns:
        (d, inv_r) where d[..., i, j, :] = R_i − R_j and inv_r[..., i, j] = 1/‖R_i − R_j‖ (0 on the diagonal)

    Raises:
        SingularConfigurationError: two ions closer than the coincidence threshold
    """
    positions = np.asarray(positions, dtype=float)
    d = positions[..., :, None, :] - positions[..., None, :, :]
    r = np.sqrt(np.einsum("...k,...k->...", d, d))
    n = positions.shape[-2]
    diagonal = np.eye(n, dtype=bool)
    if n > 1 and np.min(r[..., ~diagonal]) < COINCIDENCE_THRESHOLD:
        raise SingularConfigurationError(f"Two ions are only {np.min(r[..., ~diagonal]):.3e} apart")
    with np.errstate(divide="ignore"):
        inv_r = np.where(diagonal, 0.0, 1.0 / np.where(diagonal, 1.0, r))
    return d, inv_r


def coulomb_acceleration(positions: np.ndarray) -> np.ndarray:
    """Σ_{j≠i} (R_i − R_j)/‖R_i − R_j‖³ for a configuration or a stack of them"""
    d, inv_r = pair_geometry(positions)
    return np.einsum("...ijk,...ij->...ik", d, inv_r ** 3)


def trap_frequencies(config: TrapConfig, t: float) -> np.ndarray:
    """Λ_α = (Ω²/4)(a_α − 2q_α cos Ωt) at rescaled time t (so cos Ωt = cos 2t)"""
    return config.omega_rf ** 2 / 4 * (config.mathieu_a - 2 * config.mathieu_q * np.cos(2 * t))


def potential_energy(config: TrapConfig, state: IonState) -> float:
    """½ Σ Λ_α R_{i,α}² + Σ_{i<j} 1/‖R_i − R_j‖ at the state's time"""
    _, inv_r = pair_geometry(state.positions)
    trap = 0.5 * np.sum(trap_frequencies(config, state.time) * state.positions ** 2)
    return float(trap + 0.5 * np.sum(inv_r))


def rescaled_potential(config: TrapConfig, state: IonState) -> float:
    """The potential in rescaled time, ε·V, whose negative gradient is `eom_rhs`"""
    return config.epsilon * potential_energy(config, state)


def acceleration(config: TrapConfig, positions: np.ndarray, t) -> np.ndarray:
    """
    Right-hand side of the equations of motion on raw arrays.

    `positions` may be a stack (T, N, 3) with `t` an array of T times.
    """
    positions = np.asarray(positions, dtype=float)
    cos2t = np.cos(2 * np.asarray(t, dtype=float))[..., None, None]
    stiffness = config.mathieu_a - 2 * config.mathieu_q * cos2t
    return -stiffness * positions + config.epsilon * coulomb_acceleration(positions)


def eom_rhs(config: TrapConfig, state: IonState) -> np.ndarray:
    """R̈ for every ion at the state's time"""
    if state.n_ions != config.n_ions:
        raise ValueError(f"State has {state.n_ions} ions, config expects {config.n_ions}")
    return acceleration(config, state.positions, state.time)


def dynamic_matrix(positions: np.ndarray) -> np.ndarray:
    """G_ij = δ_ij Σ_{m≠i} ‖R_i − R_m‖⁻³ − (1 − δ_ij) ‖R_i − R_j‖⁻³"""
    _, inv_r = pair_geometry(positions)
    cubes = inv_r ** 3
    return np.diag(cubes.sum(axis=1)) - cubes
