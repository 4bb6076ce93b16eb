"""
Linearisation of the equations of motion about a periodic crystal orbit.

Small deviations u = R − R^π(t) obey the Hill system

    ü + [A − 2Q2 cos 2t − 2Q4 cos 4t] u = 0,

where A and Q2 combine the trap parameters with the harmonics of the Coulomb Hessian K(t) = K₀ − 2K₂cos2t − 2K₄cos4t.
"""
import logging
from typing import Dict, Iterable, Mapping

import numpy as np

from ..data.models import HillSystem, PeriodicOrbit, TrapConfig
from ..util.fourier import cosine_project, period_grid
from .trap_model import pair_geometry

LOGGER = logging.getLogger(__name__)

DEFAULT_HARMONICS = (0, 2, 4)
HESSIAN_SAMPLES = 512


def coulomb_hessian(positions: np.ndarray) -> np.ndarray:
    """
    Second derivatives of Σ_{i<j} 1/‖R_i − R_j‖ with respect to the flattened coordinates.

    Args:
        positions: N×3 configuration, or a stack (T, N, 3)

    Returns:
        3N×3N symmetric matrix (or a (T, 3N, 3N) stack), indexed 3*i + α
    """
    positions = np.asarray(positions, dtype=float)
    d, inv_r = pair_geometry(positions)
    n = positions.shape[-2]
    identity = np.eye(3)
    # Off-diagonal ion blocks (δ r² − 3 d dᵀ) / r⁵; the i == i blocks vanish because inv_r does
    blocks = (inv_r[..., None, None] ** 3 * identity
              - 3 * inv_r[..., None, None] ** 5 * d[..., :, :, :, None] * d[..., :, :, None, :])
    diagonal = -blocks.sum(axis=-3)
    index = np.arange(n)
    blocks[..., index, index, :, :] = diagonal
    hessian = np.swapaxes(blocks, -3, -2).reshape(positions.shape[:-2] + (3 * n, 3 * n))
    return 0.5 * (hessian + np.swapaxes(hessian, -1, -2))


def sample_hessian(orbit: PeriodicOrbit, times) -> np.ndarray:
    """K(t) along the orbit at each of the given times, shape (T, 3N, 3N)"""
    return coulomb_hessian(orbit.positions_at(np.atleast_1d(times)))


def hessian_harmonics(orbit: PeriodicOrbit, harmonics: Iterable[int] = DEFAULT_HARMONICS,
                      samples: int = HESSIAN_SAMPLES) -> Dict[int, np.ndarray]:
    """
    Cosine harmonics of the Coulomb Hessian along an orbit, using K = K₀ − 2Σ_{n≥1} K_{2n} cos 2nt.

    :param orbit: Converged π-periodic crystal orbit
    :param harmonics: Even, non-negative harmonics to return
    :param samples: Quadrature points over one period
    """
    harmonics = sorted(set(int(h) for h in harmonics))
    if any(h < 0 or h % 2 for h in harmonics):
        raise ValueError(f"Hessian harmonics must be even and non-negative, got {harmonics}")
    times = period_grid(samples)
    projection = cosine_project(sample_hessian(orbit, times), max(harmonics) // 2)
    result = {}
    for h in harmonics:
        matrix = projection[h] if h == 0 else -projection[h]
        result[h] = 0.5 * (matrix + matrix.T)
    LOGGER.debug("Hessian harmonic norms: "
                 + ", ".join(f"K{h}={np.linalg.norm(m):.3e}" for h, m in result.items()))
    return result


def assemble_hill(config: TrapConfig, harmonics: Mapping[int, np.ndarray]) -> HillSystem:
    """
    A = diag(a_α) + εK₀, Q2 = diag(q_α) + εK₂ and, when K₄ is present, Q4 = εK₄.

    The quadrupole drive has no fourth harmonic, so Q4 carries Coulomb terms only.
    """
    if 0 not in harmonics or 2 not in harmonics:
        raise ValueError(f"Need at least the K0 and K2 harmonics, got {sorted(harmonics)}")
    eps = config.epsilon
    k0 = np.asarray(harmonics[0], dtype=float)
    if k0.shape != (config.dim, config.dim):
        raise ValueError(f"Hessian harmonics of shape {k0.shape} do not match {config.n_ions} ions")
    a_diag = np.diag(np.tile(config.mathieu_a, config.n_ions))
    q_diag = np.diag(np.tile(config.mathieu_q, config.n_ions))
    q4 = eps * np.asarray(harmonics[4], dtype=float) if 4 in harmonics else None
    return HillSystem(a_diag + eps * k0, q_diag + eps * np.asarray(harmonics[2], dtype=float), q4)
