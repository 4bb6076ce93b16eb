"""
This module contains functions to convert simulation results into tidy pandas tables for plotting.
"""
import warnings
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from ..data.models import AXES, FloquetMode, MicromotionPrediction, PeriodicOrbit, Trajectory
from .fourier import period_grid

TRAJECTORY_COLUMNS = ["t", "ion", "x", "y", "z", "vx", "vy", "vz"]
SWEEP_COLUMNS = ["a", "q", "status", "min_beta", "max_abs_lambda"]


def trajectory_frame(trajectory: Trajectory) -> pd.DataFrame:
    """
    Long-format table of a trajectory, one row per time and ion.

    Args:
        trajectory: sampled nonlinear trajectory.

    Returns:
        DataFrame with columns t, ion, x, y, z, vx, vy, vz.
    """
    n_times, n_ions, _ = trajectory.positions.shape
    data = np.concatenate([trajectory.positions, trajectory.velocities], axis=2).reshape(n_times * n_ions, 6)
    frame = pd.DataFrame(data, columns=TRAJECTORY_COLUMNS[2:])
    frame.insert(0, "ion", np.tile(np.arange(n_ions), n_times))
    frame.insert(0, "t", np.repeat(trajectory.times, n_ions))
    return frame


def orbit_trajectory(orbit: PeriodicOrbit, samples: int = 256) -> Trajectory:
    """One rf period of an orbit reconstructed from its harmonics"""
    times = period_grid(samples)
    return Trajectory(times, orbit.positions_at(times), orbit.velocities_at(times))


def micromotion_frame(orbit: PeriodicOrbit, measured: np.ndarray, prediction: MicromotionPrediction,
                      q: Sequence[float]) -> pd.DataFrame:
    """
    Measured against predicted micromotion, one row per ion and axis.

    Axes with rf get the predicted ratio −q/4; axes without rf are compared against the modulated-Coulomb estimate.
    Masked coordinates (|B₀| at or below the ratio threshold) have NaN ratios and deviation.

    Args:
        orbit: relaxed orbit (B₀, B₂ taken from it).
        measured: B₂/B₀ from `micromotion_ratio`.
        prediction: result of `predict_micromotion` at the orbit's average positions.
        q: Mathieu q per axis.

    Returns:
        DataFrame with columns ion, axis, b0, b2, measured_ratio, predicted_ratio, deviation_percent, bound.
    """
    b0 = orbit.coefficient(0)
    b2 = orbit.coefficient(2)
    rows = []
    for ion in range(orbit.n_ions):
        for alpha, axis in enumerate(AXES):
            predicted = -q[alpha] / 4 if q[alpha] != 0 else prediction.ratio[ion, alpha]
            bound = np.nan if q[alpha] != 0 else prediction.axial_bound_symmetric
            ratio = measured[ion, alpha]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                deviation = 100 * abs((ratio - predicted) / predicted) if predicted else np.nan
            rows.append((ion, axis, b0[ion, alpha], b2[ion, alpha], ratio, predicted, deviation, bound))
    return pd.DataFrame(rows, columns=["ion", "axis", "b0", "b2", "measured_ratio", "predicted_ratio",
                                       "deviation_percent", "bound"])


def mode_direction_frame(modes: Sequence[FloquetMode], labels: Sequence) -> pd.DataFrame:
    """
    C₀ of every mode per coordinate, for the 'primary direction of oscillation' plots.

    Args:
        modes: modes with ladders, ascending in β.
        labels: (ion, axis) of each coordinate.

    Returns:
        DataFrame with columns mode, beta, ion, axis, c0, dominant.
    """
    rows = []
    for index, mode in enumerate(modes):
        c0 = np.real(mode.ladder[0])
        dominant = int(np.argmax(np.abs(c0)))
        for k, (ion, axis) in enumerate(labels):
            rows.append((index, mode.beta, ion, axis, c0[k], k == dominant))
    return pd.DataFrame(rows, columns=["mode", "beta", "ion", "axis", "c0", "dominant"])


def comparison_frame(times: np.ndarray, reconstructed: np.ndarray, integrated: np.ndarray,
                     labels: Sequence) -> pd.DataFrame:
    """
    Mode-expansion reconstruction against direct integration of the linearised motion.

    Args:
        times: sample times.
        reconstructed: (T, 2f) phase-space vectors from the FL transform.
        integrated: (T, 2f) phase-space vectors from the integrator.
        labels: (ion, axis) of each of the f coordinates.

    Returns:
        DataFrame with columns t, ion, axis, reconstructed, integrated, abs_error (positions only).
    """
    f = len(labels)
    frame = pd.DataFrame({
        "t": np.repeat(times, f),
        "ion": np.tile([ion for ion, _ in labels], len(times)),
        "axis": np.tile([axis for _, axis in labels], len(times)),
        "reconstructed": reconstructed[:, :f].ravel(),
        "integrated": integrated[:, :f].ravel(),
    })
    frame["abs_error"] = (frame["reconstructed"] - frame["integrated"]).abs()
    return frame


def gamma_frame(times: np.ndarray, gammas: np.ndarray) -> pd.DataFrame:
    """
    Long-format table of Γ(t) samples.

    Returns:
        DataFrame with columns t, row, col, re, im.
    """
    n_times, size, _ = gammas.shape
    rows, cols = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    return pd.DataFrame({
        "t": np.repeat(times, size * size),
        "row": np.tile(rows.ravel(), n_times),
        "col": np.tile(cols.ravel(), n_times),
        "re": gammas.real.ravel(),
        "im": gammas.imag.ravel(),
    })


def evolution_frame(times: np.ndarray, chis: np.ndarray, betas: Sequence[float]) -> pd.DataFrame:
    """
    Mode coordinates χ_j(t) of the upper block (the lower block is their complex conjugate).

    Returns:
        DataFrame with columns t, mode, beta, re, im, abs.
    """
    f = len(betas)
    upper = chis[:, :f]
    return pd.DataFrame({
        "t": np.repeat(times, f),
        "mode": np.tile(np.arange(f), len(times)),
        "beta": np.tile(np.asarray(betas, dtype=float), len(times)),
        "re": upper.real.ravel(),
        "im": upper.imag.ravel(),
        "abs": np.abs(upper).ravel(),
    })


def sweep_frame(rows: Iterable[Mapping]) -> pd.DataFrame:
    """Stability map rows as a table with columns a, q, status, min_beta, max_abs_lambda"""
    return pd.DataFrame(list(rows), columns=SWEEP_COLUMNS)
