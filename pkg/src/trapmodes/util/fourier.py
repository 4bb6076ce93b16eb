"""
Helpers for π-periodic functions sampled over one rf period.

An even, real, π-periodic function is held as its non-negative harmonics {0: X_0, 2: X_2, ...}
with f(t) = X_0 + 2 Σ_{n≥1} X_{2n} cos(2nt), i.e. the e^{i2nt} coefficients with X_{-2n} = X_{2n}.
"""
from typing import Dict, Mapping

import numpy as np


def period_grid(samples: int, start: float = 0.0) -> np.ndarray:
    """Uniform sample times covering [start, start + π)"""
    if samples < 1:
        raise ValueError(f"Need at least one sample per period, got {samples}")
    return start + np.pi * np.arange(samples) / samples


def cosine_series(coefficients: Mapping[int, np.ndarray], t, derivative: int = 0) -> np.ndarray:
    """
    Evaluates an even cosine series, or one of its first two time derivatives.

    Args:
        coefficients: harmonic 2n (n >= 0) -> coefficient array, all of the same shape
        t: a time or 1D array of times
        derivative: 0, 1 or 2

    Returns:
        Array of shape t.shape + coefficient shape
    """
    if derivative not in (0, 1, 2):
        raise ValueError(f"Only derivatives 0, 1 and 2 are supported, got {derivative}")
    times = np.asarray(t, dtype=float)
    flat_times = np.atleast_1d(times)
    shape = np.shape(next(iter(coefficients.values())))
    result = np.zeros(flat_times.shape + shape)
    for harmonic, value in coefficients.items():
        if harmonic < 0 or harmonic % 2:
            raise ValueError(f"Harmonics must be non-negative and even, got {harmonic}")
        if harmonic == 0 and derivative:
            continue
        weight = 1.0 if harmonic == 0 else 2.0
        phase = harmonic * flat_times
        if derivative == 0:
            basis = np.cos(phase)
        elif derivative == 1:
            basis = -harmonic * np.sin(phase)
        else:
            basis = -harmonic ** 2 * np.cos(phase)
        result += weight * np.multiply.outer(basis, np.asarray(value, dtype=float))
    return result.reshape(times.shape + shape)


def fourier_project(samples: np.ndarray, n_max: int) -> Dict[int, np.ndarray]:
    """
    Complex coefficients X_{2n} = <f(t) e^{-i2nt}> for |n| <= n_max.

    The samples must be uniform over one period starting at a multiple of π (see `period_grid`);
    the rectangle rule used here is the trapezoidal rule for periodic data.
    """
    samples = np.asarray(samples)
    count = samples.shape[0]
    if count < 2 * n_max + 1:
        raise ValueError(f"{count} samples cannot resolve {n_max} harmonics")
    spectrum = np.fft.fft(samples, axis=0) / count
    return {2 * n: spectrum[n % count] for n in range(-n_max, n_max + 1)}


def cosine_project(samples: np.ndarray, n_max: int) -> Dict[int, np.ndarray]:
    """Real cosine coefficients (1/M) Σ f(t_k) cos(2n t_k) for 0 <= n <= n_max"""
    projection = fourier_project(samples, n_max)
    return {2 * n: projection[2 * n].real for n in range(n_max + 1)}
