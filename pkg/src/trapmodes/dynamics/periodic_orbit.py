"""
The π-periodic, time-reversal invariant crystal orbit R^π(t) = B₀ + 2Σ B_{2n} cos 2nt.

A crystal is found by integrating with a friction term that is slowly switched off, checking the motion has become
periodic, projecting one period onto its harmonics, then polishing the harmonics by harmonic-balance Newton.
"""
import logging
from typing import Dict, Iterable, Optional

import numpy as np
from scipy import optimize

from ..data.exceptions import ConfigurationError, TrapModesException
from ..data.models import (
    DampingSchedule, InstabilityReport, IntegratorSettings, IonState, MicromotionPrediction, Monodromy, PeriodicOrbit,
    PseudoConfig, TrapConfig,
)
from ..util.fourier import cosine_series, fourier_project, period_grid
from .integrator import IonEscapeError, integrate_nonlinear, matrizant
from .linearization import DEFAULT_HARMONICS, assemble_hill, coulomb_hessian, hessian_harmonics
from .pseudopotential import find_equilibrium
from .trap_model import acceleration, dynamic_matrix, pair_geometry

LOGGER = logging.getLogger(__name__)

PROJECTION_SAMPLES = 256
DEFECT_SAMPLES = 512
PERIODICITY_PERIODS = 5
PERIODICITY_TOLERANCE = 1e-7
NEWTON_TOLERANCE = 1e-10
RATIO_THRESHOLD = 1e-3
CONSISTENCY_TOLERANCE = 0.05
TRIVIAL_AMPLITUDE = 1e-9
STABILITY_ATTEMPTS = 2
ESCAPE_KICK = 0.05
MAX_ESCAPE_PERIODS = 4000


class NonCrystalError(TrapModesException):
    """The damped motion did not settle onto a π-periodic orbit"""

    def __init__(self, message: str, deviation: float):
        super().__init__(message)
        self.deviation = deviation


class RefinementFailureError(TrapModesException):
    """Harmonic-balance Newton did not converge; the raw Fourier projection is attached"""

    def __init__(self, message: str, raw_orbit: PeriodicOrbit):
        super().__init__(message)
        self.raw_orbit = raw_orbit


class UnstableCrystalError(TrapModesException):
    """The relaxed orbit is periodic but its linearisation has monodromy eigenvalues off the unit circle"""

    def __init__(self, message: str, orbit: PeriodicOrbit, instability: InstabilityReport):
        super().__init__(message)
        self.orbit = orbit
        self.instability = instability


def pseudo_equilibrium(config: TrapConfig, seed: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Pseudopotential equilibrium in the units of `config`.

    When Ω does not normalise γ_x to 1 the problem is solved with γ/γ_x and rescaled by γ_x^{-1/3}.
    """
    gamma = config.pseudo_gamma
    if min(gamma) <= 0:
        raise ConfigurationError(f"Trap is not confining in the pseudopotential approximation: γ = {gamma}")
    scale = gamma[0] ** (-1 / 3)
    pseudo = PseudoConfig((1.0, gamma[1] / gamma[0], gamma[2] / gamma[0]), config.n_ions)
    scaled_seed = None if seed is None else np.asarray(seed) / scale
    return scale * find_equilibrium(pseudo, scaled_seed)


def seed_state(config: TrapConfig, rng_seed: Optional[int] = None, perturbation: float = 1e-3,
               positions: Optional[np.ndarray] = None) -> IonState:
    """
    Starting state for a relaxation: an equilibrium (the pseudopotential one by default) plus a small displacement.

    The displacement follows the fixed pattern perturbation·cos(1.3k + 0.7) over the flattened coordinates, or is
    drawn from a normal distribution when `rng_seed` is given.
    """
    base = pseudo_equilibrium(config) if positions is None else np.asarray(positions, dtype=float)
    if rng_seed is None:
        k = np.arange(base.size)
        offset = perturbation * np.cos(1.3 * k + 0.7)
    else:
        rng = np.random.default_rng(rng_seed)
        offset = rng.normal(scale=perturbation, size=base.size)
    return IonState(base + offset.reshape(base.shape), time=0.0)


def _projection_orbit(projection: Dict[int, np.ndarray], n_max: int) -> PeriodicOrbit:
    defect = max(
        max(np.max(np.abs(projection[2 * n].imag)), np.max(np.abs(projection[2 * n] - projection[-2 * n])))
        for n in range(n_max + 1))
    coefficients = {2 * n: projection[2 * n].real for n in range(n_max + 1)}
    return PeriodicOrbit(coefficients, n_max, time_reversal_defect=float(defect))


def relax_to_crystal(config: TrapConfig, seed: Optional[IonState] = None, schedule: Optional[DampingSchedule] = None,
                     settings: Optional[IntegratorSettings] = None, n_max: int = 4,
                     periodicity_periods: int = PERIODICITY_PERIODS,
                     periodicity_tol: float = PERIODICITY_TOLERANCE, refine: bool = True,
                     stability_attempts: int = STABILITY_ATTEMPTS, harmonics: Iterable[int] = DEFAULT_HARMONICS,
                     escape_kick: float = ESCAPE_KICK) -> PeriodicOrbit:
    """
    Relaxes a seed onto a stable periodic crystal orbit.

    Strong friction can hold the ions on a periodic orbit that is Floquet-unstable (for six ions, the
    pseudopotential octahedron). Each relaxed orbit is checked against its monodromy; an unstable one is
    kicked along its fastest-growing eigenvector and relaxed again with `escape_schedule`, whose friction stays below
    the growth rate of the instability.

    :param seed: Starting state at t = 0 (`seed_state(config)` when omitted)
    :param schedule: Friction schedule; the default holds, decays and settles as in `DampingSchedule`
    :param n_max: Harmonics kept from the quadrature projection; refinement doubles it
    :param periodicity_periods: Consecutive periods the strobed state must repeat over
    :param stability_attempts: Escapes tried from unstable orbits; 0 skips the stability check
    :param harmonics: Hessian harmonics of the Hill system used for the stability check
    :param escape_kick: Largest phase-space displacement along the unstable eigenvector
    :raises NonCrystalError: The strobed state still changes by more than `periodicity_tol`
    :raises RefinementFailureError: Newton refinement failed (raw projection attached)
    :raises UnstableCrystalError: Every relaxation attempt ended on an unstable orbit
    """
    seed = seed_state(config) if seed is None else seed
    schedule = schedule or DampingSchedule()
    settings = settings or IntegratorSettings()
    checks = dict(n_max=n_max, periodicity_periods=periodicity_periods, periodicity_tol=periodicity_tol,
                  refine=refine)
    orbit = _relax_once(config, seed, schedule, settings, **checks)
    if stability_attempts <= 0:
        return orbit
    for attempt in range(stability_attempts + 1):
        monodromy = orbit_stability(config, orbit, harmonics, settings)
        if monodromy.stable:
            return orbit
        if attempt == stability_attempts:
            break
        escape = escape_schedule(monodromy, schedule, escape_kick, periodicity_tol)
        LOGGER.warning(f"Relaxed orbit is unstable (max |λ| = {monodromy.max_modulus:.6g}); escaping along the "
                       f"unstable mode with friction {escape.initial:.3e} for {escape.hold / np.pi:.0f} rf periods")
        state = orbit_state(orbit) + escape_kick * unstable_direction(monodromy)
        orbit = _relax_once(config, IonState.from_flat(state, 0.0), escape, settings, **checks)
    raise UnstableCrystalError(
        f"Orbit is still unstable after {stability_attempts} escape attempts: max |λ| = {monodromy.max_modulus:.6g}",
        orbit, monodromy.instability)


def _relax_once(config: TrapConfig, seed: IonState, schedule: DampingSchedule, settings: IntegratorSettings,
                n_max: int, periodicity_periods: int, periodicity_tol: float, refine: bool) -> PeriodicOrbit:
    start = seed.time
    t_end = start + schedule.duration
    LOGGER.info(f"Relaxing {config.n_ions} ions over {schedule.duration / np.pi:.0f} rf periods")
    try:
        damped = integrate_nonlinear(config, seed, t_end, lambda t: schedule(t - start), settings,
                                     sample_times=[start, t_end])
        strobes = t_end + np.pi * np.arange(periodicity_periods + 1)
        window = period_grid(PROJECTION_SAMPLES, strobes[-1])
        samples = np.concatenate([strobes, window[1:]])
        settled = integrate_nonlinear(config, damped[-1], window[-1], None, settings, sample_times=samples)
    except IonEscapeError as ex:
        raise NonCrystalError(f"Ions escaped during relaxation at t = {ex.time:.6g}", float("inf")) from ex

    states = np.concatenate([settled.positions.reshape(len(settled), -1),
                             settled.velocities.reshape(len(settled), -1)], axis=1)
    strobed = states[:periodicity_periods + 1]
    deviation = float(np.max(np.linalg.norm(np.diff(strobed, axis=0), axis=1)))
    LOGGER.debug(f"Period-map deviation over {periodicity_periods} periods: {deviation:.3e}")
    if deviation > periodicity_tol:
        raise NonCrystalError(
            f"Motion is not π-periodic after relaxation: period-map deviation {deviation:.3e} > {periodicity_tol}",
            deviation)

    projection = fourier_project(settled.positions[periodicity_periods:], n_max)
    raw = _projection_orbit(projection, n_max)
    raw = PeriodicOrbit(raw.coefficients, n_max, fourier_defect(config, raw), raw.time_reversal_defect)
    LOGGER.debug(f"Raw projection: residual {raw.residual:.3e}, time-reversal defect {raw.time_reversal_defect:.3e}")
    orbit = refine_orbit(config, raw, 2 * n_max) if refine else raw
    if np.max(np.abs(orbit.stacked())) < TRIVIAL_AMPLITUDE:
        LOGGER.warning("Relaxed orbit is trivial: every ion sits at the trap centre (B = 0)")
    return orbit


def orbit_state(orbit: PeriodicOrbit) -> np.ndarray:
    """Phase-space vector (R, Ṙ) of the orbit at t = 0, flattened ion-major"""
    return np.concatenate([orbit.positions_at(0.0).ravel(), orbit.velocities_at(0.0).ravel()])


def orbit_stability(config: TrapConfig, orbit: PeriodicOrbit, harmonics: Iterable[int] = DEFAULT_HARMONICS,
                    settings: Optional[IntegratorSettings] = None) -> Monodromy:
    """Monodromy of the Hill system linearised about `orbit`"""
    hill = assemble_hill(config, hessian_harmonics(orbit, harmonics))
    return matrizant(hill, settings)


def unstable_direction(monodromy: Monodromy) -> np.ndarray:
    """Real phase-space direction of the largest-modulus monodromy eigenvector, scaled to unit max norm"""
    eigenvalues, eigenvectors = np.linalg.eig(monodromy.matrix)
    vector = eigenvectors[:, int(np.argmax(np.abs(eigenvalues)))]
    vector = (vector * np.exp(-1j * np.angle(vector[np.argmax(np.abs(vector))]))).real
    return vector / np.max(np.abs(vector))


def escape_schedule(monodromy: Monodromy, schedule: DampingSchedule, kick: float = ESCAPE_KICK,
                    periodicity_tol: float = PERIODICITY_TOLERANCE) -> DampingSchedule:
    """
    Friction for leaving an unstable orbit: held at the growth rate μ = ln|λ|/π of the instability, then decayed and
    settled as in `schedule`.

    With friction μ the unstable pair still grows at about μ/2 while stable modes decay at μ/2, so the hold lasts
    long enough for the kick to grow to order one and for the remaining oscillation to fall below `periodicity_tol`.
    """
    growth = float(np.log(monodromy.max_modulus)) / np.pi
    if not growth > 0:
        raise ValueError(f"Monodromy has no growing mode (max |λ| = {monodromy.max_modulus})")
    hold = 2 * (np.log(1 / kick) + np.log(1 / periodicity_tol)) / growth
    hold = min(max(hold, schedule.hold), MAX_ESCAPE_PERIODS * np.pi)
    return DampingSchedule(initial=growth, hold=hold, time_constant=schedule.time_constant,
                           decay_constants=schedule.decay_constants, settle=schedule.settle)


def _harmonic_weights(n_max: int) -> np.ndarray:
    return np.where(np.arange(n_max + 1) == 0, 1.0, 2.0)


def refine_orbit(config: TrapConfig, orbit: PeriodicOrbit, n_max: Optional[int] = None,
                 samples: int = PROJECTION_SAMPLES, tolerance: float = NEWTON_TOLERANCE) -> PeriodicOrbit:
    """
    Harmonic-balance Newton on B₀, B₂, ..., B_{2n_max}.

    The e.o.m. residual R̈ − f(R, t) is collocated on `samples` points of one period and projected onto
    cos 2kt, k = 0..n_max; the Jacobian is assembled from L(t) = diag(a − 2q cos2t) + εK(R(t)).
    """
    n_max = orbit.n_max if n_max is None else n_max
    n_ions = orbit.n_ions
    dim = 3 * n_ions
    times = period_grid(samples)
    harmonics = 2 * np.arange(n_max + 1)
    basis = np.cos(np.outer(harmonics, times))  # (n_max+1, M)
    weights = _harmonic_weights(n_max)
    a_diag = np.tile(config.mathieu_a, n_ions)
    q_diag = np.tile(config.mathieu_q, n_ions)

    def unpack(x):
        stacked = x.reshape(n_max + 1, n_ions, 3)
        return {2 * n: stacked[n] for n in range(n_max + 1)}

    def residual(x):
        coefficients = unpack(x)
        positions = cosine_series(coefficients, times)
        defect = cosine_series(coefficients, times, derivative=2) - acceleration(config, positions, times)
        return (basis @ defect.reshape(samples, dim) / samples).ravel()

    def jacobian(x):
        positions = cosine_series(unpack(x), times)
        linear = config.epsilon * coulomb_hessian(positions)
        index = np.arange(dim)
        linear[:, index, index] += a_diag - 2 * np.outer(np.cos(2 * times), q_diag)
        blocks = np.einsum("kt,mt,tij->kimj", basis, basis, linear) / samples
        overlap = basis @ basis.T / samples
        blocks -= np.einsum("km,m,ij->kimj", overlap, harmonics.astype(float) ** 2, np.eye(dim))
        blocks *= weights[None, None, :, None]
        return blocks.reshape((n_max + 1) * dim, (n_max + 1) * dim)

    x0 = orbit.stacked(n_max).ravel()
    try:
        solution = optimize.root(residual, x0, jac=jacobian, method="hybr", options={"xtol": 1e-14})
    except (TrapModesException, np.linalg.LinAlgError) as ex:
        raise RefinementFailureError(f"Harmonic-balance Newton failed: {ex}", orbit) from ex
    final = np.max(np.abs(residual(solution.x)))
    if not np.isfinite(final) or final > tolerance:
        raise RefinementFailureError(
            f"Harmonic-balance Newton stopped at projected residual {final:.3e} ({solution.message})", orbit)
    refined = PeriodicOrbit(unpack(solution.x), n_max, time_reversal_defect=orbit.time_reversal_defect)
    refined = PeriodicOrbit(refined.coefficients, n_max, fourier_defect(config, refined),
                            orbit.time_reversal_defect)
    LOGGER.info(f"Refined orbit with {n_max} harmonics: projected residual {final:.3e}, "
                f"time-domain residual {refined.residual:.3e}")
    return refined


def orbit_from_pseudopotential(config: TrapConfig, n_max: int = 4, seed: Optional[np.ndarray] = None
                               ) -> PeriodicOrbit:
    """Lowest-order orbit: B₀ at the pseudopotential equilibrium and B₂ from `predict_micromotion`"""
    b0 = pseudo_equilibrium(config, seed)
    prediction = predict_micromotion(config, b0)
    orbit = PeriodicOrbit({0: b0, 2: prediction.b2}, n_max)
    return PeriodicOrbit(orbit.coefficients, n_max, fourier_defect(config, orbit))


def micromotion_ratio(orbit: PeriodicOrbit, threshold: float = RATIO_THRESHOLD) -> np.ndarray:
    """B₂/B₀ per ion and axis; NaN where |B₀| is at or below `threshold`"""
    b0 = orbit.coefficient(0)
    b2 = orbit.coefficient(2)
    mask = np.abs(b0) > threshold
    ratio = np.full(b0.shape, np.nan)
    ratio[mask] = b2[mask] / b0[mask]
    if not mask.all():
        LOGGER.debug(f"{np.count_nonzero(~mask)} coordinates masked with |B0| <= {threshold}")
    return ratio


def micromotion_g2(b0: np.ndarray, b2: np.ndarray) -> np.ndarray:
    """First cos 2t harmonic G₂ of the dynamic matrix along R = B₀ + 2B₂ cos2t"""
    d0, inv_r = pair_geometry(b0)
    d2 = b2[:, None, :] - b2[None, :, :]
    g2 = 3 * inv_r ** 5 * np.einsum("ijk,ijk->ij", d0, d2)
    np.fill_diagonal(g2, 0.0)
    np.fill_diagonal(g2, -g2.sum(axis=1))
    return g2


def predict_micromotion(config: TrapConfig, b0: np.ndarray, threshold: float = RATIO_THRESHOLD,
                        consistency_tol: float = CONSISTENCY_TOLERANCE) -> MicromotionPrediction:
    """
    Micromotion amplitudes B₂ expected for the average positions `b0`.

    Axes with q ≠ 0 get B₂ = −(q/4)B₀. Axes without rf are driven only through the modulated Coulomb coupling,
    B₂ = −(ε/4)G₂B₀ with G₂ from the rf axes. Average positions that do not balance
    (a + q²/2)u = εG₀u to within `consistency_tol` (relative) produce a warning.
    """
    b0 = np.asarray(b0, dtype=float)
    a, q, eps = config.mathieu_a, config.mathieu_q, config.epsilon
    g0 = dynamic_matrix(b0) if len(b0) > 1 else np.zeros((1, 1))
    b2 = np.zeros_like(b0)
    warnings = []
    rf_axes = [alpha for alpha in range(3) if q[alpha] != 0]
    for alpha in rf_axes:
        u = b0[:, alpha]
        b2[:, alpha] = -q[alpha] / 4 * u
        balance = (a[alpha] + q[alpha] ** 2 / 2) * u - eps * g0 @ u
        scale = max(np.linalg.norm((a[alpha] + q[alpha] ** 2 / 2) * u), np.linalg.norm(eps * g0 @ u))
        if np.max(np.abs(u)) > threshold and np.linalg.norm(balance) > consistency_tol * scale:
            warnings.append(f"Average positions along axis {'xyz'[alpha]} are inconsistent "
                            f"(relative imbalance {np.linalg.norm(balance) / scale:.3e})")
    g2 = None
    if len(rf_axes) < 3:
        g2 = micromotion_g2(b0, b2) if len(b0) > 1 else np.zeros((1, 1))
        for alpha in set(range(3)) - set(rf_axes):
            b2[:, alpha] = -eps / 4 * g2 @ b0[:, alpha]
    for message in warnings:
        LOGGER.warning(message)
    q_max = float(np.max(np.abs(q)))
    mask = np.abs(b0) > threshold
    ratio = np.full(b0.shape, np.nan)
    ratio[mask] = b2[mask] / b0[mask]
    return MicromotionPrediction(b2, ratio, 0.5 * (q_max / 4) ** 3, eps / 4 * q_max / 4, g2, tuple(warnings))


def fourier_defect(config: TrapConfig, orbit: PeriodicOrbit, samples: int = DEFECT_SAMPLES) -> float:
    """Largest e.o.m. residual |R̈ − f(R, t)| of the reconstructed orbit over one period"""
    times = period_grid(samples)
    positions = orbit.positions_at(times)
    defect = orbit.accelerations_at(times) - acceleration(config, positions, times)
    return float(np.max(np.abs(defect)))
