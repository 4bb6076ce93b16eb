"""
Command-line front end:

    trapmodes <command> --config <path> [--out <dir>] [--jobs N] [--seed N] [--set key=value ...]

Commands are relax, modes, sweep, micromotion and evolve. Log verbosity comes from TRAPMODES_LOG
(error, warn, info or debug). Exit codes: 0 success, 1 other failure, 2 no crystal, 3 unstable mode,
4 configuration or I/O error.
"""
import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .data.exceptions import ConfigurationError, TrapModesException
from .data.models import PeriodicOrbit
from .data.serialisation import HillSystemJsonSerialiser, ModeReportJsonSerialiser, PeriodicOrbitJsonSerialiser
from .data.storage import OutputStoreError, RunDirectoryStore, create_run_store
from .dynamics.floquet import build_fl_transform, evolve_modes, find_exponents, gamma_samples, mode_ladder
from .dynamics.integrator import integrate_hill
from .dynamics.linearization import assemble_hill, hessian_harmonics
from .dynamics.periodic_orbit import (
    NonCrystalError, UnstableCrystalError, micromotion_ratio, orbit_stability, predict_micromotion, relax_to_crystal,
    seed_state,
)
from .util import dataframe_converter
from .util.file_converter import RunConfig, load_run_config, trap_config_from_dict
from .util.fourier import period_grid

LOGGER = logging.getLogger(__name__)

COMMANDS = ("relax", "modes", "sweep", "micromotion", "evolve")
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NO_CRYSTAL = 2
EXIT_INSTABILITY = 3
EXIT_CONFIG = 4
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
ORBIT_FILE = "orbit.json"


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce one command"""
    config_path: Path
    command: str
    output_dir: Path
    seed: int = 0
    overrides: Tuple[str, ...] = ()
    jobs: int = 1
    a_range: Optional[Tuple[float, float, int]] = None
    q_range: Optional[Tuple[float, float, int]] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"Unknown command '{self.command}', expected one of {COMMANDS}")
        if self.jobs < 1:
            raise ConfigurationError(f"--jobs must be at least 1, got {self.jobs}")

    def load(self) -> RunConfig:
        return load_run_config(self.config_path, self.overrides)

    def to_dict(self) -> Dict[str, Any]:
        document = asdict(self)
        document["config_path"] = str(self.config_path)
        document["output_dir"] = str(self.output_dir)
        document["overrides"] = list(self.overrides)
        return document


def configure_logging(environ=None) -> None:
    """Sets the root log level from TRAPMODES_LOG (default warn)"""
    environ = os.environ if environ is None else environ
    name = environ.get("TRAPMODES_LOG", "warn").strip().lower()
    level = LOG_LEVELS.get(name)
    logging.basicConfig(level=level or logging.WARNING, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level or logging.WARNING)
    if level is None:
        LOGGER.warning(f"Unrecognised TRAPMODES_LOG value '{name}', using warn")


def _relax(run: RunConfig, seed: int) -> PeriodicOrbit:
    """Relaxation with the configured schedule, retried once with a time constant twice as long"""
    relax = run.section("relax")
    rng_seed = seed if relax["seed_mode"] == "random" else None
    state = seed_state(run.trap, rng_seed, float(relax["perturbation"]))
    schedule = run.schedule
    kwargs = dict(settings=run.integrator, n_max=int(relax["n_max"]),
                  periodicity_periods=int(relax["periodicity_periods"]),
                  periodicity_tol=float(relax["periodicity_tol"]),
                  stability_attempts=int(relax["stability_attempts"]), escape_kick=float(relax["escape_kick"]),
                  harmonics=run.section("floquet")["harmonics"])
    try:
        return relax_to_crystal(run.trap, state, schedule, **kwargs)
    except NonCrystalError as ex:
        LOGGER.warning(f"{ex}; retrying with a slower damping decay")
        return relax_to_crystal(run.trap, state, schedule.slower(), **kwargs)


def _orbit(run: RunConfig, store: RunDirectoryStore, manifest: RunManifest) -> PeriodicOrbit:
    """The orbit saved in the output directory for this trap, or a fresh relaxation"""
    if store.exists(ORBIT_FILE):
        document = store.get_document(ORBIT_FILE)
        if document.get("config") and trap_config_from_dict(document["config"]) == run.trap:
            LOGGER.info(f"Reusing {store.path(ORBIT_FILE)}")
            return PeriodicOrbitJsonSerialiser().from_dict(document)
    orbit = _relax(run, manifest.seed)
    _write_orbit(run, store, manifest, orbit)
    return orbit


def _write_orbit(run: RunConfig, store: RunDirectoryStore, manifest: RunManifest, orbit: PeriodicOrbit) -> None:
    serialiser = PeriodicOrbitJsonSerialiser(run.trap, {"seed": manifest.seed})
    store.put_document(ORBIT_FILE, serialiser.to_dict(orbit))


def _finish(store: RunDirectoryStore, manifest: RunManifest, status: int) -> int:
    store.write_manifest({**manifest.to_dict(), "exit_code": status})
    return status


def _mode_pipeline(run: RunConfig, orbit: PeriodicOrbit):
    floquet = run.section("floquet")
    hill = assemble_hill(run.trap, hessian_harmonics(orbit, floquet["harmonics"]))
    spectrum = find_exponents(hill, int(floquet["scan_points_per_mode"]) * hill.dim, int(floquet["depth"]),
                              run.integrator)
    if spectrum.instability is not None:
        return hill, spectrum, None, None
    ladders = []
    for mode in spectrum:
        ladders.extend(mode_ladder(hill, mode.beta, int(floquet["depth"]), int(floquet["n_max"]), mode.kernel_dim))
    return hill, spectrum, ladders, build_fl_transform(ladders)


def _initial_condition(run: RunConfig, dim: int, seed: int) -> np.ndarray:
    amplitude = float(run.section("evolve")["amplitude"])
    return np.random.default_rng(seed).normal(scale=amplitude, size=2 * dim)


def _evolve_times(run: RunConfig) -> np.ndarray:
    evolve = run.section("evolve")
    samples = int(evolve["periods"]) * int(evolve["samples_per_period"])
    return np.pi * np.arange(samples + 1) / int(evolve["samples_per_period"])


def cmd_relax(manifest: RunManifest) -> int:
    """Relaxes the crystal; writes orbit.json and one period of trajectory as trajectory.csv"""
    run = manifest.load()
    store = create_run_store(manifest.output_dir, seed=manifest.seed)
    orbit = _relax(run, manifest.seed)
    _write_orbit(run, store, manifest, orbit)
    trajectory = dataframe_converter.orbit_trajectory(orbit)
    store.put_table("trajectory.csv", dataframe_converter.trajectory_frame(trajectory))
    LOGGER.info(f"Orbit residual {orbit.residual:.3e}")
    return _finish(store, manifest, EXIT_OK)


def cmd_modes(manifest: RunManifest) -> int:
    """Floquet modes of the crystal: modes.json, hill.json, mode_directions.csv and comparison.csv"""
    run = manifest.load()
    store = create_run_store(manifest.output_dir, seed=manifest.seed)
    orbit = _orbit(run, store, manifest)
    hill, spectrum, ladders, transform = _mode_pipeline(run, orbit)
    store.put_document("hill.json", HillSystemJsonSerialiser().to_dict(hill))
    extra = {"seed": manifest.seed}
    if transform is None:
        extra["instability"] = {"moduli": list(spectrum.instability.moduli)}
        store.put_document("modes.json", ModeReportJsonSerialiser(extra).to_dict(list(spectrum)))
        LOGGER.error(f"Crystal has unstable modes: |λ| = {list(spectrum.instability.moduli)}")
        return _finish(store, manifest, EXIT_INSTABILITY)

    extra["names"] = [f"xi_{index + 1}" for index in range(len(ladders))]
    store.put_document("modes.json", ModeReportJsonSerialiser(extra).to_dict(ladders))
    store.put_table("mode_directions.csv", dataframe_converter.mode_direction_frame(ladders, hill.labels))

    times = _evolve_times(run)
    initial = _initial_condition(run, hill.dim, manifest.seed)
    reconstructed = np.stack([evolve_modes(transform, initial, t)[1] for t in times])
    integrated = integrate_hill(hill, initial, times, run.integrator)
    store.put_table("comparison.csv",
                    dataframe_converter.comparison_frame(times, reconstructed, integrated, hill.labels))
    LOGGER.info(f"{len(ladders)} exponents, lowest β = {ladders[0].beta:.10f}")
    return _finish(store, manifest, EXIT_OK)


def cmd_micromotion(manifest: RunManifest) -> int:
    """Measured against predicted micromotion per ion and axis: micromotion.csv"""
    run = manifest.load()
    store = create_run_store(manifest.output_dir, seed=manifest.seed)
    orbit = _orbit(run, store, manifest)
    measured = micromotion_ratio(orbit)
    prediction = predict_micromotion(run.trap, orbit.coefficient(0))
    frame = dataframe_converter.micromotion_frame(orbit, measured, prediction, run.trap.mathieu_q)
    store.put_table("micromotion.csv", frame)
    return _finish(store, manifest, EXIT_OK)


def cmd_evolve(manifest: RunManifest) -> int:
    """Γ(t) over one period (gamma.csv) and the mode coordinates of a seeded initial condition (evolution.csv)"""
    run = manifest.load()
    store = create_run_store(manifest.output_dir, seed=manifest.seed)
    orbit = _orbit(run, store, manifest)
    hill, spectrum, ladders, transform = _mode_pipeline(run, orbit)
    if transform is None:
        LOGGER.error(f"Crystal has unstable modes: |λ| = {list(spectrum.instability.moduli)}")
        return _finish(store, manifest, EXIT_INSTABILITY)
    samples = int(run.section("evolve")["samples_per_period"])
    grid = period_grid(samples)
    store.put_table("gamma.csv", dataframe_converter.gamma_frame(grid, gamma_samples(transform, grid)))
    times = _evolve_times(run)
    initial = _initial_condition(run, hill.dim, manifest.seed)
    chis = np.stack([evolve_modes(transform, initial, t)[0] for t in times])
    store.put_table("evolution.csv", dataframe_converter.evolution_frame(times, chis, transform.betas))
    return _finish(store, manifest, EXIT_OK)


def _sweep_orbit(point: RunConfig, seed: int) -> PeriodicOrbit:
    """A single ion rests at the trap centre whatever (a, q); larger crystals are relaxed"""
    if point.trap.n_ions == 1:
        return PeriodicOrbit({0: np.zeros((1, 3))}, int(point.section("relax")["n_max"]))
    return _relax(point, seed)


def sweep_point(task: Tuple[RunConfig, float, float, int]) -> Dict[str, Any]:
    """
    Classifies one (a, q) grid point as stable, unstable_mode, no_crystal or error.

    Traps that do not confine in the pseudopotential approximation, and crystals that never settle, are no_crystal.
    Otherwise the monodromy of the orbit decides between stable and unstable_mode.
    """
    run, a, q, seed = task
    row = {"a": a, "q": q, "status": "error", "min_beta": np.nan, "max_abs_lambda": np.nan}
    try:
        point = run.with_trap(run.trap.with_mathieu(a, q))
        orbit = _sweep_orbit(point, seed)
        monodromy = orbit_stability(point.trap, orbit, point.section("floquet")["harmonics"], point.integrator)
    except (NonCrystalError, ConfigurationError) as ex:
        LOGGER.info(f"Sweep point a={a}, q={q} has no crystal: {ex}")
        row["status"] = "no_crystal"
        return row
    except UnstableCrystalError as ex:
        row["status"] = "unstable_mode"
        row["max_abs_lambda"] = ex.instability.max_modulus
        return row
    except TrapModesException as ex:
        LOGGER.warning(f"Sweep point a={a}, q={q} failed: {ex}")
        return row
    row["max_abs_lambda"] = monodromy.max_modulus
    if monodromy.stable:
        row["status"] = "stable"
        row["min_beta"] = float(np.min(monodromy.exponents))
    else:
        row["status"] = "unstable_mode"
    return row


def _sweep_axis(given, section, name: str, default: float) -> np.ndarray:
    bounds = given if given is not None else section.get(name)
    if bounds is None:
        return np.array([default])
    try:
        lo, hi, count = bounds
        return np.linspace(float(lo), float(hi), int(count))
    except (TypeError, ValueError) as ex:
        raise ConfigurationError(f"Sweep range for {name} must be [lo, hi, count], got {bounds!r}") from ex


def cmd_sweep(manifest: RunManifest) -> int:
    """Stability map over an (a, q) grid: sweep.csv with one row per grid point"""
    run = manifest.load()
    if run.trap.geometry not in ("linear", "hyperbolic"):
        raise ConfigurationError("Sweeps need a linear or hyperbolic preset so that (a, q) are scalars")
    store = create_run_store(manifest.output_dir, seed=manifest.seed)
    section = run.section("sweep")
    a_values = _sweep_axis(manifest.a_range, section, "a", run.trap.a[1])
    q_values = _sweep_axis(manifest.q_range, section, "q", run.trap.q[1])
    tasks = [(run, float(a), float(q), manifest.seed) for a in a_values for q in q_values]
    LOGGER.info(f"Sweeping {len(tasks)} grid points with {manifest.jobs} workers")
    if manifest.jobs > 1:
        with ProcessPoolExecutor(max_workers=manifest.jobs) as executor:
            rows = list(executor.map(sweep_point, tasks))
    else:
        rows = [sweep_point(task) for task in tasks]
    store.put_table("sweep.csv", dataframe_converter.sweep_frame(rows))
    return _finish(store, manifest, EXIT_OK)


HANDLERS = {
    "relax": cmd_relax,
    "modes": cmd_modes,
    "sweep": cmd_sweep,
    "micromotion": cmd_micromotion,
    "evolve": cmd_evolve,
}


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with the configuration-error code instead of argparse's 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="trapmodes", description="Crystals and Floquet modes of ions in Paul traps")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, type=Path, help="Run configuration (JSON or YAML)")
    parser.add_argument("--out", type=Path, default=Path("trapmodes-output"), help="Output directory")
    parser.add_argument("--jobs", type=int, default=1, help="Worker processes for sweeps")
    parser.add_argument("--seed", type=int, default=0, help="Seed for pseudorandom initial conditions")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a configuration value, e.g. relax.time_constant=100")
    parser.add_argument("--a-range", nargs=3, type=float, metavar=("LO", "HI", "N"), help="Sweep range for a")
    parser.add_argument("--q-range", nargs=3, type=float, metavar=("LO", "HI", "N"), help="Sweep range for q")
    return parser


def _range(values: Optional[Sequence[float]]) -> Optional[Tuple[float, float, int]]:
    return None if values is None else (values[0], values[1], int(values[2]))


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        manifest = RunManifest(args.config, args.command, args.out, args.seed, tuple(args.overrides), args.jobs,
                               _range(args.a_range), _range(args.q_range))
        return HANDLERS[manifest.command](manifest)
    except NonCrystalError as ex:
        LOGGER.error(f"No crystal: {ex} (period-map deviation {ex.deviation:.3e})")
        return EXIT_NO_CRYSTAL
    except UnstableCrystalError as ex:
        LOGGER.error(f"Crystal has unstable modes: |λ| = {list(ex.instability.moduli)}")
        return EXIT_INSTABILITY
    except (ConfigurationError, OutputStoreError, OSError) as ex:
        LOGGER.error(str(ex))
        return EXIT_CONFIG
    except TrapModesException as ex:
        LOGGER.error(f"{type(ex).__name__}: {ex}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
