"""
This reads run configuration files (JSON or YAML) and encodes results as JSON.

To load a configuration with command-line style overrides:
>> run_config = trapmodes.util.file_converter.load_run_config("configs/six_ions.yaml",
["relax.time_constant=100", "floquet.depth=25"])
>> run_config.trap.pseudo_gamma

Numbers, numpy arrays and complex values (as [re, im] pairs) are written with:
>> text = trapmodes.util.file_converter.dumps_json({"beta": np.float64(0.25), "c": 1 + 2j})
"""
import copy
import json
import math
from dataclasses import dataclass, field
from json import JSONEncoder
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple, Union

import numpy as np
import yaml

from ..data.exceptions import ConfigurationError
from ..data.models import DampingSchedule, IntegratorSettings, TrapConfig

# Optional sections and their defaults; times in relax/evolve are in rf periods (units of π)
DEFAULT_SECTIONS: Dict[str, Dict[str, Any]] = {
    "relax": {
        "hold": 100.0,
        "time_constant": 50.0,
        "decay_constants": 16.0,
        "settle": 50.0,
        "initial_damping": 0.5,
        "periodicity_periods": 5,
        "periodicity_tol": 1e-7,
        "n_max": 4,
        "perturbation": 1e-3,
        "seed_mode": "pattern",
        "stability_attempts": 2,
        "escape_kick": 0.05,
    },
    "integrator": {"rel_tol": 1e-10, "abs_tol": 1e-12, "max_step": math.inf, "method_order": 8},
    "floquet": {"depth": 20, "n_max": 6, "scan_points_per_mode": 64, "harmonics": [0, 2, 4]},
    "evolve": {"periods": 100, "samples_per_period": 8, "amplitude": 1e-3},
    "sweep": {"a": None, "q": None},
}
TRAP_KEYS = ("n_ions", "geometry", "a", "q", "omega_rf", "dc_asymmetry")
SEED_MODES = ("pattern", "random")


class TrapModesJsonEncoder(JSONEncoder):
    # Numpy types are not JSON serialisable by default; complex numbers become [re, im]
    def default(self, obj):
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, (complex, np.complexfloating)):
            return [float(obj.real), float(obj.imag)]
        if isinstance(obj, Path):
            return str(obj)
        return super().default(obj)


def dumps_json(document) -> str:
    """Deterministic JSON text: sorted keys, shortest round-trip floats"""
    return json.dumps(document, cls=TrapModesJsonEncoder, indent=2, sort_keys=True)


def read_document(filepath: Union[str, Path]) -> Dict[str, Any]:
    """Reads a JSON or YAML mapping, choosing the parser by suffix"""
    path = Path(filepath)
    try:
        with open(path) as handle:
            if path.suffix.lower() == ".json":
                document = json.load(handle)
            elif path.suffix.lower() in (".yaml", ".yml"):
                document = yaml.safe_load(handle)
            else:
                raise ConfigurationError(f"Configuration '{path}' must be .json, .yaml or .yml")
    except OSError as ex:
        raise ConfigurationError(f"Cannot read configuration '{path}': {ex}") from ex
    except (json.JSONDecodeError, yaml.YAMLError) as ex:
        raise ConfigurationError(f"Cannot parse configuration '{path}': {ex}") from ex
    if not isinstance(document, dict):
        raise ConfigurationError(f"Configuration '{path}' must contain a mapping at the top level")
    return document


def parse_override(text: str) -> Tuple[str, Any]:
    """'relax.time_constant=100' -> ('relax.time_constant', 100); the value is parsed as YAML"""
    key, separator, value = text.partition("=")
    if not separator or not key.strip():
        raise ConfigurationError(f"Override '{text}' must have the form key=value")
    try:
        return key.strip(), yaml.safe_load(value)
    except yaml.YAMLError as ex:
        raise ConfigurationError(f"Cannot parse the value of override '{text}'") from ex


def apply_overrides(document: Mapping[str, Any], overrides: Iterable[Union[str, Tuple[str, Any]]]) -> Dict[str, Any]:
    """Returns a copy of `document` with dotted-key overrides applied"""
    result = copy.deepcopy(dict(document))
    for override in overrides:
        key, value = parse_override(override) if isinstance(override, str) else override
        *parents, leaf = key.split(".")
        target = result
        for parent in parents:
            target = target.setdefault(parent, {})
            if not isinstance(target, dict):
                raise ConfigurationError(f"Override '{key}' descends into a non-mapping value")
        target[leaf] = value
    return result


def trap_config_from_dict(document: Mapping[str, Any]) -> TrapConfig:
    """
    Builds a TrapConfig. omega_rf may be the string "axial", which picks the Ω that normalises to the axial
    secular frequency.
    """
    missing = [key for key in ("n_ions", "a", "q", "omega_rf") if key not in document]
    if missing:
        raise ConfigurationError(f"Trap configuration is missing {missing}")
    geometry = document.get("geometry", "general")
    omega_rf = document["omega_rf"]
    axial = isinstance(omega_rf, str) and omega_rf.lower() == "axial"
    try:
        config = TrapConfig.from_preset(geometry, document["n_ions"], document["a"], document["q"],
                                        1.0 if axial else float(omega_rf), float(document.get("dc_asymmetry", 0.0)))
    except (TypeError, ValueError) as ex:
        raise ConfigurationError(f"Invalid trap configuration: {ex}") from ex
    if axial:
        config = config.with_changes(
            omega_rf=TrapConfig.axial_omega_rf(config.mathieu_a[0], config.mathieu_q[0]))
    return config


def trap_config_to_dict(config: TrapConfig) -> Dict[str, Any]:
    """Inverse of `trap_config_from_dict`; presets keep their scalar (a, q)"""
    preset = config.geometry in ("linear", "hyperbolic")
    return {
        "n_ions": config.n_ions,
        "geometry": config.geometry,
        "a": config.a[1] if preset else list(config.a),
        "q": config.q[1] if preset else list(config.q),
        "omega_rf": config.omega_rf,
        "dc_asymmetry": config.dc_asymmetry,
    }


@dataclass(frozen=True)
class RunConfig:
    """A trap plus the settings of every pipeline stage"""
    trap: TrapConfig
    sections: Mapping[str, Mapping[str, Any]] = field(default_factory=lambda: copy.deepcopy(DEFAULT_SECTIONS))
    source: Optional[Path] = None

    def section(self, name: str) -> Mapping[str, Any]:
        return self.sections[name]

    @property
    def integrator(self) -> IntegratorSettings:
        try:
            return IntegratorSettings(**self.sections["integrator"])
        except (TypeError, ValueError) as ex:
            raise ConfigurationError(f"Invalid integrator settings: {ex}") from ex

    @property
    def schedule(self) -> DampingSchedule:
        relax = self.sections["relax"]
        try:
            return DampingSchedule(initial=float(relax["initial_damping"]), hold=np.pi * float(relax["hold"]),
                                   time_constant=np.pi * float(relax["time_constant"]),
                                   decay_constants=float(relax["decay_constants"]),
                                   settle=np.pi * float(relax["settle"]))
        except (TypeError, ValueError) as ex:
            raise ConfigurationError(f"Invalid relax settings: {ex}") from ex

    def with_trap(self, trap: TrapConfig) -> "RunConfig":
        return RunConfig(trap, self.sections, self.source)


def run_config_from_dict(document: Mapping[str, Any], source: Optional[Path] = None) -> RunConfig:
    unknown = set(document) - set(TRAP_KEYS) - set(DEFAULT_SECTIONS)
    if unknown:
        raise ConfigurationError(f"Unrecognised configuration keys {sorted(unknown)}")
    sections = {}
    for name, defaults in DEFAULT_SECTIONS.items():
        given = document.get(name) or {}
        if not isinstance(given, dict):
            raise ConfigurationError(f"Section '{name}' must be a mapping")
        extra = set(given) - set(defaults)
        if extra:
            raise ConfigurationError(f"Unrecognised keys {sorted(extra)} in section '{name}'")
        sections[name] = {**copy.deepcopy(defaults), **given}
    if sections["relax"]["seed_mode"] not in SEED_MODES:
        raise ConfigurationError(f"relax.seed_mode must be one of {SEED_MODES}")
    return RunConfig(trap_config_from_dict(document), sections, source)


def load_run_config(filepath: Union[str, Path], overrides: Iterable[str] = ()) -> RunConfig:
    """Reads a run configuration file and applies `key=value` overrides"""
    document = apply_overrides(read_document(filepath), overrides)
    return run_config_from_dict(document, Path(filepath))
