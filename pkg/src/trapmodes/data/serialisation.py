import json
from abc import ABC, abstractmethod
from typing import Any, Dict, Generic, List, Optional, Sequence, TypeVar

import numpy as np

from .models import FloquetMode, HillSystem, NormalModeBasis, PeriodicOrbit, TrapConfig
from ..util.file_converter import dumps_json, trap_config_from_dict, trap_config_to_dict

DeserialisedType = TypeVar("DeserialisedType")
SerialisedType = TypeVar("SerialisedType")


class _Serialiser(Generic[DeserialisedType, SerialisedType], ABC):

    @abstractmethod
    def serialise(self, obj: DeserialisedType) -> SerialisedType:
        """Converts an object to its serialised form"""

    @abstractmethod
    def deserialise(self, serialised_obj: SerialisedType) -> DeserialisedType:
        """Converts from the serialised form to the deserialised object"""


class _JsonSerialiser(_Serialiser[DeserialisedType, str], ABC):
    """
    Base class for the JSON serialisers.
    Subclasses convert to and from plain dictionaries; this class handles the text encoding
    """

    @abstractmethod
    def to_dict(self, obj: DeserialisedType) -> Dict[str, Any]:
        """Converts an object to a JSON-compatible dictionary"""

    @abstractmethod
    def from_dict(self, document: Dict[str, Any]) -> DeserialisedType:
        """Rebuilds an object from its dictionary form"""

    def serialise(self, obj: DeserialisedType) -> str:
        return dumps_json(self.to_dict(obj))

    def deserialise(self, serialised_obj: str) -> DeserialisedType:
        return self.from_dict(json.loads(serialised_obj))


def _complex_array(pairs) -> np.ndarray:
    values = np.asarray(pairs, dtype=float)
    return values[..., 0] + 1j * values[..., 1]


class TrapConfigJsonSerialiser(_JsonSerialiser[TrapConfig]):

    def to_dict(self, obj: TrapConfig) -> Dict[str, Any]:
        return trap_config_to_dict(obj)

    def from_dict(self, document: Dict[str, Any]) -> TrapConfig:
        return trap_config_from_dict(document)


class PeriodicOrbitJsonSerialiser(_JsonSerialiser[PeriodicOrbit]):
    """
    Orbit files: {"n_max", "coefficients": {"0": [[x, y, z], ...], "2": ...}, "residual", "config"}.
    The trap the orbit belongs to is embedded when one is given
    """

    def __init__(self, config: Optional[TrapConfig] = None, extra: Optional[Dict[str, Any]] = None):
        self.config = config
        self.extra = extra or {}

    def to_dict(self, obj: PeriodicOrbit) -> Dict[str, Any]:
        document = {
            "n_max": obj.n_max,
            "coefficients": {str(h): c for h, c in obj.coefficients.items()},
            "residual": obj.residual,
            "time_reversal_defect": obj.time_reversal_defect,
            "config": None if self.config is None else trap_config_to_dict(self.config),
        }
        document.update(self.extra)
        return document

    def from_dict(self, document: Dict[str, Any]) -> PeriodicOrbit:
        coefficients = {int(h): np.asarray(c, dtype=float) for h, c in document["coefficients"].items()}
        residual = document.get("residual")
        return PeriodicOrbit(coefficients, int(document["n_max"]), float("nan") if residual is None else residual,
                             float(document.get("time_reversal_defect", 0.0)))

    @staticmethod
    def config_of(document: Dict[str, Any]) -> Optional[TrapConfig]:
        config = document.get("config")
        return None if config is None else trap_config_from_dict(config)


class NormalModeBasisJsonSerialiser(_JsonSerialiser[NormalModeBasis]):

    def to_dict(self, obj: NormalModeBasis) -> Dict[str, Any]:
        return {
            "equilibrium": obj.equilibrium,
            "frequencies": obj.frequencies,
            "modes": obj.mode_matrix.T,
            "breathing_index": obj.breathing_index,
            "xi_b": obj.xi_b,
            "gamma": obj.gamma,
        }

    def from_dict(self, document: Dict[str, Any]) -> NormalModeBasis:
        return NormalModeBasis(np.asarray(document["equilibrium"], dtype=float),
                               np.asarray(document["modes"], dtype=float).T,
                               np.asarray(document["frequencies"], dtype=float),
                               document.get("breathing_index"), float(document.get("xi_b", 0.0)),
                               np.asarray(document.get("gamma", (1.0, 1.0, 1.0)), dtype=float))


class HillSystemJsonSerialiser(_JsonSerialiser[HillSystem]):
    """{"dim", "A", "Q2", "Q4", "labels"} with row-major matrices"""

    def to_dict(self, obj: HillSystem) -> Dict[str, Any]:
        return {"dim": obj.dim, "A": obj.A, "Q2": obj.Q2, "Q4": obj.Q4,
                "labels": [[ion, axis] for ion, axis in obj.labels]}

    def from_dict(self, document: Dict[str, Any]) -> HillSystem:
        return HillSystem(np.asarray(document["A"], dtype=float), np.asarray(document["Q2"], dtype=float),
                          np.asarray(document["Q4"], dtype=float) if document.get("Q4") is not None else None,
                          tuple(tuple(label) for label in document.get("labels", ())))


class ModeReportJsonSerialiser(_JsonSerialiser[List[FloquetMode]]):
    """
    Mode reports: {"betas", "kernel_dims", "ladders": {index: {harmonic: [[re, im], ...]}}}.
    Extra top-level entries (seed, Hill system, instability) can be attached
    """

    def __init__(self, extra: Optional[Dict[str, Any]] = None):
        self.extra = extra or {}

    def to_dict(self, obj: Sequence[FloquetMode]) -> Dict[str, Any]:
        document = {
            "betas": [mode.beta for mode in obj],
            "kernel_dims": [mode.kernel_dim for mode in obj],
            "ladders": {str(index): {str(h): np.asarray(c, dtype=complex) for h, c in sorted(mode.ladder.items())}
                        for index, mode in enumerate(obj)},
        }
        document.update(self.extra)
        return document

    def from_dict(self, document: Dict[str, Any]) -> List[FloquetMode]:
        modes = []
        for index, (beta, kernel_dim) in enumerate(zip(document["betas"], document["kernel_dims"])):
            ladder = document.get("ladders", {}).get(str(index), {})
            modes.append(FloquetMode(float(beta), {int(h): _complex_array(c) for h, c in ladder.items()},
                                     int(kernel_dim)))
        return modes
