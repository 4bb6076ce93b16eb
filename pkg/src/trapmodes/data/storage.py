"""Output storage for command results"""
import json
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, Generic, List, Optional, TypeVar, Union

import pandas as pd

from .exceptions import TrapModesException
from ..util.file_converter import dumps_json

LOGGER = logging.getLogger(__name__)
T = TypeVar('T')

CSV_FLOAT_FORMAT = "%.17g"
MANIFEST_NAME = "manifest.json"


class OutputStoreError(TrapModesException):
    """Base exception for errors relating to writing or reading run outputs"""


class AbstractOutputStore(ABC, Generic[T]):
    """Interface for output stores to define what methods should be available"""

    @abstractmethod
    def put_document(self, name: str, document: Any) -> T:
        """Writes a JSON document under the given name, returning where it went"""

    @abstractmethod
    def put_table(self, name: str, table: pd.DataFrame) -> T:
        """Writes a table as CSV under the given name, returning where it went"""

    @abstractmethod
    def get_document(self, name: str) -> Dict[str, Any]:
        """Reads back a JSON document written earlier"""

    @abstractmethod
    def outputs(self) -> List[str]:
        """Names of everything written so far, in order"""


class RunDirectoryStore(AbstractOutputStore[Path]):
    """
    Writes the outputs of one command into a local directory.

    Every file written is recorded, so `write_manifest` can list them alongside the run parameters. When a seed is
    given, every table gets a constant `seed` column and every JSON object a `seed` entry.
    """

    def __init__(self, root: Union[str, Path], seed: Optional[int] = None) -> None:
        self._root = Path(root)
        self._seed = seed
        self._written: List[str] = []
        try:
            self._root.mkdir(parents=True, exist_ok=True)
        except OSError as ex:
            raise OutputStoreError(f"Cannot create output directory {self._root}: {ex}") from ex
        if not self._root.is_dir():
            raise OutputStoreError(f"{self._root} is not a directory")

    @property
    def root(self) -> Path:
        return self._root

    def path(self, name: str) -> Path:
        return self._root / name

    def _record(self, name: str) -> None:
        if name not in self._written:
            self._written.append(name)

    def put_text(self, name: str, text: str) -> Path:
        path = self.path(name)
        try:
            path.write_text(text)
        except OSError as ex:
            raise OutputStoreError(f"Cannot write {path}: {ex}") from ex
        LOGGER.debug(f"Wrote {path}")
        self._record(name)
        return path

    def put_document(self, name: str, document: Any) -> Path:
        if self._seed is not None and isinstance(document, dict) and "seed" not in document:
            document = {**document, "seed": self._seed}
        return self.put_text(name, dumps_json(document) + "\n")

    def put_table(self, name: str, table: pd.DataFrame) -> Path:
        path = self.path(name)
        if self._seed is not None and "seed" not in table.columns:
            table = table.assign(seed=self._seed)
        try:
            table.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        except OSError as ex:
            raise OutputStoreError(f"Cannot write {path}: {ex}") from ex
        LOGGER.debug(f"Wrote {len(table)} rows to {path}")
        self._record(name)
        return path

    def get_document(self, name: str) -> Dict[str, Any]:
        path = self.path(name)
        try:
            with path.open() as handle:
                return json.load(handle)
        except (OSError, json.JSONDecodeError) as ex:
            raise OutputStoreError(f"Cannot read {path}: {ex}") from ex

    def exists(self, name: str) -> bool:
        return self.path(name).is_file()

    def outputs(self) -> List[str]:
        return list(self._written)

    def write_manifest(self, manifest: Dict[str, Any]) -> Path:
        """Writes manifest.json with the run parameters and the outputs written before it"""
        return self.put_document(MANIFEST_NAME, {**manifest, "outputs": self.outputs()})


def create_run_store(output_dir: Optional[Union[str, Path]] = None, default: str = "trapmodes-output",
                     seed: Optional[int] = None) -> RunDirectoryStore:
    """
    Return a `RunDirectoryStore` for the given directory

    :param output_dir: Directory to write into; created if needed
    :param default: Directory used when `output_dir` is not given, relative to the working directory
    :param seed: RNG seed of the run, recorded as a column of every table
    """
    return RunDirectoryStore(Path(output_dir) if output_dir else Path(default), seed)
