"""Serialized writing of run artifacts."""

import threading
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

import pandas as pd

from ..utils.logging_config import get_logger

logger = get_logger(__name__)


class ResultsWriter:
    """Writes CSV and text artifacts under one output directory.

    All writes go through one lock so concurrent sweep cells never interleave
    a file. Sweep rows are buffered by cell index and flushed in index order.
    """

    def __init__(self, output_dir: Union[str, Path]):
        """
        Initialize the writer.

        Args:
            output_dir: Directory receiving the artifacts (created if missing)
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._rows: Dict[int, dict] = {}
        self._written: List[str] = []

    def path_for(self, name: str, subdir: Optional[str] = None) -> Path:
        directory = self.output_dir / subdir if subdir else self.output_dir
        directory.mkdir(parents=True, exist_ok=True)
        return directory / name

    def write_frame(self, name: str, frame: pd.DataFrame, subdir: Optional[str] = None) -> Path:
        """
        Write a DataFrame as CSV without the index.

        Args:
            name: File name, e.g. ``metrics.csv``
            frame: Rows to write
            subdir: Optional subdirectory of the output directory

        Returns:
            Path of the written file
        """
        path = self.path_for(name, subdir)
        with self._lock:
            frame.to_csv(path, index=False, lineterminator="\n")
            self._written.append(str(path))
        logger.debug(f"Wrote {len(frame)} rows to {path}")
        return path

    def write_lines(self, name: str, lines: Iterable[str], subdir: Optional[str] = None) -> Path:
        path = self.path_for(name, subdir)
        with self._lock:
            with open(path, "w", encoding="utf-8", newline="\n") as handle:
                for line in lines:
                    handle.write(line + "\n")
            self._written.append(str(path))
        return path

    def write_text(self, name: str, text: str, subdir: Optional[str] = None) -> Path:
        path = self.path_for(name, subdir)
        with self._lock:
            path.write_text(text, encoding="utf-8")
            self._written.append(str(path))
        return path

    def add_row(self, index: int, row: dict) -> None:
        """Buffer one sweep row (thread-safe)."""
        with self._lock:
            self._rows[index] = dict(row)

    def buffered_rows(self) -> List[dict]:
        with self._lock:
            return [self._rows[index] for index in sorted(self._rows)]

    def flush_rows(self, name: str, columns: Optional[List[str]] = None) -> Path:
        """Write every buffered row in cell order, then clear the buffer."""
        frame = pd.DataFrame(self.buffered_rows(), columns=columns)
        path = self.write_frame(name, frame)
        with self._lock:
            self._rows.clear()
        logger.info(f"Wrote {len(frame)} sweep rows to {path}")
        return path

    def read_frame(self, name: str, subdir: Optional[str] = None) -> pd.DataFrame:
        return pd.read_csv(self.path_for(name, subdir))

    @property
    def written(self) -> List[str]:
        with self._lock:
            return list(self._written)
