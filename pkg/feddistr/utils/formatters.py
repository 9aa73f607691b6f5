"""Formatting utilities for FedDistr."""

import math
from typing import Any, Dict, List, Sequence, Union


class NumberFormatter:
    """Utility class for formatting numbers in text artifacts."""

    @staticmethod
    def format_exact(value: Union[int, float]) -> str:
        """
        Format a float with 17 significant digits so it parses back exactly.

        Args:
            value: Number to format

        Returns:
            Decimal string (``inf``/``nan`` spelled out)
        """
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return f"{value:.17g}"

    @staticmethod
    def format_epsilon(epsilon: float) -> str:
        """Format a privacy budget for console output."""
        if math.isinf(epsilon):
            return "∞ (no noise)"
        return f"{epsilon:.3f}"


class UploadRecordFormatter:
    """Line-oriented text records for uploaded distribution parameters."""

    FIELD_COUNT = 5

    @staticmethod
    def format_record(
        owner: int,
        label: int,
        count: int,
        clip_bound: float,
        noise_sigma: float,
        vector: Sequence[float],
    ) -> str:
        """
        Format one parameter as ``owner,label,count,C,sigma,v_0,...,v_{2d-1}``.

        Returns:
            The record line without a trailing newline
        """
        fmt = NumberFormatter.format_exact
        head = [str(int(owner)), str(int(label)), str(int(count)), fmt(clip_bound), fmt(noise_sigma)]
        return ",".join(head + [fmt(v) for v in vector])

    @staticmethod
    def parse_record(line: str) -> Dict[str, Any]:
        """
        Parse a record line produced by :meth:`format_record`.

        Raises:
            ValueError: If the line has too few fields or non-numeric values
        """
        tokens = line.strip().split(",")
        if len(tokens) <= UploadRecordFormatter.FIELD_COUNT:
            raise ValueError(f"Upload record has {len(tokens)} fields: {line!r}")
        return {
            "owner": int(tokens[0]),
            "label": int(tokens[1]),
            "count": int(tokens[2]),
            "clip_bound": float(tokens[3]),
            "noise_sigma": float(tokens[4]),
            "vector": [float(token) for token in tokens[5:]],
        }


class SummaryFormatter:
    """Console summaries for CLI output."""

    @staticmethod
    def format_rows(rows: List[Dict[str, Any]], columns: Sequence[str]) -> str:
        """
        Render rows as an aligned plain-text table.

        Args:
            rows: Dictionaries keyed by column
            columns: Columns to show, in order

        Returns:
            Multi-line table string
        """
        def cell(value: Any) -> str:
            if isinstance(value, float):
                return f"{value:.4f}"
            return "" if value is None else str(value)

        body = [[cell(row.get(column)) for column in columns] for row in rows]
        widths = [max([len(column)] + [len(line[i]) for line in body]) for i, column in enumerate(columns)]
        header = "  ".join(column.ljust(widths[i]) for i, column in enumerate(columns))
        lines = [header, "=" * len(header)]
        lines.extend("  ".join(value.ljust(widths[i]) for i, value in enumerate(line)) for line in body)
        return "\n".join(lines)
