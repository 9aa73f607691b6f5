"""Tests for formatting utilities."""

import math

import pytest

from feddistr.utils.formatters import NumberFormatter, SummaryFormatter, UploadRecordFormatter


class TestNumberFormatter:
    """Test cases for NumberFormatter."""

    @pytest.mark.parametrize("value", [0.1, 1 / 3, -2.5e-17, 123456789.123456789])
    def test_exact_round_trip(self, value):
        """Test that formatted floats parse back bit-exactly."""
        assert float(NumberFormatter.format_exact(value)) == value

    def test_special_values(self):
        """Test inf and nan spelling."""
        assert NumberFormatter.format_exact(math.inf) == "inf"
        assert NumberFormatter.format_exact(-math.inf) == "-inf"
        assert NumberFormatter.format_exact(math.nan) == "nan"

    def test_epsilon(self):
        """Test console formatting of privacy budgets."""
        assert NumberFormatter.format_epsilon(math.inf) == "∞ (no noise)"
        assert NumberFormatter.format_epsilon(4.84512) == "4.845"


class TestUploadRecordFormatter:
    """Test cases for upload records."""

    def test_record_layout(self):
        """Test owner,label,count,C,sigma followed by the vector."""
        line = UploadRecordFormatter.format_record(2, 1, 40, 50.0, 0.0, [1.5, -0.25])
        assert line == "2,1,40,50,0,1.5,-0.25"

    def test_parse(self):
        """Test parsing a record line."""
        record = UploadRecordFormatter.parse_record("3,0,7,1,0.5,0.1,0.2\n")
        assert record["owner"] == 3
        assert record["count"] == 7
        assert record["noise_sigma"] == 0.5
        assert record["vector"] == [0.1, 0.2]

    def test_short_record(self):
        """Test that a record without a vector is rejected."""
        with pytest.raises(ValueError, match="fields"):
            UploadRecordFormatter.parse_record("1,0,5,1.0,0.0")


class TestSummaryFormatter:
    """Test cases for SummaryFormatter."""

    def test_table(self):
        """Test header, separator and float rendering."""
        table = SummaryFormatter.format_rows(
            [{"mode": "feddistr", "mean_accuracy": 0.91234, "rounds": 1},
             {"mode": "fedavg", "mean_accuracy": 0.9, "rounds": None}],
            ["mode", "mean_accuracy", "rounds"],
        )
        lines = table.splitlines()
        assert lines[0].split() == ["mode", "mean_accuracy", "rounds"]
        assert set(lines[1]) == {"="}
        assert "0.9123" in lines[2]
        assert lines[3].split() == ["fedavg", "0.9000"]
