"""Tests for artifact writers."""
import json

import numpy as np
import pytest

from qmlab.config import RunSummary
from qmlab.export import format_value, summary_schema, write_csv, write_dat, write_plot_script, write_summary


class TestFormatValue:
    @pytest.mark.parametrize("value,text", [
        (True, "1"),
        (np.bool_(False), "0"),
        (np.int64(7), "7"),
        (0.1, "0.10000000000000001"),
        (np.float64(2.5), "2.5"),
        ("left", "left"),
    ])
    def test_formats(self, value, text):
        assert format_value(value) == text

    def test_floats_round_trip(self):
        x = 1.0 / 3.0
        assert float(format_value(x)) == x


class TestWriters:
    def test_csv_has_header_and_crlf(self, tmp_path):
        path = write_csv(tmp_path / "nested" / "a.csv", ("n", "value"), [(1, 0.5), (2, 0.25)])
        assert path.read_bytes() == b"n,value\r\n1,0.5\r\n2,0.25\r\n"

    def test_csv_is_byte_identical_across_writes(self, tmp_path):
        rows = [(n, np.exp(-n / 3)) for n in range(20)]
        write_csv(tmp_path / "a.csv", ("n", "v"), rows)
        write_csv(tmp_path / "b.csv", ("n", "v"), rows)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_dat_columns(self, tmp_path):
        path = write_dat(tmp_path / "a.dat", [1, 2], [0.5, 0.125])
        assert path.read_text() == "1 0.5\n2 0.125\n"

    def test_plot_script(self, tmp_path):
        path = write_plot_script(tmp_path / "plot.gp", [("a.dat", "first"), ("b.dat", "second")], logy=False)
        text = path.read_text()
        assert "set output 'plot.png'" in text
        assert "set logscale x\n" in text
        assert "'a.dat' using 1:2 with lines title 'first', 'b.dat'" in text

    def test_plot_script_without_log_axes(self, tmp_path):
        text = write_plot_script(tmp_path / "plot.gp", [("a.dat", "a")], logx=False, logy=False).read_text()
        assert "logscale" not in text

    def test_summary_json(self, tmp_path, tail_config):
        summary = RunSummary.for_config(tail_config, metrics={"n1": None, "mass_defect": 1e-17})
        data = json.loads(write_summary(tmp_path, summary).read_text())
        assert data["command"] == "tail"
        assert data["metrics"] == {"n1": None, "mass_defect": 1e-17}

    def test_summary_json_conforms_to_schema(self, tmp_path, tail_config):
        summary = RunSummary.for_config(tail_config, checks={"mass_conservation": True}, metrics={"n1": 12.0},
                                        artifacts=["tail.csv"])
        text = write_summary(tmp_path, summary).read_text()
        data, schema = json.loads(text), summary_schema()
        assert set(schema.get("required", [])) <= set(data)
        assert set(data) <= set(schema["properties"])
        assert RunSummary.model_validate_json(text) == summary

    def test_schema_lists_summary_fields(self):
        properties = summary_schema()["properties"]
        assert {"command", "seed", "law", "family", "status", "fits", "checks", "metrics", "artifacts"} <= set(properties)
