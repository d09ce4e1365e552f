"""Figure-rendering tests against the pinned sample histories.

The data files were produced once by the runner CLI and are committed; the
schema is the contract between the packages.
"""

from pathlib import Path

import numpy as np
import pytest

import ssdplots
from ssdplots import HISTORY_COLUMNS, PlotSpec, SchemaError, build_figure, load_history, render

DATA = Path(__file__).parent / "data"

APP1 = DATA / "app1_history.csv"
APP2 = DATA / "app2_history.csv"
SSD = DATA / "compare_ssd.csv"
SGD = DATA / "compare_sgd.csv"


class TestLoadHistory:
    def test_pinned_schema(self):
        data = load_history(APP1)
        assert set(data) == set(HISTORY_COLUMNS)
        assert len(data["n"]) == 60

    def test_energy_gaps_are_nan(self):
        data = load_history(APP2)
        assert np.isfinite(data["energy"]).sum() == 4

    def test_empty_history_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text(",".join(HISTORY_COLUMNS) + "\n")
        with pytest.raises(SchemaError, match="no data rows"):
            load_history(path)

    def test_header_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(SchemaError, match="header"):
            load_history(path)

    def test_short_row_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(",".join(HISTORY_COLUMNS) + "\n1,2,3\n")
        with pytest.raises(SchemaError, match="line 2"):
            load_history(path)


class TestBuildFigure:
    def test_single_run_has_data_and_reference_series(self):
        fig = build_figure(PlotSpec(inputs=(str(APP1),), output="unused.pdf"))
        ax = fig.axes[0]
        assert len(ax.get_lines()) == 2  # one data series plus the reference
        assert ax.get_xscale() == "log" and ax.get_yscale() == "log"

    def test_compare_pair_has_two_series(self):
        fig = build_figure(
            PlotSpec(inputs=(str(SSD), str(SGD)), output="unused.pdf", reference=False)
        )
        ax = fig.axes[0]
        assert len(ax.get_lines()) == 2
        labels = [line.get_label() for line in ax.get_lines()]
        assert labels == ["ssd", "sgd"]

    def test_energy_comparison_drops_unlogged_rows(self):
        fig = build_figure(
            PlotSpec(inputs=(str(SSD), str(SGD)), output="unused.pdf",
                     quantity="energy", reference=False)
        )
        for line in fig.axes[0].get_lines():
            assert len(line.get_xdata()) == 4

    def test_rendering_is_deterministic(self):
        spec = PlotSpec(inputs=(str(APP1),), output="unused.pdf")
        a = build_figure(spec).axes[0].get_lines()[0]
        b = build_figure(spec).axes[0].get_lines()[0]
        assert np.array_equal(a.get_xdata(), b.get_xdata())
        assert np.array_equal(a.get_ydata(), b.get_ydata())

    def test_linear_scale_option(self):
        fig = build_figure(PlotSpec(inputs=(str(APP1),), output="u.pdf", scale="linear"))
        assert fig.axes[0].get_xscale() == "linear"

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            PlotSpec(inputs=(), output="x.pdf")
        with pytest.raises(ValueError):
            PlotSpec(inputs=("a",), output="x.pdf", quantity="misfit")


class TestRenderFiles:
    def test_standard_figure_set(self, tmp_path):
        """The figure set: both derivative-decay plots and the two-run
        comparison, all written as vector graphics."""
        outputs = [
            render(PlotSpec(inputs=(str(APP1),), output=str(tmp_path / "app1_derivative.pdf"))),
            render(PlotSpec(inputs=(str(APP2),), output=str(tmp_path / "app2_derivative.pdf"))),
            render(
                PlotSpec(inputs=(str(SSD), str(SGD)), output=str(tmp_path / "compare_derivative.pdf"),
                         reference=False)
            ),
            render(
                PlotSpec(inputs=(str(SSD), str(SGD)), output=str(tmp_path / "compare_energy.pdf"),
                         quantity="energy", reference=False)
            ),
        ]
        for out in outputs:
            assert Path(out).stat().st_size > 0

    def test_svg_output(self, tmp_path):
        out = render(PlotSpec(inputs=(str(APP1),), output=str(tmp_path / "fig.svg")))
        assert Path(out).read_text().lstrip().startswith("<?xml")


class TestMain:
    def test_single_input(self, tmp_path, capsys):
        code = ssdplots.main(["--input", str(APP1), "--output", str(tmp_path / "a.pdf")])
        assert code == 0
        assert (tmp_path / "a.pdf").exists()

    def test_compare_inputs(self, tmp_path):
        code = ssdplots.main(
            ["--compare", str(SSD), str(SGD), "--quantity", "energy",
             "--output", str(tmp_path / "cmp.pdf")]
        )
        assert code == 0

    def test_empty_history_exits_nonzero(self, tmp_path, capsys):
        path = tmp_path / "empty.csv"
        path.write_text(",".join(HISTORY_COLUMNS) + "\n")
        code = ssdplots.main(["--input", str(path), "--output", str(tmp_path / "x.pdf")])
        assert code == 1
        assert "no data rows" in capsys.readouterr().out
