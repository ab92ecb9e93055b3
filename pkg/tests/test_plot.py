import re

import numpy as np
import pytest

from wdn_pressure import plot
from wdn_pressure.signal import ImfSet, decompose


def test_constant_series_single_polyline():
    svg = plot.line_svg([np.full(50, 3.0)])
    assert svg.count("<polyline") == 1 and svg.startswith("<svg")


def test_line_svg_deterministic(tmp_path):
    x = np.sin(np.arange(300) / 9)
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    plot.write_svg(plot.line_svg([x, -x], ["a", "b"], "t"), a)
    plot.write_svg(plot.line_svg([x, -x], ["a", "b"], "t"), b)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().count("<polyline") == 2


def test_imf_panels():
    r = np.random.default_rng(0)
    s = ImfSet(tuple(r.standard_normal(64) for _ in range(4)), np.linspace(0, 1, 64), 64, (1,) * 4)
    assert plot.imf_svg(s).count('<g class="panel"') == 5
    real = decompose(np.sin(np.arange(512) / 3) + np.sin(np.arange(512) / 40))
    assert plot.imf_svg(real).count('<g class="panel"') == real.n_imfs + 1


def test_scatter_radius_encodes_amplitude():
    svg = plot.scatter_svg([0, 1, 2], [0.1, 0.2, 0.3], [0.0, 1.0, 2.0], max_radius=4.0)
    radii = [float(v) for v in re.findall(r' r="([0-9.]+)"', svg)]
    # zero amplitude keeps a visible minimum dot
    assert radii == [0.2, 2.0, 4.0]


def test_plot_errors(tmp_path):
    with pytest.raises(plot.PlotError):
        plot.line_svg([])
    with pytest.raises(plot.PlotError):
        plot.line_svg([[]])
    with pytest.raises(plot.PlotError):
        plot.scatter_svg([], [], [])
    with pytest.raises(plot.PlotError):
        plot.write_svg("<svg/>", tmp_path / "missing" / "x.svg")
