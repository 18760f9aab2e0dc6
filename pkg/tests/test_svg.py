import re
import xml.etree.ElementTree as ET

import numpy as np

from ctfilter.svg import DIVERGING, diverging_color, render_heatmap_svg, render_lines_svg

NS = "{http://www.w3.org/2000/svg}"


def cells(path):
    root = ET.parse(path).getroot()
    return [r for r in root.iter(f"{NS}rect") if r.get("class") == "cell"]


def texts(path):
    return [t.text for t in ET.parse(path).getroot().iter(f"{NS}text")]


def test_single_cell(tmp_path):
    p = render_heatmap_svg([[12.5]], tmp_path / "one.svg", row_labels=[0.9], col_labels=[2.0], title="t")
    assert len(cells(p)) == 1
    t = texts(p)
    assert "12.5" in t and "0.9" in t and "2.0" in t and "rho" in t and "r" in t


def test_all_zero_table_is_midpoint(tmp_path):
    p = render_heatmap_svg(np.zeros((3, 4)), tmp_path / "z.svg")
    mid = "#" + "".join(f"{int(round(255 * c)):02x}" for c in DIVERGING[1])
    assert {c.get("fill") for c in cells(p)} == {mid}


def test_nan_cell_is_hatched(tmp_path):
    p = render_heatmap_svg([[1.0, np.nan], [-2.0, 3.0]], tmp_path / "n.svg")
    fills = [c.get("fill") for c in cells(p)]
    assert fills.count("url(#hatch)") == 1
    assert "nan" not in " ".join(t for t in texts(p) if t)


def test_diverging_palette_ends():
    assert diverging_color(0.0, 5.0) == diverging_color(0.0, 0.0)
    assert diverging_color(5.0, 5.0) != diverging_color(-5.0, 5.0)
    assert diverging_color(50.0, 5.0) == diverging_color(5.0, 5.0)


def test_lines_break_at_nan(tmp_path):
    x = np.arange(5.0)
    med = np.array([0.0, 1.0, np.nan, 1.0, 0.0])
    p = render_lines_svg(x, {"a": (med, med - 1, med + 1)}, tmp_path / "l.svg")
    src = p.read_text()
    assert len(re.findall("<polyline", src)) == 2
    ET.parse(p)
