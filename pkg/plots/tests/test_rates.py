import os

import numpy as np
import pytest

from linftyplots import fit_slope, render_rate_table
from linftyplots.io import ArtifactError, load_rate_table


def write_rates(path, rows):
    with open(path, "w") as fh:
        fh.write("n,h,p,error\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    return str(path)


def test_three_row_table_and_plot(tmp_path):
    # exact slope-1/3 data
    rows = [(8, 0.25, 2, 0.2), (16, 0.125, 3, 0.2 * 0.5 ** (1 / 3)),
            (32, 0.0625, 4, 0.2 * 0.25 ** (1 / 3))]
    csv = write_rates(tmp_path / "rates.csv", rows)
    render = render_rate_table(csv, str(tmp_path / "out"))
    assert render.slope == pytest.approx(1.0 / 3.0, abs=1e-10)
    assert render.warning is None
    assert os.path.exists(render.table_path)
    assert os.path.exists(render.plot_path)
    text = open(render.table_path).read()
    assert "fitted slope: 0.3333" in text


def test_single_row_no_fit(tmp_path):
    csv = write_rates(tmp_path / "one.csv", [(8, 0.25, 2, 0.1)])
    render = render_rate_table(csv, str(tmp_path / "out"))
    assert render.slope is None
    assert render.plot_path is None
    assert "no slope" in render.warning


def test_empty_table_raises(tmp_path):
    csv = write_rates(tmp_path / "empty.csv", [])
    with pytest.raises(ArtifactError):
        render_rate_table(csv, str(tmp_path / "out"))
    assert load_rate_table(csv) == []


def test_fit_slope_helper():
    assert fit_slope([]) is None
