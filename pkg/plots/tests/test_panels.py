import os

import numpy as np
import pytest

from linftyplots import FigureSpec, cell_to_point, equal_levels, render_sigma_panels
from linftyplots import io

from conftest import write_toy_experiment


def test_equal_levels_spacing():
    levels = equal_levels(0.0, 3.0, 10)
    assert levels.shape == (10,)
    gaps = np.diff(levels)
    assert np.allclose(gaps, gaps[0])
    assert levels[0] == 0.0 and levels[-1] == 3.0
    assert equal_levels(1.0, 1.0, 10) is None  # flat field


def test_cell_to_point_averaging(toy_experiment):
    mesh = io.load_mesh(toy_experiment)
    values = np.array([1.0, 2.0, 3.0, 4.0])
    verts, tris, point_values = cell_to_point(mesh, np.arange(4), values)
    assert verts.shape[0] == 5
    # the centre vertex touches all four equal-area cells
    centre = np.argmin(np.linalg.norm(verts, axis=1))
    assert point_values[centre] == pytest.approx(2.5)
    # a boundary corner touches two cells
    corner = np.argmin(np.linalg.norm(verts - [-1, -1], axis=1))
    assert point_values[corner] == pytest.approx((1.0 + 4.0) / 2.0)


def test_render_panels_toy(toy_experiment):
    spec = FigureSpec(toy_experiment)
    result = render_sigma_panels(spec)
    assert len(result.panels) == 2
    assert result.clean
    flat, skewed = result.panels
    # p = 2 weights are uniform: flat field, uniform fill, no levels
    assert flat.levels is None
    assert "flat" in flat.note
    assert os.path.exists(flat.image_path)
    # p = 4 has ten equally spaced levels between the density extremes
    assert skewed.levels.shape == (10,)
    gaps = np.diff(skewed.levels)
    assert np.allclose(gaps, gaps[0])
    assert os.path.exists(result.log_path)
    log = open(result.log_path).read()
    assert "SKIP" not in log


def test_render_skips_missing_exponent(toy_experiment):
    spec = FigureSpec(toy_experiment, exponents=[2.0, 4.0, 10.0])
    result = render_sigma_panels(spec)
    assert not result.clean
    missing = [p for p in result.panels if p.image_path is None]
    assert [p.p for p in missing] == [10.0]
    assert "SKIP" in open(result.log_path).read()
    assert len(result.rendered) == 2


def test_render_log_density_variable(toy_experiment):
    spec = FigureSpec(toy_experiment, exponents=[4.0], variable="log_density")
    result = render_sigma_panels(spec)
    assert result.clean
    assert result.panels[0].levels.shape == (10,)


def test_render_deterministic(tmp_path):
    blobs = []
    for tag in ("a", "b"):
        exp = write_toy_experiment(tmp_path / tag)
        result = render_sigma_panels(FigureSpec(exp))
        blobs.append(b"".join(open(p.image_path, "rb").read()
                              for p in result.panels))
    assert blobs[0] == blobs[1]


def test_figure_spec_validation(toy_experiment):
    with pytest.raises(ValueError):
        FigureSpec(toy_experiment, level_count=1)
    with pytest.raises(ValueError):
        FigureSpec(toy_experiment, variable="weights")


def test_missing_artifacts_raise(tmp_path):
    with pytest.raises(io.ArtifactError):
        render_sigma_panels(FigureSpec(str(tmp_path / "nowhere")))
