"""Secondary acceptance: regenerate the figure panels for every preset.

Panels B-F (p = 2, 4, 10, 20, 100) must render with exactly ten equally
spaced contour levels and a clean render log.  The artifacts come from the
solver package strictly through its CLI and file formats.
"""

import os

import numpy as np

from linftyplots import FigureSpec, render_sigma_panels

from conftest import PRESETS

PANEL_EXPONENTS = [2.0, 4.0, 10.0, 20.0, 100.0]


def test_figure_regeneration(preset_outputs, tmp_path):
    for preset in PRESETS:
        spec = FigureSpec(preset_outputs[preset],
                          exponents=PANEL_EXPONENTS,
                          out_dir=str(tmp_path / preset))
        result = render_sigma_panels(spec)
        log = open(result.log_path).read()
        assert result.clean, f"{preset}: unclean render log:\n{log}"
        assert "SKIP" not in log and "ERROR" not in log
        assert len(result.panels) == len(PANEL_EXPONENTS)
        for panel in result.panels:
            assert os.path.getsize(panel.image_path) > 0
            if panel.levels is None:
                # only the p = 2 measure may be exactly flat
                assert panel.p == 2.0, f"{preset}: flat panel at p={panel.p}"
                continue
            assert panel.levels.shape == (10,)
            gaps = np.diff(panel.levels)
            assert np.all(gaps > 0.0)
            assert np.allclose(gaps, gaps[0], rtol=1e-12)
        print(f"[PASS] figure regeneration {preset}: "
              f"{len(result.rendered)} panels, log clean")
