"""Figure regeneration for linftylab experiment artifacts."""

from .io import ArtifactError, load_mesh, load_rate_table, load_sigma, load_summary
from .panels import FigureSpec, RenderResult, cell_to_point, equal_levels, render_sigma_panels
from .rates import RateRender, fit_slope, render_rate_table

__version__ = "0.1.0"
