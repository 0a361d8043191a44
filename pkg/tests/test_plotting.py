"""Tests for utils/plotting.py."""
import numpy as np

from berry_svd.utils.model import Box, PathLoop, grid_scan
from berry_svd.utils.plotting import loop_outline, plot_sigma_surface, save_figure


def test_loop_outline_closes():
    outline = loop_outline(PathLoop.rect(Box(-1.0, 1.0, -0.5, 0.5)), count=40)
    assert outline.shape == (41, 2)
    assert np.allclose(outline[0], outline[-1])
    assert np.allclose(outline[0], [-1.0, -0.5])


def test_surface_with_overlays(family_2x2, tmp_path):
    surface = grid_scan(family_2x2, Box(-1.0, 1.0, -1.0, 1.0), 9)
    fig = plot_sigma_surface(surface, loops=[PathLoop.circle((0.0, 0.0), 0.5)], points=[(0.0, 0.0)])
    ax = fig.axes[0]
    assert len(ax.lines) == 2
    path = tmp_path / "surface.png"
    save_figure(fig, path)
    assert path.stat().st_size > 0
