"""Create static plots of sigma surfaces, loops and detected points."""
from pathlib import Path
from typing import Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from berry_svd.utils.model import PathLoop, SigmaSurface, loop_point  # noqa: E402


def loop_outline(loop: PathLoop, count: int = 400) -> np.ndarray:
    """Points along the loop, closed."""
    return np.array([loop_point(loop, k / count)[0] for k in range(count + 1)])


def plot_sigma_surface(
    surface: SigmaSurface,
    loops: Sequence[PathLoop] = (),
    points: Sequence[Tuple[float, float]] = (),
    title: str = "Smallest singular value",
):
    """Show sigma_min over the scanned box with loops and rank-loss points on top."""
    fig = plt.figure(figsize=(6, 5))
    ax = fig.add_subplot(111)
    mesh = ax.pcolormesh(surface.xs, surface.ys, surface.sigma_min, shading="auto", cmap="viridis")
    ax.contour(surface.xs, surface.ys, surface.sigma_min, levels=8, colors="white", linewidths=0.5)
    fig.colorbar(mesh, ax=ax, label=r"$\sigma_{\min}$")

    for loop in loops:
        outline = loop_outline(loop)
        ax.plot(outline[:, 0], outline[:, 1], "r-", linewidth=1.5)
    if points:
        xy = np.array(points)
        ax.plot(xy[:, 0], xy[:, 1], "kx", markersize=9, markeredgewidth=2)

    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(title)
    ax.set_aspect("equal")
    fig.tight_layout()
    return fig


def save_figure(fig, path: Union[str, Path]):
    """Write the figure and release it."""
    fig.savefig(str(path), dpi=150)
    plt.close(fig)
