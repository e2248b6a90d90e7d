"""Figure rendering: cell fields and diagnostics time series to PNG."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.collections import PolyCollection  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["render_field_png", "render_diagnostics_png"]


def render_field_png(mesh, values, path, title: str = "",
                     cmap: str = "viridis", clim=None, dpi: int = 130
                     ) -> None:
    """Render one per-cell scalar as a filled 2D map.

    Cartesian-built meshes use a raster image; general polygonal meshes
    fall back to filled polygons.
    """
    values = np.asarray(values, dtype=float)
    fig, ax = plt.subplots(figsize=(5.4, 4.6))
    if mesh.structured is not None:
        nx, ny, bbox = mesh.structured
        img = values.reshape(ny, nx)
        im = ax.imshow(img, origin="lower", cmap=cmap,
                       extent=(bbox[0], bbox[2], bbox[1], bbox[3]),
                       interpolation="nearest")
    else:
        polys = [mesh.vertices[loop] for loop in mesh.cell_loops()]
        im = PolyCollection(polys, array=values, cmap=cmap,
                            edgecolors="none")
        ax.add_collection(im)
        ax.autoscale_view()
    if clim is not None:
        im.set_clim(*clim)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)


def render_diagnostics_png(log, path, dpi: int = 130) -> None:
    """Four panels against time: step size, worst maximum-principle
    margin, entropy residual max, oscillation increment and sum."""
    data = log.as_dict()
    t = data["t"]
    fig, axes = plt.subplots(2, 2, figsize=(9.0, 6.4), sharex=True)

    axes[0, 0].plot(t, data["tau"], lw=1.0)
    axes[0, 0].set_ylabel("step size")

    axes[0, 1].plot(t, data["max_principle_margin"], lw=1.0)
    axes[0, 1].axhline(0.0, color="k", lw=0.6, ls=":")
    axes[0, 1].set_ylabel("max principle margin")

    ent = data["entropy_residual_max"]
    if np.isfinite(ent).any():
        axes[1, 0].plot(t, ent, lw=1.0)
        axes[1, 0].axhline(0.0, color="k", lw=0.6, ls=":")
    else:
        axes[1, 0].text(0.5, 0.5, "entropy monitor off",
                        ha="center", va="center",
                        transform=axes[1, 0].transAxes)
    axes[1, 0].set_ylabel("entropy residual max")
    axes[1, 0].set_xlabel("t")

    osc = data["oscillation_increment"]
    tot = data["oscillation_sum"]
    axes[1, 1].plot(t, osc, lw=1.0, label="increment")
    axes[1, 1].plot(t, tot, lw=1.0, label="sum")
    if osc.size and (osc > 0.0).all():
        axes[1, 1].set_yscale("log")
    axes[1, 1].set_ylabel("oscillation")
    axes[1, 1].set_xlabel("t")
    axes[1, 1].legend(fontsize=8)

    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
