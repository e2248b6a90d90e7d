"""Coupling models for multi-component scalar conservation laws.

A model blends per-component flux laws through a vector color field v:
v_l is the regularized indicator of component l's subdomain, the leftover
1 - sum(v) weights the reference component.  The conserved unknown is
w = conserved(u, v), strictly increasing in u, so w can always be
inverted back to the shared continuous unknown u.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .numerics import RootError, gauss_rule, solve_increasing

__all__ = [
    "CouplingError", "LayoutError", "RootError",
    "GammaMap", "FluxFamily", "CouplingModel", "make_linear_coupling",
    "invert_conserved", "invert_conserved_weighted",
    "flux_of_conserved", "dflux_dw",
    "HalfPlane", "Disk", "Annulus", "Triangle", "Difference", "EmptyRegion",
    "DomainLayout", "ColorField", "build_color_field", "smoothstep",
]


class CouplingError(ValueError):
    """Model construction or consistency failure."""


class LayoutError(ValueError):
    """Invalid domain layout or color field."""


@dataclass(frozen=True)
class GammaMap:
    """Strictly increasing change of variable u -> w for one component."""
    fn: Callable
    deriv: Callable
    label: str = "gamma"
    linear: bool = False


@dataclass(frozen=True)
class FluxFamily:
    """Flux law of one component, with analytic derivative.

    fn(w) returns shape w.shape + (2,).  polynomial_degree <= 2 marks the
    flux as piecewise-parabolic in w, which lets wave speed suprema be
    taken at interval endpoints.
    """
    fn: Callable
    deriv: Callable
    label: str = "flux"
    polynomial_degree: int | None = None


@dataclass(frozen=True)
class CouplingModel:
    """Blended coupling functions and their analytic derivatives.

    All evaluators broadcast: u with shape S, colors v with shape
    S + (L,) or broadcastable against it.  conserved_du must be strictly
    positive wherever the solver evaluates it.
    """
    n_components: int
    conserved: Callable        # w(u, v)
    conserved_du: Callable
    flux: Callable             # shape (..., 2)
    flux_du: Callable          # shape (..., 2)
    flux_dv: Callable          # shape (..., 2, L)
    gammas: tuple | None = None
    fluxes: tuple | None = None
    wave_speed_at_endpoints: bool = False

    def w_bounds(self, v, m: float, M: float):
        """Image of [m, M] under the conserved map at color v."""
        return self.conserved(m, v), self.conserved(M, v)

    def validate(self, u_samples=None, seed: int = 0, tol: float = 1e-12):
        """Probe vertex consistency and monotonicity; raise CouplingError.

        Needs the per-component families (gammas, fluxes) to compare
        against; models built by make_linear_coupling carry them.
        """
        rng = np.random.default_rng(seed)
        if u_samples is None:
            u_samples = rng.uniform(-5.0, 5.0, size=64)
        u = np.asarray(u_samples, dtype=float)
        L = self.n_components
        corners = np.concatenate([np.zeros((1, L)), np.eye(L)], axis=0)
        if self.gammas is not None and self.fluxes is not None:
            for k, corner in enumerate(corners):
                v = np.broadcast_to(corner, u.shape + (L,))
                g = self.gammas[k].fn(u)
                scale = 1.0 + np.abs(g)
                if (np.abs(self.conserved(u, v) - g) > tol * scale).any():
                    raise CouplingError(
                        f"conserved map disagrees with component {k} at a "
                        "simplex vertex")
                fw = self.fluxes[k].fn(g)
                scale = 1.0 + np.abs(fw)
                if (np.abs(self.flux(u, v) - fw) > tol * scale).any():
                    raise CouplingError(
                        f"flux disagrees with component {k} at a simplex "
                        "vertex")
        mixes = rng.dirichlet(np.ones(L + 1), size=16)[:, :L]
        probes = np.concatenate([corners, mixes], axis=0)
        for v_row in probes:
            v = np.broadcast_to(v_row, u.shape + (L,))
            if (self.conserved_du(u, v) <= 0.0).any():
                raise CouplingError(
                    "conserved map is not strictly increasing on the probe "
                    "grid")


def make_linear_coupling(gammas: Sequence[GammaMap],
                         fluxes: Sequence[FluxFamily],
                         probe_range=(-10.0, 10.0),
                         probe_count: int = 401) -> CouplingModel:
    """Convex blend of component laws by the color weights.

    gammas and fluxes list the reference component first, then the L
    colored components.  Each gamma is probed for strict monotonicity on
    probe_range before the model is assembled.
    """
    gammas = tuple(gammas)
    fluxes = tuple(fluxes)
    if len(gammas) != len(fluxes) or len(gammas) < 2:
        raise CouplingError(
            "need one gamma and one flux per component, reference first")
    L = len(gammas) - 1
    grid = np.linspace(probe_range[0], probe_range[1], probe_count)
    for k, g in enumerate(gammas):
        if (g.deriv(grid) <= 0.0).any() or (np.diff(g.fn(grid)) <= 0.0).any():
            raise CouplingError(
                f"gamma {k} ({g.label}) is not strictly increasing on the "
                "probe grid")

    def conserved(u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        out = (1.0 - v.sum(axis=-1)) * gammas[0].fn(u)
        for l in range(1, L + 1):
            out = out + v[..., l - 1] * gammas[l].fn(u)
        return out

    def conserved_du(u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        out = (1.0 - v.sum(axis=-1)) * gammas[0].deriv(u)
        for l in range(1, L + 1):
            out = out + v[..., l - 1] * gammas[l].deriv(u)
        return out

    def flux(u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        out = (1.0 - v.sum(axis=-1))[..., None] * fluxes[0].fn(gammas[0].fn(u))
        for l in range(1, L + 1):
            out = out + v[..., l - 1][..., None] * fluxes[l].fn(
                gammas[l].fn(u))
        return out

    def flux_du(u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        out = ((1.0 - v.sum(axis=-1)) * gammas[0].deriv(u))[..., None] \
            * fluxes[0].deriv(gammas[0].fn(u))
        for l in range(1, L + 1):
            out = out + (v[..., l - 1] * gammas[l].deriv(u))[..., None] \
                * fluxes[l].deriv(gammas[l].fn(u))
        return out

    def flux_dv(u, v):
        u = np.asarray(u, dtype=float)
        base = fluxes[0].fn(gammas[0].fn(u))
        cols = [fluxes[l].fn(gammas[l].fn(u)) - base for l in range(1, L + 1)]
        return np.stack(cols, axis=-1)

    endpoint_ok = all(g.linear for g in gammas) and all(
        f.polynomial_degree is not None and f.polynomial_degree <= 2
        for f in fluxes)

    return CouplingModel(
        n_components=L,
        conserved=conserved,
        conserved_du=conserved_du,
        flux=flux,
        flux_du=flux_du,
        flux_dv=flux_dv,
        gammas=gammas,
        fluxes=fluxes,
        wave_speed_at_endpoints=endpoint_ok,
    )


# ---------------------------------------------------------------------------
# inversion and flux evaluation in the conserved variable


def invert_conserved(model: CouplingModel, w, v, tol: float = 1e-12,
                     u0=None):
    """Solve conserved(u, v) = w for u; scalars or arrays.

    Residual criterion |conserved(u, v) - w| <= tol * (1 + |w|).
    """
    w_arr = np.atleast_1d(np.asarray(w, dtype=float))
    v_arr = np.asarray(v, dtype=float)
    if v_arr.ndim == 1:
        v_arr = np.broadcast_to(v_arr, w_arr.shape + v_arr.shape)
    v_arr = np.broadcast_to(v_arr, w_arr.shape + v_arr.shape[-1:])
    start = np.zeros_like(w_arr) if u0 is None else \
        np.broadcast_to(np.asarray(u0, dtype=float), w_arr.shape).copy()

    def eval_fd(u):
        return model.conserved(u, v_arr), model.conserved_du(u, v_arr)

    u = solve_increasing(eval_fd, start, w_arr, tol=tol)
    if np.isscalar(w) or np.asarray(w).ndim == 0:
        return float(u[0])
    return u.reshape(np.asarray(w).shape)


def invert_conserved_weighted(model: CouplingModel, w_target, pairs,
                              tol: float = 1e-12, u0: float | None = None):
    """Solve sum_e a_e * conserved(u, v_e) = w_target for one cell.

    pairs: sequence of (weight, color vector) with positive weights
    summing to 1.
    """
    weights = np.asarray([p[0] for p in pairs], dtype=float)
    colors = np.asarray([np.asarray(p[1], dtype=float) for p in pairs])
    if weights.size == 0:
        raise CouplingError("weighted inversion needs at least one pair")
    if (weights <= 0.0).any() or abs(weights.sum() - 1.0) > 1e-12:
        raise CouplingError("weights must be positive and sum to 1")

    def eval_fd(u):
        # u has shape (1,); broadcast over the pair axis
        F = (weights * model.conserved(u[:, None], colors)).sum(axis=-1)
        dF = (weights * model.conserved_du(u[:, None], colors)).sum(axis=-1)
        return F, dF

    start = np.array([0.0 if u0 is None else float(u0)])
    target = np.array([float(w_target)])
    return float(solve_increasing(eval_fd, start, target, tol=tol)[0])


def flux_of_conserved(model: CouplingModel, w, v, tol: float = 1e-12):
    """Physical flux evaluated at conserved state w and color v."""
    u = invert_conserved(model, w, v, tol=tol)
    return model.flux(u, v)


def dflux_dw(model: CouplingModel, w, v, tol: float = 1e-12):
    """Analytic derivative of the flux in the conserved variable.

    Chain rule through the inverse map: flux_du / conserved_du at
    u(w, v).  No finite differencing.
    """
    u = invert_conserved(model, w, v, tol=tol)
    return model.flux_du(u, v) / np.asarray(
        model.conserved_du(u, v))[..., None]


# ---------------------------------------------------------------------------
# domain layouts and color fields


def smoothstep(t):
    """C^1 ramp: 0 below 0, 3t^2 - 2t^3 on [0, 1], 1 above."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


@dataclass(frozen=True)
class HalfPlane:
    """Points with nx*x + ny*y <= offset."""
    nx: float
    ny: float
    offset: float

    def signed_distance(self, pts):
        pts = np.asarray(pts, dtype=float)
        norm = float(np.hypot(self.nx, self.ny))
        if norm == 0.0:
            raise LayoutError("half-plane normal must be nonzero")
        return (self.offset - self.nx * pts[..., 0]
                - self.ny * pts[..., 1]) / norm


@dataclass(frozen=True)
class Disk:
    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise LayoutError("disk radius must be positive")

    def signed_distance(self, pts):
        pts = np.asarray(pts, dtype=float)
        d = np.hypot(pts[..., 0] - self.cx, pts[..., 1] - self.cy)
        return self.radius - d


@dataclass(frozen=True)
class Annulus:
    cx: float
    cy: float
    r_inner: float
    r_outer: float

    def __post_init__(self):
        if not (0.0 < self.r_inner < self.r_outer):
            raise LayoutError("annulus needs 0 < r_inner < r_outer")

    def signed_distance(self, pts):
        pts = np.asarray(pts, dtype=float)
        d = np.hypot(pts[..., 0] - self.cx, pts[..., 1] - self.cy)
        return np.minimum(d - self.r_inner, self.r_outer - d)


@dataclass(frozen=True)
class Triangle:
    """Filled triangle; vertex order is normalized to CCW."""
    p1: tuple
    p2: tuple
    p3: tuple

    def _ccw(self):
        a = np.asarray(self.p1, dtype=float)
        b = np.asarray(self.p2, dtype=float)
        c = np.asarray(self.p3, dtype=float)
        twice = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if twice == 0.0:
            raise LayoutError("triangle is degenerate")
        if twice < 0.0:
            b, c = c, b
        return a, b, c

    def signed_distance(self, pts):
        pts = np.asarray(pts, dtype=float)
        a, b, c = self._ccw()
        dist = np.full(pts.shape[:-1], np.inf)
        inside = np.ones(pts.shape[:-1], dtype=bool)
        for p, q in ((a, b), (b, c), (c, a)):
            e = q - p
            r = pts - p
            t = np.clip((r[..., 0] * e[0] + r[..., 1] * e[1])
                        / (e[0] ** 2 + e[1] ** 2), 0.0, 1.0)
            proj = p + t[..., None] * e
            seg = np.hypot(pts[..., 0] - proj[..., 0],
                           pts[..., 1] - proj[..., 1])
            dist = np.minimum(dist, seg)
            cross = e[0] * r[..., 1] - e[1] * r[..., 0]
            inside &= cross >= 0.0
        return np.where(inside, dist, -dist)


@dataclass(frozen=True)
class Difference:
    """Points of region `keep` not in region `cut` (sign-exact CSG)."""
    keep: object
    cut: object

    def signed_distance(self, pts):
        return np.minimum(self.keep.signed_distance(pts),
                          -self.cut.signed_distance(pts))


@dataclass(frozen=True)
class EmptyRegion:
    def signed_distance(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.full(pts.shape[:-1], -1e30)


@dataclass(frozen=True)
class DomainLayout:
    """One region per colored component plus a transition width.

    The regularized indicator of component l ramps from 0 to 1 across a
    band of total width `transition_width` centered on the region
    boundary: points deeper inside than half that width saturate at 1,
    points farther outside drop to 0.
    """
    regions: tuple
    transition_width: float

    def __post_init__(self):
        if len(self.regions) < 1:
            raise LayoutError("layout needs at least one component region")
        if self.transition_width <= 0.0:
            raise LayoutError("transition width must be positive")

    @property
    def n_components(self) -> int:
        return len(self.regions)

    def indicator(self, pts) -> np.ndarray:
        """Regularized vector indicator at points, shape (..., L)."""
        pts = np.asarray(pts, dtype=float)
        cols = [smoothstep(r.signed_distance(pts) / self.transition_width
                           + 0.5)
                for r in self.regions]
        return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class ColorField:
    """Edge-averaged color vectors, one row per mesh edge."""
    edge_colors: np.ndarray   # (Ne, L)
    n_components: int

    def half_edge_view(self, mesh) -> np.ndarray:
        return self.edge_colors[mesh.he_edge]


def build_color_field(mesh, layout: DomainLayout,
                      quadrature_order: int = 4) -> ColorField:
    """Average the regularized indicator over each edge by Gauss rules.

    Each resulting vector must lie in the unit simplex; round-off
    excursions up to 1e-12 are projected back, anything larger raises
    LayoutError.
    """
    if quadrature_order < 1:
        raise LayoutError("quadrature order must be >= 1")
    nodes, weights = gauss_rule(quadrature_order)
    a = mesh.vertices[mesh.edge_vtx[:, 0]]
    b = mesh.vertices[mesh.edge_vtx[:, 1]]
    pts = a[:, None, :] + nodes[None, :, None] * (b - a)[:, None, :]
    vals = layout.indicator(pts)               # (Ne, G, L)
    if (vals < -1e-12).any() or (vals > 1.0 + 1e-12).any():
        raise LayoutError("indicator values leave [0, 1]")
    colors = np.einsum("g,egl->el", weights, vals)

    excess = colors.sum(axis=1) - 1.0
    low = colors.min(axis=1)
    if (excess > 1e-12).any() or (low < -1e-12).any():
        bad = int(np.nonzero((excess > 1e-12) | (low < -1e-12))[0][0])
        raise LayoutError(
            f"edge {bad} color leaves the unit simplex beyond round-off")
    colors = np.clip(colors, 0.0, None)
    over = colors.sum(axis=1)
    scale = np.where(over > 1.0, over, 1.0)
    colors = colors / scale[:, None]
    colors.flags.writeable = False
    return ColorField(edge_colors=colors, n_components=layout.n_components)
