"""Run diagnostics: discrete entropy balance, maximum principle margin,
oscillation measure, front tracking, equilibrium drift.

All checks work on StepRecord objects (duck-typed: any object with the
same attributes will do) so they can run inside the time loop or be
replayed on stored records.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import adaptive_gauss, gauss_rule

__all__ = ["MeasurementError", "EntropyPair", "quadratic_entropy",
           "EntropyWorkspace", "make_entropy_workspace",
           "entropy_residuals", "max_principle_margin",
           "oscillation_increment", "DiagnosticsLog", "front_speed",
           "FrontTrack", "check_well_balanced"]


class MeasurementError(RuntimeError):
    """A diagnostic could not be evaluated on the given data."""


@dataclass(frozen=True)
class EntropyPair:
    """Convex function of the conserved variable and its derivative.

    deriv_degree, when set, states that deriv is a polynomial of that
    degree; the entropy monitor then picks an exact fixed quadrature for
    models whose wave speed is affine in the cell value.
    """
    value: object
    deriv: object
    label: str = "entropy"
    deriv_degree: int | None = None


def quadratic_entropy() -> EntropyPair:
    return EntropyPair(value=lambda w: 0.5 * w * w,
                       deriv=lambda w: w,
                       label="quadratic", deriv_degree=1)


@dataclass(frozen=True)
class EntropyWorkspace:
    """Step-independent arrays reused by entropy_residuals."""
    v_he: np.ndarray
    nu_he: np.ndarray
    len_he: np.ndarray
    den_he: np.ndarray


def make_entropy_workspace(mesh, dual, color) -> EntropyWorkspace:
    return EntropyWorkspace(
        v_he=color.half_edge_view(mesh),
        nu_he=mesh.he_sign[:, None] * mesh.edge_normal[mesh.he_edge],
        len_he=mesh.edge_length[mesh.he_edge],
        den_he=dual.subcell_fraction * mesh.cell_area[mesh.he_cell])


def entropy_residuals(record, color, model, entropy: EntropyPair | None = None,
                      tol: float = 1e-10,
                      workspace: EntropyWorkspace | None = None) -> np.ndarray:
    """Per-subcell entropy production of one step; <= 0 up to round-off
    when the step is entropy stable.

    The entropy flux difference between two states on an edge is the
    integral of entropy-derivative times directional-flux-derivative
    along the segment of preimage states, evaluated with an adaptive
    Gauss rule.  Subcells whose two sides carry the same state are
    exactly in balance and contribute zero.  Callers stepping in a loop
    can build the workspace once and pass it in.
    """
    if entropy is None:
        entropy = quadratic_entropy()
    mesh = record.mesh
    if workspace is None:
        workspace = make_entropy_workspace(mesh, record.dual, color)
    u_here = record.u_prev[mesh.he_cell]
    u_nb = record.u_nb

    out = np.zeros(mesh.n_half_edges)
    active = u_nb != u_here
    if not active.any():
        return out
    rows = np.nonzero(active)[0]
    res = entropy.value(record.w_sub_evolved[rows]) \
        - entropy.value(record.w_sub[rows])
    coeff = record.tau * workspace.len_he[rows] / workspace.den_he[rows]
    va = workspace.v_he[rows][:, None, :]
    na = workspace.nu_he[rows][:, None, :]

    def fn(theta, idx):
        vv = va[idx]
        nn = na[idx]
        w = model.conserved(theta, vv)
        dphi = (model.flux_du(theta, vv) * nn).sum(axis=-1)
        return entropy.deriv(w) * dphi

    # affine wave speed + polynomial entropy derivative make the
    # integrand a polynomial of degree deriv_degree + 1, integrated
    # exactly by the smallest Gauss rule with 2n - 1 >= that degree
    exact = model.wave_speed_at_endpoints \
        and entropy.deriv_degree is not None and entropy.deriv_degree <= 6

    def flux_diff(a, b):
        if exact:
            nodes, weights = gauss_rule(max(1, (entropy.deriv_degree + 3) // 2))
            theta = a[:, None] + nodes[None, :] * (b - a)[:, None]
            return (b - a) * (fn(theta, slice(None)) @ weights)
        return adaptive_gauss(fn, a, b, tol=tol)

    if record.flux_kind == "godunov":
        gdiff = flux_diff(u_here[rows], record.aux[rows])
    elif record.flux_kind == "rusanov":
        half = flux_diff(u_here[rows], u_nb[rows])
        jump = entropy.value(record.w_sub_nb[rows]) \
            - entropy.value(record.w_sub[rows])
        gdiff = 0.5 * half - 0.5 * record.aux[rows] * jump
    else:
        raise MeasurementError(
            f"no entropy flux rule for numerical flux {record.flux_kind!r}")

    out[rows] = res + coeff * gdiff
    return out


def max_principle_margin(record) -> float:
    """Distance of each new cell value from its local stencil bounds.

    The bounds are the previous values of the cell and its edge
    neighbors.  Nonnegative (up to round-off) when the update respects
    the local maximum principle; returns the worst cell's margin.
    """
    mesh = record.mesh
    starts = mesh.cell_start
    u_self = record.u_prev[mesh.he_cell]
    lo_he = np.minimum(u_self, record.u_nb)
    hi_he = np.maximum(u_self, record.u_nb)
    lo = np.minimum.reduceat(lo_he, starts)
    hi = np.maximum.reduceat(hi_he, starts)
    margin = np.minimum(record.u_next - lo, hi - record.u_next)
    return float(margin.min())


def oscillation_increment(record) -> float:
    """Area-weighted squared distance between cell averages and evolved
    subcell states, summed over the mesh; one step's contribution to
    the oscillation measure."""
    diff = record.w_avg_next[record.mesh.he_cell] - record.w_sub_evolved
    return float(np.sum(record.dual.subcell_area * diff * diff))


@dataclass
class DiagnosticsLog:
    """Per-step scalar diagnostics collected during a run."""
    entropy_enabled: bool = False
    wb_constant: float | None = None
    _t: list = field(default_factory=list)
    _tau: list = field(default_factory=list)
    _margin: list = field(default_factory=list)
    _entropy: list = field(default_factory=list)
    _osc: list = field(default_factory=list)
    _osc_sum: list = field(default_factory=list)
    _drift: list = field(default_factory=list)

    def arm_well_balanced(self, constant: float) -> None:
        """Track drift from a constant initial state."""
        self.wb_constant = float(constant)

    def append_step(self, record, color, model,
                    entropy: EntropyPair | None = None,
                    t: float | None = None,
                    workspace: EntropyWorkspace | None = None) -> None:
        self._t.append(float(t) if t is not None
                       else (self._t[-1] if self._t else 0.0) + record.tau)
        self._tau.append(record.tau)
        self._margin.append(max_principle_margin(record))
        if self.entropy_enabled:
            r = entropy_residuals(record, color, model, entropy=entropy,
                                  workspace=workspace)
            self._entropy.append(float(r.max()) if r.size else 0.0)
        else:
            self._entropy.append(np.nan)
        inc = oscillation_increment(record)
        prev = self._osc_sum[-1] if self._osc_sum else 0.0
        self._osc.append(inc)
        self._osc_sum.append(prev + inc)
        if self.wb_constant is not None:
            self._drift.append(
                float(np.abs(record.u_next - self.wb_constant).max()))

    def __len__(self) -> int:
        return len(self._t)

    @property
    def oscillation_sum(self) -> float:
        return self._osc_sum[-1] if self._osc_sum else 0.0

    @property
    def worst_margin(self) -> float:
        return min(self._margin) if self._margin else np.inf

    @property
    def worst_entropy_residual(self) -> float:
        vals = [v for v in self._entropy if np.isfinite(v)]
        return max(vals) if vals else np.nan

    @property
    def max_drift(self) -> float:
        if self.wb_constant is None:
            raise MeasurementError(
                "well-balanced drift was not tracked: initial data is "
                "not constant")
        return max(self._drift) if self._drift else 0.0

    def as_dict(self) -> dict:
        return {
            "t": np.asarray(self._t),
            "tau": np.asarray(self._tau),
            "max_principle_margin": np.asarray(self._margin),
            "entropy_residual_max": np.asarray(self._entropy),
            "oscillation_increment": np.asarray(self._osc),
            "oscillation_sum": np.asarray(self._osc_sum),
        }


def check_well_balanced(result) -> float:
    """Maximum drift from the initial constant over a finished run.

    Raises MeasurementError when the run did not start from constant
    data (the check would be meaningless)."""
    return result.log.max_drift


@dataclass(frozen=True)
class FrontTrack:
    """Least-squares fit of front position against time."""
    times: np.ndarray
    positions: np.ndarray
    speed: float
    intercept: float
    rms: float


def front_speed(mesh, snapshots, threshold: float,
                direction=(1.0, 0.0), window=None, cell_mask=None,
                field: str = "u", min_snapshots: int = 2) -> FrontTrack:
    """Track a level-set crossing of the cell values and fit its speed.

    For every snapshot, interior edges whose two cell values (the
    snapshot attribute named by ``field``) straddle the threshold
    contribute an interpolated crossing point between the cell
    centroids; points are restricted to the window box
    (xmin, xmax, ymin, ymax) and to edges between cells of the optional
    cell_mask, averaged, and projected on the direction.  The speed is
    the slope of the least-squares line through (time, position).
    """
    d = np.asarray(direction, dtype=float)
    nrm = float(np.hypot(d[0], d[1]))
    if nrm == 0.0:
        raise MeasurementError("front direction must be nonzero")
    d = d / nrm
    inner = mesh.edge_right >= 0
    li = mesh.edge_left[inner]
    ri = mesh.edge_right[inner]
    if cell_mask is not None:
        cell_mask = np.asarray(cell_mask, dtype=bool)
        keep = cell_mask[li] & cell_mask[ri]
        li = li[keep]
        ri = ri[keep]
    cl = mesh.cell_centroid[li]
    cr = mesh.cell_centroid[ri]

    times = []
    positions = []
    for snap in snapshots:
        vals = getattr(snap, field)
        ul = vals[li]
        ur = vals[ri]
        straddle = (ul - threshold) * (ur - threshold) < 0.0
        if not straddle.any():
            continue
        theta = (threshold - ul[straddle]) / (ur[straddle] - ul[straddle])
        pts = cl[straddle] + theta[:, None] * (cr[straddle] - cl[straddle])
        if window is not None:
            x0, x1, y0, y1 = window
            keep = (pts[:, 0] >= x0) & (pts[:, 0] <= x1) \
                & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)
            pts = pts[keep]
        if pts.shape[0] == 0:
            continue
        times.append(snap.t)
        positions.append(float(pts.mean(axis=0) @ d))
    if len(times) < min_snapshots:
        raise MeasurementError(
            f"front tracking needs at least {min_snapshots} snapshots with "
            f"a crossing, found {len(times)}")
    t = np.asarray(times)
    s = np.asarray(positions)
    slope, intercept = np.polyfit(t, s, 1)
    rms = float(np.sqrt(np.mean((s - (slope * t + intercept)) ** 2)))
    return FrontTrack(times=t, positions=s, speed=float(slope),
                      intercept=float(intercept), rms=rms)
