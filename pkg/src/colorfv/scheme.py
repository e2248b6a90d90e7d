"""Well-balanced subcell finite volume update and the run driver.

The conserved unknown w is reconstructed per (cell, edge) subcell from a
single continuous value u per cell, fluxed with a monotone two-point
flux, averaged back with the subcell area fractions, and inverted to the
next u.  Because the flux balance is assembled as two separate sums that
coincide term by term at equilibrium, constant-u states are preserved to
the bit, for any color field.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import diagnostics as diag_mod
from .coupling import ColorField, CouplingModel
from .flux import NumericalFlux, wave_speed_bound
from .mesh import DualGeometry, PrimalMesh
from .numerics import solve_increasing

__all__ = ["SchemeError", "SolverState", "StepRecord", "InitQuadrature",
           "init_state", "reconstruct_subcell", "widened_range",
           "compute_dt", "step", "run", "Snapshot", "RunResult",
           "record_identity_errors", "local_cfl_numbers", "assemble",
           "Assembled", "StepWorkspace", "make_workspace"]


class SchemeError(RuntimeError):
    """Solver failure (bad arguments, CFL violation, bound violation)."""


class InitQuadrature(Enum):
    CENTROID = "centroid"
    SUBCELL_FAN = "subcell_fan"


@dataclass(frozen=True)
class SolverState:
    """Cell values of the continuous unknown plus the frozen data bounds.

    m and M are the initial-data bounds; the update is expected to keep
    every cell inside them (checked at each step, never clamped).
    """
    t: float
    u: np.ndarray
    m: float
    M: float


@dataclass(frozen=True)
class StepRecord:
    """Everything one step produced, for diagnostics and identity checks.

    Half-edge arrays follow the mesh ordering: w_sub is the subcell
    reconstruction before the step, w_sub_evolved the quasi-1D evolved
    subcell state, w_sub_nb the neighbor-side reconstruction (its own
    value copied on boundary edges).  aux carries the dissipation speed
    (rusanov) or extremizing preimage state (godunov) per half-edge.
    """
    tau: float
    flux_kind: str
    u_prev: np.ndarray
    u_next: np.ndarray
    u_nb: np.ndarray
    w_sub: np.ndarray
    w_sub_nb: np.ndarray
    w_sub_evolved: np.ndarray
    w_avg: np.ndarray
    w_avg_next: np.ndarray
    aux: np.ndarray
    mesh: PrimalMesh
    dual: DualGeometry


def widened_range(m: float, M: float) -> tuple[float, float]:
    """Data bounds widened by 10 percent of the span (5 on each side)."""
    span = M - m
    return m - 0.05 * span, M + 0.05 * span


def init_state(mesh: PrimalMesh, u0,
               quadrature: InitQuadrature = InitQuadrature.SUBCELL_FAN
               ) -> SolverState:
    """Project pointwise initial data onto cell values.

    CENTROID samples the cell centroid; SUBCELL_FAN integrates a
    midpoint rule over the centroid fan triangles (exact for linear
    data, constant data reproduced bit-exactly).  u0(x, y) must accept
    arrays.
    """
    cx = mesh.cell_centroid[:, 0]
    cy = mesh.cell_centroid[:, 1]
    ref = np.asarray(u0(cx, cy), dtype=float) + np.zeros(mesh.n_cells)
    if quadrature is InitQuadrature.CENTROID:
        u = ref
    elif quadrature is InitQuadrature.SUBCELL_FAN:
        starts = mesh.cell_start
        a = mesh.vertices[mesh.edge_vtx[mesh.he_edge, 0]]
        b = mesh.vertices[mesh.edge_vtx[mesh.he_edge, 1]]
        fwd = mesh.he_sign > 0
        p = np.where(fwd[:, None], a, b)
        q = np.where(fwd[:, None], b, a)
        c = mesh.cell_centroid[mesh.he_cell]
        sub = 0.5 * np.abs((p[:, 0] - c[:, 0]) * (q[:, 1] - c[:, 1])
                           - (q[:, 0] - c[:, 0]) * (p[:, 1] - c[:, 1]))
        vals = np.zeros(mesh.n_half_edges)
        for mid in (0.5 * (c + p), 0.5 * (p + q), 0.5 * (q + c)):
            vals = vals + (np.asarray(u0(mid[:, 0], mid[:, 1]), dtype=float)
                           - ref[mesh.he_cell])
        vals = vals / 3.0
        # deviation form keeps constant data exactly constant
        dev = np.add.reduceat(sub * vals, starts)
        u = ref + dev / np.add.reduceat(sub, starts)
    else:
        raise SchemeError(f"unknown init quadrature {quadrature!r}")
    if not np.isfinite(u).all():
        raise SchemeError("initial data produced a non-finite cell value")
    return SolverState(t=0.0, u=u, m=float(u.min()), M=float(u.max()))


def reconstruct_subcell(state: SolverState, mesh: PrimalMesh,
                        dual: DualGeometry, color: ColorField,
                        model: CouplingModel):
    """Subcell conserved states and their per-cell weighted averages."""
    v_he = color.half_edge_view(mesh)
    w_sub = model.conserved(state.u[mesh.he_cell], v_he)
    w_avg = np.add.reduceat(dual.subcell_fraction * w_sub, mesh.cell_start)
    return w_sub, w_avg


def compute_dt(state: SolverState, mesh: PrimalMesh, dual: DualGeometry,
               color: ColorField, model: CouplingModel, cfl: float,
               max_dt: float = 1.0, samples: int = 64,
               safety: float = 1.05) -> float:
    """Largest stable step: cfl times the tightest subcell ratio.

    Wave speeds are bounded over the widened data range.  A setup with
    zero wave speed everywhere gets max_dt.
    """
    if not 0.0 < cfl <= 1.0:
        raise SchemeError("cfl_number out of (0, 1]")
    lo, hi = widened_range(state.m, state.M)
    v_he = color.half_edge_view(mesh)
    nu_he = mesh.he_sign[:, None] * mesh.edge_normal[mesh.he_edge]
    bound = wave_speed_bound(model, v_he, nu_he, lo, hi,
                             samples=samples, safety=safety)
    geo = dual.subcell_fraction * mesh.cell_area[mesh.he_cell] \
        / mesh.edge_length[mesh.he_edge]
    with np.errstate(divide="ignore"):
        ratio = np.where(bound > 0.0, geo / bound, np.inf)
    tau = cfl * float(ratio.min())
    return float(min(tau, max_dt))


def local_cfl_numbers(state: SolverState, mesh: PrimalMesh,
                      dual: DualGeometry, color: ColorField,
                      model: CouplingModel, tau: float,
                      samples: int = 64, safety: float = 1.05) -> np.ndarray:
    """Per-subcell CFL numbers; at a compute_dt step, all are <= cfl."""
    lo, hi = widened_range(state.m, state.M)
    v_he = color.half_edge_view(mesh)
    nu_he = mesh.he_sign[:, None] * mesh.edge_normal[mesh.he_edge]
    bound = wave_speed_bound(model, v_he, nu_he, lo, hi,
                             samples=samples, safety=safety)
    geo = dual.subcell_fraction * mesh.cell_area[mesh.he_cell] \
        / mesh.edge_length[mesh.he_edge]
    return tau * bound / geo


@dataclass(frozen=True)
class StepWorkspace:
    """Run-constant arrays shared by every step (pure caching).

    Everything here is a function of mesh, dual, color, model and the
    frozen data bounds, so one instance serves a whole run; step() builds
    a throwaway one when none is passed.  The e_* arrays are aligned to
    the interior edges; he_pos/he_neg map each interior edge to its two
    half-edges so one flux evaluation per edge serves both sides.
    """
    v_he: np.ndarray
    len_he: np.ndarray
    w_lo: np.ndarray
    w_hi: np.ndarray
    slack: np.ndarray
    e_left: np.ndarray
    e_right: np.ndarray
    e_color: np.ndarray
    e_normal: np.ndarray
    he_pos: np.ndarray
    he_neg: np.ndarray


def make_workspace(mesh: PrimalMesh, dual: DualGeometry, color: ColorField,
                   model: CouplingModel, m: float, M: float) -> StepWorkspace:
    v_he = color.half_edge_view(mesh)
    w_lo = model.conserved(m, v_he)
    w_hi = model.conserved(M, v_he)
    idx = np.arange(mesh.n_half_edges)
    pos = np.full(mesh.n_edges, -1)
    neg = np.full(mesh.n_edges, -1)
    fwd = mesh.he_sign > 0
    pos[mesh.he_edge[fwd]] = idx[fwd]
    neg[mesh.he_edge[~fwd]] = idx[~fwd]
    interior = np.nonzero(mesh.edge_right >= 0)[0]
    return StepWorkspace(
        v_he=v_he,
        len_he=mesh.edge_length[mesh.he_edge],
        w_lo=w_lo, w_hi=w_hi,
        slack=1e-9 * (1.0 + np.maximum(np.abs(w_lo), np.abs(w_hi))),
        e_left=mesh.edge_left[interior],
        e_right=mesh.edge_right[interior],
        e_color=color.edge_colors[interior],
        e_normal=mesh.edge_normal[interior],
        he_pos=pos[interior],
        he_neg=neg[interior],
    )


def step(state: SolverState, mesh: PrimalMesh, dual: DualGeometry,
         color: ColorField, model: CouplingModel, flux: NumericalFlux,
         tau: float, tol_root: float = 1e-12, guards: bool = True,
         workspace: StepWorkspace | None = None):
    """Advance one time step; returns (next state, StepRecord).

    The two-point flux is evaluated only on pairs whose cell values
    differ; equal-value pairs get the exact consistency flux, which is
    what any consistent flux returns there, so the update is bitwise
    independent of this shortcut and constant states are preserved
    exactly.  The rusanov aux entry is 0 on such pairs (no spread, no
    dissipation applied), the godunov one is the state itself.

    With guards on, the evolved subcell states must stay inside the
    w-image of [m, M] (post-hoc CFL detection) and the next cell values
    inside [m, M]; violations raise SchemeError naming the first cell.
    """
    if not np.isfinite(tau) or tau <= 0.0:
        raise SchemeError(f"time step must be positive, got {tau}")
    if workspace is None:
        workspace = make_workspace(mesh, dual, color, model,
                                   state.m, state.M)
    u = state.u
    starts = mesh.cell_start
    he_cell = mesh.he_cell
    frac = dual.subcell_fraction
    area = mesh.cell_area
    v_he = workspace.v_he
    len_he = workspace.len_he

    u_he = u[he_cell]
    w_sub = model.conserved(u_he, v_he)
    w_avg = np.add.reduceat(frac * w_sub, starts)

    interior = mesh.he_opp >= 0
    u_nb = np.where(interior, u[mesh.he_opp], u_he)

    w_nb = w_sub.copy()
    diff = np.zeros(mesh.n_half_edges)   # g - flux(u_K, v_e) . nu
    aux = np.zeros(mesh.n_half_edges) if flux.kind == "rusanov" \
        else u_he.copy()
    uL = u[workspace.e_left]
    uR = u[workspace.e_right]
    act = uL != uR
    if act.any():
        hp = workspace.he_pos[act]
        hn = workspace.he_neg[act]
        va = workspace.e_color[act]
        na = workspace.e_normal[act]
        uLa, uRa = uL[act], uR[act]
        wLa, wRa = w_sub[hp], w_sub[hn]
        phiL = (model.flux(uLa, va) * na).sum(axis=-1)
        phiR = (model.flux(uRa, va) * na).sum(axis=-1)
        g_e, aux_e = flux.pairwise(uLa, uRa, wLa, wRa, va, na)
        diff[hp] = g_e - phiL
        diff[hn] = phiR - g_e
        aux[hp] = aux_e
        aux[hn] = aux_e
        w_nb[hp] = wRa
        w_nb[hn] = wLa

    w_avg_next = w_avg - (tau / area) * np.add.reduceat(diff * len_he,
                                                        starts)
    w_evolved = w_sub - (len_he * tau / (frac * area[he_cell])) * diff

    # invert only the cells whose average moved; the rest keep their
    # value, exactly as the warm-started root finder would.
    changed = w_avg_next != w_avg
    u_next = u
    if changed.any():
        cidx = np.nonzero(changed)[0]
        sizes = np.diff(mesh.cell_vtx_start)[cidx]
        ends = np.cumsum(sizes)
        sub_starts = ends - sizes
        pos = np.arange(int(ends[-1])) - np.repeat(sub_starts, sizes)
        he_idx = np.repeat(starts[cidx], sizes) + pos
        frac_s = frac[he_idx]
        v_s = v_he[he_idx]

        def eval_fd(x):
            xx = np.repeat(x, sizes)
            F = np.add.reduceat(frac_s * model.conserved(xx, v_s),
                                sub_starts)
            dF = np.add.reduceat(frac_s * model.conserved_du(xx, v_s),
                                 sub_starts)
            return F, dF

        u_next = u.copy()
        u_next[cidx] = solve_increasing(eval_fd, u[cidx],
                                        w_avg_next[cidx], tol=tol_root)

    if guards:
        bad = (w_evolved < workspace.w_lo - workspace.slack) \
            | (w_evolved > workspace.w_hi + workspace.slack)
        if bad.any():
            i = int(np.nonzero(bad)[0][0])
            raise SchemeError(
                "time step too large: evolved subcell state of cell "
                f"{int(he_cell[i])} (edge {int(mesh.he_edge[i])}) leaves "
                "the admissible range")
        out = (u_next < state.m - 1e-11) | (u_next > state.M + 1e-11)
        if out.any():
            k = int(np.nonzero(out)[0][0])
            raise SchemeError(
                f"cell {k} left the initial data bounds "
                f"[{state.m}, {state.M}]")

    record = StepRecord(
        tau=float(tau), flux_kind=flux.kind,
        u_prev=u, u_next=u_next, u_nb=u_nb,
        w_sub=w_sub, w_sub_nb=w_nb, w_sub_evolved=w_evolved,
        w_avg=w_avg, w_avg_next=w_avg_next,
        aux=aux, mesh=mesh, dual=dual,
    )
    new_state = SolverState(t=state.t + tau, u=u_next, m=state.m, M=state.M)
    return new_state, record


def record_identity_errors(record: StepRecord, color: ColorField,
                           model: CouplingModel) -> dict:
    """Residuals of the defining identities of one step.

    average: |sum_e a_e w_sub - w_avg|; evolved_average: |sum_e a_e
    w_sub_evolved - w_avg_next|; inversion: |sum_e a_e conserved(u_next,
    v_e) - w_avg_next|.  All maxima over cells.
    """
    mesh = record.mesh
    frac = record.dual.subcell_fraction
    starts = mesh.cell_start
    v_he = color.half_edge_view(mesh)
    avg = np.add.reduceat(frac * record.w_sub, starts)
    evo = np.add.reduceat(frac * record.w_sub_evolved, starts)
    inv = np.add.reduceat(
        frac * model.conserved(record.u_next[mesh.he_cell], v_he), starts)
    return {
        "average": float(np.abs(avg - record.w_avg).max()),
        "evolved_average": float(np.abs(evo - record.w_avg_next).max()),
        "inversion": float(np.abs(inv - record.w_avg_next).max()),
    }


# ---------------------------------------------------------------------------
# run driver


@dataclass(frozen=True)
class Snapshot:
    """Cell fields at one output time."""
    t: float
    u: np.ndarray
    w: np.ndarray
    v: np.ndarray   # (Nc, L) subcell-fraction weighted edge colors


@dataclass
class Assembled:
    """Everything a configured run needs, built once."""
    mesh: PrimalMesh
    dual: DualGeometry
    layout: object
    color: ColorField
    model: CouplingModel
    flux: NumericalFlux
    state: SolverState
    config: object


@dataclass
class RunResult:
    config: object
    mesh: PrimalMesh
    dual: DualGeometry
    color: ColorField
    model: CouplingModel
    snapshots: list
    log: object
    incomplete: bool = False
    error: str | None = None


def _cell_colors(mesh, dual, color):
    v_he = color.half_edge_view(mesh)
    return np.add.reduceat(dual.subcell_fraction[:, None] * v_he,
                           mesh.cell_start, axis=0)


def _snapshot(t, state, mesh, dual, color, model):
    w_sub, w_avg = reconstruct_subcell(state, mesh, dual, color, model)
    return Snapshot(t=float(t), u=state.u.copy(), w=w_avg,
                    v=_cell_colors(mesh, dual, color))


def assemble(config) -> Assembled:
    """Build mesh, dual geometry, color field, model, flux, and initial
    state from a parsed RunConfig."""
    from . import families
    from .coupling import DomainLayout, build_color_field, \
        make_linear_coupling
    from .mesh import build_cartesian_mesh, load_mesh

    mc = config.mesh
    if mc.kind == "cartesian":
        mesh = build_cartesian_mesh(mc.nx, mc.ny, mc.bbox)
    else:
        mesh = load_mesh(mc.path)
    dual = derive_dual_from_name(mesh, config.scheme.beta_rule)

    if config.scheme.w_reg == "auto":
        width = 3.0 * float(np.median(mesh.edge_length))
    else:
        width = float(config.scheme.w_reg)
    regions = tuple(families.build_region(s) for s in config.layout.regions)
    layout = DomainLayout(regions=regions, transition_width=width)
    color = build_color_field(mesh, layout,
                              quadrature_order=config.scheme.quadrature_order)

    gammas = [families.build_gamma(s) for s in config.coupling.gammas]
    fluxes = [families.build_flux(s) for s in config.coupling.fluxes]
    model = make_linear_coupling(gammas, fluxes)

    u0 = families.build_initial(config.run.initial)
    state = init_state(mesh, u0,
                       quadrature=InitQuadrature(config.scheme.init_quadrature))
    num_flux = NumericalFlux(kind=config.scheme.flux, model=model,
                             state_range=widened_range(state.m, state.M))
    return Assembled(mesh=mesh, dual=dual, layout=layout, color=color,
                     model=model, flux=num_flux, state=state, config=config)


def derive_dual_from_name(mesh, name: str):
    from .mesh import BetaRule, derive_dual
    return derive_dual(mesh, BetaRule(name))


def run(config, on_step=None) -> RunResult:
    """Drive a configured run to t_end, capturing snapshots exactly at
    the requested times (the step is clipped to land on them).

    on_step(record, state), when given, is called after every step.
    Solver failures abort the loop and return a result flagged
    incomplete with the snapshots captured so far.
    """
    parts = assemble(config)
    mesh, dual, color, model = parts.mesh, parts.dual, parts.color, parts.model
    state = parts.state
    rc = config.run
    t_end = float(rc.t_end)
    tiny = 1e-12 * max(1.0, t_end)

    events = sorted({float(s) for s in rc.snapshots} | {t_end})
    events = [t for t in events if 0.0 <= t <= t_end + tiny]

    log = diag_mod.DiagnosticsLog(entropy_enabled=bool(rc.entropy))
    entropy = diag_mod.quadratic_entropy() if rc.entropy else None
    ent_ws = diag_mod.make_entropy_workspace(mesh, dual, color) \
        if rc.entropy else None
    u0 = state.u
    if float(u0.max() - u0.min()) <= 1e-13 * (1.0 + abs(float(u0[0]))):
        log.arm_well_balanced(float(u0[0]))

    snapshots = []
    next_i = 0
    while next_i < len(events) and events[next_i] <= tiny:
        snapshots.append(_snapshot(events[next_i], state, mesh, dual, color,
                                   model))
        next_i += 1

    base_tau = compute_dt(state, mesh, dual, color, model,
                          cfl=config.scheme.cfl_number,
                          max_dt=config.scheme.max_dt)
    workspace = make_workspace(mesh, dual, color, model, state.m, state.M)
    incomplete = False
    err_text = None
    while state.t < t_end - tiny:
        target = events[next_i] if next_i < len(events) else t_end
        tau = min(base_tau, target - state.t)
        try:
            state, record = step(state, mesh, dual, color, model, parts.flux,
                                 tau, tol_root=config.scheme.tol_root,
                                 workspace=workspace)
        except SchemeError as exc:
            incomplete = True
            err_text = str(exc)
            break
        if target - state.t <= tiny:
            state = replace(state, t=target)
        log.append_step(record, color, model, entropy=entropy, t=state.t,
                        workspace=ent_ws)
        if on_step is not None:
            on_step(record, state)
        if next_i < len(events) and state.t >= events[next_i] - tiny:
            snapshots.append(_snapshot(events[next_i], state, mesh, dual,
                                       color, model))
            next_i += 1
    return RunResult(config=config, mesh=mesh, dual=dual, color=color,
                     model=model, snapshots=snapshots, log=log,
                     incomplete=incomplete, error=err_text)
