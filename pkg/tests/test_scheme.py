"""Subcell scheme: initialization, time step, update oracles, guards."""

import numpy as np
import pytest

from colorfv.coupling import (Disk, DomainLayout, EmptyRegion,
                              build_color_field, invert_conserved_weighted,
                              make_linear_coupling)
from colorfv.families import build_flux, build_gamma
from colorfv.flux import NumericalFlux, rusanov
from colorfv.io import parse_config_text
from colorfv.mesh import build_cartesian_mesh, derive_dual
from colorfv.scheme import (InitQuadrature, SchemeError, SolverState,
                            assemble, compute_dt, init_state,
                            local_cfl_numbers, make_workspace,
                            record_identity_errors, run, step, widened_range)


def burgers_model():
    g = build_gamma("linear(1, 0)")
    f = build_flux("quadratic(0, 1, 0)")
    return make_linear_coupling([g, g], [f, f])


def two_component_model():
    return make_linear_coupling(
        [build_gamma("linear(1, 0)"), build_gamma("linear(2, 0)")],
        [build_flux("quadratic(0, 1, 1)"),
         build_flux("quadratic(0.9, 1, 1)")])


def single_domain_parts(nx, ny, bbox=(-1.0, -1.0, 1.0, 1.0)):
    mesh = build_cartesian_mesh(nx, ny, bbox)
    dual = derive_dual(mesh)
    layout = DomainLayout(regions=(EmptyRegion(),), transition_width=0.1)
    color = build_color_field(mesh, layout)
    return mesh, dual, color, burgers_model()


def colored_parts(nx=8):
    mesh = build_cartesian_mesh(nx, nx)
    dual = derive_dual(mesh)
    layout = DomainLayout(regions=(Disk(cx=0.0, cy=0.0, radius=0.55),),
                          transition_width=0.3)
    color = build_color_field(mesh, layout)
    return mesh, dual, color, two_component_model()


def random_state(mesh, seed):
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.0, 1.0, mesh.n_cells)
    return SolverState(t=0.0, u=u, m=float(u.min()), M=float(u.max()))


def test_init_state_constant_is_bitwise_exact():
    mesh = build_cartesian_mesh(5, 4)
    state = init_state(mesh, lambda x, y: 0.7)
    assert (state.u == 0.7).all()
    assert state.m == 0.7 and state.M == 0.7 and state.t == 0.0
    cent = init_state(mesh, lambda x, y: 0.7, InitQuadrature.CENTROID)
    assert (cent.u == 0.7).all()


def test_init_state_exact_for_linear_data():
    mesh = build_cartesian_mesh(5, 4)
    state = init_state(mesh, lambda x, y: 2.0 * x - 0.5 * y + 0.25)
    want = (2.0 * mesh.cell_centroid[:, 0]
            - 0.5 * mesh.cell_centroid[:, 1] + 0.25)
    assert np.abs(state.u - want).max() < 1e-14


def test_init_quadrature_cell_mean_vs_centroid():
    # mean of x^2 over a square of side h exceeds the centroid value
    # by exactly h^2/12
    mesh = build_cartesian_mesh(4, 4, (0.0, 0.0, 2.0, 2.0))
    fan = init_state(mesh, lambda x, y: x * x)
    cen = init_state(mesh, lambda x, y: x * x, InitQuadrature.CENTROID)
    assert np.allclose(fan.u - cen.u, 0.5**2 / 12.0, rtol=0, atol=1e-14)


def test_init_state_rejects_non_finite():
    mesh = build_cartesian_mesh(3, 3)
    with pytest.raises(SchemeError, match="non-finite"):
        init_state(mesh, lambda x, y: np.where(x > 0, np.nan, 0.0))


def test_widened_range():
    lo, hi = widened_range(0.0, 1.0)
    assert lo == -0.05 and hi == 1.05
    assert widened_range(2.0, 2.0) == (2.0, 2.0)


def test_compute_dt_frozen_value():
    # 20x20 unit-square cells of size 0.1: tightest subcell ratio is
    # (0.25 * 0.01 / 0.1); data spans [0, 1] so the widened range is
    # [-0.05, 1.05] and the speed bound 1.05 * 1.05 on vertical edges
    mesh, dual, color, model = single_domain_parts(20, 20)
    state = init_state(mesh, lambda x, y: np.clip(5.0 * x, 0.0, 1.0))
    assert (state.m, state.M) == (0.0, 1.0)
    tau = compute_dt(state, mesh, dual, color, model, cfl=0.5)
    want = 0.5 * (0.25 * 0.01 / 0.1) / (1.05 * 1.05)
    assert tau == pytest.approx(want, rel=1e-12)
    with pytest.raises(SchemeError, match="cfl_number"):
        compute_dt(state, mesh, dual, color, model, cfl=1.5)


def test_compute_dt_zero_speed_gets_max_dt():
    mesh, dual, color, model = single_domain_parts(4, 4)
    state = init_state(mesh, lambda x, y: 0.0)
    tau = compute_dt(state, mesh, dual, color, model, cfl=0.5, max_dt=0.25)
    assert tau == 0.25


def test_step_matches_plain_fv_oracle():
    # with no colored component the scheme collapses to a standard
    # cell-centered finite volume update
    mesh, dual, color, model = single_domain_parts(6, 5,
                                                   (0.0, 0.0, 1.2, 1.0))
    state = random_state(mesh, 42)
    flux = NumericalFlux(kind="rusanov", model=model)
    tau = compute_dt(state, mesh, dual, color, model, cfl=0.5)
    nxt, record = step(state, mesh, dual, color, model, flux, tau)

    u = state.u
    v0 = np.array([0.0])
    upd = np.zeros(mesh.n_cells)
    for e in range(mesh.n_edges):
        L, R = int(mesh.edge_left[e]), int(mesh.edge_right[e])
        if R < 0:
            continue
        nu = mesh.edge_normal[e]
        ln = mesh.edge_length[e]
        g = rusanov(model, u[L], u[R], v0, nu)
        phiL = float((model.flux(u[L], v0) * nu).sum())
        phiR = float((model.flux(u[R], v0) * nu).sum())
        upd[L] += ln * (g - phiL)
        upd[R] += ln * (phiR - g)
    want = u - tau / mesh.cell_area * upd
    assert np.abs(nxt.u - want).max() < 1e-12


def test_step_matches_subcell_oracle_with_colors():
    # scalar re-derivation of the full update: blend per edge color,
    # average with the subcell fractions, invert the weighted average
    mesh, dual, color, model = colored_parts(8)
    state = random_state(mesh, 3)
    flux = NumericalFlux(kind="rusanov", model=model)
    tau = compute_dt(state, mesh, dual, color, model, cfl=0.5)
    nxt, record = step(state, mesh, dual, color, model, flux, tau)

    u = state.u
    ec = color.edge_colors
    w_sub = np.array([model.conserved(u[mesh.he_cell[k]],
                                      ec[mesh.he_edge[k]])
                      for k in range(mesh.n_half_edges)])
    upd = np.zeros(mesh.n_half_edges)
    for e in range(mesh.n_edges):
        L, R = int(mesh.edge_left[e]), int(mesh.edge_right[e])
        if R < 0 or u[L] == u[R]:
            continue
        nu = mesh.edge_normal[e]
        wL = model.conserved(u[L], ec[e])
        wR = model.conserved(u[R], ec[e])
        g = rusanov(model, wL, wR, ec[e], nu)
        phiL = float((model.flux(u[L], ec[e]) * nu).sum())
        phiR = float((model.flux(u[R], ec[e]) * nu).sum())
        kL = np.nonzero((mesh.he_edge == e) & (mesh.he_sign > 0))[0][0]
        kR = np.nonzero((mesh.he_edge == e) & (mesh.he_sign < 0))[0][0]
        upd[kL] = g - phiL
        upd[kR] = phiR - g
    offs = mesh.cell_vtx_start
    frac = dual.subcell_fraction
    len_he = mesh.edge_length[mesh.he_edge]
    w_avg = np.add.reduceat(frac * w_sub, mesh.cell_start)
    w_avg_next = w_avg - (tau / mesh.cell_area) * np.add.reduceat(
        upd * len_he, mesh.cell_start)
    want = np.empty(mesh.n_cells)
    for c in range(mesh.n_cells):
        pairs = [(frac[k], ec[mesh.he_edge[k]])
                 for k in range(offs[c], offs[c + 1])]
        want[c] = invert_conserved_weighted(model, w_avg_next[c], pairs,
                                            u0=u[c])
    assert np.abs(record.w_avg_next - w_avg_next).max() < 1e-12
    assert np.abs(nxt.u - want).max() < 1e-9


def test_constant_state_is_a_bitwise_fixed_point():
    mesh, dual, color, model = colored_parts(6)
    state = init_state(mesh, lambda x, y: 0.5)
    flux = NumericalFlux(kind="rusanov", model=model)
    tau = compute_dt(state, mesh, dual, color, model, cfl=0.5)
    for _ in range(3):
        state, record = step(state, mesh, dual, color, model, flux, tau)
        assert record.u_next is record.u_prev
        assert np.array_equal(record.w_avg_next, record.w_avg)
    assert (state.u == 0.5).all()


def test_step_deterministic_and_workspace_neutral():
    mesh, dual, color, model = colored_parts(6)
    flux = NumericalFlux(kind="rusanov", model=model)
    state = random_state(mesh, 17)
    tau = compute_dt(state, mesh, dual, color, model, cfl=0.5)
    ws = make_workspace(mesh, dual, color, model, state.m, state.M)
    a, _ = step(state, mesh, dual, color, model, flux, tau)
    b, _ = step(state, mesh, dual, color, model, flux, tau, workspace=ws)
    assert np.array_equal(a.u, b.u)


def test_godunov_step_respects_local_bounds():
    mesh, dual, color, model = colored_parts(6)
    flux = NumericalFlux(kind="godunov", model=model)
    state = random_state(mesh, 29)
    tau = compute_dt(state, mesh, dual, color, model, cfl=0.5)
    from colorfv.diagnostics import max_principle_margin
    for _ in range(3):
        state, record = step(state, mesh, dual, color, model, flux, tau)
        assert max_principle_margin(record) >= -1e-11


def test_guards_fire_on_oversized_step():
    mesh, dual, color, model = colored_parts(8)
    state = random_state(mesh, 11)
    flux = NumericalFlux(kind="rusanov", model=model)
    tau = compute_dt(state, mesh, dual, color, model, cfl=0.5)
    with pytest.raises(SchemeError, match="time step too large"):
        step(state, mesh, dual, color, model, flux, 50.0 * tau)
    # same oversized step goes through unchecked when guards are off
    step(state, mesh, dual, color, model, flux, 50.0 * tau, guards=False)
    for bad in (0.0, -1.0, np.nan):
        with pytest.raises(SchemeError, match="must be positive"):
            step(state, mesh, dual, color, model, flux, bad)


def test_local_cfl_numbers_bounded_by_target():
    mesh, dual, color, model = colored_parts(8)
    state = random_state(mesh, 2)
    tau = compute_dt(state, mesh, dual, color, model, cfl=0.5)
    cfl = local_cfl_numbers(state, mesh, dual, color, model, tau)
    assert cfl.max() <= 0.5 * (1.0 + 1e-12)
    assert local_cfl_numbers(state, mesh, dual, color, model,
                             2.5 * tau).max() > 0.5


def test_record_identity_errors_small():
    mesh, dual, color, model = colored_parts(8)
    state = random_state(mesh, 8)
    flux = NumericalFlux(kind="rusanov", model=model)
    tau = compute_dt(state, mesh, dual, color, model, cfl=0.5)
    _, record = step(state, mesh, dual, color, model, flux, tau)
    errs = record_identity_errors(record, color, model)
    assert errs["average"] == 0.0
    assert errs["evolved_average"] < 1e-12
    assert errs["inversion"] < 1e-10


SMALL_RUN = """
[mesh]
kind = cartesian
nx = 30
ny = 3
bbox = -1, -1, 1, -0.8

[layout]
region_1 = empty()

[coupling]
gamma_0 = linear(1, 0)
gamma_1 = linear(1, 0)
flux_0 = quadratic(0, 1, 0)
flux_1 = quadratic(0, 1, 0)

[scheme]
flux = rusanov
cfl_number = 0.5

[run]
t_end = 0.2
initial = bump_x(0.5, -0.75, 0.25)
snapshots = 0, 0.1, 0.2
"""


def test_run_hits_snapshot_times_exactly():
    res = run(parse_config_text(SMALL_RUN))
    assert not res.incomplete and res.error is None
    assert [s.t for s in res.snapshots] == [0.0, 0.1, 0.2]
    first = res.snapshots[0]
    assert first.u.shape == (90,) and first.v.shape == (90, 1)
    assert (first.v == 0.0).all()
    assert len(res.log) > 0
    assert res.log.worst_margin >= -1e-11
    seen = []
    res2 = run(parse_config_text(SMALL_RUN),
               on_step=lambda rec, st: seen.append(st.t))
    assert len(seen) == len(res2.log)
    assert seen[-1] == 0.2


def test_assemble_transition_width_modes():
    auto = parse_config_text(SMALL_RUN.replace(
        "cfl_number = 0.5", "cfl_number = 0.5\nw_reg = auto"))
    parts = assemble(auto)
    # uniform squares: every edge has length 1/15
    assert parts.layout.transition_width == pytest.approx(3.0 / 15.0)
    fixed = parse_config_text(SMALL_RUN.replace(
        "cfl_number = 0.5", "cfl_number = 0.5\nw_reg = 0.05"))
    assert assemble(fixed).layout.transition_width == 0.05


def test_assemble_honors_init_quadrature():
    base = parse_config_text(SMALL_RUN)
    cent = parse_config_text(SMALL_RUN.replace(
        "cfl_number = 0.5", "cfl_number = 0.5\ninit_quadrature = centroid"))
    u_fan = assemble(base).state.u
    u_cen = assemble(cent).state.u
    assert not np.array_equal(u_fan, u_cen)
