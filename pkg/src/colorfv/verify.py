"""Self-contained verification suites exposed through the CLI.

Each suite returns a list of Check results; a suite passes when every
check passes.  All randomness is seeded, so identical seeds reproduce
identical reports.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import scheme as sch
from .coupling import make_linear_coupling
from .diagnostics import entropy_residuals, front_speed, quadratic_entropy
from .families import build_flux, build_gamma
from .flux import directional_flux, godunov, rusanov
from .io import RunSpec
from .presets import preset_config

__all__ = ["Check", "SUITES", "run_suite"]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def _reference_model():
    return make_linear_coupling(
        [build_gamma("linear(1, 0)"), build_gamma("linear(2, 0)")],
        [build_flux("quadratic(0, 1, 1)"), build_flux("quadratic(0.9, 1, 1)")])


def _resized(config, nx, ny=None):
    mesh = replace(config.mesh, nx=nx, ny=ny if ny is not None else nx)
    return replace(config, mesh=mesh)


def _with_initial(config, text):
    return replace(config, run=replace(config.run, initial=text))


def _assembled_parts(config):
    parts = sch.assemble(config)
    return parts


def _fixed_steps(parts, n_steps, state=None):
    """Drive n_steps at the compute_dt step size; returns records."""
    state = parts.state if state is None else state
    tau = sch.compute_dt(state, parts.mesh, parts.dual, parts.color,
                         parts.model, cfl=parts.config.scheme.cfl_number,
                         max_dt=parts.config.scheme.max_dt)
    records = []
    for _ in range(n_steps):
        state, rec = sch.step(state, parts.mesh, parts.dual, parts.color,
                              parts.model, parts.flux, tau)
        records.append(rec)
    return state, records


# ---------------------------------------------------------------------------


def suite_flux_axioms(seed: int = 0) -> list:
    model = _reference_model()
    rng = np.random.default_rng(seed)
    n = 1000
    uL = rng.uniform(-2.0, 3.0, n)
    uR = rng.uniform(-2.0, 3.0, n)
    v = rng.uniform(0.0, 1.0, (n, 1))
    ang = rng.uniform(0.0, 2.0 * np.pi, n)
    nu = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    wL = model.conserved(uL, v)
    wR = model.conserved(uR, v)
    phi = directional_flux(model, wL, v, nu)

    checks = []
    for kind, fn in (("rusanov", rusanov), ("godunov", godunov)):
        g = fn(model, wL, wR, v, nu)
        e_cons = float(np.abs(g + fn(model, wR, wL, v, -nu)).max())
        checks.append(Check(
            f"{kind} conservation", e_cons <= 1e-12,
            f"max |g(L,R,nu) + g(R,L,-nu)| = {e_cons:.3e} (tol 1e-12)"))
        e_consist = float(np.abs(fn(model, wL, wL, v, nu) - phi).max())
        checks.append(Check(
            f"{kind} consistency", e_consist <= 1e-12,
            f"max |g(w,w) - phi(w)| = {e_consist:.3e} (tol 1e-12)"))
        # monotone g has nonnegative one-sided differences at any h;
        # a moderate h keeps round-off noise below the tolerance
        h = 1e-3
        dL = (fn(model, wL + h, wR, v, nu) - g) / h
        dR = (fn(model, wL, wR + h, v, nu) - g) / h
        worst = float(min(dL.min(), (-dR).min()))
        checks.append(Check(
            f"{kind} monotonicity", worst >= -1e-10,
            f"worst one-sided difference = {worst:.3e} (>= -1e-10)"))

    # brute-force oracle for the exact-solver flux
    theta = np.linspace(0.0, 1.0, 10_000)
    grid = uL[None, :] + theta[:, None] * (uR - uL)[None, :]
    phi_grid = (model.flux(grid, v) * nu).sum(axis=-1)
    brute = np.where(wL <= wR, phi_grid.min(axis=0), phi_grid.max(axis=0))
    e_brute = float(np.abs(godunov(model, wL, wR, v, nu) - brute).max())
    checks.append(Check(
        "godunov vs brute force", e_brute <= 1e-6,
        f"max |g - brute(1e4 samples)| = {e_brute:.3e} (tol 1e-6)"))
    return checks


def suite_well_balanced(seed: int = 0) -> list:
    config = _resized(preset_config("two-domain"), 50)
    config = _with_initial(config, "constant(0.5)")
    parts = _assembled_parts(config)
    drift0 = float(np.abs(parts.state.u - 0.5).max())
    state, _ = _fixed_steps(parts, 100)
    drift = float(np.abs(state.u - 0.5).max())
    return [
        Check("zero-step drift", drift0 == 0.0,
              f"max |u - 0.5| = {drift0:.3e} before stepping (exact 0)"),
        Check("constant preserved over 100 steps", drift <= 1e-11,
              f"max |u - 0.5| = {drift:.3e} (tol 1e-11)"),
    ]


def suite_max_principle(seed: int = 0) -> list:
    from .diagnostics import max_principle_margin
    config = _resized(preset_config("two-domain"), 50)
    parts = _assembled_parts(config)
    rng = np.random.default_rng(seed)
    u0 = rng.uniform(0.0, 1.0, parts.mesh.n_cells)
    state = sch.SolverState(t=0.0, u=u0, m=float(u0.min()),
                            M=float(u0.max()))
    state, records = _fixed_steps(parts, 200, state=state)
    worst = min(max_principle_margin(r) for r in records)
    inside = float(min(state.u.min() - state.m, state.M - state.u.max()))
    return [
        Check("local maximum principle", worst >= -1e-11,
              f"worst stencil margin over 200 steps = {worst:.3e} "
              "(>= -1e-11)"),
        Check("global bounds", inside >= -1e-11,
              f"distance to initial bounds = {inside:.3e} (>= -1e-11)"),
    ]


def suite_entropy(seed: int = 0) -> list:
    config = preset_config("burgers-1d")
    config = replace(config, run=replace(config.run, t_end=0.5,
                                         snapshots=()))
    result = sch.run(config)
    worst = result.log.worst_entropy_residual
    checks = [Check(
        "shock run entropy residuals", worst <= 1e-10,
        f"max subcell residual = {worst:.3e} (tol 1e-10)")]

    # sensitivity probe: an oversized step must show positive residuals
    parts = _assembled_parts(config)
    tau = sch.compute_dt(parts.state, parts.mesh, parts.dual, parts.color,
                         parts.model, cfl=0.5)
    _, rec = sch.step(parts.state, parts.mesh, parts.dual, parts.color,
                      parts.model, parts.flux, 4.0 * tau, guards=False)
    probe = float(entropy_residuals(rec, parts.color, parts.model,
                                    quadratic_entropy()).max())
    checks.append(Check(
        "violation detected at 4x step", probe > 1e-12,
        f"max residual with oversized step = {probe:.3e} (> 0 expected)"))
    return checks


def suite_conservation(seed: int = 0) -> list:
    # per-cell identity between the updated average and the inverted
    # cell value, on a colored run with random data
    config = _resized(preset_config("two-domain"), 50)
    parts = _assembled_parts(config)
    rng = np.random.default_rng(seed)
    u0 = rng.uniform(0.0, 1.0, parts.mesh.n_cells)
    state = sch.SolverState(t=0.0, u=u0, m=float(u0.min()),
                            M=float(u0.max()))
    worst_inner = 0.0
    for _ in range(50):
        tau = sch.compute_dt(state, parts.mesh, parts.dual, parts.color,
                             parts.model, cfl=0.5)
        state, rec = sch.step(state, parts.mesh, parts.dual, parts.color,
                              parts.model, parts.flux, tau)
        errs = sch.record_identity_errors(rec, parts.color, parts.model)
        worst_inner = max(worst_inner, errs["inversion"])

    # global budget: exact where the color is uniform, so a
    # single-material run with flux-free boundaries conserves the total
    sd = _assembled_parts(_single_domain_config(50))
    area = sd.mesh.cell_area
    s2 = sd.state
    worst_budget = 0.0
    for _ in range(50):
        tau = sch.compute_dt(s2, sd.mesh, sd.dual, sd.color, sd.model,
                             cfl=0.5)
        s2, rec = sch.step(s2, sd.mesh, sd.dual, sd.color, sd.model,
                           sd.flux, tau)
        budget = float(abs(np.sum(area * rec.w_avg_next)
                           - np.sum(area * rec.w_avg)))
        worst_budget = max(worst_budget, budget)
    return [
        Check("per-cell inversion identity", worst_inner <= 1e-10,
              f"max |sum_e a_e C0(u', v_e) - w'| = {worst_inner:.3e} "
              "(tol 1e-10)"),
        Check("uniform-color global budget", worst_budget <= 1e-12,
              f"max per-step change of the total = {worst_budget:.3e} "
              "(tol 1e-12)"),
    ]


def _single_domain_config(nx: int):
    from .io import (CouplingSpec, LayoutSpec, MeshSpec, RunConfig,
                     SchemeSpec)
    return RunConfig(
        mesh=MeshSpec(kind="cartesian", nx=nx, ny=nx,
                      bbox=(-1.0, -1.0, 1.0, 1.0)),
        layout=LayoutSpec(regions=("empty()",)),
        coupling=CouplingSpec(gammas=("linear(1, 0)", "linear(1, 0)"),
                              fluxes=("quadratic(0, 1, 0)",
                                      "quadratic(0, 1, 0)")),
        scheme=SchemeSpec(cfl_number=0.5),
        run=RunSpec(t_end=0.3, initial="bump_x(0.5, -0.75, 0.25)",
                    snapshots=(0.3,), entropy=False),
    )


def _block_mean(field, n_ref, n_coarse):
    k = n_ref // n_coarse
    return field.reshape(n_ref, n_ref) \
        .reshape(n_coarse, k, n_coarse, k).mean(axis=(1, 3)).ravel()


def convergence_study(sizes=(25, 50, 100), n_ref: int = 200):
    """L1 errors of the smooth-bump run against a fine-grid reference;
    returns (errors, fitted order)."""
    ref = sch.run(_single_domain_config(n_ref))
    w_ref = ref.snapshots[-1].w
    errors = []
    for nx in sizes:
        res = sch.run(_single_domain_config(nx))
        w = res.snapshots[-1].w
        target = _block_mean(w_ref, n_ref, nx)
        cell_area = (2.0 / nx) * (2.0 / nx)
        errors.append(float(np.sum(np.abs(w - target)) * cell_area))
    hs = [2.0 / nx for nx in sizes]
    order = float(np.polyfit(np.log(hs), np.log(errors), 1)[0])
    return errors, order


def suite_convergence(seed: int = 0) -> list:
    sizes = (25, 50, 100)
    errors, order = convergence_study(sizes=sizes, n_ref=200)
    decreasing = all(b < a for a, b in zip(errors, errors[1:]))
    err_text = ", ".join(f"{nx}: {e:.4e}" for nx, e in zip(sizes, errors))
    return [
        Check("L1 errors decrease", decreasing, err_text),
        Check("fitted order >= 0.5", order >= 0.5,
              f"order = {order:.3f} across {sizes}"),
    ]


def suite_front_speed(seed: int = 0) -> list:
    config = preset_config("burgers-1d")
    result = sch.run(config)
    track = front_speed(result.mesh, result.snapshots, threshold=0.5,
                        direction=(1.0, 0.0))
    err = abs(track.speed - 0.5) / 0.5
    return [Check(
        "moving step speed vs jump condition", err <= 0.02,
        f"measured {track.speed:.5f}, reference 0.5, "
        f"relative error {err:.3%} (tol 2%)")]


SUITES = {
    "flux-axioms": suite_flux_axioms,
    "well-balanced": suite_well_balanced,
    "max-principle": suite_max_principle,
    "entropy": suite_entropy,
    "conservation": suite_conservation,
    "convergence": suite_convergence,
    "front-speed": suite_front_speed,
}


def run_suite(name: str, seed: int = 0) -> list:
    try:
        fn = SUITES[name]
    except KeyError:
        raise KeyError(f"unknown suite {name!r}; choose from "
                       f"{', '.join(sorted(SUITES))}") from None
    return fn(seed)
