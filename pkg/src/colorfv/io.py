"""Config file parsing and output writing.

Configs are INI-style with five fixed sections ([mesh] [layout]
[coupling] [scheme] [run]), ``key = value`` lines, and ``#`` comments.
Parsing is strict: unknown sections or keys, malformed values, and
out-of-range settings are errors with the offending line number.
Snapshot and diagnostics writers emit byte-stable CSV (17 significant
digits) and legacy ASCII VTK.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import families

__all__ = ["ConfigError", "MeshSpec", "LayoutSpec", "CouplingSpec",
           "SchemeSpec", "RunSpec", "RunConfig", "parse_config",
           "parse_config_text", "serialize_config", "write_snapshot",
           "write_diagnostics_csv"]


class ConfigError(ValueError):
    """Invalid configuration file content."""


@dataclass(frozen=True)
class MeshSpec:
    kind: str = "cartesian"
    nx: int = 0
    ny: int = 0
    bbox: tuple = (-1.0, -1.0, 1.0, 1.0)
    path: str | None = None


@dataclass(frozen=True)
class LayoutSpec:
    regions: tuple = ()


@dataclass(frozen=True)
class CouplingSpec:
    gammas: tuple = ()
    fluxes: tuple = ()


@dataclass(frozen=True)
class SchemeSpec:
    flux: str = "rusanov"
    cfl_number: float = 0.5
    tol_root: float = 1e-12
    w_reg: object = "auto"
    quadrature_order: int = 4
    beta_rule: str = "centroid"
    init_quadrature: str = "subcell_fan"
    max_dt: float = 1.0


@dataclass(frozen=True)
class RunSpec:
    t_end: float = 0.0
    initial: str = "constant(0)"
    snapshots: tuple = ()
    out_dir: str = "out"
    formats: tuple = ("csv",)
    entropy: bool = True


@dataclass(frozen=True)
class RunConfig:
    mesh: MeshSpec
    layout: LayoutSpec
    coupling: CouplingSpec
    scheme: SchemeSpec
    run: RunSpec


_SECTIONS = ("mesh", "layout", "coupling", "scheme", "run")
_MESH_KEYS = {"kind", "nx", "ny", "bbox", "path"}
_SCHEME_KEYS = {"flux", "cfl_number", "tol_root", "w_reg",
                "quadrature_order", "beta_rule", "init_quadrature",
                "max_dt"}
_RUN_KEYS = {"t_end", "initial", "snapshots", "out_dir", "formats",
             "entropy"}
_REGION_KEY = re.compile(r"region_(\d+)$")
_GAMMA_KEY = re.compile(r"gamma_(\d+)$")
_FLUX_KEY = re.compile(r"flux_(\d+)$")


def _err(line: int, msg: str):
    raise ConfigError(f"line {line}: {msg}")


def _to_float(line, key, val):
    try:
        return float(val)
    except ValueError:
        _err(line, f"{key} must be a number, got {val!r}")


def _to_int(line, key, val):
    try:
        return int(val)
    except ValueError:
        _err(line, f"{key} must be an integer, got {val!r}")


def _to_bool(line, key, val):
    low = val.strip().lower()
    if low in ("true", "on", "yes", "1"):
        return True
    if low in ("false", "off", "no", "0"):
        return False
    _err(line, f"{key} must be a boolean, got {val!r}")


def _split_list(val):
    parts = [p.strip() for p in val.split(",")]
    return [p for p in parts if p]


def parse_config(path) -> RunConfig:
    text = Path(path).read_text()
    return parse_config_text(text)


def _collect_sections(text):
    sections: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                _err(lineno, f"malformed section header {line!r}")
            name = line[1:-1].strip()
            if name not in _SECTIONS:
                _err(lineno, f"unknown section [{name}]")
            if name in sections:
                _err(lineno, f"duplicate section [{name}]")
            sections[name] = {}
            current = name
        elif "=" in line:
            if current is None:
                _err(lineno, "key outside any section")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key in sections[current]:
                _err(lineno, f"duplicate key {key!r} in [{current}]")
            sections[current][key] = (lineno, val)
        else:
            _err(lineno, f"expected 'key = value', got {line!r}")
    for name in _SECTIONS:
        if name not in sections:
            raise ConfigError(f"missing section [{name}]")
    return sections


def _indexed_family(sec: dict, pattern, base: int, label: str,
                    builder) -> tuple:
    """Collect keys like region_1.. in order, validating density."""
    found = {}
    for key, (lineno, val) in sec.items():
        m = pattern.match(key)
        if not m:
            continue
        found[int(m.group(1))] = (lineno, key, val)
    if not found:
        raise ConfigError(f"no {label} entries found")
    expected = list(range(base, base + len(found)))
    if sorted(found) != expected:
        raise ConfigError(
            f"{label} keys must be numbered consecutively from {base}, "
            f"got {sorted(found)}")
    out = []
    for i in expected:
        lineno, key, val = found[i]
        try:
            builder(val)
        except families.FamilyError as exc:
            _err(lineno, f"{key}: {exc}")
        out.append(val)
    return tuple(out)


def parse_config_text(text: str) -> RunConfig:
    sections = _collect_sections(text)

    # [mesh]
    sec = sections["mesh"]
    for key, (lineno, _) in sec.items():
        if key not in _MESH_KEYS:
            _err(lineno, f"unknown key {key!r} in [mesh]")
    kind = sec.get("kind", (0, "cartesian"))[1]
    if kind == "cartesian":
        for forbidden in ("path",):
            if forbidden in sec:
                _err(sec[forbidden][0],
                     "key 'path' not allowed for a cartesian mesh")
        for req in ("nx", "ny"):
            if req not in sec:
                raise ConfigError(f"missing key '{req}' in [mesh]")
        nx = _to_int(sec["nx"][0], "nx", sec["nx"][1])
        ny = _to_int(sec["ny"][0], "ny", sec["ny"][1])
        if nx < 1 or ny < 1:
            raise ConfigError("mesh resolution must be at least 1x1")
        bbox = (-1.0, -1.0, 1.0, 1.0)
        if "bbox" in sec:
            lineno, val = sec["bbox"]
            parts = _split_list(val)
            if len(parts) != 4:
                _err(lineno, "bbox needs four numbers x0, y0, x1, y1")
            bbox = tuple(_to_float(lineno, "bbox", p) for p in parts)
            if bbox[2] <= bbox[0] or bbox[3] <= bbox[1]:
                _err(lineno, "bbox must satisfy x0 < x1 and y0 < y1")
        mesh = MeshSpec(kind="cartesian", nx=nx, ny=ny, bbox=bbox)
    elif kind == "file":
        if "path" not in sec:
            raise ConfigError("missing key 'path' in [mesh]")
        for forbidden in ("nx", "ny", "bbox"):
            if forbidden in sec:
                _err(sec[forbidden][0],
                     f"key {forbidden!r} not allowed for a file mesh")
        mesh = MeshSpec(kind="file", path=sec["path"][1])
    else:
        _err(sec["kind"][0], f"mesh kind must be cartesian or file, "
             f"got {kind!r}")

    # [layout]
    sec = sections["layout"]
    for key, (lineno, _) in sec.items():
        if not _REGION_KEY.match(key):
            _err(lineno, f"unknown key {key!r} in [layout]")
    regions = _indexed_family(sec, _REGION_KEY, 1, "layout region",
                              families.build_region)
    layout = LayoutSpec(regions=regions)

    # [coupling]
    sec = sections["coupling"]
    for key, (lineno, _) in sec.items():
        if not (_GAMMA_KEY.match(key) or _FLUX_KEY.match(key)):
            _err(lineno, f"unknown key {key!r} in [coupling]")
    gsec = {k: v for k, v in sec.items() if _GAMMA_KEY.match(k)}
    fsec = {k: v for k, v in sec.items() if _FLUX_KEY.match(k)}
    gammas = _indexed_family(gsec, _GAMMA_KEY, 0, "coupling gamma",
                             families.build_gamma)
    fluxes = _indexed_family(fsec, _FLUX_KEY, 0, "coupling flux",
                             families.build_flux)
    if len(gammas) != len(fluxes):
        raise ConfigError(
            f"coupling lists {len(gammas)} gammas but {len(fluxes)} "
            "fluxes; one of each per component")
    if len(gammas) != len(regions) + 1:
        raise ConfigError(
            f"coupling lists {len(gammas)} components but the layout has "
            f"{len(regions)} regions (need one reference plus one per "
            "region)")
    coupling = CouplingSpec(gammas=gammas, fluxes=fluxes)

    # [scheme]
    sec = sections["scheme"]
    for key, (lineno, _) in sec.items():
        if key not in _SCHEME_KEYS:
            _err(lineno, f"unknown key {key!r} in [scheme]")
    scheme = SchemeSpec()
    vals = {}
    if "flux" in sec:
        lineno, val = sec["flux"]
        if val not in ("rusanov", "godunov"):
            _err(lineno, f"flux must be rusanov or godunov, got {val!r}")
        vals["flux"] = val
    if "cfl_number" in sec:
        lineno, val = sec["cfl_number"]
        cfl = _to_float(lineno, "cfl_number", val)
        if not 0.0 < cfl <= 1.0:
            _err(lineno, "cfl_number out of (0,1]")
        vals["cfl_number"] = cfl
    if "tol_root" in sec:
        lineno, val = sec["tol_root"]
        tol = _to_float(lineno, "tol_root", val)
        if tol <= 0.0:
            _err(lineno, "tol_root must be positive")
        vals["tol_root"] = tol
    if "w_reg" in sec:
        lineno, val = sec["w_reg"]
        if val == "auto":
            vals["w_reg"] = "auto"
        else:
            w = _to_float(lineno, "w_reg", val)
            if w <= 0.0:
                _err(lineno, "w_reg must be positive or auto")
            vals["w_reg"] = w
    if "quadrature_order" in sec:
        lineno, val = sec["quadrature_order"]
        order = _to_int(lineno, "quadrature_order", val)
        if not 1 <= order <= 32:
            _err(lineno, "quadrature_order out of [1, 32]")
        vals["quadrature_order"] = order
    if "beta_rule" in sec:
        lineno, val = sec["beta_rule"]
        if val not in ("centroid", "uniform_vertex_weights"):
            _err(lineno, f"beta_rule must be centroid or "
                 f"uniform_vertex_weights, got {val!r}")
        vals["beta_rule"] = val
    if "init_quadrature" in sec:
        lineno, val = sec["init_quadrature"]
        if val not in ("centroid", "subcell_fan"):
            _err(lineno, f"init_quadrature must be centroid or "
                 f"subcell_fan, got {val!r}")
        vals["init_quadrature"] = val
    if "max_dt" in sec:
        lineno, val = sec["max_dt"]
        md = _to_float(lineno, "max_dt", val)
        if md <= 0.0:
            _err(lineno, "max_dt must be positive")
        vals["max_dt"] = md
    scheme = SchemeSpec(**vals)

    # [run]
    sec = sections["run"]
    for key, (lineno, _) in sec.items():
        if key not in _RUN_KEYS:
            _err(lineno, f"unknown key {key!r} in [run]")
    if "t_end" not in sec:
        raise ConfigError("missing key 't_end' in [run]")
    if "initial" not in sec:
        raise ConfigError("missing key 'initial' in [run]")
    lineno, val = sec["t_end"]
    t_end = _to_float(lineno, "t_end", val)
    if t_end < 0.0 or not np.isfinite(t_end):
        _err(lineno, "t_end must be finite and nonnegative")
    lineno, val = sec["initial"]
    try:
        families.build_initial(val)
    except families.FamilyError as exc:
        _err(lineno, f"initial: {exc}")
    initial = val
    snapshots = ()
    if "snapshots" in sec:
        lineno, val = sec["snapshots"]
        times = tuple(_to_float(lineno, "snapshots", p)
                      for p in _split_list(val))
        if any(b < a for a, b in zip(times, times[1:])):
            _err(lineno, "snapshot times must be sorted and within "
                 "[0, t_end]")
        if times and (times[0] < 0.0 or times[-1] > t_end):
            _err(lineno, "snapshot times must be sorted and within "
                 "[0, t_end]")
        snapshots = times
    out_dir = sec.get("out_dir", (0, "out"))[1]
    formats = ("csv",)
    if "formats" in sec:
        lineno, val = sec["formats"]
        fmts = tuple(_split_list(val))
        for f in fmts:
            if f not in ("csv", "vtk", "png"):
                _err(lineno, f"unknown output format {f!r}")
        formats = fmts
    entropy = True
    if "entropy" in sec:
        lineno, val = sec["entropy"]
        entropy = _to_bool(lineno, "entropy", val)
    run = RunSpec(t_end=t_end, initial=initial, snapshots=snapshots,
                  out_dir=out_dir, formats=formats, entropy=entropy)

    return RunConfig(mesh=mesh, layout=layout, coupling=coupling,
                     scheme=scheme, run=run)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def serialize_config(config: RunConfig) -> str:
    """Canonical text form; parse_config_text inverts it exactly."""
    lines = ["[mesh]"]
    if config.mesh.kind == "cartesian":
        lines += ["kind = cartesian",
                  f"nx = {config.mesh.nx}",
                  f"ny = {config.mesh.ny}",
                  "bbox = " + ", ".join(_fmt(b) for b in config.mesh.bbox)]
    else:
        lines += ["kind = file", f"path = {config.mesh.path}"]
    lines.append("")
    lines.append("[layout]")
    for i, reg in enumerate(config.layout.regions, start=1):
        lines.append(f"region_{i} = {reg}")
    lines.append("")
    lines.append("[coupling]")
    for i, g in enumerate(config.coupling.gammas):
        lines.append(f"gamma_{i} = {g}")
    for i, f in enumerate(config.coupling.fluxes):
        lines.append(f"flux_{i} = {f}")
    lines.append("")
    sch = config.scheme
    lines += ["[scheme]",
              f"flux = {sch.flux}",
              f"cfl_number = {_fmt(sch.cfl_number)}",
              f"tol_root = {_fmt(sch.tol_root)}",
              f"w_reg = {_fmt(sch.w_reg)}",
              f"quadrature_order = {sch.quadrature_order}",
              f"beta_rule = {sch.beta_rule}",
              f"init_quadrature = {sch.init_quadrature}",
              f"max_dt = {_fmt(sch.max_dt)}",
              ""]
    rn = config.run
    lines += ["[run]",
              f"t_end = {_fmt(rn.t_end)}",
              f"initial = {rn.initial}"]
    if rn.snapshots:
        lines.append("snapshots = "
                     + ", ".join(_fmt(t) for t in rn.snapshots))
    lines += [f"out_dir = {rn.out_dir}",
              "formats = " + ", ".join(rn.formats),
              f"entropy = {'true' if rn.entropy else 'false'}"]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# output writers


def _g17(x: float) -> str:
    return f"{x:.17g}"


def _field_columns(mesh, fields) -> list:
    cols = []
    for name, arr in fields.items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape[0] != mesh.n_cells:
            raise ValueError(
                f"field {name!r} has length {arr.shape[0]}, mesh has "
                f"{mesh.n_cells} cells")
        if arr.ndim == 1:
            cols.append((name, arr))
        elif arr.ndim == 2:
            for j in range(arr.shape[1]):
                cols.append((f"{name}_{j + 1}", arr[:, j]))
        else:
            raise ValueError(f"field {name!r} must be 1D or 2D per cell")
    return cols


def write_snapshot(mesh, fields: dict, path, fmt: str = "csv") -> None:
    """Write named per-cell arrays as CSV or legacy ASCII VTK.

    CSV columns: cell_id, centroid_x, centroid_y, then one column per
    scalar field (2D fields expand to name_1..name_L).  Identical
    inputs produce identical bytes.
    """
    cols = _field_columns(mesh, fields)
    path = Path(path)
    if fmt == "csv":
        with open(path, "w", newline="\n") as fh:
            fh.write("cell_id,centroid_x,centroid_y,"
                     + ",".join(name for name, _ in cols) + "\n")
            cx = mesh.cell_centroid
            for k in range(mesh.n_cells):
                row = [str(k), _g17(cx[k, 0]), _g17(cx[k, 1])]
                row += [_g17(arr[k]) for _, arr in cols]
                fh.write(",".join(row) + "\n")
    elif fmt == "vtk":
        with open(path, "w", newline="\n") as fh:
            fh.write("# vtk DataFile Version 3.0\n")
            fh.write("colorfv cell fields\n")
            fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
            nv = mesh.n_vertices
            fh.write(f"POINTS {nv} double\n")
            for p in mesh.vertices:
                fh.write(f"{_g17(p[0])} {_g17(p[1])} 0\n")
            sizes = np.diff(mesh.cell_vtx_start)
            total = int(sizes.sum()) + mesh.n_cells
            fh.write(f"CELLS {mesh.n_cells} {total}\n")
            for loop in mesh.cell_loops():
                fh.write(str(len(loop)) + " "
                         + " ".join(str(int(v)) for v in loop) + "\n")
            fh.write(f"CELL_TYPES {mesh.n_cells}\n")
            fh.write("7\n" * mesh.n_cells)
            fh.write(f"CELL_DATA {mesh.n_cells}\n")
            for name, arr in cols:
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for val in arr:
                    fh.write(_g17(val) + "\n")
    else:
        raise ValueError(f"unknown snapshot format {fmt!r}")


def write_diagnostics_csv(log, path) -> None:
    """One row per step: t, tau, max_principle_margin,
    entropy_residual_max, oscillation_increment, oscillation_sum."""
    data = log.as_dict()
    names = ["t", "tau", "max_principle_margin", "entropy_residual_max",
             "oscillation_increment", "oscillation_sum"]
    n = len(data["t"])
    with open(Path(path), "w", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(n):
            fh.write(",".join(_g17(float(data[name][i]))
                              for name in names) + "\n")
