"""Command line interface: run experiments and verification suites.

Exit codes: 0 success, 1 usage or configuration error, 2 solver error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import re
import sys
from dataclasses import replace
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_VERIFY = 3

_MESH_ARG = re.compile(r"(\d+)x(\d+)$")


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> argparse.ArgumentParser:
    from .presets import PRESET_NAMES

    parser = _Parser(
        prog="colorfv",
        description="Finite volume solver for scalar conservation laws "
                    "coupled across material regions by a color field.")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    runp = sub.add_parser("run", help="run a configured experiment")
    runp.add_argument("--config", metavar="PATH",
                      help="config file to run")
    runp.add_argument("--preset", choices=PRESET_NAMES,
                      help="bundled experiment to run")
    runp.add_argument("--mesh", metavar="NxM",
                      help="override mesh resolution, e.g. 100x100")
    runp.add_argument("--cfl", type=float, metavar="X",
                      help="override the CFL number")
    runp.add_argument("--tend", type=float, metavar="T",
                      help="override the final time")
    runp.add_argument("--snapshots", metavar="T1,T2,...",
                      help="override the snapshot times")
    runp.add_argument("--flux", choices=("rusanov", "godunov"),
                      help="override the numerical flux")
    runp.add_argument("--out", metavar="DIR",
                      help="override the output directory")

    verp = sub.add_parser("verify", help="run a verification suite")
    from .verify import SUITES
    verp.add_argument("--suite", required=True, choices=sorted(SUITES),
                      help="which property suite to run")
    verp.add_argument("--seed", type=int, default=0, metavar="N",
                      help="seed for the sampled checks (default 0)")
    return parser


def _usage_fail(message: str) -> int:
    sys.stderr.write(f"colorfv: error: {message}\n")
    return EXIT_USAGE


def _apply_overrides(config, args):
    from .io import ConfigError

    if args.mesh is not None:
        m = _MESH_ARG.match(args.mesh)
        if not m:
            raise ConfigError(f"malformed --mesh {args.mesh!r}, "
                              "expected NxM like 100x100")
        if config.mesh.kind != "cartesian":
            raise ConfigError("--mesh only applies to cartesian meshes")
        config = replace(config, mesh=replace(
            config.mesh, nx=int(m.group(1)), ny=int(m.group(2))))
    if args.cfl is not None:
        if not 0.0 < args.cfl <= 1.0:
            raise ConfigError("cfl_number out of (0,1]")
        config = replace(config, scheme=replace(
            config.scheme, cfl_number=args.cfl))
    if args.flux is not None:
        config = replace(config, scheme=replace(
            config.scheme, flux=args.flux))
    run = config.run
    if args.tend is not None:
        if args.tend < 0.0:
            raise ConfigError("--tend must be nonnegative")
        run = replace(run, t_end=args.tend,
                      snapshots=tuple(t for t in run.snapshots
                                      if t <= args.tend))
    if args.snapshots is not None:
        parts = [p.strip() for p in args.snapshots.split(",") if p.strip()]
        try:
            times = tuple(float(p) for p in parts)
        except ValueError:
            raise ConfigError(f"malformed --snapshots {args.snapshots!r}")
        if any(b < a for a, b in zip(times, times[1:])) or (
                times and (times[0] < 0.0 or times[-1] > run.t_end)):
            raise ConfigError("snapshot times must be sorted and within "
                              "[0, t_end]")
        run = replace(run, snapshots=times)
    if args.out is not None:
        run = replace(run, out_dir=args.out)
    return replace(config, run=run)


def cmd_run(args) -> int:
    from . import io as io_mod
    from . import report, scheme
    from .coupling import CouplingError, LayoutError, RootError
    from .families import FamilyError
    from .flux import FluxError
    from .io import ConfigError
    from .mesh import MeshError
    from .presets import preset_config

    if (args.config is None) == (args.preset is None):
        return _usage_fail("exactly one of --config or --preset is required")
    try:
        if args.config is not None:
            config = io_mod.parse_config(args.config)
        else:
            config = preset_config(args.preset)
        config = _apply_overrides(config, args)
    except (ConfigError, FamilyError) as exc:
        return _usage_fail(str(exc))
    except OSError as exc:
        return _usage_fail(str(exc))

    try:
        result = scheme.run(config)
    except (MeshError, CouplingError, LayoutError, FamilyError, FluxError,
            RootError, scheme.SchemeError, ConfigError, OSError) as exc:
        sys.stderr.write(f"colorfv: solver error: {exc}\n")
        return EXIT_SOLVER

    out = Path(config.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats = config.run.formats
    written = []
    for i, snap in enumerate(result.snapshots):
        base = f"snapshot_{i:03d}_t{snap.t:g}"
        fields = {"u": snap.u, "w": snap.w, "v": snap.v}
        if "csv" in formats:
            path = out / f"{base}.csv"
            io_mod.write_snapshot(result.mesh, fields, path, "csv")
            written.append(path)
        if "vtk" in formats:
            path = out / f"{base}.vtk"
            io_mod.write_snapshot(result.mesh, fields, path, "vtk")
            written.append(path)
        if "png" in formats:
            for name in ("w", "u"):
                path = out / f"{base}_{name}.png"
                report.render_field_png(result.mesh, fields[name], path,
                                        title=f"{name} at t = {snap.t:g}")
                written.append(path)
    path = out / "diagnostics.csv"
    io_mod.write_diagnostics_csv(result.log, path)
    written.append(path)
    if "png" in formats and len(result.log):
        path = out / "diagnostics.png"
        report.render_diagnostics_png(result.log, path)
        written.append(path)
    for path in written:
        print(f"wrote {path}")
    t_last = result.snapshots[-1].t if result.snapshots else 0.0
    if len(result.log):
        t_last = max(t_last, result.log.as_dict()["t"][-1])
    print(f"completed {len(result.log)} steps to t = {t_last:g}")
    if result.incomplete:
        sys.stderr.write(f"colorfv: solver error: {result.error}\n")
        return EXIT_SOLVER
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_suite

    checks = run_suite(args.suite, seed=args.seed)
    n_pass = sum(1 for c in checks if c.passed)
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status}  {c.name}: {c.detail}")
    print(f"{n_pass}/{len(checks)} checks passed in suite "
          f"'{args.suite}' (seed {args.seed})")
    return EXIT_OK if n_pass == len(checks) else EXIT_VERIFY


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "run":
        return cmd_run(args)
    return cmd_verify(args)


if __name__ == "__main__":
    sys.exit(main())
