"""Command line behavior: exit codes, overrides, and written artifacts."""

import subprocess
import sys

import pytest

from colorfv import verify
from colorfv.cli import main

STRIP_CONFIG = """\
[mesh]
kind = cartesian
nx = 30
ny = 3
bbox = -1, -0.1, 1, 0.1

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
t_end = 0.5
initial = step_x(-0.5, 1, 0)
snapshots = 0.25, 0.5
out_dir = out/strip
formats = csv, vtk
entropy = false
"""

CART_MESH_BLOCK = "kind = cartesian\nnx = 30\nny = 3\nbbox = -1, -0.1, 1, 0.1"


def write_config(tmp_path, text):
    path = tmp_path / "case.cfg"
    path.write_text(text)
    return path


def test_run_preset_with_overrides(tmp_path, capsys):
    out = tmp_path / "o"
    rc = main(["run", "--preset", "burgers-1d", "--mesh", "40x3",
               "--tend", "0.2", "--snapshots", "0,0.2", "--out", str(out)])
    assert rc == 0
    # csv plus rendered figures for each snapshot, then the diagnostics pair
    names = ("snapshot_000_t0.csv", "snapshot_000_t0_w.png",
             "snapshot_000_t0_u.png", "snapshot_001_t0.2.csv",
             "snapshot_001_t0.2_w.png", "snapshot_001_t0.2_u.png",
             "diagnostics.csv", "diagnostics.png")
    for name in names:
        path = out / name
        assert path.is_file() and path.stat().st_size > 0
    text = capsys.readouterr().out
    assert text.count("wrote ") == len(names)
    assert "steps to t = 0.2" in text


def test_run_config_file_and_tend_filter(tmp_path, capsys):
    out = tmp_path / "o"
    cfg = STRIP_CONFIG.replace("out_dir = out/strip", f"out_dir = {out}")
    rc = main(["run", "--config", str(write_config(tmp_path, cfg)),
               "--tend", "0.25"])
    assert rc == 0
    assert (out / "snapshot_000_t0.25.csv").is_file()
    assert (out / "snapshot_000_t0.25.vtk").is_file()
    assert (out / "diagnostics.csv").is_file()
    # the 0.5 snapshot falls outside the shortened run and is dropped
    assert not (out / "snapshot_001_t0.5.csv").exists()
    assert "steps to t = 0.25" in capsys.readouterr().out


def test_identical_argv_gives_identical_bytes(tmp_path):
    for sub in ("a", "b"):
        rc = main(["run", "--preset", "burgers-1d", "--mesh", "40x3",
                   "--tend", "0.1", "--snapshots", "0.1",
                   "--out", str(tmp_path / sub)])
        assert rc == 0
    for name in ("snapshot_000_t0.1.csv", "diagnostics.csv",
                 "snapshot_000_t0.1_w.png", "snapshot_000_t0.1_u.png",
                 "diagnostics.png"):
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        assert a == b, name


@pytest.mark.parametrize("argv, fragment", [
    (["run"], "exactly one of --config or --preset"),
    (["run", "--config", "a.cfg", "--preset", "burgers-1d"],
     "exactly one of --config or --preset"),
    (["run", "--preset", "burgers-1d", "--mesh", "40y3"],
     "malformed --mesh"),
    (["run", "--preset", "burgers-1d", "--cfl", "1.5"],
     "cfl_number out of (0,1]"),
    (["run", "--preset", "burgers-1d", "--tend", "-0.5"],
     "--tend must be nonnegative"),
    (["run", "--preset", "burgers-1d", "--snapshots", "0.1,zebra"],
     "malformed --snapshots"),
    (["run", "--preset", "burgers-1d", "--snapshots", "1,0.5"],
     "sorted and within"),
    (["run", "--preset", "burgers-1d", "--snapshots", "0.5,9"],
     "sorted and within"),
])
def test_usage_errors(argv, fragment, capsys):
    assert main(argv) == 1
    assert fragment in capsys.readouterr().err


def test_argparse_errors_exit_one(capsys):
    assert main(["run", "--preset", "bogus"]) == 1
    assert "invalid choice" in capsys.readouterr().err
    assert main(["run", "--preset", "burgers-1d", "--flux", "roe"]) == 1
    assert main(["verify"]) == 1
    assert main(["verify", "--suite", "nonsense"]) == 1
    assert main([]) == 1


def test_missing_config_file_exits_one(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == 1
    assert "colorfv: error:" in capsys.readouterr().err


def test_mesh_override_needs_cartesian(tmp_path, capsys):
    cfg = STRIP_CONFIG.replace(CART_MESH_BLOCK, "kind = file\npath = m.txt")
    path = write_config(tmp_path, cfg)
    assert main(["run", "--config", str(path), "--mesh", "10x10"]) == 1
    assert "--mesh only applies to cartesian" in capsys.readouterr().err


def test_unreadable_mesh_file_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad_mesh.txt"
    bad.write_text("this is not a mesh\n")
    cfg = STRIP_CONFIG.replace(CART_MESH_BLOCK, f"kind = file\npath = {bad}")
    cfg = cfg.replace("out_dir = out/strip", f"out_dir = {tmp_path / 'o'}")
    assert main(["run", "--config", str(write_config(tmp_path, cfg))]) == 2
    err = capsys.readouterr().err
    assert err.startswith("colorfv: solver error:")
    assert "polymesh" in err


def test_missing_mesh_file_exits_two(tmp_path, capsys):
    ghost = tmp_path / "ghost.txt"
    cfg = STRIP_CONFIG.replace(CART_MESH_BLOCK, f"kind = file\npath = {ghost}")
    assert main(["run", "--config", str(write_config(tmp_path, cfg))]) == 2
    assert capsys.readouterr().err.startswith("colorfv: solver error:")


def test_verify_suite_passes(capsys):
    assert main(["verify", "--suite", "well-balanced"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out
    assert "2/2 checks passed in suite 'well-balanced' (seed 0)" in out


def test_verify_failure_exits_three(monkeypatch, capsys):
    def stub(seed):
        return [verify.Check("stub check", False, "forced failure"),
                verify.Check("other", True, "ok")]

    monkeypatch.setitem(verify.SUITES, "flux-axioms", stub)
    assert main(["verify", "--suite", "flux-axioms"]) == 3
    out = capsys.readouterr().out
    assert "FAIL  stub check: forced failure" in out
    assert "1/2 checks passed in suite 'flux-axioms' (seed 0)" in out


def test_verify_seed_forwarded(monkeypatch, capsys):
    seen = []

    def stub(seed):
        seen.append(seed)
        return [verify.Check("s", True, "ok")]

    monkeypatch.setitem(verify.SUITES, "entropy", stub)
    assert main(["verify", "--suite", "entropy", "--seed", "7"]) == 0
    assert seen == [7]
    assert "(seed 7)" in capsys.readouterr().out


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "usage: colorfv" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    out = tmp_path / "o"
    proc = subprocess.run(
        [sys.executable, "-m", "colorfv.cli", "run", "--preset", "burgers-1d",
         "--mesh", "30x3", "--tend", "0.05", "--snapshots", "0.05",
         "--out", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "completed" in proc.stdout
    assert (out / "snapshot_000_t0.05.csv").is_file()
