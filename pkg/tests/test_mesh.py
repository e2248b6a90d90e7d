"""Primal mesh construction, file round trips, dual geometry, quality."""

import numpy as np
import pytest

from colorfv.mesh import (BOUNDARY, BetaRule, MeshError, build_cartesian_mesh,
                          derive_dual, load_mesh, mesh_from_cells, save_mesh,
                          validate_mesh)

UNIT_SQUARE = (np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
               [[0, 1, 2, 3]])

# nonconvex arrowhead whose vertex average coincides with its reflex vertex
ARROW = (np.array([[0.0, 0.0], [4.0, 0.0], [2.0, 1.0], [2.0, 3.0]]),
         [[0, 1, 2, 3]])


def test_cartesian_counts_and_geometry():
    mesh = build_cartesian_mesh(3, 2, bbox=(0.0, 0.0, 3.0, 2.0))
    assert mesh.n_cells == 6
    assert mesh.n_vertices == 12
    assert mesh.n_edges == 3 * 3 + 4 * 2
    assert mesh.n_half_edges == 24
    assert np.allclose(mesh.cell_area, 1.0, rtol=0, atol=1e-14)
    assert np.allclose(mesh.cell_perimeter, 4.0, rtol=0, atol=1e-14)
    assert np.allclose(np.hypot(mesh.edge_normal[:, 0],
                                mesh.edge_normal[:, 1]), 1.0)
    assert mesh.cell_size == pytest.approx(4.0)
    # centroids row-major, x fastest
    assert np.allclose(mesh.cell_centroid[0], [0.5, 0.5])
    assert np.allclose(mesh.cell_centroid[1], [1.5, 0.5])
    assert np.allclose(mesh.cell_centroid[3], [0.5, 1.5])


def test_edge_normal_points_left_to_right():
    mesh = build_cartesian_mesh(2, 1, bbox=(0.0, 0.0, 2.0, 1.0))
    inner = np.nonzero(mesh.edge_right >= 0)[0]
    assert inner.size == 1
    e = inner[0]
    assert mesh.edge_left[e] == 0 and mesh.edge_right[e] == 1
    assert np.allclose(mesh.edge_normal[e], [1.0, 0.0])
    # half-edge opposite cells mirror the edge adjacency
    he = np.nonzero(mesh.he_edge == e)[0]
    assert sorted(mesh.he_cell[he]) == [0, 1]
    assert sorted(mesh.he_opp[he]) == [0, 1]


def test_boundary_edges_marked():
    mesh = build_cartesian_mesh(2, 2)
    n_boundary = int((mesh.edge_right == BOUNDARY).sum())
    assert n_boundary == 8
    he_bnd = mesh.he_opp == BOUNDARY
    assert int(he_bnd.sum()) == 8


def test_cell_loops_close():
    mesh = build_cartesian_mesh(4, 3, bbox=(-1.0, 0.0, 1.0, 1.5))
    nu = mesh.he_sign[:, None] * mesh.edge_normal[mesh.he_edge]
    weighted = nu * mesh.edge_length[mesh.he_edge][:, None]
    loop = mesh.cell_reduce(weighted[:, 0]), mesh.cell_reduce(weighted[:, 1])
    assert np.abs(loop[0]).max() < 1e-14
    assert np.abs(loop[1]).max() < 1e-14


def test_cell_reduce_matches_loop_order():
    mesh = build_cartesian_mesh(2, 2)
    vals = np.arange(mesh.n_half_edges, dtype=float)
    got = mesh.cell_reduce(vals)
    want = [vals[s:e].sum() for s, e in zip(mesh.cell_vtx_start[:-1],
                                            mesh.cell_vtx_start[1:])]
    assert np.array_equal(got, np.asarray(want))


def test_rejects_clockwise_cell():
    verts, _ = UNIT_SQUARE
    with pytest.raises(MeshError, match="negative area cell 0"):
        mesh_from_cells(verts, [[0, 3, 2, 1]])


def test_rejects_repeated_consecutive_vertex():
    verts, _ = UNIT_SQUARE
    with pytest.raises(MeshError, match="repeated consecutive vertex"):
        mesh_from_cells(verts, [[0, 1, 1, 2, 3]])


def test_rejects_vertex_out_of_range():
    verts, _ = UNIT_SQUARE
    with pytest.raises(MeshError, match="out of range"):
        mesh_from_cells(verts, [[0, 1, 2, 7]])


def test_rejects_too_small_cell():
    verts, _ = UNIT_SQUARE
    with pytest.raises(MeshError, match="fewer than 3"):
        mesh_from_cells(verts, [[0, 1]])


def test_rejects_nonmanifold_edge():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, -1.0],
                      [1.0, 1.0]])
    cells = [[0, 1, 2], [0, 3, 1], [0, 1, 4]]
    with pytest.raises(MeshError, match="more than two cells"):
        mesh_from_cells(verts, cells)


def test_rejects_inconsistent_orientation():
    # the same triangle twice traverses each edge twice the same way
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(MeshError, match="inconsistent edge orientation"):
        mesh_from_cells(verts, [[0, 1, 2], [0, 1, 2]])


def test_rejects_self_intersecting_cell():
    verts = np.array([[0.0, 0.0], [4.0, 0.0], [1.0, 2.0], [3.0, 2.0]])
    with pytest.raises(MeshError, match="non-simple polygon cell 0"):
        mesh_from_cells(verts, [[0, 1, 2, 3]])


def test_rejects_nonfinite_vertex():
    verts = np.array([[0.0, 0.0], [np.inf, 0.0], [0.0, 1.0]])
    with pytest.raises(MeshError, match="non-finite"):
        mesh_from_cells(verts, [[0, 1, 2]])


def test_save_load_round_trip(tmp_path):
    mesh = build_cartesian_mesh(3, 2, bbox=(-0.5, 0.25, 2.5, 1.75))
    path = tmp_path / "mesh.txt"
    save_mesh(mesh, path)
    back = load_mesh(path)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.cell_vtx, mesh.cell_vtx)
    assert np.array_equal(back.cell_vtx_start, mesh.cell_vtx_start)
    assert np.array_equal(back.edge_vtx, mesh.edge_vtx)
    assert np.array_equal(back.edge_left, mesh.edge_left)
    assert np.array_equal(back.edge_right, mesh.edge_right)
    assert np.array_equal(back.cell_area, mesh.cell_area)


def test_load_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("polymesh 3d\nvertices 0\ncells 0\n")
    with pytest.raises(MeshError, match="line 1: expected header"):
        load_mesh(path)


def test_load_rejects_truncation(tmp_path):
    path = tmp_path / "short.txt"
    path.write_text("polymesh 2d\nvertices 2\n0 0\n")
    with pytest.raises(MeshError, match="unexpected end of file"):
        load_mesh(path)


def test_load_rejects_malformed_coordinate(tmp_path):
    path = tmp_path / "coord.txt"
    path.write_text("polymesh 2d\nvertices 1\n0 zero\ncells 0\n")
    with pytest.raises(MeshError, match="line 3: malformed coordinate"):
        load_mesh(path)


def test_load_rejects_bad_cell_record(tmp_path):
    path = tmp_path / "cell.txt"
    path.write_text("polymesh 2d\nvertices 3\n0 0\n1 0\n0 1\n"
                    "cells 1\n4 0 1 2\n")
    with pytest.raises(MeshError, match="cell record must read"):
        load_mesh(path)


def test_load_rejects_trailing_content(tmp_path):
    path = tmp_path / "trail.txt"
    path.write_text("polymesh 2d\nvertices 3\n0 0\n1 0\n0 1\n"
                    "cells 1\n3 0 1 2\nextra\n")
    with pytest.raises(MeshError, match="trailing content"):
        load_mesh(path)


def test_load_skips_comments_and_blanks(tmp_path):
    path = tmp_path / "comments.txt"
    path.write_text("# a comment\npolymesh 2d\n\nvertices 3\n0 0\n1 0\n"
                    "0 1\n# another\ncells 1\n3 0 1 2\n")
    mesh = load_mesh(path)
    assert mesh.n_cells == 1


def test_dual_centroid_on_squares():
    mesh = build_cartesian_mesh(3, 3, bbox=(0.0, 0.0, 3.0, 3.0))
    dual = derive_dual(mesh)
    assert np.allclose(dual.nodes, mesh.cell_centroid)
    assert np.allclose(dual.subcell_fraction, 0.25, rtol=0, atol=1e-14)
    per_cell = np.add.reduceat(dual.subcell_area, mesh.cell_start)
    assert np.allclose(per_cell, mesh.cell_area, rtol=1e-14, atol=0)
    inner = mesh.edge_right >= 0
    assert np.allclose(dual.edge_dual_area[inner], 0.5)
    assert np.allclose(dual.edge_dual_area[~inner], 0.25)


def test_dual_uniform_vertex_weights():
    verts = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 2.0]])
    mesh = mesh_from_cells(verts, [[0, 1, 2]])
    dual = derive_dual(mesh, BetaRule.UNIFORM_VERTEX_WEIGHTS)
    assert np.allclose(dual.nodes[0], [1.0, 2.0 / 3.0])


def test_dual_rejects_node_outside_nonconvex_cell():
    verts, cells = ARROW
    mesh = mesh_from_cells(verts, cells)
    with pytest.raises(MeshError, match="leaves the cell or degenerates"):
        derive_dual(mesh, BetaRule.UNIFORM_VERTEX_WEIGHTS)
    # the centroid stays inside the same cell
    dual = derive_dual(mesh, BetaRule.CENTROID)
    assert abs(dual.subcell_fraction[:4].sum() - 1.0) < 1e-12


def test_dual_explicit_weights():
    verts, cells = UNIT_SQUARE
    mesh = mesh_from_cells(verts, cells)
    dual = derive_dual(mesh, BetaRule.EXPLICIT,
                       weights=[0.25, 0.25, 0.25, 0.25])
    assert np.allclose(dual.nodes[0], [0.5, 0.5])
    with pytest.raises(MeshError, match="do not sum to 1"):
        derive_dual(mesh, BetaRule.EXPLICIT, weights=[0.5, 0.25, 0.25, 0.25])
    with pytest.raises(MeshError, match="must be positive"):
        derive_dual(mesh, BetaRule.EXPLICIT, weights=[0.5, 0.5, 0.25, -0.25])
    with pytest.raises(MeshError, match="requires weights"):
        derive_dual(mesh, BetaRule.EXPLICIT)


def test_quality_report_passes_on_uniform_grid():
    mesh = build_cartesian_mesh(10, 10)
    report = validate_mesh(mesh)
    assert report.passed
    assert "PASS" in report.summary()


def test_quality_report_flags_stretched_cell():
    mesh = build_cartesian_mesh(1, 1, bbox=(0.0, 0.0, 10.0, 0.001))
    report = validate_mesh(mesh)
    assert not report.passed
    assert report.min_edge_ratio < report.threshold_edge_low
    assert "FAIL" in report.summary()


def test_rejects_degenerate_bbox():
    with pytest.raises(MeshError, match="degenerate bounding box"):
        build_cartesian_mesh(2, 2, bbox=(0.0, 0.0, 0.0, 1.0))
    with pytest.raises(MeshError, match="positive"):
        build_cartesian_mesh(0, 2)
