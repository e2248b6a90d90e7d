"""Polygonal primal meshes and the subcell (dual) geometry built on them.

A mesh stores its cells as CCW vertex loops in CSR form plus a flat
"half-edge" view: one entry per (cell, edge) incidence, grouped
contiguously by cell in the cell's stored loop order.  Per-cell sums are
np.add.reduceat over those groups, which fixes the floating point
summation order once and for all.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

BOUNDARY = -1


class MeshError(ValueError):
    """Invalid mesh data (geometry, topology, or file format)."""


class BetaRule(Enum):
    """How the internal node of each cell is placed."""
    CENTROID = "centroid"
    UNIFORM_VERTEX_WEIGHTS = "uniform_vertex_weights"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class PrimalMesh:
    """Conforming polygonal mesh, immutable after construction."""
    vertices: np.ndarray        # (Nv, 2)
    cell_vtx: np.ndarray        # flat CCW vertex loops
    cell_vtx_start: np.ndarray  # (Nc+1,) CSR offsets; also half-edge offsets
    edge_vtx: np.ndarray        # (Ne, 2) endpoints in left-cell traversal order
    edge_left: np.ndarray       # (Ne,)
    edge_right: np.ndarray      # (Ne,) cell id or BOUNDARY
    edge_length: np.ndarray     # (Ne,)
    edge_normal: np.ndarray     # (Ne, 2) unit, oriented left -> right
    he_cell: np.ndarray         # (Nh,)
    he_edge: np.ndarray         # (Nh,)
    he_sign: np.ndarray         # (Nh,) +1 if cell is the edge's left cell
    he_opp: np.ndarray          # (Nh,) neighbor cell or BOUNDARY
    cell_area: np.ndarray       # (Nc,)
    cell_perimeter: np.ndarray  # (Nc,)
    cell_centroid: np.ndarray   # (Nc, 2)
    structured: tuple | None = None   # (nx, ny, bbox) when built Cartesian
    dimension: int = 2

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cell_vtx_start.shape[0] - 1

    @property
    def n_edges(self) -> int:
        return self.edge_vtx.shape[0]

    @property
    def n_half_edges(self) -> int:
        return self.he_cell.shape[0]

    @property
    def cell_start(self) -> np.ndarray:
        """Reduceat offsets for per-cell sums over half-edge arrays."""
        return self.cell_vtx_start[:-1]

    @property
    def cell_size(self) -> float:
        """Mesh size: largest exterior cell perimeter."""
        return float(self.cell_perimeter.max())

    def cell_loops(self):
        """Yield each cell's vertex index loop."""
        s = self.cell_vtx_start
        for k in range(self.n_cells):
            yield self.cell_vtx[s[k]:s[k + 1]]

    def cell_reduce(self, values: np.ndarray, ufunc=np.add) -> np.ndarray:
        """Reduce a half-edge array to one value per cell, in stored order."""
        return ufunc.reduceat(values, self.cell_start)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def _segments_intersect(p, q, r, s) -> bool:
    """Proper intersection test for open segments pq and rs."""
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    o1 = orient(p, q, r)
    o2 = orient(p, q, s)
    o3 = orient(r, s, p)
    o4 = orient(r, s, q)
    return (o1 * o2 < 0.0) and (o3 * o4 < 0.0)


def _check_simple(vertices, loop, cell_id):
    k = len(loop)
    pts = vertices[loop]
    for i in range(k):
        a, b = pts[i], pts[(i + 1) % k]
        for j in range(i + 1, k):
            if j == i or (j + 1) % k == i or (i + 1) % k == j:
                continue
            c, d = pts[j], pts[(j + 1) % k]
            if _segments_intersect(a, b, c, d):
                raise MeshError(f"non-simple polygon cell {cell_id}")


def mesh_from_cells(vertices, cells, check_simple: bool = True,
                    structured: tuple | None = None) -> PrimalMesh:
    """Build a PrimalMesh from vertex coordinates and CCW cell loops.

    cells: sequence of vertex-index sequences.  Raises MeshError on
    clockwise or degenerate cells, duplicate vertices inside a loop,
    non-manifold edges, or self-intersecting polygons.
    """
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError("vertices must be an (N, 2) array")
    if not np.isfinite(vertices).all():
        raise MeshError("non-finite vertex coordinate")
    nv = vertices.shape[0]

    sizes = np.array([len(c) for c in cells], dtype=np.int64)
    if sizes.size == 0:
        raise MeshError("mesh has no cells")
    if (sizes < 3).any():
        bad = int(np.nonzero(sizes < 3)[0][0])
        raise MeshError(f"cell {bad} has fewer than 3 vertices")
    starts = np.zeros(sizes.size + 1, dtype=np.int64)
    np.cumsum(sizes, out=starts[1:])
    flat = np.concatenate([np.asarray(c, dtype=np.int64) for c in cells])
    if flat.min() < 0 or flat.max() >= nv:
        raise MeshError("cell references a vertex out of range")

    nc = sizes.size
    nh = flat.size
    he_cell = np.repeat(np.arange(nc, dtype=np.int64), sizes)
    # from/to vertex of each half-edge: consecutive loop entries, wrapping
    nxt = np.arange(1, nh + 1, dtype=np.int64)
    nxt[starts[1:] - 1] = starts[:-1]
    v_from = flat
    v_to = flat[nxt]
    if (v_from == v_to).any():
        bad = int(he_cell[np.nonzero(v_from == v_to)[0][0]])
        raise MeshError(f"repeated consecutive vertex in cell {bad}")

    xf = vertices[v_from]
    xt = vertices[v_to]

    # shoelace areas fix orientation; CCW required.  Working in
    # cell-local coordinates (first loop vertex as origin) keeps the
    # cross products well conditioned on small cells far from the origin.
    ref = vertices[flat[starts[he_cell]]]
    lf = xf - ref
    lt = xt - ref
    cross = lf[:, 0] * lt[:, 1] - lt[:, 0] * lf[:, 1]
    area = 0.5 * np.add.reduceat(cross, starts[:-1])
    if (area <= 0.0).any():
        bad = int(np.nonzero(area <= 0.0)[0][0])
        raise MeshError(f"negative area cell {bad}")

    if check_simple:
        for k in range(nc):
            _check_simple(vertices, flat[starts[k]:starts[k + 1]], k)

    # dedup edges on sorted vertex pairs
    lo = np.minimum(v_from, v_to)
    hi = np.maximum(v_from, v_to)
    key = lo * np.int64(nv) + hi
    uniq, he_edge, counts = np.unique(key, return_inverse=True,
                                      return_counts=True)
    ne = uniq.size
    if (counts > 2).any():
        raise MeshError("edge shared by more than two cells")
    # interior pairs must be traversed once each way
    forward = (v_from < v_to)
    fwd_count = np.bincount(he_edge, weights=forward.astype(float),
                            minlength=ne)
    bad_interior = (counts == 2) & ((fwd_count == 0) | (fwd_count == 2))
    if bad_interior.any():
        e = int(np.nonzero(bad_interior)[0][0])
        cells_bad = np.sort(he_cell[he_edge == e])
        raise MeshError(
            "inconsistent edge orientation between cells "
            f"{cells_bad[0]} and {cells_bad[1]}")

    # left cell traverses the edge in its stored direction:
    #   interior edge: the cell going lo -> hi; boundary edge: its only cell
    is_fwd_rep = np.where(counts[he_edge] == 1, True, forward)
    edge_left = np.full(ne, -1, dtype=np.int64)
    edge_left[he_edge[is_fwd_rep]] = he_cell[is_fwd_rep]
    edge_right = np.full(ne, BOUNDARY, dtype=np.int64)
    edge_right[he_edge[~is_fwd_rep]] = he_cell[~is_fwd_rep]
    edge_vtx = np.empty((ne, 2), dtype=np.int64)
    edge_vtx[he_edge[is_fwd_rep], 0] = v_from[is_fwd_rep]
    edge_vtx[he_edge[is_fwd_rep], 1] = v_to[is_fwd_rep]

    d = vertices[edge_vtx[:, 1]] - vertices[edge_vtx[:, 0]]
    edge_length = np.hypot(d[:, 0], d[:, 1])
    if (edge_length <= 0.0).any():
        raise MeshError("zero-length edge")
    edge_normal = np.stack([d[:, 1], -d[:, 0]], axis=1) / edge_length[:, None]

    he_sign = np.where(edge_left[he_edge] == he_cell, 1.0, -1.0)
    he_opp = np.where(he_sign > 0, edge_right[he_edge], edge_left[he_edge])

    perim = np.add.reduceat(edge_length[he_edge], starts[:-1])
    cx = np.add.reduceat((lf[:, 0] + lt[:, 0]) * cross, starts[:-1])
    cy = np.add.reduceat((lf[:, 1] + lt[:, 1]) * cross, starts[:-1])
    centroid = np.stack([cx, cy], axis=1) / (6.0 * area[:, None]) \
        + vertices[flat[starts[:-1]]]

    # closed-loop identity: sum of |e| nu over each cell vanishes
    nu_he = he_sign[:, None] * edge_normal[he_edge]
    len_he = edge_length[he_edge]
    loop_sum = np.abs(np.add.reduceat(nu_he * len_he[:, None], starts[:-1],
                                      axis=0))
    if (loop_sum > 1e-12 * perim[:, None]).any():
        bad = int(np.nonzero((loop_sum > 1e-12 * perim[:, None]).any(1))[0][0])
        raise MeshError(f"cell {bad} vertex loop does not close")

    return PrimalMesh(
        vertices=_freeze(vertices),
        cell_vtx=_freeze(flat),
        cell_vtx_start=_freeze(starts),
        edge_vtx=_freeze(edge_vtx),
        edge_left=_freeze(edge_left),
        edge_right=_freeze(edge_right),
        edge_length=_freeze(edge_length),
        edge_normal=_freeze(edge_normal),
        he_cell=_freeze(he_cell),
        he_edge=_freeze(he_edge),
        he_sign=_freeze(he_sign),
        he_opp=_freeze(he_opp),
        cell_area=_freeze(area),
        cell_perimeter=_freeze(perim),
        cell_centroid=_freeze(centroid),
        structured=structured,
    )


def build_cartesian_mesh(nx: int, ny: int, bbox=(-1.0, -1.0, 1.0, 1.0)
                         ) -> PrimalMesh:
    """Uniform nx-by-ny quad mesh of an axis-aligned box.

    Cells are numbered row-major (x fastest), loops are CCW starting at
    the lower-left corner.
    """
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be positive")
    x0, y0, x1, y1 = (float(t) for t in bbox)
    if not (x1 > x0 and y1 > y0):
        raise MeshError("degenerate bounding box")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    vertices = np.stack([gx.ravel(), gy.ravel()], axis=1)

    i = np.tile(np.arange(nx, dtype=np.int64), ny)
    j = np.repeat(np.arange(ny, dtype=np.int64), nx)
    v00 = j * (nx + 1) + i
    loops = np.stack([v00, v00 + 1, v00 + nx + 2, v00 + nx + 1], axis=1)
    return mesh_from_cells(vertices, loops, check_simple=False,
                           structured=(nx, ny, (x0, y0, x1, y1)))


def save_mesh(mesh: PrimalMesh, path) -> None:
    """Write the plain-text polygon mesh format (adjacency is derived,
    never stored)."""
    with open(path, "w") as fh:
        fh.write("polymesh 2d\n")
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        fh.write(f"cells {mesh.n_cells}\n")
        for loop in mesh.cell_loops():
            fh.write(" ".join([str(len(loop))] + [str(int(v)) for v in loop])
                     + "\n")


def load_mesh(path) -> PrimalMesh:
    """Read the plain-text polygon mesh format; errors name the line."""
    with open(path) as fh:
        raw = fh.read().splitlines()
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(raw)
             if ln.strip() and not ln.strip().startswith("#")]
    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(lines):
            raise MeshError(f"line {len(raw) + 1}: unexpected end of file, "
                            f"expected {what}")
        item = lines[pos]
        pos += 1
        return item

    ln, text = take("header 'polymesh 2d'")
    if text != "polymesh 2d":
        raise MeshError(f"line {ln}: expected header 'polymesh 2d'")
    ln, text = take("'vertices N'")
    parts = text.split()
    if len(parts) != 2 or parts[0] != "vertices" or not parts[1].isdigit():
        raise MeshError(f"line {ln}: expected 'vertices N'")
    nv = int(parts[1])
    verts = np.empty((nv, 2), dtype=float)
    for k in range(nv):
        ln, text = take("vertex coordinates")
        parts = text.split()
        if len(parts) != 2:
            raise MeshError(f"line {ln}: expected two coordinates")
        try:
            verts[k] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshError(f"line {ln}: malformed coordinate") from None
    ln, text = take("'cells M'")
    parts = text.split()
    if len(parts) != 2 or parts[0] != "cells" or not parts[1].isdigit():
        raise MeshError(f"line {ln}: expected 'cells M'")
    nc = int(parts[1])
    cells = []
    for k in range(nc):
        ln, text = take("cell vertex list")
        parts = text.split()
        try:
            ints = [int(p) for p in parts]
        except ValueError:
            raise MeshError(f"line {ln}: malformed cell record") from None
        if len(ints) < 4 or ints[0] != len(ints) - 1:
            raise MeshError(f"line {ln}: cell record must read 'k i1 ... ik'")
        if ints[0] < 3:
            raise MeshError(f"line {ln}: cell {k} has fewer than 3 vertices")
        if any(i < 0 or i >= nv for i in ints[1:]):
            raise MeshError(f"line {ln}: cell {k} references a vertex "
                            "out of range")
        cells.append(ints[1:])
    if pos != len(lines):
        ln, _ = lines[pos]
        raise MeshError(f"line {ln}: trailing content after last cell")
    return mesh_from_cells(verts, cells, check_simple=True)


@dataclass(frozen=True)
class DualGeometry:
    """Internal nodes and the triangle subcells they induce.

    subcell_area[h] is the area of the triangle spanned by half-edge h
    and its cell's internal node; subcell_fraction[h] is that area over
    the cell area (the intake coefficient of the scheme).
    """
    nodes: np.ndarray             # (Nc, 2) internal node per cell
    subcell_area: np.ndarray      # (Nh,)
    subcell_fraction: np.ndarray  # (Nh,) in (0, 1), sums to 1 per cell
    edge_dual_area: np.ndarray    # (Ne,) union of the two edge subcells
    beta_rule: BetaRule = BetaRule.CENTROID


def derive_dual(mesh: PrimalMesh, beta_rule: BetaRule = BetaRule.CENTROID,
                weights=None) -> DualGeometry:
    """Place one internal node per cell and split the cell into one
    triangle subcell per edge.

    EXPLICIT expects `weights`: per cell, one positive weight per loop
    vertex summing to 1 (flat array aligned with mesh.cell_vtx).  Raises
    MeshError when a node leaves its cell or a subcell degenerates.
    """
    starts = mesh.cell_start
    if beta_rule is BetaRule.CENTROID:
        nodes = mesh.cell_centroid.copy()
    elif beta_rule is BetaRule.UNIFORM_VERTEX_WEIGHTS:
        pts = mesh.vertices[mesh.cell_vtx]
        sizes = np.diff(mesh.cell_vtx_start)
        nodes = np.add.reduceat(pts, starts, axis=0) / sizes[:, None]
    elif beta_rule is BetaRule.EXPLICIT:
        if weights is None:
            raise MeshError("EXPLICIT beta rule requires weights")
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape[0] != mesh.cell_vtx.shape[0]:
            raise MeshError("weights must align with the flat vertex loops")
        if (w <= 0.0).any():
            raise MeshError("explicit weights must be positive")
        sums = np.add.reduceat(w, starts)
        if (np.abs(sums - 1.0) > 1e-12).any():
            bad = int(np.nonzero(np.abs(sums - 1.0) > 1e-12)[0][0])
            raise MeshError(f"explicit weights of cell {bad} do not sum to 1")
        pts = mesh.vertices[mesh.cell_vtx] * w[:, None]
        nodes = np.add.reduceat(pts, starts, axis=0)
    else:
        raise MeshError(f"unknown beta rule {beta_rule!r}")

    a = mesh.vertices[mesh.edge_vtx[mesh.he_edge, 0]]
    b = mesh.vertices[mesh.edge_vtx[mesh.he_edge, 1]]
    # traversal order of this cell, so the triangle (node, from, to) is CCW
    fwd = mesh.he_sign > 0
    p = np.where(fwd[:, None], a, b)
    q = np.where(fwd[:, None], b, a)
    xk = nodes[mesh.he_cell]
    sub = 0.5 * ((p[:, 0] - xk[:, 0]) * (q[:, 1] - xk[:, 1])
                 - (q[:, 0] - xk[:, 0]) * (p[:, 1] - xk[:, 1]))
    if (sub <= 0.0).any():
        bad = int(mesh.he_cell[np.nonzero(sub <= 0.0)[0][0]])
        raise MeshError(
            f"internal node of cell {bad} leaves the cell or degenerates a "
            "subcell; use the CENTROID rule or better weights")

    frac = sub / mesh.cell_area[mesh.he_cell]
    sums = np.add.reduceat(frac, starts)
    if (np.abs(sums - 1.0) > 1e-12).any():
        bad = int(np.nonzero(np.abs(sums - 1.0) > 1e-12)[0][0])
        raise MeshError(f"subcell fractions of cell {bad} do not sum to 1")

    edge_dual = np.zeros(mesh.n_edges)
    np.add.at(edge_dual, mesh.he_edge, sub)

    return DualGeometry(
        nodes=_freeze(nodes),
        subcell_area=_freeze(sub),
        subcell_fraction=_freeze(frac),
        edge_dual_area=_freeze(edge_dual),
        beta_rule=beta_rule,
    )


@dataclass(frozen=True)
class MeshQualityReport:
    """Non-degeneracy measures with pass/fail against thresholds."""
    max_perimeter_ratio: float     # max of h_K p_K / |K|
    min_edge_ratio: float          # min of |e| / h
    max_edge_ratio: float          # max of |e| / h
    min_subcell_ratio: float       # min of subcell area / h^2
    threshold_perimeter: float = 100.0
    threshold_edge_low: float = 1e-3
    threshold_edge_high: float = 10.0
    threshold_subcell: float = 1e-4
    notes: tuple = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return (self.max_perimeter_ratio <= self.threshold_perimeter
                and self.min_edge_ratio >= self.threshold_edge_low
                and self.max_edge_ratio <= self.threshold_edge_high
                and self.min_subcell_ratio >= self.threshold_subcell)

    def summary(self) -> str:
        rows = [
            ("max h_K p_K / |K|", self.max_perimeter_ratio,
             f"<= {self.threshold_perimeter}"),
            ("min |e| / h", self.min_edge_ratio,
             f">= {self.threshold_edge_low}"),
            ("max |e| / h", self.max_edge_ratio,
             f"<= {self.threshold_edge_high}"),
            ("min subcell / h^2", self.min_subcell_ratio,
             f">= {self.threshold_subcell}"),
        ]
        out = [f"{name}: {val:.6g} (want {want})" for name, val, want in rows]
        out.append("quality: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(out)


def validate_mesh(mesh: PrimalMesh, dual: DualGeometry | None = None,
                  threshold_perimeter: float = 100.0,
                  threshold_edge_low: float = 1e-3,
                  threshold_edge_high: float = 10.0,
                  threshold_subcell: float = 1e-4) -> MeshQualityReport:
    """Measure mesh regularity; thresholds are reported, not enforced.

    h_K is the exterior perimeter of cell K and h their maximum.
    """
    if dual is None:
        dual = derive_dual(mesh)
    h = mesh.cell_size
    perim_ratio = mesh.cell_perimeter ** 2 / mesh.cell_area
    edge_ratio = mesh.edge_length / h
    sub_ratio = dual.subcell_area / h ** 2
    return MeshQualityReport(
        max_perimeter_ratio=float(perim_ratio.max()),
        min_edge_ratio=float(edge_ratio.min()),
        max_edge_ratio=float(edge_ratio.max()),
        min_subcell_ratio=float(sub_ratio.min()),
        threshold_perimeter=threshold_perimeter,
        threshold_edge_low=threshold_edge_low,
        threshold_edge_high=threshold_edge_high,
        threshold_subcell=threshold_subcell,
    )
