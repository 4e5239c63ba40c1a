"""Triangulated closed surfaces and the geometry FEM assembly needs.

Meshes are immutable after construction: vertex/triangle arrays are
write-protected and per-triangle geometry (areas, unit normals, edge
vectors) is precomputed.  Construction validates closedness, edge
manifoldness and consistent orientation.
"""

import numpy as np

from .errors import (
    CapacityError,
    MeshParseError,
    NonManifoldError,
    OpenBoundaryError,
    OrientationError,
    MeshError,
)

MAX_REFINE_LEVEL = 9


class SurfaceMesh:
    """Immutable triangulated closed 2-manifold embedded in R^3.

    Attributes
    ----------
    vertices : (N_V, 3) float array
    triangles : (N_T, 3) int array, consistent outward orientation
    edges : (N_E, 2) int array, each row sorted, rows lexicographically sorted
    tri_areas, tri_normals, tri_edge_vectors : per-triangle geometry;
        edge vector i is the edge opposite local vertex i.
    area, h_max : total surface area and longest edge length.
    """

    def __init__(self, vertices, triangles, _validated=False, coarser=None,
                 parent_edges=None):
        # generators thread the subdivision hierarchy through `coarser` /
        # `parent_edges` (edge (i, j) of the coarser mesh spawned vertex
        # n_coarse + k); loaded meshes have neither
        self.coarser = coarser
        self.parent_edges = parent_edges
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError("vertices must be an (N, 3) array")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError("triangles must be an (M, 3) array")
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshError("triangle index out of range")
        self.vertices = vertices
        self.triangles = triangles
        if not _validated:
            _check_closed_oriented(triangles)
        self.edges = _unique_edges(triangles)
        tri_xyz = vertices[triangles]
        edge_vec = np.empty_like(tri_xyz)
        for i in range(3):
            edge_vec[:, i] = tri_xyz[:, (i + 2) % 3] - tri_xyz[:, (i + 1) % 3]
        normal = np.cross(edge_vec[:, 0], edge_vec[:, 1])
        norms = np.linalg.norm(normal, axis=1)
        if np.any(norms <= 0.0) or not np.all(np.isfinite(norms)):
            raise MeshError("degenerate triangle (zero area)")
        self.tri_edge_vectors = edge_vec
        self.tri_areas = 0.5 * norms
        self.tri_normals = normal / norms[:, None]
        self.area = float(self.tri_areas.sum())
        edge_len = np.linalg.norm(
            vertices[self.edges[:, 0]] - vertices[self.edges[:, 1]], axis=1
        )
        self.h_max = float(edge_len.max())
        for arr in (self.vertices, self.triangles, self.edges,
                    self.tri_edge_vectors, self.tri_areas, self.tri_normals):
            arr.setflags(write=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_triangles

    def vertex_adjacency(self):
        """CSR-style (offsets, neighbors) vertex adjacency from the edges."""
        n = self.n_vertices
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        order = np.argsort(src, kind="stable")
        src, dst = src[order], dst[order]
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.add.at(offsets, src + 1, 1)
        np.cumsum(offsets, out=offsets)
        return offsets, dst


def _unique_edges(triangles):
    e = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    e.sort(axis=1)
    e = np.unique(e, axis=0)
    return e


def _directed_edges(triangles):
    return np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )


def _check_closed_oriented(triangles):
    """Every undirected edge must appear exactly twice, once per direction."""
    d = _directed_edges(triangles)
    n = int(triangles.max()) + 1 if triangles.size else 0
    key = d[:, 0] * n + d[:, 1]
    key_sorted = np.sort(key)
    if len(np.unique(key_sorted)) != len(key_sorted):
        raise NonManifoldError("directed edge repeated: non-manifold or duplicated face")
    rev = d[:, 1] * n + d[:, 0]
    matched = np.isin(key, rev)
    if not matched.all():
        # distinguish: an unmatched directed edge is either a boundary edge
        # or an orientation clash (same direction twice was caught above)
        und = np.sort(d, axis=1)
        und_key = und[:, 0] * n + und[:, 1]
        _, counts = np.unique(und_key, return_counts=True)
        if (counts > 2).any():
            raise NonManifoldError("edge shared by more than two triangles")
        if (counts == 1).any():
            raise OpenBoundaryError("open boundary: edge with a single triangle")
        raise OrientationError("inconsistent triangle orientation")


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def _base_sphere():
    """Hexagonal bipyramid inscribed in the unit sphere: 8 vertices, 12
    triangles, 18 edges.  Midpoint refinement then yields 6*4^k+2 vertices,
    matching the paper-scale grids (1538/6146/24578/98306/393218).
    Symmetric under z -> -z and under the antipodal map.
    """
    ang = np.arange(6) * (np.pi / 3.0)
    verts = np.zeros((8, 3))
    verts[0] = (0.0, 0.0, 1.0)
    verts[1:7, 0] = np.cos(ang)
    verts[1:7, 1] = np.sin(ang)
    verts[7] = (0.0, 0.0, -1.0)
    tris = []
    for k in range(6):
        a, b = 1 + k, 1 + (k + 1) % 6
        tris.append((0, a, b))     # northern fan, outward
        tris.append((7, b, a))     # southern fan, outward
    return verts, np.array(tris, dtype=np.int64)


def _subdivide(vertices, triangles):
    """One midpoint subdivision: parents keep their indices, one new vertex
    per edge, numbered in lexicographic edge order."""
    edges = _unique_edges(triangles)
    n = len(vertices)
    # map (i, j) sorted edge -> new vertex index
    edge_index = {(int(i), int(j)): n + k for k, (i, j) in enumerate(edges)}
    midpoints = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    new_vertices = np.vstack([vertices, midpoints])
    new_tris = np.empty((4 * len(triangles), 3), dtype=np.int64)
    for t, (a, b, c) in enumerate(triangles):
        mab = edge_index[(min(a, b), max(a, b))]
        mbc = edge_index[(min(b, c), max(b, c))]
        mca = edge_index[(min(c, a), max(c, a))]
        new_tris[4 * t + 0] = (a, mab, mca)
        new_tris[4 * t + 1] = (b, mbc, mab)
        new_tris[4 * t + 2] = (c, mca, mbc)
        new_tris[4 * t + 3] = (mab, mbc, mca)
    return new_vertices, new_tris


def build_refined_sphere(level):
    """Unit sphere mesh with 6*4^level + 2 vertices.

    The 12-triangle base is midpoint-subdivided `level` times, projecting
    every new vertex onto the unit sphere.  The returned mesh carries its
    subdivision hierarchy (`coarser`, `parent_edges`) for multilevel
    solvers.
    """
    if level < 0:
        raise ValueError("level must be nonnegative")
    if level > MAX_REFINE_LEVEL:
        raise CapacityError(f"refinement level {level} exceeds cap {MAX_REFINE_LEVEL}")
    verts, tris = _base_sphere()
    mesh = SurfaceMesh(verts, tris, _validated=True)
    for _ in range(int(level)):
        edges = mesh.edges
        verts, tris = _subdivide(mesh.vertices, mesh.triangles)
        verts /= np.linalg.norm(verts, axis=1)[:, None]
        mesh = SurfaceMesh(verts, tris, _validated=True, coarser=mesh,
                           parent_edges=edges)
    return mesh


def _bump_radii(vertices, amplitude, wavenumber):
    azimuth = np.arctan2(vertices[:, 1], vertices[:, 0])
    sin_theta_sq = vertices[:, 0] ** 2 + vertices[:, 1] ** 2
    return 1.0 + amplitude * np.cos(wavenumber * azimuth) * sin_theta_sq


def build_bumpy_sphere(level, amplitude, wavenumber):
    """Refined sphere with radial modulation
    r(theta, azimuth) = 1 + amplitude * cos(wavenumber * azimuth) * sin(theta)^2.

    Self-intersections are not checked; amplitude is restricted to [0, 0.5)
    which keeps the paper-like shapes embedded.  The radial map is applied
    to every level of the hierarchy.
    """
    if not 0.0 <= amplitude < 0.5:
        raise ValueError("amplitude must lie in [0, 0.5)")
    sphere = build_refined_sphere(level)
    chain = []
    m = sphere
    while m is not None:
        chain.append(m)
        m = m.coarser
    bumped = None
    for m in reversed(chain):
        v = m.vertices * _bump_radii(m.vertices, amplitude, wavenumber)[:, None]
        bumped = SurfaceMesh(v, m.triangles, _validated=True, coarser=bumped,
                             parent_edges=m.parent_edges)
    return bumped


def mesh_stats(mesh):
    """(N_V, N_T, N_E, area, h_max) of a mesh."""
    return mesh.n_vertices, mesh.n_triangles, mesh.n_edges, mesh.area, mesh.h_max


# ---------------------------------------------------------------------------
# OFF import
# ---------------------------------------------------------------------------

def load_mesh(path, fmt="OFF"):
    """Load a closed triangulated surface from an ASCII OFF file.

    Orientation is made consistent by propagation from the first triangle
    and flipped globally, if needed, so that it is outward (positive signed
    volume).  Raises distinct errors for parse failures, non-manifold edges,
    open boundaries and non-orientable input.
    """
    if fmt != "OFF":
        raise ValueError(f"unsupported mesh format {fmt!r}")
    with open(path) as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise MeshParseError(f"{path}: missing OFF header")
    try:
        nv, nf = int(tokens[1]), int(tokens[2])
        pos = 4  # skip edge count
        coords = np.array(tokens[pos:pos + 3 * nv], dtype=np.float64)
        vertices = coords.reshape(nv, 3)
        pos += 3 * nv
        faces = []
        for _ in range(nf):
            k = int(tokens[pos])
            if k != 3:
                raise MeshParseError(f"{path}: only triangle faces supported, got {k}-gon")
            faces.append([int(t) for t in tokens[pos + 1:pos + 4]])
            pos += 1 + k
    except MeshParseError:
        raise
    except (ValueError, IndexError) as exc:
        raise MeshParseError(f"{path}: malformed OFF data ({exc})") from exc
    triangles = np.array(faces, dtype=np.int64)
    triangles = _orient_consistently(triangles)
    if _signed_volume(vertices, triangles) < 0.0:
        triangles = triangles[:, ::-1]
    return SurfaceMesh(vertices, triangles)


def _signed_volume(vertices, triangles):
    p = vertices[triangles]
    return float(np.einsum("ij,ij->", p[:, 0], np.cross(p[:, 1], p[:, 2]))) / 6.0


def _orient_consistently(triangles):
    """Fix orientation by breadth-first propagation from triangle 0."""
    nt = len(triangles)
    edge_to_tris = {}
    for t, (a, b, c) in enumerate(triangles):
        for i, j in ((a, b), (b, c), (c, a)):
            key = (min(i, j), max(i, j))
            edge_to_tris.setdefault(key, []).append(t)
    for key, ts in edge_to_tris.items():
        if len(ts) > 2:
            raise NonManifoldError(f"edge {key} shared by {len(ts)} triangles")
        if len(ts) == 1:
            raise OpenBoundaryError(f"open boundary: edge {key} has a single triangle")
    tris = triangles.copy()
    visited = np.zeros(nt, dtype=bool)
    for seed in range(nt):
        if visited[seed]:
            continue
        visited[seed] = True
        queue = [seed]
        while queue:
            t = queue.pop()
            a, b, c = tris[t]
            for i, j in ((a, b), (b, c), (c, a)):
                key = (min(i, j), max(i, j))
                for s in edge_to_tris[key]:
                    if s == t:
                        continue
                    sa, sb, sc = tris[s]
                    directed = ((sa, sb), (sb, sc), (sc, sa))
                    if not visited[s]:
                        # neighbor must traverse the shared edge as (j, i)
                        if (i, j) in directed:
                            tris[s] = tris[s, ::-1]
                        visited[s] = True
                        queue.append(s)
                    else:
                        if (i, j) in directed:
                            raise OrientationError(
                                f"surface not orientable (conflict at edge {key})"
                            )
    return tris
