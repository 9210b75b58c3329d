"""Meshes for the two elastic bodies and the interstitial layer.

A ``BodyMesh`` is a 2D unstructured mesh of triangles or quadrilaterals with
tagged boundary facets (dirichlet / neumann / contact).  An ``InterfaceMesh``
is the polyline discretization of the interstitial layer, carrying one unit
normal per segment oriented toward a designated side.  The geometric contact
primitives live here as well: closest-point projection onto the polyline,
the signed gap, and Gauss quadrature on tagged boundary facets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FACET_TAGS = ("dirichlet", "neumann", "contact")

_GAUSS_01 = {
    1: (np.array([0.5]), np.array([1.0])),
    2: (np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]),
        np.array([0.5, 0.5])),
    3: (np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)]),
        np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])),
}


class MeshError(ValueError):
    """Invalid mesh data (bad indices, orientation, tags or topology)."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def tri_area(coords: np.ndarray) -> float:
    """Signed area of a triangle given as a (3, 2) coordinate array."""
    d1 = coords[1] - coords[0]
    d2 = coords[2] - coords[0]
    return 0.5 * float(d1[0] * d2[1] - d1[1] * d2[0])


def polygon_area(coords: np.ndarray) -> float:
    """Signed (shoelace) area of a polygon with CCW positive."""
    x, y = coords[:, 0], coords[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


class BodyMesh:
    """Unstructured 2D mesh of one elastic body.

    All elements must share a type (3-node triangles or 4-node quads) and be
    counter-clockwise oriented.  Boundary facets are node pairs, each carrying
    exactly one tag out of ``FACET_TAGS``.  Instances are immutable after
    construction; the backing arrays are marked read-only.
    """

    def __init__(self, nodes, elements, boundary_facets, facet_tags):
        self.nodes = _readonly(np.asarray(nodes, dtype=float))
        self.elements = _readonly(np.asarray(elements, dtype=np.int64))
        self.boundary_facets = _readonly(np.asarray(boundary_facets, dtype=np.int64))
        self.facet_tags = tuple(facet_tags)
        self._validate()
        self._facet_elements = self._build_facet_adjacency()
        self._facet_elements.setflags(write=False)

    # -- derived quantities ------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def element_type(self) -> str:
        return "tri" if self.elements.shape[1] == 3 else "quad"

    @property
    def facet_elements(self) -> np.ndarray:
        """Element id adjacent to each boundary facet."""
        return self._facet_elements

    def facet_vector(self, facet_id: int) -> np.ndarray:
        a, b = self.boundary_facets[facet_id]
        return self.nodes[b] - self.nodes[a]

    def facet_length(self, facet_id: int) -> float:
        return float(np.linalg.norm(self.facet_vector(facet_id)))

    def facet_midpoint(self, facet_id: int) -> np.ndarray:
        a, b = self.boundary_facets[facet_id]
        return 0.5 * (self.nodes[a] + self.nodes[b])

    def facet_normal(self, facet_id: int) -> np.ndarray:
        """Outward unit normal of a boundary facet."""
        t = self.facet_vector(facet_id)
        n = np.array([t[1], -t[0]]) / np.linalg.norm(t)
        elem = self.elements[self._facet_elements[facet_id]]
        centroid = self.nodes[elem].mean(axis=0)
        if np.dot(n, centroid - self.facet_midpoint(facet_id)) > 0.0:
            n = -n
        return n

    def facet_ids(self, tag: str) -> np.ndarray:
        return np.array([i for i, t in enumerate(self.facet_tags) if t == tag],
                        dtype=np.int64)

    def element_coords(self, element_id: int) -> np.ndarray:
        return self.nodes[self.elements[element_id]]

    # -- validation ----------------------------------------------------------

    def _validate(self):
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise MeshError("nodes must be an (n, 2) array")
        if self.elements.ndim != 2 or self.elements.shape[1] not in (3, 4):
            raise MeshError("elements must be (m, 3) triangles or (m, 4) quads")
        if self.elements.min(initial=0) < 0 or \
                self.elements.max(initial=-1) >= self.n_nodes:
            raise MeshError("element node index out of range")
        bad = []
        for e, conn in enumerate(self.elements):
            coords = self.nodes[conn]
            area = tri_area(coords) if len(conn) == 3 else polygon_area(coords)
            if area <= 0.0:
                bad.append(e)
        if bad:
            raise MeshError(f"elements with non-positive signed area: {bad[:10]}")
        if self.boundary_facets.ndim != 2 or self.boundary_facets.shape[1] != 2:
            raise MeshError("boundary_facets must be an (k, 2) array")
        if len(self.facet_tags) != self.boundary_facets.shape[0]:
            raise MeshError("facet_tags length must match boundary_facets")
        for t in self.facet_tags:
            if t not in FACET_TAGS:
                raise MeshError(f"unknown facet tag {t!r}")

    def _build_facet_adjacency(self) -> np.ndarray:
        edge_owner: dict[tuple[int, int], list[int]] = {}
        n_local = self.elements.shape[1]
        for e, conn in enumerate(self.elements):
            for i in range(n_local):
                key = tuple(sorted((int(conn[i]), int(conn[(i + 1) % n_local]))))
                edge_owner.setdefault(key, []).append(e)
        owners = np.empty(self.boundary_facets.shape[0], dtype=np.int64)
        for f, (a, b) in enumerate(self.boundary_facets):
            key = tuple(sorted((int(a), int(b))))
            adj = edge_owner.get(key, [])
            if len(adj) != 1:
                raise MeshError(
                    f"boundary facet {f} ({a},{b}) adjacent to {len(adj)} elements")
            owners[f] = adj[0]
        return owners


class InterfaceMesh:
    """Polyline discretization of the interstitial layer.

    Vertices are ordered; consecutive pairs form the segments (plus a closing
    segment when ``closed``).  Each segment carries a unit normal orthogonal
    to it, all on the same side of the polyline (``orient='left'`` means the
    normal is the walking direction rotated +90 degrees).  The designated side
    is the body the normal points into.
    """

    def __init__(self, vertices, orient: str = "left", closed: bool = False):
        self.vertices = _readonly(np.asarray(vertices, dtype=float))
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("interface vertices must be an (n, 2) array")
        if self.vertices.shape[0] < 2:
            raise MeshError("interface needs at least 2 vertices")
        if orient not in ("left", "right"):
            raise MeshError("orient must be 'left' or 'right'")
        self.orient = orient
        self.closed = bool(closed)
        n = self.vertices.shape[0]
        seg = np.column_stack([np.arange(n - 1), np.arange(1, n)])
        if self.closed:
            seg = np.vstack([seg, [n - 1, 0]])
        self.segments = _readonly(seg.astype(np.int64))
        d = self.vertices[self.segments[:, 1]] - self.vertices[self.segments[:, 0]]
        self.lengths = _readonly(np.linalg.norm(d, axis=1))
        if np.any(self.lengths <= 0.0):
            raise MeshError("zero-length interface segment")
        tangents = d / self.lengths[:, None]
        if orient == "left":
            normals = np.column_stack([-tangents[:, 1], tangents[:, 0]])
        else:
            normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])
        self.tangents = _readonly(tangents)
        self.normals = _readonly(normals)
        self._check_simple()
        self.vertex_normals = _readonly(self._vertex_normals())

    @property
    def n_segments(self) -> int:
        return self.segments.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def _vertex_normals(self) -> np.ndarray:
        """Unit vertex normals averaged from the adjacent segment normals."""
        acc = np.zeros_like(self.vertices)
        for s, (a, b) in enumerate(self.segments):
            acc[a] += self.normals[s]
            acc[b] += self.normals[s]
        norms = np.linalg.norm(acc, axis=1)
        if np.any(norms <= 0.0):
            raise MeshError("degenerate vertex normal (polyline folds back)")
        return acc / norms[:, None]

    def _check_simple(self):
        """Reject self-intersecting polylines (non-adjacent segment pairs)."""
        p = self.vertices[self.segments[:, 0]]
        q = self.vertices[self.segments[:, 1]]
        m = self.n_segments
        if m > 2000:  # quadratic check; fine at the scales used here
            return
        for i in range(m):
            for j in range(i + 2, m):
                if self.closed and i == 0 and j == m - 1:
                    continue
                if _segments_intersect(p[i], q[i], p[j], q[j]):
                    raise MeshError(f"interface segments {i} and {j} intersect")


def _segments_intersect(p1, q1, p2, q2) -> bool:
    def orient2d(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient2d(p2, q2, p1)
    d2 = orient2d(p2, q2, q1)
    d3 = orient2d(p1, q1, p2)
    d4 = orient2d(p1, q1, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


@dataclass(frozen=True)
class ClosestPointResult:
    """Closest point of a query point on the interface polyline.

    ``t`` is the barycentric coordinate along the segment in [0, 1], ``normal``
    the segment's stored normal, and ``distance`` the signed normal distance
    (normal, z - p0); it is positive on the designated side.
    """

    p0: np.ndarray
    segment_id: int
    t: float
    normal: np.ndarray
    distance: float


def closest_points(zs: np.ndarray, interface: InterfaceMesh):
    """Vectorized closest-point projection of many points onto the polyline.

    Ties between segments (shared vertices) resolve to the lowest segment
    index.  Returns arrays (p0, segment_id, t, normal, signed_distance).
    """
    zs = np.atleast_2d(np.asarray(zs, dtype=float))
    a = interface.vertices[interface.segments[:, 0]]  # (m, 2)
    d = interface.vertices[interface.segments[:, 1]] - a
    len2 = np.einsum("ij,ij->i", d, d)
    # t for every (point, segment) pair, clamped to the segment
    w = zs[:, None, :] - a[None, :, :]               # (n, m, 2)
    t = np.einsum("nmj,mj->nm", w, d) / len2[None, :]
    t = np.clip(t, 0.0, 1.0)
    p = a[None, :, :] + t[..., None] * d[None, :, :]
    diff = zs[:, None, :] - p
    dist2 = np.einsum("nmj,nmj->nm", diff, diff)
    best = dist2.min(axis=1)
    # lowest segment index among near-ties
    tol = 1e-12 * (1.0 + best)
    seg = np.argmax(dist2 <= (best + tol)[:, None], axis=1)
    rows = np.arange(zs.shape[0])
    t_sel = t[rows, seg]
    p_sel = p[rows, seg]
    n_sel = interface.normals[seg]
    signed = np.einsum("nj,nj->n", n_sel, zs - p_sel)
    return p_sel, seg, t_sel, n_sel, signed


def closest_point(z, interface: InterfaceMesh) -> ClosestPointResult:
    """Closest-point projection of a single point (see ``closest_points``)."""
    p, seg, t, n, dist = closest_points(np.asarray(z, dtype=float)[None, :], interface)
    return ClosestPointResult(p0=p[0], segment_id=int(seg[0]), t=float(t[0]),
                              normal=n[0], distance=float(dist[0]))


def gap(z, interface: InterfaceMesh) -> float:
    """Signed gap (normal, z - p0(z)) w.r.t. the stored segment normal."""
    return closest_point(z, interface).distance


@dataclass(frozen=True)
class FacetQuadrature:
    """Gauss quadrature points on tagged boundary facets.

    ``weights`` carry the facet length measure, so they sum to the facet
    length on each facet.  ``t`` is the parameter of each point along its
    facet, ``h`` the facet length, ``normals`` the outward facet normal and
    ``facet_nodes`` the two node ids of the facet.
    """

    points: np.ndarray      # (nq, 2)
    weights: np.ndarray     # (nq,)
    facet_ids: np.ndarray   # (nq,)
    h: np.ndarray           # (nq,)
    t: np.ndarray           # (nq,)
    normals: np.ndarray     # (nq, 2)
    element_ids: np.ndarray  # (nq,)
    facet_nodes: np.ndarray  # (nq, 2)

    def tuples(self):
        """Iterate (point, weight, facet_id, facet_length) records."""
        for i in range(self.points.shape[0]):
            yield (self.points[i], float(self.weights[i]),
                   int(self.facet_ids[i]), float(self.h[i]))

    def __len__(self):
        return self.points.shape[0]


def contact_quadrature(mesh: BodyMesh, tag: str = "contact",
                       n_gauss: int = 2) -> FacetQuadrature:
    """Gauss-Legendre quadrature on every facet carrying ``tag``.

    Exact for polynomials up to degree 2*n_gauss - 1 in arclength per facet.
    An empty facet set yields an empty quadrature.
    """
    if n_gauss not in _GAUSS_01:
        raise ValueError("n_gauss must be in {1, 2, 3}")
    gt, gw = _GAUSS_01[n_gauss]
    fids = mesh.facet_ids(tag)
    points, weights, facet_ids, hs, ts, normals, eids, fnodes = \
        [], [], [], [], [], [], [], []
    for f in fids:
        a, b = mesh.boundary_facets[f]
        xa, xb = mesh.nodes[a], mesh.nodes[b]
        h = float(np.linalg.norm(xb - xa))
        n = mesh.facet_normal(int(f))
        e = int(mesh.facet_elements[f])
        for t, w in zip(gt, gw):
            points.append((1.0 - t) * xa + t * xb)
            weights.append(w * h)
            facet_ids.append(int(f))
            hs.append(h)
            ts.append(t)
            normals.append(n)
            eids.append(e)
            fnodes.append((int(a), int(b)))
    if not points:
        empty2 = np.zeros((0, 2))
        empty1 = np.zeros((0,))
        empty_i = np.zeros((0,), dtype=np.int64)
        return FacetQuadrature(empty2, empty1, empty_i, empty1, empty1, empty2,
                               empty_i, np.zeros((0, 2), dtype=np.int64))
    return FacetQuadrature(np.array(points), np.array(weights),
                           np.array(facet_ids, dtype=np.int64), np.array(hs),
                           np.array(ts), np.array(normals),
                           np.array(eids, dtype=np.int64),
                           np.array(fnodes, dtype=np.int64))


# -- point location / interpolation (for reference-solution transfers) -------

class ElementLocator:
    """Bucket-grid point locator with P1/Q1 displacement interpolation."""

    def __init__(self, mesh: BodyMesh, cells_per_axis: int | None = None):
        self.mesh = mesh
        lo = mesh.nodes.min(axis=0)
        hi = mesh.nodes.max(axis=0)
        span = np.maximum(hi - lo, 1e-12)
        if cells_per_axis is None:
            cells_per_axis = max(4, int(np.sqrt(mesh.elements.shape[0])))
        self.lo, self.span, self.ncell = lo, span, cells_per_axis
        self.buckets: dict[tuple[int, int], list[int]] = {}
        for e, conn in enumerate(mesh.elements):
            coords = mesh.nodes[conn]
            i0, j0 = self._cell(coords.min(axis=0))
            i1, j1 = self._cell(coords.max(axis=0))
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    self.buckets.setdefault((i, j), []).append(e)
        self.centroids = mesh.nodes[mesh.elements].mean(axis=1)

    def _cell(self, p):
        ij = np.floor((p - self.lo) / self.span * self.ncell).astype(int)
        return (int(np.clip(ij[0], 0, self.ncell - 1)),
                int(np.clip(ij[1], 0, self.ncell - 1)))

    def locate(self, p: np.ndarray, tol: float = 1e-9) -> int:
        """Element containing p, or the nearest-centroid candidate if outside."""
        cand = self.buckets.get(self._cell(p), [])
        for e in cand:
            if self._inside(e, p, tol):
                return e
        # fall back to nearest centroid (points marginally outside the mesh,
        # e.g. on a curved boundary refined differently)
        d2 = np.einsum("ij,ij->i", self.centroids - p, self.centroids - p)
        return int(np.argmin(d2))

    def _inside(self, e: int, p: np.ndarray, tol: float) -> bool:
        coords = self.mesh.element_coords(e)
        if coords.shape[0] == 3:
            lam = _tri_barycentric(coords, p)
            return bool(np.all(lam >= -tol))
        xi = _quad_ref_coords(coords, p)
        return bool(np.all(np.abs(xi) <= 1.0 + tol))

    def interpolate(self, u: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Evaluate a nodal displacement field (n_nodes, 2) at given points."""
        out = np.empty((points.shape[0], 2))
        for k, p in enumerate(points):
            e = self.locate(p)
            conn = self.mesh.elements[e]
            coords = self.mesh.nodes[conn]
            if coords.shape[0] == 3:
                lam = _tri_barycentric(coords, p)
                out[k] = lam @ u[conn]
            else:
                xi, eta = _quad_ref_coords(coords, p)
                shape = 0.25 * np.array([(1 - xi) * (1 - eta), (1 + xi) * (1 - eta),
                                         (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)])
                out[k] = shape @ u[conn]
        return out


def _tri_barycentric(coords: np.ndarray, p: np.ndarray) -> np.ndarray:
    T = np.column_stack([coords[1] - coords[0], coords[2] - coords[0]])
    lam12 = np.linalg.solve(T, p - coords[0])
    return np.array([1.0 - lam12.sum(), lam12[0], lam12[1]])


def _quad_ref_coords(coords: np.ndarray, p: np.ndarray,
                     maxiter: int = 30) -> np.ndarray:
    """Invert the bilinear map of a Q1 quad by Newton iteration."""
    xi = np.zeros(2)
    for _ in range(maxiter):
        s, t = xi
        shape = 0.25 * np.array([(1 - s) * (1 - t), (1 + s) * (1 - t),
                                 (1 + s) * (1 + t), (1 - s) * (1 + t)])
        dxi = 0.25 * np.array([-(1 - t), (1 - t), (1 + t), -(1 + t)])
        deta = 0.25 * np.array([-(1 - s), -(1 + s), (1 + s), (1 - s)])
        r = shape @ coords - p
        if np.dot(r, r) < 1e-28:
            break
        J = np.column_stack([dxi @ coords, deta @ coords])
        xi = xi - np.linalg.solve(J, r)
    return xi


# -- plain-text file formats -------------------------------------------------

def read_body_mesh(path) -> BodyMesh:
    """Read the plain-text mesh format.

    Header ``nodes N elements M type {tri|quad}``; N ``x y`` lines; M index
    lines; then ``facets K`` and K ``n0 n1 tag`` lines.
    """
    with open(path) as fh:
        tokens = fh.read().split()
    pos = 0

    def take(n):
        nonlocal pos
        out = tokens[pos:pos + n]
        if len(out) != n:
            raise MeshError(f"{path}: truncated mesh file")
        pos += n
        return out

    head = take(6)
    if head[0] != "nodes" or head[2] != "elements" or head[4] != "type":
        raise MeshError(f"{path}: bad header {' '.join(head)!r}")
    n_nodes, n_elems = int(head[1]), int(head[3])
    etype = head[5]
    if etype not in ("tri", "quad"):
        raise MeshError(f"{path}: unknown element type {etype!r}")
    npe = 3 if etype == "tri" else 4
    nodes = np.array(take(2 * n_nodes), dtype=float).reshape(n_nodes, 2)
    elements = np.array(take(npe * n_elems), dtype=np.int64).reshape(n_elems, npe)
    fhead = take(2)
    if fhead[0] != "facets":
        raise MeshError(f"{path}: expected 'facets K', got {fhead[0]!r}")
    n_facets = int(fhead[1])
    facets = np.empty((n_facets, 2), dtype=np.int64)
    tags = []
    for i in range(n_facets):
        a, b, tag = take(3)
        facets[i] = (int(a), int(b))
        tags.append(tag)
    return BodyMesh(nodes, elements, facets, tags)


def write_body_mesh(mesh: BodyMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.n_nodes} elements {mesh.elements.shape[0]} "
                 f"type {mesh.element_type}\n")
        for x, y in mesh.nodes:
            fh.write(f"{x!r} {y!r}\n")
        for conn in mesh.elements:
            fh.write(" ".join(str(int(c)) for c in conn) + "\n")
        fh.write(f"facets {mesh.boundary_facets.shape[0]}\n")
        for (a, b), tag in zip(mesh.boundary_facets, mesh.facet_tags):
            fh.write(f"{int(a)} {int(b)} {tag}\n")


def read_interface(path) -> InterfaceMesh:
    """Read ``interface V`` + V ``x y`` lines + ``orient {left|right}``."""
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2 or tokens[0] != "interface":
        raise MeshError(f"{path}: expected 'interface V' header")
    n = int(tokens[1])
    need = 2 + 2 * n + 2
    if len(tokens) < need:
        raise MeshError(f"{path}: truncated interface file")
    verts = np.array(tokens[2:2 + 2 * n], dtype=float).reshape(n, 2)
    if tokens[2 + 2 * n] != "orient":
        raise MeshError(f"{path}: expected 'orient' line")
    orient = tokens[3 + 2 * n]
    return InterfaceMesh(verts, orient=orient)


def write_interface(interface: InterfaceMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"interface {interface.n_vertices}\n")
        for x, y in interface.vertices:
            fh.write(f"{x!r} {y!r}\n")
        fh.write(f"orient {interface.orient}\n")
