"""Plane-strain linear elasticity on P1 triangles and Q1 quadrilaterals.

Provides the material law, element stiffness matrices, global assembly of the
stiffness and load vectors, and evaluation of the scalar boundary normal
stress sigma_n = n . sigma(u) . n on boundary facets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .meshing import BodyMesh, tri_area

_QUAD_REF = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
_G2 = 1.0 / np.sqrt(3.0)
_QUAD_GAUSS = [(-_G2, -_G2), (_G2, -_G2), (_G2, _G2), (-_G2, _G2)]


class InvalidMaterialError(ValueError):
    """Material parameters outside the admissible plane-strain range."""


class AssemblyError(RuntimeError):
    """Degenerate element encountered during assembly."""


def lame_plane_strain(E: float, nu: float) -> tuple[float, float]:
    """Plane-strain Lame parameters (lambda, mu) from Young's modulus and
    Poisson ratio: lambda = nu E / ((1+nu)(1-2nu)), mu = E / (2(1+nu))."""
    if E <= 0.0:
        raise InvalidMaterialError(f"E must be positive, got {E}")
    if not 0.0 <= nu < 0.5:
        raise InvalidMaterialError(f"nu must be in [0, 0.5), got {nu}")
    lam = nu * E / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


@dataclass(frozen=True)
class Material:
    """Isotropic plane-strain material."""

    E: float
    nu: float
    lam: float
    mu: float

    @classmethod
    def plane_strain(cls, E: float, nu: float) -> "Material":
        lam, mu = lame_plane_strain(E, nu)
        return cls(E=E, nu=nu, lam=lam, mu=mu)

    def dmatrix(self) -> np.ndarray:
        """Voigt constitutive matrix for (eps_xx, eps_yy, 2 eps_xy)."""
        lam, mu = self.lam, self.mu
        return np.array([[lam + 2 * mu, lam, 0.0],
                         [lam, lam + 2 * mu, 0.0],
                         [0.0, 0.0, mu]])


class SparseSymBuilder:
    """COO accumulator for symmetric global matrices.

    Accumulation is commutative/associative, so element contributions may be
    added in any order.  ``build`` returns a CSR matrix with duplicates summed.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []

    def add_block(self, dofs: np.ndarray, block: np.ndarray) -> None:
        dofs = np.asarray(dofs, dtype=np.int64)
        r = np.repeat(dofs, dofs.size)
        c = np.tile(dofs, dofs.size)
        self._rows.append(r)
        self._cols.append(c)
        self._vals.append(np.asarray(block, dtype=float).ravel())

    def build(self) -> sp.csr_matrix:
        if not self._rows:
            return sp.csr_matrix((self.dim, self.dim))
        mat = sp.coo_matrix(
            (np.concatenate(self._vals),
             (np.concatenate(self._rows), np.concatenate(self._cols))),
            shape=(self.dim, self.dim))
        return mat.tocsr()


def symmetry_defect(mat: sp.spmatrix) -> float:
    """Relative infinity-norm asymmetry of a sparse matrix."""
    diff = abs(mat - mat.T)
    scale = abs(mat).max() if mat.nnz else 0.0
    if scale == 0.0:
        return 0.0
    return diff.max() / scale


def tri_strain_matrix(coords: np.ndarray) -> tuple[np.ndarray, float]:
    """Constant strain-displacement matrix B (3x6) and area of a P1 triangle."""
    area = tri_area(coords)
    if area <= 0.0:
        raise AssemblyError("degenerate triangle (non-positive area)")
    x, y = coords[:, 0], coords[:, 1]
    b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]])
    c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]])
    B = np.zeros((3, 6))
    B[0, 0::2] = b
    B[1, 1::2] = c
    B[2, 0::2] = c
    B[2, 1::2] = b
    return B / (2.0 * area), area


def quad_shape(xi: float, eta: float) -> np.ndarray:
    return 0.25 * np.array([(1 - xi) * (1 - eta), (1 + xi) * (1 - eta),
                            (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)])


def quad_strain_matrix(coords: np.ndarray, xi: float,
                       eta: float) -> tuple[np.ndarray, float]:
    """Strain-displacement matrix B (3x8) and Jacobian determinant of a Q1
    quad at reference coordinates (xi, eta)."""
    dN = 0.25 * np.array([[-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)],
                          [-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)]])
    J = dN @ coords
    detJ = float(np.linalg.det(J))
    if detJ <= 0.0:
        raise AssemblyError("degenerate quad (non-positive Jacobian)")
    grad = np.linalg.solve(J, dN)   # physical gradients, (2, 4)
    B = np.zeros((3, 8))
    B[0, 0::2] = grad[0]
    B[1, 1::2] = grad[1]
    B[2, 0::2] = grad[1]
    B[2, 1::2] = grad[0]
    return B, detJ


def element_stiffness(coords: np.ndarray, mat: Material) -> np.ndarray:
    """Element stiffness matrix: 6x6 for a P1 triangle (exact), 8x8 for a Q1
    quad (2x2 Gauss)."""
    D = mat.dmatrix()
    if coords.shape[0] == 3:
        B, area = tri_strain_matrix(coords)
        return area * (B.T @ D @ B)
    K = np.zeros((8, 8))
    for xi, eta in _QUAD_GAUSS:
        B, detJ = quad_strain_matrix(coords, xi, eta)
        K += detJ * (B.T @ D @ B)
    return K


def element_dofs(conn: np.ndarray) -> np.ndarray:
    """Interleaved (x, y) global dof indices of an element's nodes."""
    dofs = np.empty(2 * len(conn), dtype=np.int64)
    dofs[0::2] = 2 * np.asarray(conn)
    dofs[1::2] = 2 * np.asarray(conn) + 1
    return dofs


def assemble_elasticity(mesh: BodyMesh, mat: Material) -> sp.csr_matrix:
    """Global stiffness matrix (2 n_nodes square, symmetric PSD)."""
    builder = SparseSymBuilder(2 * mesh.n_nodes)
    for e, conn in enumerate(mesh.elements):
        try:
            K = element_stiffness(mesh.nodes[conn], mat)
        except AssemblyError as exc:
            raise AssemblyError(f"element {e}: {exc}") from exc
        builder.add_block(element_dofs(conn), K)
    return builder.build()


def assemble_body_force(mesh: BodyMesh, f) -> np.ndarray:
    """Consistent load vector for a constant body force f = (fx, fy)."""
    f = np.asarray(f, dtype=float)
    load = np.zeros(2 * mesh.n_nodes)
    for conn in mesh.elements:
        coords = mesh.nodes[conn]
        if len(conn) == 3:
            area = tri_area(coords)
            for a in conn:
                load[2 * a:2 * a + 2] += f * (area / 3.0)
        else:
            for xi, eta in _QUAD_GAUSS:
                shape = quad_shape(xi, eta)
                _, detJ = quad_strain_matrix(coords, xi, eta)
                for a, N in zip(conn, shape):
                    load[2 * a:2 * a + 2] += f * (N * detJ)
    return load


def assemble_traction(mesh: BodyMesh, facet_ids, traction) -> np.ndarray:
    """Load vector for a constant traction density on the given facets."""
    traction = np.asarray(traction, dtype=float)
    load = np.zeros(2 * mesh.n_nodes)
    for f in facet_ids:
        a, b = mesh.boundary_facets[f]
        half = 0.5 * mesh.facet_length(int(f)) * traction
        load[2 * a:2 * a + 2] += half
        load[2 * b:2 * b + 2] += half
    return load


def _facet_ref_point(mesh: BodyMesh, facet_id: int, t: float) -> np.ndarray:
    """Reference coordinates of a facet point inside the adjacent Q1 quad."""
    e = int(mesh.facet_elements[facet_id])
    conn = list(mesh.elements[e])
    a, b = mesh.boundary_facets[facet_id]
    la, lb = conn.index(int(a)), conn.index(int(b))
    # the bilinear map is affine along reference edges
    return (1.0 - t) * _QUAD_REF[la] + t * _QUAD_REF[lb]


def normal_stress_row(mesh: BodyMesh, mat: Material, facet_id: int,
                      t: float) -> tuple[np.ndarray, np.ndarray]:
    """Row vector r over the adjacent element's dofs with sigma_n(u) = r . u_e.

    The stress of the one adjacent element is evaluated at the facet point
    (parameter t in [0, 1]) and contracted twice with the outward facet
    normal.  Returns (global_dofs, row).
    """
    e = int(mesh.facet_elements[facet_id])
    conn = mesh.elements[e]
    coords = mesh.nodes[conn]
    n = mesh.facet_normal(facet_id)
    if coords.shape[0] == 3:
        B, _ = tri_strain_matrix(coords)
    else:
        xi, eta = _facet_ref_point(mesh, facet_id, t)
        B, _ = quad_strain_matrix(coords, xi, eta)
    g = np.array([n[0] ** 2, n[1] ** 2, 2.0 * n[0] * n[1]])
    row = g @ (mat.dmatrix() @ B)
    return element_dofs(conn), row


def sigma_n(mesh: BodyMesh, mat: Material, u: np.ndarray, facet_id: int,
            t: float = 0.5) -> float:
    """Scalar normal stress n . sigma(u) . n at a boundary facet point."""
    dofs, row = normal_stress_row(mesh, mat, facet_id, t)
    return float(row @ np.asarray(u, dtype=float)[dofs])
