"""Discrete de Rham sequence on a tetrahedral mesh.

The four lowest-order spaces are numbered by mesh entities: vertices
(scalar hats), edges (Nedelec, DOF = integrated tangential component),
faces (Raviart-Thomas, DOF = integrated normal flux) and cells (constants).
With those DOF choices the coefficient actions of grad/curl/div are the
signed incidence matrices G, C, D with entries in {-1, 0, +1}, and the
complex property C@G = 0, D@C = 0 holds in exact integer arithmetic.

Sign conventions (derived from sorted-ascending vertex order):
  G row for edge (a, b), a < b:        -1 at a, +1 at b
  C row for face (i, j, k), i < j < k: +1 at (j,k), -1 at (i,k), +1 at (i,j)
  D row for tet (i, j, k, l):          +1 at (j,k,l), -1 at (i,k,l),
                                       +1 at (i,j,l), -1 at (i,j,k)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem_core
from .mesh import TetMesh


@dataclass(frozen=True, eq=False)
class DeRhamComplex:
    """Incidence operators and boundary masks for one mesh."""

    mesh: TetMesh
    G: sp.csr_matrix            # (nE, nV) gradient
    C: sp.csr_matrix            # (nF, nE) curl
    D: sp.csr_matrix            # (nT, nF) divergence
    boundary_vertex_mask: np.ndarray
    boundary_edge_mask: np.ndarray
    boundary_face_mask: np.ndarray

    @property
    def counts(self):
        m = self.mesh
        return (m.num_vertices, m.num_edges, m.num_faces, m.num_tets)

    @property
    def signed_volumes(self):
        return self.mesh.tet_orientations * self.mesh.tet_volumes


def _encode(table, base):
    """Collision-free integer key for small sorted index tuples."""
    key = np.zeros(len(table), dtype=np.int64)
    for d in range(table.shape[1]):
        key = key * base + table[:, d]
    return key


def _incidence(rows_entities, cols_entities, sub_pattern, signs):
    """Signed incidence matrix from entity tables.

    ``sub_pattern`` lists, per row entity, the vertex index subsets that
    form its facets (in the same order as ``signs``); column indices are
    found by lookup in the sorted ``cols_entities`` table.
    """
    n_rows = len(rows_entities)
    facets = rows_entities[:, sub_pattern]              # (n, k, m)
    flat = facets.reshape(-1, facets.shape[-1])

    base = int(cols_entities.max()) + 2
    table_key = _encode(cols_entities, base)            # sorted tables sort
    cols = np.searchsorted(table_key, _encode(flat, base))

    k = facets.shape[1]
    rows = np.repeat(np.arange(n_rows), k)
    data = np.tile(np.asarray(signs, dtype=np.int64), n_rows)
    mat = sp.coo_matrix((data, (rows, cols)),
                        shape=(n_rows, len(cols_entities)), dtype=np.int64)
    return mat.tocsr()


def build_complex(mesh: TetMesh) -> DeRhamComplex:
    """Assemble G, C, D and the essential-boundary DOF masks."""
    verts_as_cols = np.arange(mesh.num_vertices)[:, None]
    G = _incidence(mesh.edges, verts_as_cols, np.array([[0], [1]]), [-1, +1])

    face_edges = np.array([[1, 2], [0, 2], [0, 1]])      # (j,k),(i,k),(i,j)
    C = _incidence(mesh.faces, mesh.edges, face_edges, [+1, -1, +1])

    tet_faces = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
    D = _incidence(mesh.tets, mesh.faces, tet_faces, [+1, -1, +1, -1])

    return DeRhamComplex(
        mesh=mesh, G=G, C=C, D=D,
        boundary_vertex_mask=mesh.boundary_mask("vertices"),
        boundary_edge_mask=mesh.boundary_mask("edges"),
        boundary_face_mask=mesh.boundary_mask("faces"),
    )


def discrete_div(cx: DeRhamComplex, b: np.ndarray) -> np.ndarray:
    """Cellwise values of div(B_h) for RT0 coefficients b.

    Exact: the face-flux DOFs make (D @ b) the integral of div(B_h) over
    each tet taken with the sorted-order orientation, so dividing by the
    signed volume recovers the pointwise constant.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (cx.mesh.num_faces,):
        raise ValueError(
            f"expected {cx.mesh.num_faces} face coefficients, got {b.shape}")
    return (cx.D @ b) / cx.signed_volumes


def interpolate(cx: DeRhamComplex, mesh: TetMesh, form_degree: int, field):
    """Canonical interpolation onto one of the four discrete spaces.

    form_degree 0: vertex values; 1: edge tangential moments; 2: face
    normal fluxes; 3: cell averages.  ``field`` is a vectorized callable,
    (n, 3) points -> (n,) scalars for degrees 0 and 3, (n, 3) vectors for
    degrees 1 and 2.  Edge/face moments use quadrature exact to degree >= 4,
    so the commuting-diagram identities hold sharply for polynomial fields
    of degree <= 2.
    """
    if form_degree == 0:
        return np.asarray(field(mesh.vertices), dtype=float)
    if form_degree == 1:
        return fem_core.edge_tangential_dof(field, mesh.vertices[mesh.edges])
    if form_degree == 2:
        return fem_core.face_flux_dof(field, mesh.vertices[mesh.faces])
    if form_degree == 3:
        rule = fem_core.quadrature(4)
        pts = rule.physical_points(mesh.vertices[mesh.tets])
        vals = np.asarray(field(pts.reshape(-1, 3))).reshape(pts.shape[:2])
        # weights sum to 1/6 = reference volume; normalize to an average
        return vals @ (rule.weights * 6.0)
    raise ValueError(f"unsupported form degree {form_degree}")
