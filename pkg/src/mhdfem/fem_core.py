"""Reference-element bases, Piola maps and tetrahedral quadrature.

Element kinds:

* ``P1``    scalar hats (4 vertex DOFs),
* ``P2``    scalar quadratics (4 vertex + 6 edge-midpoint DOFs),
* ``P2vec`` the vector version, 30 DOFs ordered (node, component),
* ``ND0``   lowest Nedelec edge functions  W_ab = la*grad(lb) - lb*grad(la),
* ``RT0``   lowest Raviart-Thomas face functions
            psi_abc = 2*(la gb x gc + lb gc x ga + lc ga x gb),
* ``DG0``   cellwise constants.

Bases are expressed through barycentric coordinates and their (per-tet
constant) gradients, so the same formulas evaluate on the reference tet and
on any straight physical tet; DOF/basis duality then holds without mapping.
Local DOF order matches mesh.LOCAL_EDGES / mesh.LOCAL_FACES.
"""

from __future__ import annotations

import numpy as np

from .mesh import LOCAL_EDGES, LOCAL_FACES

KINDS = ("P1", "P2", "P2vec", "ND0", "RT0", "DG0")

REF_VERTICES = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                         [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


class ElementError(ValueError):
    """Unknown element kind or invalid geometry."""


def barycentric_gradients(verts):
    """Gradients of the four barycentric coordinates of one or many tets.

    verts: (..., 4, 3).  Returns (grads (..., 4, 3), signed_det (...,)).
    """
    verts = np.asarray(verts, dtype=float)
    a = verts[..., 1:, :] - verts[..., :1, :]        # rows v_i - v_0
    det = np.linalg.det(a)
    if np.any(det == 0.0):
        raise ElementError("degenerate tet (zero Jacobian determinant)")
    inv = np.linalg.inv(a)                           # columns -> grads
    g123 = np.swapaxes(inv, -1, -2)                  # (..., 3, 3)
    g0 = -g123.sum(axis=-2, keepdims=True)
    return np.concatenate([g0, g123], axis=-2), det


# ---------------------------------------------------------------------------
# basis evaluation
# ---------------------------------------------------------------------------

def _p2_values(lam):
    """P2 scalar values, shape (10, nq); node order: 4 vertices, 6 edges."""
    v = lam.T * (2.0 * lam.T - 1.0)                      # (4, nq)
    e = 4.0 * lam[:, LOCAL_EDGES[:, 0]] * lam[:, LOCAL_EDGES[:, 1]]
    return np.concatenate([v, e.T], axis=0)


def _p2_gradients(lam, g):
    """P2 scalar gradients, shape (..., 10, nq, 3) for grads g (..., 4, 3)."""
    nq = lam.shape[0]
    gv = (4.0 * lam.T - 1.0)[:, :, None] * g[..., :, None, :]
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    ge = 4.0 * (lam[:, a].T[:, :, None] * g[..., b, None, :]
                + lam[:, b].T[:, :, None] * g[..., a, None, :])
    return np.concatenate([np.broadcast_to(gv, g.shape[:-2] + (4, nq, 3)),
                           np.broadcast_to(ge, g.shape[:-2] + (6, nq, 3))],
                          axis=-3)


def _nd0_values(lam, g):
    """Whitney 1-forms, shape (..., 6, nq, 3)."""
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    return (lam[:, a].T[:, :, None] * g[..., b, None, :]
            - lam[:, b].T[:, :, None] * g[..., a, None, :])


def _nd0_curls(g):
    """Constant curls 2 ga x gb, shape (..., 6, 3)."""
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    return 2.0 * np.cross(g[..., a, :], g[..., b, :])


def _rt0_values(lam, g):
    """Whitney 2-forms, shape (..., 4, nq, 3)."""
    a, b, c = LOCAL_FACES[:, 0], LOCAL_FACES[:, 1], LOCAL_FACES[:, 2]
    gbc = np.cross(g[..., b, :], g[..., c, :])
    gca = np.cross(g[..., c, :], g[..., a, :])
    gab = np.cross(g[..., a, :], g[..., b, :])
    return 2.0 * (lam[:, a].T[:, :, None] * gbc[..., :, None, :]
                  + lam[:, b].T[:, :, None] * gca[..., :, None, :]
                  + lam[:, c].T[:, :, None] * gab[..., :, None, :])


def _rt0_divs(g):
    """Constant divergences 6 ga.(gb x gc), shape (..., 4)."""
    a, b, c = LOCAL_FACES[:, 0], LOCAL_FACES[:, 1], LOCAL_FACES[:, 2]
    gbc = np.cross(g[..., b, :], g[..., c, :])
    return 6.0 * np.einsum("...fi,...fi->...f", g[..., a, :], gbc)


def eval_basis(kind, ref_points, verts=REF_VERTICES):
    """Evaluate a basis (and its natural derivative) on one tet.

    ref_points are barycentric, shape (nq, 4).  Returns a dict with
    ``values`` and, depending on kind, ``gradients`` (P1/P2/P2vec),
    ``curls`` (ND0) or ``divs`` (RT0).  Value shapes: scalar kinds
    (nbasis, nq); vector kinds (nbasis, nq, 3); constant derivatives drop
    the nq axis.
    """
    lam = np.asarray(ref_points, dtype=float)
    if lam.ndim != 2 or lam.shape[1] != 4:
        raise ElementError("ref_points must be (nq, 4) barycentric")
    if np.any(lam < -1e-12) or np.any(np.abs(lam.sum(axis=1) - 1.0) > 1e-12):
        raise ElementError("points must lie inside the reference tet")
    g, _ = barycentric_gradients(verts)

    if kind == "P1":
        return {"values": lam.T.copy(),
                "gradients": np.broadcast_to(g[:, None, :],
                                             (4, lam.shape[0], 3)).copy()}
    if kind == "P2":
        return {"values": _p2_values(lam), "gradients": _p2_gradients(lam, g)}
    if kind == "P2vec":
        sv = _p2_values(lam)
        sg = _p2_gradients(lam, g)
        nq = lam.shape[0]
        vals = np.zeros((30, nq, 3))
        grads = np.zeros((30, nq, 3, 3))
        for c in range(3):
            vals[c::3, :, c] = sv
            grads[c::3, :, c, :] = sg
        return {"values": vals, "gradients": grads}
    if kind == "ND0":
        return {"values": _nd0_values(lam, g), "curls": _nd0_curls(g)}
    if kind == "RT0":
        return {"values": _rt0_values(lam, g), "divs": _rt0_divs(g)}
    if kind == "DG0":
        return {"values": np.ones((1, lam.shape[0]))}
    raise ElementError(f"unknown element kind {kind!r}")


# ---------------------------------------------------------------------------
# Piola push-forward (reference -> physical), kept separate from the
# physical-coordinate evaluation path above; used for map-level checks
# ---------------------------------------------------------------------------

def push_forward(kind, jacobian, reference):
    """Map reference values / derivatives through x = J xhat + b.

    Scalar kinds map values unchanged and gradients by J^{-T}; ND0 is
    covariant (J^{-T} on values, J/det on curls); RT0 is contravariant
    (J/det on values, 1/det on divs).  Tangential edge DOFs and normal face
    fluxes are invariant under these maps.
    """
    j = np.asarray(jacobian, dtype=float)
    det = np.linalg.det(j)
    if det == 0.0:
        raise ElementError("degenerate affine map")
    jinv_t = np.linalg.inv(j).T
    out = {}
    if kind in ("P1", "P2"):
        out["values"] = reference["values"]
        out["gradients"] = reference["gradients"] @ jinv_t.T
    elif kind == "P2vec":
        out["values"] = reference["values"]
        out["gradients"] = np.einsum("nqcd,ed->nqce",
                                     reference["gradients"], jinv_t)
    elif kind == "ND0":
        out["values"] = reference["values"] @ jinv_t.T
        out["curls"] = reference["curls"] @ (j.T / det)
    elif kind == "RT0":
        out["values"] = reference["values"] @ (j.T / det)
        out["divs"] = reference["divs"] / det
    elif kind == "DG0":
        out["values"] = reference["values"]
    else:
        raise ElementError(f"unknown element kind {kind!r}")
    return out


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

class QuadratureRule:
    """Barycentric points and weights on the reference tet.

    Weights sum to the reference volume 1/6 and the rule integrates
    polynomials up to ``degree`` exactly.
    """

    def __init__(self, points, weights, degree):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.degree = int(degree)

    @property
    def num_points(self):
        return len(self.weights)

    def physical_points(self, verts):
        """Map to physical coordinates: verts (..., 4, 3) -> (..., nq, 3)."""
        return np.einsum("qi,...id->...qd", self.points, verts)


def _orbit4(a):
    """S4 orbit of barycentric (a,a,a,1-3a)."""
    pts = np.full((4, 4), a)
    np.fill_diagonal(pts, 1.0 - 3.0 * a)
    return pts


def _orbit6(a):
    """S4 orbit of (a,a,1/2-a,1/2-a): the six permutations of the pair."""
    b = 0.5 - a
    base = [a, a, b, b]
    idx = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    pts = []
    for i, jj in idx:
        p = [b, b, b, b]
        p[i] = a
        p[jj] = a
        pts.append(p)
    return np.array(pts)


def _orbit12(a, b):
    """Orbit of (a,a,b,c) with c = 1-2a-b: 12 distinct permutations."""
    c = 1.0 - 2.0 * a - b
    pts = []
    for i in range(4):
        for jj in range(4):
            if jj == i:
                continue
            p = [a, a, a, a]
            p[i] = b
            p[jj] = c
            pts.append(p)
    return np.array(pts)


def _keast_rules():
    barycenter = np.full((1, 4), 0.25)
    rules = {}
    rules[1] = (barycenter, np.array([1.0]))

    a2 = 0.1381966011250105  # (5 - sqrt(5)) / 20
    rules[2] = (_orbit4(a2), np.full(4, 0.25))

    rules[3] = (np.vstack([barycenter, _orbit4(1.0 / 6.0)]),
                np.concatenate([[-0.8], np.full(4, 0.45)]))

    # Keast 14-point rule, degree 5 (serves degree-4 requests as well)
    p5 = np.vstack([_orbit4(0.3108859192633005),
                    _orbit4(0.0927352503108912),
                    _orbit6(0.0455037041256497)])
    w5 = np.concatenate([np.full(4, 0.1126879257180162),
                         np.full(4, 0.0734930431163619),
                         np.full(6, 0.0425460207770812)])
    rules[4] = (p5, w5)
    rules[5] = (p5, w5)

    # Keast 24-point rule, degree 6
    p6 = np.vstack([_orbit4(0.2146028712591517),
                    _orbit4(0.0406739585346113),
                    _orbit4(0.3223378901422757),
                    _orbit12(0.0636610018750175, 0.2696723314583159)])
    w6 = np.concatenate([np.full(4, 0.0399227502581679),
                         np.full(4, 0.0100772110553207),
                         np.full(4, 0.0553571815436544),
                         np.full(12, 27.0 / 560.0)])
    rules[6] = (p6, w6)
    return rules


_RULES = _keast_rules()


def quadrature(degree: int) -> QuadratureRule:
    """Symmetric tet rule exact at least to the requested degree (1..6)."""
    if degree not in _RULES:
        raise ElementError(f"unsupported quadrature degree {degree}")
    pts, w = _RULES[degree]
    return QuadratureRule(pts, w / 6.0, degree)


# Gauss-Legendre on [0,1], 3 points: exact for degree 5 along edges
GAUSS3_1D = (np.array([0.5 - np.sqrt(15.0) / 10.0, 0.5,
                       0.5 + np.sqrt(15.0) / 10.0]),
             np.array([5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0]))

# 6-point symmetric triangle rule, degree 4, weights sum to 1 (unit measure)
_TA = 0.445948490915965
_TB = 0.091576213509771
TRI6 = (np.array([[_TA, _TA, 1 - 2 * _TA],
                  [_TA, 1 - 2 * _TA, _TA],
                  [1 - 2 * _TA, _TA, _TA],
                  [_TB, _TB, 1 - 2 * _TB],
                  [_TB, 1 - 2 * _TB, _TB],
                  [1 - 2 * _TB, _TB, _TB]]),
        np.concatenate([np.full(3, 0.223381589678011),
                        np.full(3, 0.109951743655322)]))


def edge_tangential_dof(field, endpoints):
    """Integrated tangential moment of a vector field over segments.

    endpoints: (..., 2, 3).  Exact for polynomial integrands of degree <= 5
    along the edge (3-point Gauss).
    """
    endpoints = np.asarray(endpoints, dtype=float)
    s, w = GAUSS3_1D
    pts = (endpoints[..., 0, :][..., None, :] * (1.0 - s)[:, None]
           + endpoints[..., 1, :][..., None, :] * s[:, None])
    tang = endpoints[..., 1, :] - endpoints[..., 0, :]
    shape = pts.shape
    vals = np.asarray(field(pts.reshape(-1, 3))).reshape(shape)
    return np.einsum("q,...qd,...d->...", w, vals, tang)


def face_flux_dof(field, corners):
    """Integrated normal flux over triangles with sorted-vertex normal.

    corners: (..., 3, 3); the normal direction is (v1-v0) x (v2-v0).  Exact
    for polynomial integrands of degree <= 4 on the face.
    """
    corners = np.asarray(corners, dtype=float)
    lam, w = TRI6
    pts = np.einsum("qi,...id->...qd", lam, corners)
    nrm2 = np.cross(corners[..., 1, :] - corners[..., 0, :],
                    corners[..., 2, :] - corners[..., 0, :])
    shape = pts.shape
    vals = np.asarray(field(pts.reshape(-1, 3))).reshape(shape)
    # rule weights sum to 1; the parametrization Jacobian contributes 1/2
    return 0.5 * np.einsum("q,...qd,...d->...", w, vals, nrm2)
