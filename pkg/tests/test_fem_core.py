from math import factorial

import numpy as np
import pytest

from mhdfem import eval_basis, push_forward, quadrature
from mhdfem.fem_core import (ElementError, GAUSS3_1D, REF_VERTICES,
                             barycentric_gradients, edge_tangential_dof,
                             face_flux_dof)
from mhdfem.mesh import LOCAL_EDGES, LOCAL_FACES


def random_tet(rng):
    while True:
        verts = rng.uniform(-1, 1, size=(4, 3))
        a = verts[1:] - verts[:1]
        if abs(np.linalg.det(a)) > 0.1:
            return verts


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def test_degree1_is_barycenter():
    r = quadrature(1)
    assert r.num_points == 1
    assert np.allclose(r.points, 0.25)
    assert np.allclose(r.weights, [1.0 / 6.0])


def exact_monomial(a, b, c):
    # int over the reference tet of x^a y^b z^c
    return factorial(a) * factorial(b) * factorial(c) \
        / factorial(a + b + c + 3)


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6])
def test_monomial_exactness(degree):
    r = quadrature(degree)
    xyz = r.points[:, 1:]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                got = float(r.weights @ (xyz[:, 0] ** a * xyz[:, 1] ** b
                                         * xyz[:, 2] ** c))
                want = exact_monomial(a, b, c)
                assert abs(got - want) <= 1e-13 * max(abs(want), 1.0)


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6])
def test_weights_sum_to_reference_volume(degree):
    assert abs(quadrature(degree).weights.sum() - 1.0 / 6.0) < 1e-15


@pytest.mark.parametrize("degree", [0, 7])
def test_unsupported_degree(degree):
    with pytest.raises(ElementError):
        quadrature(degree)


def test_degree4_x2y2():
    r = quadrature(4)
    xyz = r.points[:, 1:]
    got = float(r.weights @ (xyz[:, 0] ** 2 * xyz[:, 1] ** 2))
    assert abs(got - exact_monomial(2, 2, 0)) < 1e-15


# ---------------------------------------------------------------------------
# DOF / basis duality
# ---------------------------------------------------------------------------

def _field_from_table(pts_table, vals_table):
    """Interpolating lookup for duality tests: evaluate by matching rows."""
    def field(pts):
        out = np.empty((len(pts), vals_table.shape[-1]))
        for i, p in enumerate(pts):
            j = np.argmin(np.linalg.norm(pts_table - p, axis=1))
            out[i] = vals_table[j]
        return out
    return field


def test_nd0_duality_random_tet(rng):
    verts = random_tet(rng)
    for i in range(6):
        def wi(pts, i=i):
            lam = _barycentric(verts, pts)
            return eval_basis("ND0", lam, verts)["values"][i].reshape(-1, 3)
        dofs = [edge_tangential_dof(wi, verts[e][None])[0]
                for e in LOCAL_EDGES]
        expect = np.zeros(6)
        expect[i] = 1.0
        assert np.allclose(dofs, expect, atol=1e-12)


def test_rt0_duality_random_tet(rng):
    verts = random_tet(rng)
    for i in range(4):
        def psi(pts, i=i):
            lam = _barycentric(verts, pts)
            return eval_basis("RT0", lam, verts)["values"][i].reshape(-1, 3)
        dofs = [face_flux_dof(psi, verts[f][None])[0] for f in LOCAL_FACES]
        expect = np.zeros(4)
        expect[i] = 1.0
        assert np.allclose(dofs, expect, atol=1e-12)


def _barycentric(verts, pts):
    g, _ = barycentric_gradients(verts)
    lam = 1.0 / 4.0 + (pts - verts.mean(axis=0)) @ g.T
    # direct affine solution: lam_i = lam_i(bary) + g_i . (x - barycenter)
    return np.clip(lam, 0.0, 1.0)


def test_p2_nodal_duality(rng):
    verts = random_tet(rng)
    mids = 0.5 * (verts[LOCAL_EDGES[:, 0]] + verts[LOCAL_EDGES[:, 1]])
    nodes = np.vstack([verts, mids])
    lam = _barycentric(verts, nodes)
    vals = eval_basis("P2", lam, verts)["values"]
    assert np.allclose(vals, np.eye(10), atol=1e-12)


def test_p2_partition_of_unity(rng):
    lam = rng.dirichlet(np.ones(4), size=20)
    vals = eval_basis("P2", lam)["values"]
    assert np.allclose(vals.sum(axis=0), 1.0, atol=1e-13)


def test_p1_partition_of_unity(rng):
    lam = rng.dirichlet(np.ones(4), size=10)
    vals = eval_basis("P1", lam)["values"]
    assert np.allclose(vals.sum(axis=0), 1.0, atol=1e-14)


def test_unknown_kind():
    with pytest.raises(ElementError):
        eval_basis("P3", np.full((1, 4), 0.25))


# ---------------------------------------------------------------------------
# derivative consistency on random tets
# ---------------------------------------------------------------------------

def test_nd0_curl_matches_finite_difference(rng):
    verts = random_tet(rng)
    out = eval_basis("ND0", np.full((1, 4), 0.25), verts)
    # curls are constant; check via the exact formula 2 ga x gb
    g, _ = barycentric_gradients(verts)
    for i, (a, b) in enumerate(LOCAL_EDGES):
        assert np.allclose(out["curls"][i], 2 * np.cross(g[a], g[b]))


def test_rt0_div_vs_flux_sum(rng):
    """Divergence theorem per basis function: sum of signed face fluxes
    equals the volume integral of the (constant) divergence."""
    verts = random_tet(rng)
    a = verts[1:] - verts[:1]
    det = np.linalg.det(a)
    vol = abs(det) / 6
    out = eval_basis("RT0", np.full((1, 4), 0.25), verts)
    signs = np.array([1.0, -1.0, 1.0, -1.0])
    for i in range(4):
        def psi(pts, i=i):
            lam = _barycentric(verts, pts)
            return eval_basis("RT0", lam, verts)["values"][i].reshape(-1, 3)
        fluxes = np.array([face_flux_dof(psi, verts[f][None])[0]
                           for f in LOCAL_FACES])
        assert np.isclose(signs @ fluxes, np.sign(det) * out["divs"][i] * vol,
                          atol=1e-12)


# ---------------------------------------------------------------------------
# Piola push-forward
# ---------------------------------------------------------------------------

def test_push_forward_identity(rng):
    lam = rng.dirichlet(np.ones(4), size=5)
    for kind in ("P1", "P2", "ND0", "RT0", "DG0"):
        ref = eval_basis(kind, lam)
        mapped = push_forward(kind, np.eye(3), ref)
        for key in ref:
            assert np.allclose(mapped[key], ref[key])


def _mapped_rt0(jac, shift):
    """RT0 basis pushed through x = J xhat + shift, as a point evaluator."""
    jinv = np.linalg.inv(jac)
    det = np.linalg.det(jac)

    def fld(pts, index):
        ref_pts = (pts - shift) @ jinv.T
        lam = np.column_stack([1.0 - ref_pts.sum(axis=1), ref_pts])
        ref = eval_basis("RT0", np.clip(lam, 0.0, 1.0))
        return push_forward("RT0", jac, ref)["values"][index].reshape(-1, 3)
    return fld


def test_push_forward_scaling_preserves_flux():
    """Uniform scaling: contravariant map keeps face-flux DOFs at delta."""
    jac = 2.0 * np.eye(3)
    verts = REF_VERTICES @ jac.T
    fld = _mapped_rt0(jac, np.zeros(3))
    for i in range(4):
        fluxes = np.array([
            face_flux_dof(lambda p: fld(p, i), verts[f][None])[0]
            for f in LOCAL_FACES])
        expect = np.zeros(4)
        expect[i] = 1.0
        assert np.allclose(fluxes, expect, atol=1e-12)


def test_push_forward_random_affine_flux_duality(rng):
    jac = rng.normal(size=(3, 3))
    while abs(np.linalg.det(jac)) < 0.2:
        jac = rng.normal(size=(3, 3))
    shift = rng.normal(size=3)
    verts = REF_VERTICES @ jac.T + shift
    # fluxes through the consistently-mapped faces stay exactly delta,
    # whatever the sign of det J
    fld = _mapped_rt0(jac, shift)
    for i in range(4):
        fluxes = np.array([
            face_flux_dof(lambda p: fld(p, i), verts[f][None])[0]
            for f in LOCAL_FACES])
        expect = np.zeros(4)
        expect[i] = 1.0
        assert np.allclose(fluxes, expect, atol=1e-12)


def test_push_forward_degenerate_map():
    ref = eval_basis("ND0", np.full((1, 4), 0.25))
    with pytest.raises(ElementError):
        push_forward("ND0", np.zeros((3, 3)), ref)


def test_covariant_map_preserves_edge_dofs(rng):
    """ND0 tangential edge DOFs are invariant under the covariant map."""
    jac = rng.normal(size=(3, 3)) + 2 * np.eye(3)
    shift = rng.normal(size=3)
    verts = REF_VERTICES @ jac.T + shift
    jinv = np.linalg.inv(jac)

    def fld(pts, index):
        ref_pts = (pts - shift) @ jinv.T
        lam = np.column_stack([1.0 - ref_pts.sum(axis=1), ref_pts])
        ref = eval_basis("ND0", np.clip(lam, 0.0, 1.0))
        return push_forward("ND0", jac, ref)["values"][index].reshape(-1, 3)

    for i in range(6):
        dofs = np.array([
            edge_tangential_dof(lambda p: fld(p, i), verts[e][None])[0]
            for e in LOCAL_EDGES])
        expect = np.zeros(6)
        expect[i] = 1.0
        assert np.allclose(dofs, expect, atol=1e-12)
