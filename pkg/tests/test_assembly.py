import numpy as np
import pytest
import scipy.sparse as sp

from mhdfem import (Params, SourceData, assemble_convection,
                    assemble_lorentz_coupling, assemble_newton,
                    assemble_operator, assemble_picard,
                    assemble_symmetric_picard, discrete_div, get_context,
                    sparse_lu_solve, zero_state)
from mhdfem.assembly import AssemblyError
from mhdfem.state import State

PARAMS = Params(Re=1.0, Rm=1.0, S=1.0, k=0.01)


def random_state(cx, rng, scale=1.0, divfree=True):
    ctx = get_context(cx)
    u = scale * rng.normal(size=ctx.n_u)
    u[ctx.u_bc] = 0.0
    e = scale * rng.normal(size=ctx.n_e)
    e[cx.boundary_edge_mask] = 0.0
    if divfree:
        e2 = scale * rng.normal(size=ctx.n_e)
        e2[cx.boundary_edge_mask] = 0.0
        b = cx.C.astype(float) @ e2
    else:
        b = scale * rng.normal(size=ctx.n_b)
        b[cx.boundary_face_mask] = 0.0
    p = scale * rng.normal(size=ctx.n_p)
    p -= (ctx.pressure_row @ p) / ctx.pressure_row.sum()
    return State(u=u, E=e, B=b, p=p)


# ---------------------------------------------------------------------------
# elementary operators
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["mass_u", "mass_E", "mass_B", "mass_p"])
def test_mass_matrices_spd(cx1, kind):
    m = assemble_operator(kind, cx1).toarray()
    assert np.allclose(m, m.T, atol=1e-14)
    assert np.linalg.eigvalsh(m).min() > 0


def test_unknown_operator_kind(cx1):
    with pytest.raises(AssemblyError):
        assemble_operator("mass_q", cx1)


def test_curl_coupling_dual_path(cx2, rng):
    """(curl E, B) by quadrature equals e^T C^T M_B b."""
    ctx = get_context(cx2)
    e = rng.normal(size=ctx.n_e)
    b = rng.normal(size=ctx.n_b)
    m_b = assemble_operator("mass_B", cx2)
    coef_path = float(e @ (cx2.C.T.astype(float) @ (m_b @ b)))

    curl_e = ctx.curl_edge_field(e)                      # constant per tet
    b_q = ctx.face_field_at_q(b)
    quad_path = float(np.einsum("tq,td,tqd->", ctx.wdet, curl_e, b_q))
    assert abs(coef_path - quad_path) <= 1e-12 * max(abs(coef_path), 1.0)


def test_divdiv_kills_curl_range(cx2, rng):
    e = rng.normal(size=cx2.mesh.num_edges)
    dd = assemble_operator("divdiv_B", cx2)
    out = dd @ (cx2.C.astype(float) @ e)
    assert np.abs(out).max() < 1e-12


def test_divdiv_matches_quadrature(cx2, rng):
    b = rng.normal(size=cx2.mesh.num_faces)
    dd = assemble_operator("divdiv_B", cx2)
    div = discrete_div(cx2, b)
    vols = cx2.mesh.tet_volumes
    assert np.isclose(float(b @ (dd @ b)), float(vols @ div ** 2),
                      rtol=1e-12)


# ---------------------------------------------------------------------------
# convection
# ---------------------------------------------------------------------------

def test_skew_convection_antisymmetric(cx1, rng):
    ctx = get_context(cx1)
    for _ in range(20):
        um = rng.normal(size=ctx.n_u)
        n = assemble_convection(cx1, um, skew=True)
        u = rng.normal(size=ctx.n_u)
        assert abs(float(u @ (n @ u))) <= 1e-12 * float(u @ u)


def test_skew_form_coercivity_identity(cx2, rng):
    """d(u, u) = (1/Re) |grad u|^2 exactly for the skew form."""
    ctx = get_context(cx2)
    a_u = assemble_operator("stiffness_u", cx2)
    for _ in range(10):
        um = rng.normal(size=ctx.n_u)
        u = rng.normal(size=ctx.n_u)
        n = assemble_convection(cx2, um, skew=True)
        d_uu = float(u @ (n @ u)) + float(u @ (a_u @ u)) / PARAMS.Re
        grad = float(u @ (a_u @ u)) / PARAMS.Re
        assert abs(d_uu - grad) <= 1e-12 * max(grad, 1.0)


def test_zero_velocity_zero_convection(cx1):
    ctx = get_context(cx1)
    n = assemble_convection(cx1, np.zeros(ctx.n_u), skew=True)
    assert n.nnz == 0 or np.abs(n.data).max() == 0
    n2 = assemble_convection(cx1, np.zeros(ctx.n_u), skew=False)
    assert n2.nnz == 0 or np.abs(n2.data).max() == 0


def test_convection_wrong_length(cx1):
    with pytest.raises(AssemblyError):
        assemble_convection(cx1, np.zeros(5))


# ---------------------------------------------------------------------------
# Lorentz blocks
# ---------------------------------------------------------------------------

def test_lorentz_zero_field(cx1):
    ctx = get_context(cx1)
    blocks = assemble_lorentz_coupling(cx1, np.zeros(ctx.n_b))
    assert blocks["uu"].nnz == 0 or np.abs(blocks["uu"].data).max() == 0
    assert blocks["uE"].nnz == 0 or np.abs(blocks["uE"].data).max() == 0
    assert np.abs(blocks["EE"].toarray()).max() > 0   # plain edge mass


def test_lorentz_gram_property(cx2, rng):
    """[u;E]^T K [u;E] equals the quadrature of |E + u x B-|^2."""
    ctx = get_context(cx2)
    bm = rng.normal(size=ctx.n_b)
    blocks = assemble_lorentz_coupling(cx2, bm)
    u = rng.normal(size=ctx.n_u)
    e = rng.normal(size=ctx.n_e)
    quad_form = (float(u @ (blocks["uu"] @ u))
                 + 2.0 * float(u @ (blocks["uE"] @ e))
                 + float(e @ (blocks["EE"] @ e)))

    j = ctx.edge_field_at_q(e) + np.cross(ctx.velocity_at_q(u),
                                          ctx.face_field_at_q(bm))
    oracle = float(np.einsum("tq,tqd,tqd->", ctx.wdet, j, j))
    assert abs(quad_form - oracle) <= 1e-10 * max(oracle, 1.0)
    assert quad_form >= -1e-12 * max(oracle, 1.0)


def test_lorentz_transpose_consistency(cx2, rng):
    bm = rng.normal(size=get_context(cx2).n_b)
    blocks = assemble_lorentz_coupling(cx2, bm)
    d = abs(blocks["uE"] - blocks["Eu"].T)
    assert d.max() <= 1e-12 * abs(blocks["uE"]).max()


# ---------------------------------------------------------------------------
# Picard system
# ---------------------------------------------------------------------------

def test_picard_data_map_face_block(cx2, rng):
    state = random_state(cx2, rng)
    system = assemble_picard(cx2, state, PARAMS)
    m_b = assemble_operator("mass_B", cx2)
    expect = (PARAMS.S / (PARAMS.Rm * PARAMS.k)) * (m_b @ state.B)
    got = system.rhs[system.slices["B"]]
    free = ~cx2.boundary_face_mask
    assert np.allclose(got[free], expect[free], rtol=1e-12, atol=1e-14)
    assert np.all(got[~free] == 0.0)


def test_zero_data_zero_solution(cx1, rng):
    state = zero_state(cx1)
    state = State(u=state.u, E=rng.normal(size=len(state.E)), B=state.B,
                  p=state.p)  # E- is ignored by the Picard scheme
    system = assemble_picard(cx1, state, PARAMS)
    x = sparse_lu_solve(system.A, system.rhs)
    assert np.abs(x).max() == 0.0


def test_picard_single_solve_divfree(cx2, rng):
    state = random_state(cx2, rng, scale=0.1)
    system = assemble_picard(cx2, state, PARAMS)
    x = sparse_lu_solve(system.A, system.rhs)
    _, _, b, _, _ = system.split(x)
    assert np.abs(discrete_div(cx2, b)).max() <= 1e-12 * np.abs(b).max()


def test_picard_warns_on_divergent_prev(cx2, rng):
    state = random_state(cx2, rng, divfree=False)
    assert np.abs(discrete_div(cx2, state.B)).max() > 1e-6
    with pytest.warns(UserWarning, match="divergence"):
        assemble_picard(cx2, state, PARAMS)


def test_nonpositive_k_rejected(cx1):
    with pytest.raises(AssemblyError):
        Params(k=-0.1)


# ---------------------------------------------------------------------------
# symmetric Picard
# ---------------------------------------------------------------------------

def test_symmetric_matrix(cx2, rng):
    state = random_state(cx2, rng)
    system = assemble_symmetric_picard(cx2, state, PARAMS)
    assert system.symmetric
    d = abs(system.A - system.A.T).max()
    assert d <= 1e-12 * abs(system.A).max()


def test_symmetric_equals_picard_when_frozen_velocity_zero(cx2, rng):
    state = random_state(cx2, rng)
    state = State(u=np.zeros_like(state.u), E=state.E, B=state.B, p=state.p)
    s_pic = assemble_picard(cx2, state, PARAMS)
    s_sym = assemble_symmetric_picard(cx2, state, PARAMS)
    x1 = sparse_lu_solve(s_pic.A, s_pic.rhs)
    x2 = sparse_lu_solve(s_sym.A, s_sym.rhs)
    assert np.abs(x1 - x2).max() <= 1e-10 * max(np.abs(x1).max(), 1.0)


def test_negated_rows_reproduce_picard_operator(cx2, rng):
    """Flipping the magnetic and continuity rows of the symmetric system
    recovers the Picard operator without its implicit convection."""
    state = random_state(cx2, rng)
    s_sym = assemble_symmetric_picard(cx2, state, PARAMS)
    frozen0 = State(u=np.zeros_like(state.u), E=state.E, B=state.B,
                    p=state.p)
    s_pic = assemble_picard(cx2, state, PARAMS, frozen=frozen0)

    ctx = get_context(cx2)
    n = s_sym.A.shape[0]
    flip = np.ones(n)
    flip[ctx.slices["B"]] = -1.0
    flip[ctx.slices["p"]] = -1.0
    a_flip = sp.diags(flip) @ s_sym.A
    rhs_flip = flip * s_sym.rhs

    free = ~s_sym.bc_mask
    diff = (a_flip - s_pic.A).toarray()[np.ix_(free, free)]
    assert np.abs(diff).max() <= 1e-14 * abs(s_pic.A).max()

    # right-hand sides differ only by the explicit convection term
    conv = assemble_convection(cx2, state.u, skew=True)
    rhs_pic = s_pic.rhs.copy()
    rhs_pic[ctx.slices["u"]] -= conv @ state.u
    assert np.allclose(rhs_flip[free], rhs_pic[free], atol=1e-13)


# ---------------------------------------------------------------------------
# Newton system
# ---------------------------------------------------------------------------

def test_newton_reduces_to_picard_at_trivial_point(cx2, rng):
    """With u- = 0 and E- = 0 the Newton operator equals the Picard
    operator with zero convection, entrywise."""
    state = random_state(cx2, rng)
    trivial = State(u=np.zeros_like(state.u), E=np.zeros_like(state.E),
                    B=state.B, p=state.p)
    s_new = assemble_newton(cx2, trivial, PARAMS)
    s_pic = assemble_picard(cx2, trivial, PARAMS)
    d = abs(s_new.A - s_pic.A).max()
    assert d <= 1e-13 * abs(s_pic.A).max()
    assert np.allclose(s_new.rhs, s_pic.rhs, atol=1e-13)


def test_newton_phi_block_quadrature(cx2, rng):
    """The edge right-hand side carries S (u- x B-, F)."""
    state = random_state(cx2, rng)
    system = assemble_newton(cx2, state, PARAMS)
    ctx = get_context(cx2)
    umq = ctx.velocity_at_q(state.u)
    bmq = ctx.face_field_at_q(state.B)
    oracle = PARAMS.S * np.einsum("tq,tiqd,tqd->ti", ctx.wdet, ctx.nd0,
                                  np.cross(umq, bmq))
    expect = np.zeros(ctx.n_e)
    np.add.at(expect, ctx.e_dofs.ravel(), oracle.ravel())
    got = system.rhs[system.slices["E"]]
    free = ~cx2.boundary_edge_mask
    assert np.allclose(got[free], expect[free], rtol=1e-12, atol=1e-14)


# ---------------------------------------------------------------------------
# boundary conditions and pressure constraint
# ---------------------------------------------------------------------------

def _forced_solve(cx, rng, scheme=assemble_picard):
    state = random_state(cx, rng, scale=0.2)
    sources = SourceData(f=lambda p: np.stack(
        [np.sin(np.pi * p[:, 1]), np.cos(np.pi * p[:, 2]),
         p[:, 0] * 0 + 1.0], axis=-1))
    system = scheme(cx, state, PARAMS, sources)
    x = sparse_lu_solve(system.A, system.rhs)
    return system, x


def test_essential_bcs_hold_post_solve(cx2, rng):
    system, x = _forced_solve(cx2, rng)
    u, e, b, p, _ = system.split(x)
    ctx = get_context(cx2)
    assert np.abs(u[ctx.u_bc]).max() == 0.0
    assert np.abs(e[cx2.boundary_edge_mask]).max() == 0.0
    assert np.abs(b[cx2.boundary_face_mask]).max() == 0.0


def test_pressure_mean_zero_post_solve(cx2, rng):
    system, x = _forced_solve(cx2, rng)
    _, _, _, p, _ = system.split(x)
    ctx = get_context(cx2)
    mean = float(ctx.pressure_row @ p)
    assert abs(mean) <= 1e-12 * max(np.abs(p).max(), 1.0)


def test_elimination_preserves_symmetry(cx1, rng):
    state = random_state(cx1, rng)
    system = assemble_symmetric_picard(cx1, state, PARAMS)
    assert system.symmetric
    d = abs(system.A - system.A.T).max()
    assert d <= 1e-12 * abs(system.A).max()


# ---------------------------------------------------------------------------
# coercivity identity (energy test functions) and inf-sup sanity
# ---------------------------------------------------------------------------

def _operator_blocks(cx, state, params, grad_div):
    ctx = get_context(cx)
    p = params
    m_u = ctx.mass_u()
    a_u = ctx.stiffness_u()
    m_e = ctx.mass_E()
    m_b = ctx.mass_B()
    curl = (m_b @ cx.C.astype(float)).tocsr()
    conv = ctx.convection(state.u, skew=True)
    lor = ctx.lorentz_blocks(state.B)
    a_uu = m_u / p.k + a_u / p.Re + conv + p.S * lor["uu"]
    a_bb = (p.S / (p.Rm * p.k)) * m_b
    if grad_div:
        a_bb = a_bb + (p.S / p.Rm) * ctx.divdiv_B()
    return ctx, a_uu, p.S * lor["uE"], p.S * m_e, \
        -(p.S / p.Rm) * curl.T, (p.S / p.Rm) * curl, a_bb


@pytest.mark.parametrize("grad_div", [False, True])
def test_energy_test_function_identity(cx2, rng, grad_div):
    """Testing the one-step form with (u, E, (B + k curl E)/2) collapses to
    a sum of weighted squared norms."""
    params = PARAMS
    state = random_state(cx2, rng)
    ctx, a_uu, a_ue, a_ee, a_eb, a_be, a_bb = _operator_blocks(
        cx2, state, params, grad_div)

    u = rng.normal(size=ctx.n_u)
    e = rng.normal(size=ctx.n_e)
    b = rng.normal(size=ctx.n_b)
    c_test = 0.5 * (b + params.k * (cx2.C.astype(float) @ e))

    lhs = (float(u @ (a_uu @ u)) + float(u @ (a_ue @ e))
           + float(e @ (a_ue.T @ u)) + float(e @ (a_ee @ e))
           + float(e @ (a_eb @ b)) + float(c_test @ (a_be @ e))
           + float(c_test @ (a_bb @ b)))

    uq = ctx.velocity_at_q(u)
    gq = ctx.velocity_grad_at_q(u)
    eq = ctx.edge_field_at_q(e)
    bq = ctx.face_field_at_q(b)
    bmq = ctx.face_field_at_q(state.B)
    ceq = ctx.curl_edge_field(e)
    j = eq + np.cross(uq, bmq)

    def qint(v):
        return float(np.einsum("tq,tq...->", ctx.wdet, v ** 2))

    p = params
    curl_sq = float(np.einsum("t,td,td->", ctx.wdet.sum(axis=1), ceq, ceq))
    rhs = (qint(uq) / p.k + qint(gq) / p.Re + p.S * qint(j)
           + p.S * p.k / (2 * p.Rm) * curl_sq
           + p.S / (2 * p.Rm * p.k) * qint(bq))
    if grad_div:
        div = discrete_div(cx2, b)
        rhs += p.S / (2 * p.Rm) * float(
            cx2.mesh.tet_volumes @ div ** 2)

    assert abs(lhs - rhs) <= 1e-10 * max(abs(rhs), 1.0)


def _pressure_schur_smallest(n):
    from mhdfem import build_complex, generate_structured_cube
    from mhdfem.linalg import SparseLU

    cx = build_complex(generate_structured_cube(n))
    ctx = get_context(cx)
    p = PARAMS
    m_u = ctx.mass_u()
    a_u = ctx.stiffness_u()
    m_p = ctx.mass_p()
    bdiv = ctx.div_up()
    mp_lu = SparseLU(m_p.tocsc())
    gd = bdiv.T @ sp.diags(1.0 / np.asarray(m_p.sum(axis=1)).ravel()) @ bdiv
    n_u_mat = (m_u / p.k + a_u + gd / p.k).tocsr()

    free = ~ctx.u_bc
    nu = n_u_mat.toarray()[np.ix_(free, free)]
    bd = bdiv.toarray()[:, free]
    schur = bd @ np.linalg.solve(nu, bd.T)
    # weighted pressure norm k |p|^2
    mp = p.k * m_p.toarray()
    vals = np.linalg.eigvalsh(np.linalg.solve(mp, schur))
    vals = np.sort(np.abs(vals))
    # drop the constant-pressure null direction
    return float(np.sqrt(vals[1]))


def test_pressure_infsup_two_meshes():
    beta1 = _pressure_schur_smallest(1)
    beta2 = _pressure_schur_smallest(2)
    assert beta1 > 0 and beta2 > 0
    assert abs(beta1 - beta2) / max(beta1, beta2) <= 0.25


# ---------------------------------------------------------------------------
# grad-div augmentation vs compliant / non-compliant sources
# ---------------------------------------------------------------------------

def _solve_with_l(cx, state, l_load, grad_div):
    params = Params(Re=1, Rm=1, S=1, k=0.01, grad_div_on=grad_div)
    sources = SourceData(l=l_load, l_div_free=False)
    system = assemble_picard(cx, state, params, sources)
    x = sparse_lu_solve(system.A, system.rhs)
    return system.split(x)


def test_grad_div_equivalence_compliant(cx2, rng):
    state = random_state(cx2, rng, scale=0.1)
    ctx = get_context(cx2)
    e_arb = rng.normal(size=ctx.n_e)
    e_arb[cx2.boundary_edge_mask] = 0.0
    l_r = cx2.C.astype(float) @ e_arb
    m_b = assemble_operator("mass_B", cx2)
    l_load = m_b @ l_r

    u1, e1, b1, p1, _ = _solve_with_l(cx2, state, l_load, True)
    u0, e0, b0, p0, _ = _solve_with_l(cx2, state, l_load, False)

    scale = np.abs(b1).max()
    assert np.abs(discrete_div(cx2, b1)).max() <= 1e-12 * scale
    assert np.abs(discrete_div(cx2, b0)).max() <= 1e-12 * scale
    for a, b in ((u1, u0), (e1, e0), (b1, b0), (p1, p0)):
        assert np.abs(a - b).max() <= 1e-8 * max(np.abs(a).max(), 1.0)


def test_grad_div_noncompliant_detected(cx2, rng):
    from mhdfem import interpolate

    state = random_state(cx2, rng, scale=0.1)
    m_b = assemble_operator("mass_B", cx2)
    bad = interpolate(cx2, cx2.mesh, 2, lambda p: p)    # div = 3
    l_load = m_b @ bad

    _, _, b1, _, _ = _solve_with_l(cx2, state, l_load, True)
    _, _, b0, _, _ = _solve_with_l(cx2, state, l_load, False)

    scale = max(np.abs(b0).max(), np.abs(b1).max())
    assert np.abs(discrete_div(cx2, b0)).max() > 1e-6 * scale
    assert np.abs(b1 - b0).max() > 1e-6 * scale
