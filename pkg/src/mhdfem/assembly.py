"""Operator and block-system assembly for the linearized MHD schemes.

Unknown ordering within a block system: velocity (vector P2, 3 DOFs per
node, nodes = vertices then edge midpoints), electric field (edges),
magnetic field (faces), pressure (vertices), and one trailing scalar
Lagrange multiplier enforcing the zero pressure mean.

Three one-step schemes are assembled from a previous state (u-, E-, B-):

* Picard: implicit skew-symmetrized convection at u-, Lorentz terms frozen
  at B-, current j = E + u x B-.
* symmetric Picard: convection moved to the right-hand side and the
  magnetic-row and continuity-row signs flipped, which makes the full
  operator symmetric.
* Newton: full linearization, including the three magnetic-trial coupling
  blocks and the Newton right-hand-side data.

The grad-div augmentation (S/Rm)(div B, div C) is on by default; with
compatible data it leaves solutions unchanged while making well-posedness
uniform in the time step.
"""

from __future__ import annotations

import warnings
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem_core
from .derham import DeRhamComplex, discrete_div
from .state import State


class AssemblyError(ValueError):
    """Inconsistent dimensions or invalid parameters."""


@dataclass(frozen=True)
class Params:
    """Dimensionless model and discretization parameters (all positive)."""

    Re: float = 1.0
    Rm: float = 1.0
    S: float = 1.0
    k: float = 0.01
    grad_div_on: bool = True

    def __post_init__(self):
        for name in ("Re", "Rm", "S", "k"):
            if not getattr(self, name) > 0.0:
                raise AssemblyError(f"parameter {name} must be positive")


@dataclass
class SourceData:
    """Extra source functionals (f, r, l, g) on the four spaces.

    Each entry may be None, a vectorized callable on points, or a
    pre-integrated load vector.  ``l_div_free`` records (without enforcing)
    whether l admits the divergence-free representer required for exact
    Gauss-law preservation; manufactured-solution runs may violate it.
    """

    f: object = None
    r: object = None
    l: object = None
    g: object = None
    l_div_free: bool = True


@dataclass
class BlockSystem:
    """One linearized step: sparse operator, right-hand side, BC mask."""

    A: sp.csr_matrix
    rhs: np.ndarray
    slices: dict
    bc_mask: np.ndarray
    symmetric: bool
    params: Params

    @property
    def size(self):
        return self.A.shape[0]

    def split(self, x):
        """Break a solution vector into (u, E, B, p, lagrange)."""
        s = self.slices
        return (x[s["u"]], x[s["E"]], x[s["B"]], x[s["p"]], x[-1])


# ---------------------------------------------------------------------------
# element context: everything evaluated once per (complex, quadrature degree)
# ---------------------------------------------------------------------------

class ElementContext:
    """Precomputed basis values, DOF maps and quadrature for one mesh.

    A single quadrature degree (default 4) is used for every term; it is
    exact for all bilinear forms of the linear operators and is applied
    consistently to the nonlinear/coupling terms and to diagnostics, so
    the discrete energy identities hold to roundoff.
    """

    def __init__(self, cx: DeRhamComplex, quad_degree: int = 4):
        self.cx = cx
        mesh = cx.mesh
        self.mesh = mesh
        rule = fem_core.quadrature(quad_degree)
        self.rule = rule

        verts = mesh.vertices[mesh.tets]                     # (nT,4,3)
        g, det = fem_core.barycentric_gradients(verts)
        self.grads = g
        self.wdet = np.abs(det)[:, None] * rule.weights[None, :]
        self.qpts = rule.physical_points(verts)              # (nT,nq,3)

        lam = rule.points
        self.p1 = lam.T.copy()                               # (4, nq)
        self.p2 = fem_core._p2_values(lam)                   # (10, nq)
        self.p2g = fem_core._p2_gradients(lam, g)            # (nT,10,nq,3)
        self.nd0 = fem_core._nd0_values(lam, g)              # (nT,6,nq,3)
        self.nd0_curl = fem_core._nd0_curls(g)               # (nT,6,3)
        self.rt0 = fem_core._rt0_values(lam, g)              # (nT,4,nq,3)
        self.rt0_div = fem_core._rt0_divs(g)                 # (nT,4)

        nv, ne, nf, nt = cx.counts
        self.nodes = np.hstack([mesh.tets, nv + mesh.tet2edge])   # (nT,10)
        self.u_dofs = (3 * self.nodes[:, :, None]
                       + np.arange(3)[None, None, :]).reshape(-1, 30)
        self.e_dofs = mesh.tet2edge
        self.b_dofs = mesh.tet2face
        self.p_dofs = mesh.tets

        self.n_u = 3 * (nv + ne)
        self.n_e = ne
        self.n_b = nf
        self.n_p = nv
        off = np.cumsum([0, self.n_u, ne, nf, nv])
        self.slices = {"u": slice(off[0], off[1]), "E": slice(off[1], off[2]),
                       "B": slice(off[2], off[3]), "p": slice(off[3], off[4])}
        self.n_total = off[4] + 1                            # + pressure mean

        node_bnd = np.concatenate([cx.boundary_vertex_mask,
                                   cx.boundary_edge_mask])
        self.u_bc = np.repeat(node_bnd, 3)
        mask = np.zeros(self.n_total, dtype=bool)
        mask[self.slices["u"]] = self.u_bc
        mask[self.slices["E"]] = cx.boundary_edge_mask
        mask[self.slices["B"]] = cx.boundary_face_mask
        self.bc_mask = mask

        # integral of each P1 basis function, for the zero-mean constraint
        w = np.zeros(nv)
        np.add.at(w, mesh.tets, (mesh.tet_volumes / 4.0)[:, None])
        self.pressure_row = w

    # -- field evaluation at quadrature points ------------------------------

    def velocity_at_q(self, u):
        c = u[self.u_dofs].reshape(-1, 10, 3)                # (nT,10,3)
        return np.einsum("aq,tad->tqd", self.p2, c)

    def velocity_grad_at_q(self, u):
        c = u[self.u_dofs].reshape(-1, 10, 3)
        return np.einsum("taqd,tac->tqcd", self.p2g, c)      # (nT,nq,3,3)

    def edge_field_at_q(self, e):
        return np.einsum("tjqd,tj->tqd", self.nd0, e[self.e_dofs])

    def face_field_at_q(self, b):
        return np.einsum("tjqd,tj->tqd", self.rt0, b[self.b_dofs])

    def curl_edge_field(self, e):
        """Constant curl of an edge-element field per tet, (nT, 3)."""
        return np.einsum("tjd,tj->td", self.nd0_curl, e[self.e_dofs])

    def pressure_at_q(self, p):
        return np.einsum("aq,ta->tq", self.p1, p[self.p_dofs])

    # -- scatter helpers -----------------------------------------------------

    def _mat(self, local, rows, cols, shape):
        n_t, a, b = local.shape
        m = sp.coo_matrix(
            (local.ravel(),
             (np.repeat(rows, b, axis=1).ravel(),
              np.tile(cols, (1, a)).ravel())), shape=shape)
        return m.tocsr()

    def _vec(self, local, dofs, n):
        out = np.zeros(n)
        np.add.at(out, dofs.ravel(), local.ravel())
        return out

    def _kron3(self, local10):
        """Expand a scalar (nT,10,10) block to vector (nT,30,30), delta_cd."""
        out = np.einsum("tij,cd->ticjd", local10, np.eye(3))
        return out.reshape(local10.shape[0], 30, 30)

    # -- elementary operators ------------------------------------------------

    def mass_u(self):
        m10 = np.einsum("tq,aq,bq->tab", self.wdet, self.p2, self.p2)
        return self._mat(self._kron3(m10), self.u_dofs, self.u_dofs,
                         (self.n_u, self.n_u))

    def stiffness_u(self):
        a10 = np.einsum("tq,taqd,tbqd->tab", self.wdet, self.p2g, self.p2g)
        return self._mat(self._kron3(a10), self.u_dofs, self.u_dofs,
                         (self.n_u, self.n_u))

    def mass_E(self):
        m = np.einsum("tq,tiqd,tjqd->tij", self.wdet, self.nd0, self.nd0)
        return self._mat(m, self.e_dofs, self.e_dofs, (self.n_e, self.n_e))

    def mass_B(self):
        m = np.einsum("tq,tiqd,tjqd->tij", self.wdet, self.rt0, self.rt0)
        return self._mat(m, self.b_dofs, self.b_dofs, (self.n_b, self.n_b))

    def mass_p(self):
        m = np.einsum("tq,aq,bq->tab", self.wdet, self.p1, self.p1)
        return self._mat(m, self.p_dofs, self.p_dofs, (self.n_p, self.n_p))

    def div_up(self):
        """(div v, q): rows pressure, columns velocity."""
        loc = np.einsum("tq,mq,tbqd->tmbd", self.wdet, self.p1, self.p2g)
        return self._mat(loc.reshape(-1, 4, 30), self.p_dofs, self.u_dofs,
                         (self.n_p, self.n_u))

    def divdiv_B(self):
        inv_vol = sp.diags(1.0 / self.mesh.tet_volumes)
        d = self.cx.D.astype(float)
        return (d.T @ inv_vol @ d).tocsr()

    def curl_coupling(self):
        """(curl E, C) as a face-by-edge matrix: exact discrete curl."""
        return (self.mass_B() @ self.cx.C.astype(float)).tocsr()

    # -- state-dependent operators -------------------------------------------

    def convection(self, u_minus, skew=True):
        um = self.velocity_at_q(u_minus)
        adv = np.einsum("tqd,tbqd->tqb", um, self.p2g)       # u-.grad(s_b)
        t1_10 = np.einsum("tq,aq,tqb->tab", self.wdet, self.p2, adv)
        if skew:
            loc = self._kron3(0.5 * (t1_10 - t1_10.transpose(0, 2, 1)))
        else:
            gum = self.velocity_grad_at_q(u_minus)
            t2 = np.einsum("tq,aq,bq,tqcd->tacbd", self.wdet, self.p2,
                           self.p2, gum).reshape(-1, 30, 30)
            loc = self._kron3(t1_10) + t2
        return self._mat(loc, self.u_dofs, self.u_dofs, (self.n_u, self.n_u))

    def convection_wrt_transport(self, u_minus):
        """Derivative of the skew form in its transporting slot.

        With c(w; u, v) = 1/2 [(w.grad u, v) - (w.grad v, u)], this is
        c(., u-, v): the extra block the Newton transport needs when the
        nonlinear convection is the skew-symmetrized one.
        """
        um = self.velocity_at_q(u_minus)
        gum = self.velocity_grad_at_q(u_minus)
        t2 = np.einsum("tq,aq,bq,tqcd->tacbd", self.wdet, self.p2,
                       self.p2, gum).reshape(-1, 30, 30)
        t2b = np.einsum("tq,bq,taqd,tqc->tacbd", self.wdet, self.p2,
                        self.p2g, um).reshape(-1, 30, 30)
        return self._mat(0.5 * (t2 - t2b), self.u_dofs, self.u_dofs,
                         (self.n_u, self.n_u))

    def lorentz_blocks(self, b_minus):
        """Unscaled blocks {(u x B-, v x B-), (E, v x B-), (u x B-, F), (E, F)}."""
        bm = self.face_field_at_q(b_minus)                   # (nT,nq,3)
        b2 = np.einsum("tqd,tqd->tq", bm, bm)
        eye = np.eye(3)
        mcd = b2[:, :, None, None] * eye - np.einsum("tqc,tqd->tqcd", bm, bm)
        k_uu = np.einsum("tq,aq,bq,tqcd->tacbd", self.wdet, self.p2,
                         self.p2, mcd).reshape(-1, 30, 30)
        bxw = np.cross(bm[:, None, :, :], self.nd0)          # (nT,6,nq,3)
        k_ue = np.einsum("tq,aq,tjqc->tacj", self.wdet, self.p2,
                         bxw).reshape(-1, 30, 6)
        blocks = {
            "uu": self._mat(k_uu, self.u_dofs, self.u_dofs,
                            (self.n_u, self.n_u)),
            "uE": self._mat(k_ue, self.u_dofs, self.e_dofs,
                            (self.n_u, self.n_e)),
            "EE": self.mass_E(),
        }
        blocks["Eu"] = blocks["uE"].T.tocsr()
        return blocks

    def newton_b_blocks(self, state_minus):
        """The three (u, B-trial) blocks and the (E, B-trial) block.

        Returns unscaled integrals; the Newton operator subtracts S times
        the first three and adds S times the last:
          g1 = (E- x B, v), g2 = ((u- x B-) x B, v),
          g3 = ((u- x B) x B-, v), y = (u- x B, F).
        """
        um = self.velocity_at_q(state_minus.u)
        em = self.edge_field_at_q(state_minus.E)
        bm = self.face_field_at_q(state_minus.B)
        umxbm = np.cross(um, bm)

        def u_by_face(cross_left):
            # (cross_left x psi_j, v_(a,c)) with cross_left at q-points
            cxp = np.cross(cross_left[:, None, :, :], self.rt0)  # (nT,4,nq,3)
            loc = np.einsum("tq,aq,tjqc->tacj", self.wdet, self.p2,
                            cxp).reshape(-1, 30, 4)
            return self._mat(loc, self.u_dofs, self.b_dofs,
                             (self.n_u, self.n_b))

        g1 = u_by_face(em)
        g2 = u_by_face(umxbm)
        # ((u- x psi_j) x B-, v): (a x b) x c = -c x (a x b)
        uxp = np.cross(um[:, None, :, :], self.rt0)
        g3loc = np.einsum("tq,aq,tjqc->tacj", self.wdet, self.p2,
                          -np.cross(bm[:, None, :, :], uxp)).reshape(-1, 30, 4)
        g3 = self._mat(g3loc, self.u_dofs, self.b_dofs, (self.n_u, self.n_b))
        yloc = np.einsum("tq,tjqd,tiqd->tij", self.wdet, uxp, self.nd0)
        y = self._mat(yloc, self.e_dofs, self.b_dofs, (self.n_e, self.n_b))
        return g1, g2, g3, y

    # -- load functionals ----------------------------------------------------

    def _values_at_q(self, source, vector, n_space):
        """Quadrature-point values, or None if source is already a load."""
        src = source
        if callable(src):
            flat = self.qpts.reshape(-1, 3)
            vals = np.asarray(src(flat), dtype=float)
            shape = self.qpts.shape[:2] + ((3,) if vector else ())
            return vals.reshape(shape)
        src = np.asarray(src, dtype=float)
        if src.shape == (n_space,):
            return None          # pre-integrated load vector
        return src

    def load_velocity(self, source):
        vals = self._values_at_q(source, True, self.n_u)
        if vals is None:
            return np.asarray(source, dtype=float).copy()
        loc = np.einsum("tq,aq,tqc->tac", self.wdet, self.p2,
                        vals).reshape(-1, 30)
        return self._vec(loc, self.u_dofs, self.n_u)

    def load_edge(self, source):
        vals = self._values_at_q(source, True, self.n_e)
        if vals is None:
            return np.asarray(source, dtype=float).copy()
        loc = np.einsum("tq,tiqd,tqd->ti", self.wdet, self.nd0, vals)
        return self._vec(loc, self.e_dofs, self.n_e)

    def load_face(self, source):
        vals = self._values_at_q(source, True, self.n_b)
        if vals is None:
            return np.asarray(source, dtype=float).copy()
        loc = np.einsum("tq,tiqd,tqd->ti", self.wdet, self.rt0, vals)
        return self._vec(loc, self.b_dofs, self.n_b)

    def load_pressure(self, source):
        vals = self._values_at_q(source, False, self.n_p)
        if vals is None:
            return np.asarray(source, dtype=float).copy()
        loc = np.einsum("tq,aq,tq->ta", self.wdet, self.p1, vals)
        return self._vec(loc, self.p_dofs, self.n_p)


_CONTEXTS: "weakref.WeakKeyDictionary[DeRhamComplex, ElementContext]" = \
    weakref.WeakKeyDictionary()


def get_context(cx: DeRhamComplex, quad_degree: int = 4) -> ElementContext:
    ctx = _CONTEXTS.get(cx)
    if ctx is None or ctx.rule.degree != quad_degree:
        ctx = ElementContext(cx, quad_degree)
        _CONTEXTS[cx] = ctx
    return ctx


# ---------------------------------------------------------------------------
# spec-level operator entry point
# ---------------------------------------------------------------------------

_OPERATORS = {
    "mass_u": lambda ctx: ctx.mass_u(),
    "mass_E": lambda ctx: ctx.mass_E(),
    "mass_B": lambda ctx: ctx.mass_B(),
    "mass_p": lambda ctx: ctx.mass_p(),
    "stiffness_u": lambda ctx: ctx.stiffness_u(),
    "curl_coupling": lambda ctx: ctx.curl_coupling(),
    "divdiv_B": lambda ctx: ctx.divdiv_B(),
    "div_up": lambda ctx: ctx.div_up(),
}


def assemble_operator(kind: str, cx: DeRhamComplex):
    """Assemble one of the named mass/stiffness/coupling operators."""
    try:
        builder = _OPERATORS[kind]
    except KeyError:
        raise AssemblyError(f"unknown operator kind {kind!r}") from None
    return builder(get_context(cx))


def assemble_convection(cx, u_minus, skew=True):
    """Convection operator; skew gives the antisymmetrized transport part
    only (the viscous term is assembled separately), skew=False gives the
    Newton transport (u-.grad u, v) + (u.grad u-, v)."""
    ctx = get_context(cx)
    if np.shape(u_minus) != (ctx.n_u,):
        raise AssemblyError("u_minus has wrong length")
    return ctx.convection(np.asarray(u_minus, dtype=float), skew=skew)


def assemble_lorentz_coupling(cx, b_minus):
    """Frozen-field Lorentz blocks; the (u, E) 2x2 combination is the Gram
    matrix of E + u x B- and therefore symmetric positive semidefinite."""
    ctx = get_context(cx)
    if np.shape(b_minus) != (ctx.n_b,):
        raise AssemblyError("b_minus has wrong length")
    return ctx.lorentz_blocks(np.asarray(b_minus, dtype=float))


# ---------------------------------------------------------------------------
# block systems
# ---------------------------------------------------------------------------

def apply_essential_bcs(A, rhs, mask):
    """Symmetric elimination of homogeneous essential DOFs.

    Masked rows and columns are zeroed with a unit diagonal and zero
    right-hand side, preserving symmetry of a symmetric input.
    """
    keep = sp.diags((~mask).astype(float))
    a_bc = keep @ A @ keep + sp.diags(mask.astype(float))
    r = np.where(mask, 0.0, rhs)
    return a_bc.tocsr(), r


def _augment_pressure_mean(ctx, A, rhs):
    """Append the scalar Lagrange row/column enforcing zero pressure mean."""
    col = np.zeros((A.shape[0], 1))
    col[ctx.slices["p"], 0] = ctx.pressure_row
    a_aug = sp.bmat([[A, sp.csr_matrix(col)],
                     [sp.csr_matrix(col.T), None]], format="csr")
    return a_aug, np.append(rhs, 0.0)


def _source_loads(ctx, sources):
    z = (np.zeros(ctx.n_u), np.zeros(ctx.n_e), np.zeros(ctx.n_b),
         np.zeros(ctx.n_p))
    if sources is None:
        return z
    f = ctx.load_velocity(sources.f) if sources.f is not None else z[0]
    r = ctx.load_edge(sources.r) if sources.r is not None else z[1]
    l = ctx.load_face(sources.l) if sources.l is not None else z[2]
    g = ctx.load_pressure(sources.g) if sources.g is not None else z[3]
    return f, r, l, g


def _check_divfree_minus(cx, state_minus):
    b = state_minus.B
    scale = np.abs(b).max() if b.size and np.abs(b).max() > 0 else 1.0
    div = np.abs(discrete_div(cx, b)).max()
    if div > 1e-10 * scale:
        warnings.warn(
            f"previous magnetic field has discrete divergence {div:.3e}; "
            "Gauss-law preservation holds only from divergence-free data",
            stacklevel=3)


def _blocks_common(ctx, params):
    """Blocks shared by every scheme (no convection, no Lorentz); cached
    per parameter set since they are state-independent."""
    p = params
    cache = getattr(ctx, "_common_cache", None)
    if cache is None:
        cache = {}
        ctx._common_cache = cache
    key = (p.Re, p.Rm, p.S, p.k, p.grad_div_on)
    blocks = cache.get(key)
    if blocks is None:
        m_u = ctx.mass_u()
        a_u = ctx.stiffness_u()
        m_b = ctx.mass_B()
        bdiv = ctx.div_up()
        curl = (m_b @ ctx.cx.C.astype(float)).tocsr()
        m_e = ctx.mass_E()
        bb = (p.S / (p.Rm * p.k)) * m_b
        if p.grad_div_on:
            bb = bb + (p.S / p.Rm) * ctx.divdiv_B()
        blocks = (m_u, a_u, m_e, m_b, bdiv, curl, bb)
        cache.clear()
        cache[key] = blocks
    return blocks


def _assemble(ctx, rows, rhs_parts, params, symmetric):
    a = sp.bmat(rows, format="csr")
    rhs = np.concatenate(rhs_parts)
    a, rhs = apply_essential_bcs(a, rhs, ctx.bc_mask[:-1])
    a, rhs = _augment_pressure_mean(ctx, a, rhs)
    return BlockSystem(A=a, rhs=rhs, slices=ctx.slices,
                       bc_mask=ctx.bc_mask, symmetric=symmetric,
                       params=params)


def assemble_picard(cx, state_minus: State, params: Params,
                    sources: SourceData | None = None,
                    frozen: State | None = None) -> BlockSystem:
    """One-step Picard system (implicit skew convection, Lorentz at B-).

    ``frozen`` selects the linearization state when the assembly serves an
    inner Picard iteration; time-level data always come from state_minus.
    """
    if params.k <= 0:
        raise AssemblyError("time step must be positive")
    ctx = get_context(cx)
    if frozen is None:
        frozen = state_minus
    _check_divfree_minus(cx, state_minus)
    p = params
    m_u, a_u, m_e, m_b, bdiv, curl, bb = _blocks_common(ctx, p)
    lor = ctx.lorentz_blocks(frozen.B)
    conv = ctx.convection(frozen.u, skew=True)

    a_uu = (1.0 / p.k) * m_u + (1.0 / p.Re) * a_u + conv + p.S * lor["uu"]
    rows = [
        [a_uu, p.S * lor["uE"], None, -bdiv.T],
        [p.S * lor["Eu"], p.S * m_e, -(p.S / p.Rm) * curl.T, None],
        [None, (p.S / p.Rm) * curl, bb, None],
        [bdiv, None, None, None],
    ]
    f, r, l, g = _source_loads(ctx, sources)
    rhs = [f + (1.0 / p.k) * (m_u @ state_minus.u),
           r,
           l + (p.S / (p.Rm * p.k)) * (m_b @ state_minus.B),
           g]
    return _assemble(ctx, rows, rhs, p, symmetric=False)


def assemble_symmetric_picard(cx, state_minus: State, params: Params,
                              sources: SourceData | None = None
                              ) -> BlockSystem:
    """Symmetric-Picard system: explicit convection, flipped magnetic and
    continuity rows; the assembled operator equals its transpose."""
    if params.k <= 0:
        raise AssemblyError("time step must be positive")
    ctx = get_context(cx)
    _check_divfree_minus(cx, state_minus)
    p = params
    m_u, a_u, m_e, m_b, bdiv, curl, bb = _blocks_common(ctx, p)
    lor = ctx.lorentz_blocks(state_minus.B)

    a_uu = (1.0 / p.k) * m_u + (1.0 / p.Re) * a_u + p.S * lor["uu"]
    rows = [
        [a_uu, p.S * lor["uE"], None, -bdiv.T],
        [p.S * lor["Eu"], p.S * m_e, -(p.S / p.Rm) * curl.T, None],
        [None, -(p.S / p.Rm) * curl, -bb, None],
        [-bdiv, None, None, None],
    ]
    f, r, l, g = _source_loads(ctx, sources)
    conv = ctx.convection(state_minus.u, skew=True)
    rhs = [f + (1.0 / p.k) * (m_u @ state_minus.u) - conv @ state_minus.u,
           r,
           -(l + (p.S / (p.Rm * p.k)) * (m_b @ state_minus.B)),
           -g]
    return _assemble(ctx, rows, rhs, p, symmetric=True)


def assemble_newton(cx, state_minus: State, params: Params,
                    sources: SourceData | None = None,
                    frozen: State | None = None,
                    skew_convection: bool = False) -> BlockSystem:
    """One-step Newton system (full linearization around ``frozen``).

    The default transport d_N(u, v) = (u-.grad u, v) + (u.grad u-, v) is
    the plain-convection linearization.  ``skew_convection`` linearizes
    the skew-symmetrized convection instead, so that the inner Newton
    iteration shares its fixed point with the Picard iteration (both then
    solve the same skew-form nonlinear step).
    """
    if params.k <= 0:
        raise AssemblyError("time step must be positive")
    ctx = get_context(cx)
    if frozen is None:
        frozen = state_minus
    _check_divfree_minus(cx, state_minus)
    p = params
    m_u, a_u, m_e, m_b, bdiv, curl, bb = _blocks_common(ctx, p)
    lor = ctx.lorentz_blocks(frozen.B)
    if skew_convection:
        conv_transport = ctx.convection(frozen.u, skew=True)
        conv = conv_transport + ctx.convection_wrt_transport(frozen.u)
    else:
        conv = ctx.convection(frozen.u, skew=False)
    g1, g2, g3, y = ctx.newton_b_blocks(frozen)

    a_uu = (1.0 / p.k) * m_u + (1.0 / p.Re) * a_u + conv + p.S * lor["uu"]
    a_ub = -p.S * (g1 + g2 + g3)
    rows = [
        [a_uu, p.S * lor["uE"], a_ub, -bdiv.T],
        [p.S * lor["Eu"], p.S * m_e, -(p.S / p.Rm) * curl.T + p.S * y, None],
        [None, (p.S / p.Rm) * curl, bb, None],
        [bdiv, None, None, None],
    ]

    # Newton data: f_N = f + [convection at the frozen state]
    #              - S E- x B- - 2S (u- x B-) x B-,
    # and the edge-space source S (u- x B-, F)
    um = ctx.velocity_at_q(frozen.u)
    em = ctx.edge_field_at_q(frozen.E)
    bm = ctx.face_field_at_q(frozen.B)
    umxbm = np.cross(um, bm)
    f_n = -p.S * np.cross(em, bm) - 2.0 * p.S * np.cross(umxbm, bm)
    f_load = ctx.load_velocity(f_n)
    if skew_convection:
        f_load += conv_transport @ frozen.u
    else:
        gum = ctx.velocity_grad_at_q(frozen.u)
        f_load += ctx.load_velocity(np.einsum("tqd,tqcd->tqc", um, gum))

    f, r, l, g = _source_loads(ctx, sources)
    rhs = [f + (1.0 / p.k) * (m_u @ state_minus.u) + f_load,
           r + p.S * ctx.load_edge(umxbm),
           l + (p.S / (p.Rm * p.k)) * (m_b @ state_minus.B),
           g]
    return _assemble(ctx, rows, rhs, p, symmetric=False)
