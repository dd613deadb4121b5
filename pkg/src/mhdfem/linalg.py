"""Sparse solves: direct LU, MINRES, and the weighted-norm block preconditioner.

Sparse storage is CSR throughout (scipy.sparse).  The direct path wraps
SuperLU with threshold pivoting 0.1 and a minimum-degree column ordering;
the iterative path is MINRES for the symmetric-Picard systems, driven by a
block-diagonal preconditioner whose blocks are the Riesz maps of the
time-step-weighted norms in which the one-step problems are uniformly
well-posed:

    P_u = k^-1 M_u + Re^-1 A_u + k^-1 Bdiv^T diag(M_p)^-1 Bdiv
    P_E = S (M_E + (k/Rm) C^T M_B C)
    P_B = (S/Rm) (k^-1 M_B + divdiv)
    P_p = k M_p   (with the mean-pressure multiplier scaled by k^-1 |Omega|)
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly
from .derham import DeRhamComplex


class SingularMatrixError(RuntimeError):
    """Factorization hit a zero pivot / structurally singular matrix."""


class SparseLU:
    """SuperLU factorization with threshold pivoting and MMD ordering.

    One round of iterative refinement is applied by default; it costs a
    single extra triangular solve and pushes the residual down to the
    rounding level of the matrix-vector product, which matters here
    because cellwise divergences divide the solve residual by small cell
    volumes.
    """

    def __init__(self, A, refine=1):
        a = sp.csc_matrix(A)
        if a.shape[0] != a.shape[1]:
            raise ValueError("matrix must be square")
        try:
            self._lu = spla.splu(a, diag_pivot_thresh=0.1,
                                 permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as err:
            raise SingularMatrixError(str(err)) from err
        self._a = a
        self._refine = refine
        self.shape = a.shape

    def solve(self, rhs):
        b = np.asarray(rhs, dtype=float)
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("factorization produced non-finite "
                                      "values (singular matrix)")
        for _ in range(self._refine):
            x = x + self._lu.solve(b - self._a @ x)
        return x


def sparse_lu_solve(A, rhs):
    """Direct sparse solve; raises SingularMatrixError instead of garbage."""
    return SparseLU(A).solve(rhs)


def is_symmetric(A, rtol=1e-12):
    d = abs(A - A.T)
    scale = max(abs(A).max(), 1e-300)
    return d.max() <= rtol * scale


def minres(A, rhs, M=None, tol=1e-8, maxit=1000, check_symmetry=True):
    """Preconditioned MINRES (standard Lanczos recurrence).

    Returns (solution, iteration count).  ``M`` applies the inverse of a
    symmetric positive definite preconditioner; convergence is declared
    when the preconditioned residual norm drops below ``tol`` relative to
    that of the right-hand side.  Symmetry of sparse inputs is checked
    unless disabled.
    """
    if check_symmetry and sp.issparse(A) and not is_symmetric(A, 1e-10):
        raise ValueError("minres requires a symmetric operator")
    b = np.asarray(rhs, dtype=float)
    apply_m = (lambda r: r) if M is None else \
        (M.matvec if hasattr(M, "matvec") else M)
    matvec = A.matvec if hasattr(A, "matvec") else (lambda v: A @ v)

    x = np.zeros_like(b)
    v = b.copy()                        # unnormalized Lanczos vector
    z = apply_m(v)
    gamma = np.sqrt(v @ z)
    if gamma == 0.0:
        return x, 0
    norm0 = gamma
    gamma_old = 1.0
    eta = gamma
    s_old = s_cur = 0.0
    c_old = c_cur = 1.0
    v_old = np.zeros_like(b)
    w = np.zeros_like(b)
    w_old = np.zeros_like(b)

    for k in range(1, maxit + 1):
        z = z / gamma
        az = matvec(z)
        delta = z @ az
        v_new = az - (delta / gamma) * v - (gamma / gamma_old) * v_old
        z_new = apply_m(v_new)
        gamma_new = np.sqrt(max(v_new @ z_new, 0.0))

        a0 = c_cur * delta - c_old * s_cur * gamma
        a1 = np.sqrt(a0 * a0 + gamma_new * gamma_new)
        a2 = s_cur * delta + c_old * c_cur * gamma
        a3 = s_old * gamma
        c_old, c_cur = c_cur, a0 / a1
        s_old, s_cur = s_cur, gamma_new / a1

        w_new = (z - a3 * w_old - a2 * w) / a1
        x = x + (c_cur * eta) * w_new
        eta = -s_cur * eta

        v_old, v = v, v_new
        z = z_new
        gamma_old, gamma = gamma, gamma_new
        w_old, w = w, w_new
        if abs(eta) <= tol * norm0 or gamma == 0.0:
            return x, k
    return x, maxit


class BlockPreconditioner:
    """Factorized Riesz-map blocks; applies as a LinearOperator."""

    def __init__(self, cx: DeRhamComplex, params: assembly.Params):
        ctx = assembly.get_context(cx)
        p = params
        self.ctx = ctx
        self.params = p

        m_u = ctx.mass_u()
        a_u = ctx.stiffness_u()
        bdiv = ctx.div_up()
        m_p = ctx.mass_p()
        lumped_inv = sp.diags(1.0 / np.asarray(m_p.sum(axis=1)).ravel())
        p_u = (m_u / p.k + a_u / p.Re
               + (bdiv.T @ lumped_inv @ bdiv) / p.k).tocsr()

        c = cx.C.astype(float)
        m_b = ctx.mass_B()
        p_e = p.S * (ctx.mass_E() + (p.k / p.Rm) * (c.T @ m_b @ c))
        p_b = (p.S / p.Rm) * (m_b / p.k + ctx.divdiv_B())
        p_p = p.k * m_p

        mask = ctx.bc_mask
        self.blocks = {}
        for name, mat in (("u", p_u), ("E", p_e), ("B", p_b), ("p", p_p)):
            sub = mask[ctx.slices[name]]
            mat_bc, _ = assembly.apply_essential_bcs(mat.tocsr(),
                                                     np.zeros(mat.shape[0]),
                                                     sub)
            if not is_symmetric(mat_bc, 1e-10):
                raise ValueError(f"preconditioner block {name} not symmetric")
            self.blocks[name] = SparseLU(mat_bc)
        # Schur scale of the mean-pressure multiplier: w^T (k M_p)^-1 w
        # with w = M_p 1 equals |Omega| / k
        self.lagrange_scale = ctx.mesh.tet_volumes.sum() / p.k
        self.shape = (ctx.n_total, ctx.n_total)

    def apply(self, r):
        s = self.ctx.slices
        out = np.empty_like(r)
        for name in ("u", "E", "B", "p"):
            out[s[name]] = self.blocks[name].solve(r[s[name]])
        out[-1] = r[-1] / self.lagrange_scale
        return out

    def as_linear_operator(self):
        return spla.LinearOperator(self.shape, matvec=self.apply)


def build_block_preconditioner(cx, params) -> BlockPreconditioner:
    return BlockPreconditioner(cx, params)


def solve_block_system(system, method="direct", precond=None, tol=1e-8,
                       maxit=2000):
    """Solve an assembled BlockSystem; returns (x, info dict)."""
    if method == "direct":
        x = sparse_lu_solve(system.A, system.rhs)
        return x, {"iterations": 0, "method": "direct"}
    if method == "minres":
        if not system.symmetric:
            raise ValueError("minres path requires a symmetric scheme")
        m = precond.as_linear_operator() if precond is not None else None
        x, its = minres(system.A, system.rhs, M=m, tol=tol, maxit=maxit,
                        check_symmetry=False)
        return x, {"iterations": its, "method": "minres"}
    raise ValueError(f"unknown solver method {method!r}")
