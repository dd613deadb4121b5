"""Weighted norms, per-step energy bookkeeping and convergence studies.

The time-step-weighted norms
    |u|_{1,k}^2    = k^-1 |u|^2 + |grad u|^2 + k^-1 |P div u|^2
    |E|_{curl,k}^2 = |E|^2 + k |curl E|^2
    |B|_{div,k}^2  = k^-1 |B|^2 + |div B|^2
    |p|_{0,k}^2    = k |p|^2
(with P the L2 projection onto the pressure space) make the one-step
linearized problems uniformly well-posed, so they are the right yardstick
for increments, stopping tests and stability margins.

The energy ledger records, per accepted step, the kinetic and magnetic
energies, dissipation and Joule terms, the residual of the per-step energy
identity, the margin of the per-step energy inequality, and the divergence
of B.  All inner products reuse the assembly quadrature so identities that
hold in exact arithmetic hold here to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import assembly, linalg
from .derham import discrete_div
from .state import State


class NormOperators:
    """Matrices behind the weighted norms, built once per complex."""

    def __init__(self, cx):
        ctx = assembly.get_context(cx)
        self.ctx = ctx
        self.cx = cx
        self.M_u = ctx.mass_u()
        self.A_u = ctx.stiffness_u()
        self.M_E = ctx.mass_E()
        self.M_B = ctx.mass_B()
        self.M_p = ctx.mass_p()
        self.Bdiv = ctx.div_up()
        self.DD = ctx.divdiv_B()
        self.C = cx.C.astype(float)
        self._mp_lu = linalg.SparseLU(self.M_p.tocsc())

    def l2_u(self, u):
        return float(u @ (self.M_u @ u))

    def h1semi_u(self, u):
        return float(u @ (self.A_u @ u))

    def pdiv_u(self, u):
        """|P div u|^2 via the pressure mass solve."""
        d = self.Bdiv @ u
        return float(d @ self._mp_lu.solve(d))

    def norms(self, state: State, params) -> dict:
        k = params.k
        u, e, b, p = state.u, state.E, state.B, state.p
        ce = self.C @ e
        n_u2 = self.l2_u(u) / k + self.h1semi_u(u) + self.pdiv_u(u) / k
        n_e2 = float(e @ (self.M_E @ e)) + k * float(ce @ (self.M_B @ ce))
        n_b2 = float(b @ (self.M_B @ b)) / k + float(b @ (self.DD @ b))
        n_p2 = k * float(p @ (self.M_p @ p))
        return {
            "u_1k": np.sqrt(n_u2), "E_curlk": np.sqrt(n_e2),
            "B_divk": np.sqrt(n_b2), "p_0k": np.sqrt(n_p2),
            "X": np.sqrt(n_u2 + n_e2 + n_b2),
        }

    def xnorm_increment(self, du, de, db, dp, params):
        z = np.zeros_like(dp)
        s = State(u=du, E=de, B=db, p=z)
        n = self.norms(s, params)
        return np.sqrt(n["X"] ** 2 + params.k * float(dp @ (self.M_p @ dp)))


def weighted_norms(cx, state: State, params) -> dict:
    """Weighted norms of one state (builds/reuses the norm operators)."""
    return _norm_ops(cx).norms(state, params)


_NORM_CACHE = {}


def _norm_ops(cx) -> NormOperators:
    ops = _NORM_CACHE.get(id(cx))
    if ops is None or ops.cx is not cx:
        ops = NormOperators(cx)
        _NORM_CACHE[id(cx)] = ops
    return ops


def divb_monitor(cx, b) -> dict:
    """Max-over-tets and L2 norm of the cellwise divergence of B."""
    div = discrete_div(cx, b)
    vols = cx.mesh.tet_volumes
    return {"max": float(np.abs(div).max()),
            "l2": float(np.sqrt((vols * div ** 2).sum()))}


# ---------------------------------------------------------------------------
# energy ledger
# ---------------------------------------------------------------------------

@dataclass
class LedgerRow:
    """One accepted step.  Column order is the CSV schema."""

    t: float
    kinetic: float            # 1/2 |u|^2
    magnetic: float           # S/(2 Rm) |B|^2
    viscous: float            # 1/Re |grad u|^2
    joule: float              # S |j|^2
    identity_residual: float  # relative residual of the per-step identity
    theorem5_margin: float    # rhs - lhs of the per-step energy inequality
    divb_max: float
    divb_l2: float
    norm_u_1k: float
    norm_E_curlk: float
    norm_B_divk: float
    norm_p_0k: float


CSV_COLUMNS = [f.name for f in fields(LedgerRow)]


class EnergyLedger:
    """Per-step records plus the running sums behind the accumulated bound."""

    def __init__(self, cx, params):
        self.cx = cx
        self.params = params
        self.rows: list[LedgerRow] = []
        self._ops = _norm_ops(cx)
        self._sum_visc = 0.0      # sum_j (k/Re) |grad u^j|^2
        self._sum_joule = 0.0     # sum_j 2 k S |j^j|^2
        self._sum_force = 0.0     # sum_j k Re (dual-norm proxy of f^j)^2
        self._max_energy = 0.0    # max_j |u^j|^2 + S/Rm |B^j|^2
        self._initial_energy = None
        self._worst_margin = np.inf

    def total_energy(self, state):
        p = self.params
        return (self._ops.l2_u(state.u)
                + p.S / p.Rm * float(state.B @ (self._ops.M_B @ state.B)))

    def start(self, state):
        e0 = self.total_energy(state)
        self._initial_energy = e0
        self._max_energy = e0

    def record(self, state, prev, f_load, joule_sq, f_dual_sq) -> LedgerRow:
        """Append one step; inner products use the assembly operators."""
        ops, p = self._ops, self.params
        m_u, m_b, a_u = ops.M_u, ops.M_B, ops.A_u
        du = state.u - prev.u
        db = state.B - prev.B
        visc = ops.h1semi_u(state.u) / p.Re
        f_dot_u = float(f_load @ state.u)
        mag_rate = p.S / p.Rm * float(db @ (m_b @ state.B)) / p.k
        kin_rate = float(du @ (m_u @ state.u)) / p.k
        identity = kin_rate + mag_rate + visc + p.S * joule_sq - f_dot_u
        scale = max(abs(visc), p.S * joule_sq, abs(f_dot_u),
                    abs(kin_rate), abs(mag_rate), 1e-30)

        e_now = self.total_energy(state)
        e_prev = self.total_energy(prev)
        margin = (e_prev + 2 * p.k * f_dot_u
                  - (e_now + 2 * p.k / p.Re * ops.h1semi_u(state.u)
                     + 2 * p.k * p.S * joule_sq))

        div = divb_monitor(self.cx, state.B)
        norms = ops.norms(state, p)
        row = LedgerRow(
            t=state.t, kinetic=0.5 * ops.l2_u(state.u),
            magnetic=0.5 * p.S / p.Rm * float(state.B @ (m_b @ state.B)),
            viscous=visc, joule=p.S * joule_sq,
            identity_residual=identity / scale, theorem5_margin=margin,
            divb_max=div["max"], divb_l2=div["l2"],
            norm_u_1k=norms["u_1k"], norm_E_curlk=norms["E_curlk"],
            norm_B_divk=norms["B_divk"], norm_p_0k=norms["p_0k"])
        self.rows.append(row)

        if self._initial_energy is None:
            self.start(prev)
        self._sum_visc += p.k / p.Re * ops.h1semi_u(state.u)
        self._sum_joule += 2 * p.k * p.S * joule_sq
        self._sum_force += p.k * p.Re * f_dual_sq
        self._max_energy = max(self._max_energy, e_now)
        # prefix form of the accumulated bound: for every n,
        #   E_n + sum_{j<=n} [(k/Re)|grad u|^2 + 2kS|j|^2]
        #     <= E_0 + k Re sum_{j<=n} |f|_*^2,
        # and max_{j<=n} E_j obeys the same right-hand side
        rhs_n = self._initial_energy + self._sum_force
        lhs_n = max(e_now + self._sum_visc + self._sum_joule,
                    self._max_energy)
        self._worst_margin = min(self._worst_margin, rhs_n - lhs_n)
        return row

    def accumulated_margin(self) -> float:
        """Worst margin of the accumulated energy bound over all step
        prefixes (>= 0 up to roundoff; the forcing dual norm is the
        discrete velocity-Riesz proxy)."""
        return float(self._worst_margin)

    def energy_scale(self) -> float:
        return max(self._max_energy, self._initial_energy or 0.0, 1e-30)

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(f"{getattr(row, c):.17g}"
                                  for c in CSV_COLUMNS))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# manufactured-solution convergence harness
# ---------------------------------------------------------------------------

def manufactured_sources(cx, exact, params, frozen: State):
    """Source loads making ``exact`` solve the one-step Picard system.

    ``exact`` provides callables u, grad_u, E, curl_E, B, p on point
    arrays; the linearization/convection state is the discrete ``frozen``
    (its own interpolation error becomes part of the data).  Loads are
    integrated with the assembly quadrature, so an exact solution lying in
    the discrete spaces is reproduced to solver precision.
    """
    ctx = assembly.get_context(cx)
    p = params
    q = ctx.qpts.reshape(-1, 3)
    shape = ctx.qpts.shape[:2]

    u_ex = np.asarray(exact.u(q)).reshape(shape + (3,))
    gu_ex = np.asarray(exact.grad_u(q)).reshape(shape + (3, 3))
    e_ex = np.asarray(exact.E(q)).reshape(shape + (3,))
    ce_ex = np.asarray(exact.curl_E(q)).reshape(shape + (3,))
    b_ex = np.asarray(exact.B(q)).reshape(shape + (3,))
    p_ex = np.asarray(exact.p(q)).reshape(shape)

    um = ctx.velocity_at_q(frozen.u)
    bm = ctx.face_field_at_q(frozen.B)

    # momentum row: k^-1 (u* - u-, v) + skew convection + viscous
    #               + S (j*, v x B-) - (p*, div v)
    j_ex = e_ex + np.cross(u_ex, bm)
    adv = np.einsum("tqd,tqcd->tqc", um, gu_ex)
    f_vals = (u_ex - um) / p.k + 0.5 * adv + p.S * np.cross(bm, j_ex)
    f_load = ctx.load_velocity(f_vals)
    # the transposed half of the skew form: -1/2 (u-.grad v, u*)
    skew2 = np.einsum("tq,tqd,taqd,tqc->tac", ctx.wdet, um, ctx.p2g,
                      u_ex).reshape(-1, 30)
    f_load -= 0.5 * ctx._vec(skew2, ctx.u_dofs, ctx.n_u)
    # viscous (1/Re)(grad u*, grad v)
    visc = np.einsum("tq,tqcd,taqd->tac", ctx.wdet, gu_ex / p.Re,
                     ctx.p2g).reshape(-1, 30)
    f_load += ctx._vec(visc, ctx.u_dofs, ctx.n_u)
    # pressure: -(p*, div v)
    pdiv = np.einsum("tq,tq,taqc->tac", ctx.wdet, p_ex,
                     ctx.p2g).reshape(-1, 30)
    f_load -= ctx._vec(pdiv, ctx.u_dofs, ctx.n_u)

    # edge row: S (j*, F) - (S/Rm)(B*, curl F)
    r_load = p.S * ctx.load_edge(j_ex)
    curl_part = np.einsum("tq,tqd,tid->ti", ctx.wdet, b_ex, ctx.nd0_curl)
    r_load -= p.S / p.Rm * ctx._vec(curl_part, ctx.e_dofs, ctx.n_e)

    # face row: (S/Rm)[(curl E*, C) + k^-1 (B* - B-, C)]
    l_load = p.S / p.Rm * ctx.load_face(ce_ex + (b_ex - bm) / p.k)

    # continuity row: (div u*, q)
    div_u = np.einsum("tqcc->tq", gu_ex)
    g_load = ctx.load_pressure(div_u)

    return assembly.SourceData(f=f_load, r=r_load, l=l_load, g=g_load,
                               l_div_free=True)


def l2_errors(cx, state: State, exact) -> dict:
    """L2 errors of (u, E, B, p) and the H1 seminorm error of u."""
    ctx = assembly.get_context(cx)
    q = ctx.qpts.reshape(-1, 3)
    shape = ctx.qpts.shape[:2]

    du = ctx.velocity_at_q(state.u) - np.asarray(exact.u(q)).reshape(shape + (3,))
    dgu = (ctx.velocity_grad_at_q(state.u)
           - np.asarray(exact.grad_u(q)).reshape(shape + (3, 3)))
    de = ctx.edge_field_at_q(state.E) - np.asarray(exact.E(q)).reshape(shape + (3,))
    db = ctx.face_field_at_q(state.B) - np.asarray(exact.B(q)).reshape(shape + (3,))
    dp = ctx.pressure_at_q(state.p) - np.asarray(exact.p(q)).reshape(shape)

    def nrm(v):
        return float(np.sqrt(np.einsum("tq,tq...->", ctx.wdet, v ** 2)))

    return {"u": nrm(du), "u_h1": nrm(dgu), "E": nrm(de), "B": nrm(db),
            "p": nrm(dp)}


def observed_orders(errors_by_n: dict) -> dict:
    """log2 error ratios between consecutive dyadic refinements."""
    ns = sorted(errors_by_n)
    out = {}
    for a, b in zip(ns, ns[1:]):
        if 2 * a != b:
            continue
        out[(a, b)] = {
            key: float(np.log2(errors_by_n[a][key]
                               / max(errors_by_n[b][key], 1e-300)))
            for key in errors_by_n[a]}
    return out
