"""Time integration for the coupled system.

Provides initial-data interpolation, the three one-step linearized schemes
(Picard, symmetric Picard, Newton), the fully nonlinear implicit-Euler step
solved by inner Picard or Newton iteration, and a transient driver that
writes the energy ledger.

Gauss-law bookkeeping: the magnetic update of every scheme reads, in
coefficients, b_new = b_old - k C e_new (plus solver residual), so the
discrete divergence of B is preserved exactly from divergence-free initial
data at every outer step and every inner iterate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import assembly, diagnostics, fem_core, linalg
from .derham import DeRhamComplex, discrete_div, interpolate
from .state import State, zero_state


class SolverError(RuntimeError):
    """Step-level failure (singular system, non-convergence)."""


class StepSizeWarning(UserWarning):
    """Time step exceeds the frozen-field stability threshold."""


SCHEMES = ("picard", "symmetric", "newton")
NONLINEAR_METHODS = ("picard", "newton")


def initialize_state(cx: DeRhamComplex, u0, B0, B0_potential=None) -> State:
    """Interpolate initial data; the magnetic field must be solenoidal.

    u0 is nodally interpolated (boundary DOFs zeroed), B0 by face fluxes.
    When ``B0_potential`` (a vector potential with B0 = curl A) is given,
    the fluxes are computed as edge circulations of A, which lands the
    coefficients exactly in the image of the discrete curl: the discrete
    divergence is then zero in exact arithmetic even for non-polynomial
    fields whose raw flux quadrature would leave a small residue.
    """
    mesh = cx.mesh
    ctx = assembly.get_context(cx)

    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]]
                       + mesh.vertices[mesh.edges[:, 1]])
    nodes = np.vstack([mesh.vertices, midpoints])
    uvals = np.zeros((len(nodes), 3)) if u0 is None \
        else np.asarray(u0(nodes), dtype=float)
    u = uvals.reshape(-1)
    u[ctx.u_bc] = 0.0

    if B0_potential is not None:
        b = cx.C.astype(float) @ interpolate(cx, mesh, 1, B0_potential)
    elif B0 is None:
        b = np.zeros(mesh.num_faces)
    else:
        b = interpolate(cx, mesh, 2, B0)
    b[cx.boundary_face_mask] = 0.0

    scale = max(np.abs(b).max(), 1.0)
    div = np.abs(discrete_div(cx, b)).max()
    if div > 1e-8 * scale:
        raise SolverError(
            f"initial magnetic field is not discretely divergence-free "
            f"(max cell divergence {div:.3e}, coefficient scale {scale:.3e});"
            " pass a vector potential or project the data first")

    return State(u=u, E=np.zeros(mesh.num_edges), B=b,
                 p=np.zeros(mesh.num_vertices), t=0.0, n=0)


def b_infinity_estimate(cx, b) -> float:
    """Max |B| over the 4 vertices and barycenter of each tet.

    Face-element fields are linear per tet, so vertex/barycenter sampling
    estimates the true cellwise max up to a small factor.
    """
    ctx = assembly.get_context(cx)
    mesh = cx.mesh
    lam = np.vstack([np.eye(4), np.full((1, 4), 0.25)])
    vals = fem_core._rt0_values(lam, ctx.grads)          # (nT,4,5,3)
    field = np.einsum("tjqd,tj->tqd", vals, b[mesh.tet2face])
    return float(np.linalg.norm(field, axis=-1).max())


def _warn_step_size(cx, state_minus, params):
    binf = b_infinity_estimate(cx, state_minus.B)
    if binf == 0.0:
        return
    k_max = 1.0 / (8.0 * params.S * binf ** 2)
    if params.k > k_max:
        warnings.warn(
            f"time step k={params.k:.3e} exceeds the well-posedness "
            f"threshold 1/(8 S) |B|_inf^-2 = {k_max:.3e}; the frozen-field "
            "coercivity estimate no longer applies", StepSizeWarning,
            stacklevel=3)


_ASSEMBLERS = {
    "picard": assembly.assemble_picard,
    "symmetric": assembly.assemble_symmetric_picard,
    "newton": assembly.assemble_newton,
}


def _solve_system(system, solver="direct", precond=None, tol=1e-8,
                  maxit=2000, context=""):
    try:
        x, info = linalg.solve_block_system(system, method=solver,
                                            precond=precond, tol=tol,
                                            maxit=maxit)
    except linalg.SingularMatrixError as err:
        raise SolverError(f"linear solve failed {context}: {err}") from err
    return x, info


def step_linearized(cx, scheme: str, state_minus: State, params,
                    sources=None, solver="direct", precond=None,
                    tol=1e-8, maxit=2000):
    """Advance one time step with the selected linearized scheme.

    Returns (state, step_info); step_info carries the pieces the energy
    ledger needs (forcing load, Joule norm, forcing dual norm).
    """
    if scheme not in SCHEMES:
        raise SolverError(f"unknown scheme {scheme!r}")
    _warn_step_size(cx, state_minus, params)
    system = _ASSEMBLERS[scheme](cx, state_minus, params, sources)
    x, info = _solve_system(system, solver=solver, precond=precond, tol=tol,
                            maxit=maxit, context=f"(step {state_minus.n + 1})")
    u, e, b, p, _ = system.split(x)
    new = state_minus.advanced(u, e, b, p, params.k)
    info.update(_step_diagnostics(cx, scheme, new, state_minus, params,
                                  sources))
    return new, info


def _forcing_load(cx, sources):
    ctx = assembly.get_context(cx)
    if sources is None or sources.f is None:
        return np.zeros(ctx.n_u)
    return ctx.load_velocity(sources.f)


def _step_diagnostics(cx, scheme, state, prev, params, sources):
    """Joule norm and forcing data for the ledger, scheme-aware."""
    ctx = assembly.get_context(cx)
    u_q = ctx.velocity_at_q(state.u)
    e_q = ctx.edge_field_at_q(state.E)
    # linearized schemes carry j = E + u x B-, the nonlinear step j at B
    b_for_j = state.B if scheme == "nonlinear" else prev.B
    j = e_q + np.cross(u_q, ctx.face_field_at_q(b_for_j))
    joule_sq = float(np.einsum("tq,tqd,tqd->", ctx.wdet, j, j))
    return {"joule_sq": joule_sq, "f_load": _forcing_load(cx, sources)}


def solve_nonlinear_step(cx, method: str, state_minus: State, params,
                         sources=None, tol=1e-8, maxit=50, solver="direct"):
    """One implicit-Euler step of the nonlinear system via inner iteration.

    Inner iterates start from the previous time level.  Stopping is on the
    relative weighted-norm increment; the returned info carries the
    increment history and the final nonlinear residual (relative algebraic
    residual of the nonlinear equations).
    """
    if method not in NONLINEAR_METHODS:
        raise SolverError(f"unknown nonlinear method {method!r}")
    if method == "picard":
        def assembler(*args, **kw):
            return assembly.assemble_picard(*args, **kw)
    else:
        # the inner Newton linearizes the skew convection so that its
        # fixed point is the same (skew-form) nonlinear step as Picard's
        def assembler(*args, **kw):
            return assembly.assemble_newton(*args, skew_convection=True,
                                            **kw)
    _warn_step_size(cx, state_minus, params)
    ops = diagnostics._norm_ops(cx)

    current = state_minus
    history = []
    for m in range(1, maxit + 1):
        system = assembler(cx, state_minus, params, sources, frozen=current)
        x, _ = _solve_system(system, solver=solver,
                             context=f"(inner iterate {m})")
        u, e, b, p, _ = system.split(x)
        inc = ops.xnorm_increment(u - current.u, e - current.E,
                                  b - current.B, p - current.p, params)
        nxt = State(u=u, E=e, B=b, p=p, t=state_minus.t, n=state_minus.n)
        ref = ops.xnorm_increment(u, e, b, p, params)
        history.append(inc)
        current = nxt
        if inc <= tol * max(ref, 1e-30):
            break
    else:
        raise SolverError(
            f"inner {method} iteration did not converge in {maxit} steps; "
            f"relative increments: {[f'{h:.2e}' for h in history]}")

    residual = _nonlinear_residual(cx, current, state_minus, params, sources)
    new = state_minus.advanced(current.u, current.E, current.B, current.p,
                               params.k)
    info = {"iterations": len(history), "increments": history,
            "nonlinear_residual": residual}
    info.update(_step_diagnostics(cx, "nonlinear", new, state_minus, params,
                                  sources))
    return new, info


def _nonlinear_residual(cx, state, state_minus, params, sources):
    """Relative algebraic residual of the nonlinear one-step equations.

    The Picard operator frozen at the current state, applied to the
    current state, reproduces the nonlinear forms exactly (the skew
    convection and j = E + u x B are evaluated at the state itself).
    """
    system = assembly.assemble_picard(cx, state_minus, params, sources,
                                      frozen=state)
    x = np.concatenate([state.u, state.E, state.B, state.p, [0.0]])
    x[system.bc_mask] = 0.0
    r = system.A @ x - system.rhs
    return float(np.linalg.norm(r) / max(np.linalg.norm(system.rhs), 1e-30))


@dataclass
class TransientResult:
    states: list
    ledger: diagnostics.EnergyLedger
    max_divb: float
    accumulated_margin: float
    energy_scale: float


def run_transient(cx, scheme, state0: State, params, steps, sources=None,
                  solver="direct", tol=1e-8, maxit=2000,
                  nonlinear_tol=1e-8, nonlinear_maxit=50,
                  keep_states=True) -> TransientResult:
    """March ``steps`` time steps and collect the energy ledger.

    ``scheme`` is one of picard | symmetric | newton for the linearized
    one-step schemes, or nonlinear-picard | nonlinear-newton for the fully
    nonlinear step with inner iteration.
    """
    precond = None
    if solver == "minres":
        precond = linalg.build_block_preconditioner(cx, params)
    ledger = diagnostics.EnergyLedger(cx, params)
    ledger.start(state0)
    p_u = precond.blocks["u"] if precond is not None else None

    states = [state0]
    state = state0
    max_divb = 0.0
    for step in range(steps):
        try:
            if scheme.startswith("nonlinear-"):
                state_new, info = solve_nonlinear_step(
                    cx, scheme.split("-", 1)[1], state, params, sources,
                    tol=nonlinear_tol, maxit=nonlinear_maxit, solver=solver)
            else:
                state_new, info = step_linearized(
                    cx, scheme, state, params, sources, solver=solver,
                    precond=precond, tol=tol, maxit=maxit)
        except SolverError as err:
            raise SolverError(f"step {step + 1} failed: {err}") from err

        f_load = info["f_load"]
        if p_u is None:
            p_u = _velocity_riesz(cx, params)
        f_dual_sq = float(f_load @ p_u.solve(f_load))
        ledger.record(state_new, state, f_load, info["joule_sq"], f_dual_sq)
        max_divb = max(max_divb, ledger.rows[-1].divb_max)
        state = state_new
        if keep_states:
            states.append(state)

    if not keep_states:
        states = [state0, state]
    return TransientResult(states=states, ledger=ledger, max_divb=max_divb,
                           accumulated_margin=ledger.accumulated_margin(),
                           energy_scale=ledger.energy_scale())


_VEL_RIESZ_CACHE = {}


def _velocity_riesz(cx, params):
    """Factorized velocity-norm block for the forcing dual-norm proxy."""
    key = (id(cx), params.k, params.Re)
    lu = _VEL_RIESZ_CACHE.get(key)
    if lu is None:
        precond = linalg.build_block_preconditioner(cx, params)
        lu = precond.blocks["u"]
        _VEL_RIESZ_CACHE[key] = lu
    return lu
