"""Batch driver: config parsing and the five subcommands.

Subcommands: mesh-info, check-complex, run, convergence, precond-bench.
Configuration is plain ``key = value`` text with ``#`` comments; unknown
keys are hard errors.  Exit codes: 0 success, 1 numerical failure,
2 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import assembly, diagnostics, fields, io, linalg, solver
from .derham import build_complex
from .mesh import generate_structured_cube


class ConfigError(ValueError):
    """Malformed or contradictory run configuration."""


@dataclass
class RunConfig:
    n: int = 4
    box: tuple = (1.0, 1.0, 1.0)
    Re: float = 1.0
    Rm: float = 1.0
    S: float = 1.0
    k: float = 0.01
    steps: int = 10
    scheme: str = "picard"
    grad_div: bool = True
    solver: str = "direct"
    tol: float = 1e-8
    maxit: int = 2000
    initial: str = "decaying"
    source: str = "none"
    out: str = "."
    snapshot_stride: int = 0      # 0 disables VTK snapshots
    convergence_ns: tuple = (2, 4)

    def params(self) -> assembly.Params:
        return assembly.Params(Re=self.Re, Rm=self.Rm, S=self.S, k=self.k,
                               grad_div_on=self.grad_div)


_SCHEMES = ("picard", "symmetric", "newton", "nonlinear-picard",
            "nonlinear-newton")
_SOLVERS = ("direct", "minres")

_BOOL = {"on": True, "off": False, "true": True, "false": False,
         "1": True, "0": False, "yes": True, "no": False}


def _parse_value(key, raw, lineno):
    try:
        if key in ("n", "steps", "maxit", "snapshot_stride"):
            return int(raw)
        if key in ("re", "rm", "s", "k", "tol"):
            return float(raw)
        if key == "grad_div":
            return _BOOL[raw.lower()]
        if key == "box":
            parts = tuple(float(v) for v in raw.split(","))
            if len(parts) != 3:
                raise ValueError("need three extents")
            return parts
        if key == "convergence_ns":
            return tuple(int(v) for v in raw.split(","))
        return raw
    except (ValueError, KeyError) as err:
        raise ConfigError(f"line {lineno}: bad value for {key!r}: "
                          f"{raw!r} ({err})") from None


_KEY_TO_FIELD = {
    "n": "n", "box": "box", "re": "Re", "rm": "Rm", "s": "S", "k": "k",
    "steps": "steps", "scheme": "scheme", "grad_div": "grad_div",
    "solver": "solver", "tol": "tol", "maxit": "maxit",
    "initial": "initial", "source": "source", "out": "out",
    "snapshot_stride": "snapshot_stride", "convergence_ns": "convergence_ns",
}


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines; unknown keys and bad combos are errors."""
    cfg = RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', "
                              f"got {body!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        key = key.lower()
        if key not in _KEY_TO_FIELD:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        setattr(cfg, _KEY_TO_FIELD[key], _parse_value(key, raw, lineno))
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.n < 1:
        raise ConfigError("n must be >= 1")
    if min(cfg.box) <= 0:
        raise ConfigError("box extents must be positive")
    for name in ("Re", "Rm", "S", "k", "tol"):
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"{name} must be positive")
    if cfg.steps < 0 or cfg.maxit < 1:
        raise ConfigError("steps must be >= 0 and maxit >= 1")
    if cfg.scheme not in _SCHEMES:
        raise ConfigError(f"unknown scheme {cfg.scheme!r}; "
                          f"choose from {_SCHEMES}")
    if cfg.solver not in _SOLVERS:
        raise ConfigError(f"unknown solver {cfg.solver!r}")
    if cfg.solver == "minres" and cfg.scheme != "symmetric":
        raise ConfigError("solver = minres requires scheme = symmetric "
                          "(the other schemes are nonsymmetric)")
    if cfg.initial not in fields.INITIAL_CONDITIONS:
        raise ConfigError(f"unknown initial condition {cfg.initial!r}")
    if cfg.source not in fields.SOURCES:
        raise ConfigError(f"unknown source {cfg.source!r}")


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _setup(cfg):
    mesh = generate_structured_cube(cfg.n, cfg.box)
    cx = build_complex(mesh)
    ic = fields.INITIAL_CONDITIONS[cfg.initial]
    state0 = solver.initialize_state(cx, ic["u0"], ic["B0"],
                                     B0_potential=ic["B0_potential"])
    f = fields.SOURCES[cfg.source]
    sources = assembly.SourceData(f=f) if f is not None else None
    return cx, state0, sources


def cmd_mesh_info(cfg, out):
    mesh = generate_structured_cube(cfg.n, cfg.box)
    print(mesh.summary(), file=out)
    return 0


def cmd_check_complex(cfg, out):
    """Exactness, rank and commuting-diagram suite on n = 1..3 meshes."""
    ok = True
    for n in (1, 2, 3):
        mesh = generate_structured_cube(n)
        cx = build_complex(mesh)
        cg = abs((cx.C @ cx.G)).max() if (cx.C @ cx.G).nnz else 0
        dc = abs((cx.D @ cx.C)).max() if (cx.D @ cx.C).nnz else 0
        exact = (cg == 0 and dc == 0)

        nv, ne, nf, nt = cx.counts
        ranks = (np.linalg.matrix_rank(cx.G.toarray()),
                 np.linalg.matrix_rank(cx.C.toarray()),
                 np.linalg.matrix_rank(cx.D.toarray()))
        ranks_ok = ranks == (nv - 1, ne - nv + 1, nt)

        from .derham import discrete_div, interpolate
        b = interpolate(cx, mesh, 2, lambda p: p)
        div_ok = np.allclose(discrete_div(cx, b), 3.0, atol=1e-12)

        status = "ok" if (exact and ranks_ok and div_ok) else "FAIL"
        print(f"n={n}: C@G={cg} D@C={dc} ranks={ranks} "
              f"linear-div={'exact' if div_ok else 'WRONG'} [{status}]",
              file=out)
        ok = ok and exact and ranks_ok and div_ok
    return 0 if ok else 1


def cmd_run(cfg, out):
    cx, state0, sources = _setup(cfg)
    result = solver.run_transient(
        cx, cfg.scheme, state0, cfg.params(), cfg.steps, sources=sources,
        solver=cfg.solver, tol=cfg.tol, maxit=cfg.maxit)

    os.makedirs(cfg.out, exist_ok=True)
    csv_path = os.path.join(cfg.out, "ledger.csv")
    io.write_ledger_csv(result.ledger, csv_path)
    if cfg.snapshot_stride > 0:
        for state in result.states[::cfg.snapshot_stride]:
            io.write_vtk(cx, state,
                         os.path.join(cfg.out, f"snapshot_{state.n:04d}.vtk"))

    print(f"{cfg.steps} steps of {cfg.scheme} on n={cfg.n}: "
          f"max |div B| = {result.max_divb:.3e}, "
          f"energy-bound margin = {result.accumulated_margin:.6e} "
          f"(scale {result.energy_scale:.3e})", file=out)
    print(f"ledger written to {csv_path}", file=out)
    return 0


def cmd_convergence(cfg, out):
    """Manufactured-solution refinement study with the Picard step."""
    from .solver import initialize_state
    from .state import State

    exact = fields.TRIG_SOLUTION
    errors = {}
    for n in cfg.convergence_ns:
        mesh = generate_structured_cube(n, cfg.box)
        cx = build_complex(mesh)
        frozen = initialize_state(cx, exact.u, exact.B,
                                  B0_potential=exact.B_potential)
        params = cfg.params()
        sources = diagnostics.manufactured_sources(cx, exact, params, frozen)
        system = assembly.assemble_picard(cx, frozen, params, sources)
        x = linalg.sparse_lu_solve(system.A, system.rhs)
        u, e, b, p, _ = system.split(x)
        sol = State(u=u, E=e, B=b, p=p)
        errors[n] = diagnostics.l2_errors(cx, sol, exact)
        print(f"n={n}: " + "  ".join(f"{k}={v:.4e}"
                                     for k, v in errors[n].items()),
              file=out)

    orders = diagnostics.observed_orders(errors)
    for pair, od in orders.items():
        print(f"order {pair[0]}->{pair[1]}: "
              + "  ".join(f"{k}={v:.2f}" for k, v in od.items()), file=out)

    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "convergence.csv")
    with open(path, "w") as fh:
        keys = list(next(iter(errors.values())))
        fh.write("n," + ",".join(keys) + "\n")
        for n, err in errors.items():
            fh.write(f"{n}," + ",".join(f"{err[k]:.17g}" for k in keys) + "\n")
    print(f"errors written to {path}", file=out)
    return 0


def cmd_precond_bench(cfg, out):
    """MINRES iteration counts for the symmetric step across mesh sizes."""
    counts = {}
    for n in cfg.convergence_ns:
        sub = RunConfig(**{**cfg.__dict__, "n": n, "scheme": "symmetric",
                           "solver": "minres"})
        cx, state0, sources = _setup(sub)
        params = sub.params()
        system = assembly.assemble_symmetric_picard(cx, state0, params,
                                                    sources)
        precond = linalg.build_block_preconditioner(cx, params)
        x, its = linalg.minres(system.A, system.rhs,
                               M=precond.as_linear_operator(),
                               tol=sub.tol, maxit=sub.maxit,
                               check_symmetry=False)
        rel = np.linalg.norm(system.A @ x - system.rhs) \
            / np.linalg.norm(system.rhs)
        counts[n] = its
        print(f"n={n}: {its} preconditioned MINRES iterations "
              f"(relative residual {rel:.2e}, {system.size} dofs)", file=out)
    ns = sorted(counts)
    if len(ns) >= 2:
        lo, hi = counts[ns[0]], counts[ns[-1]]
        spread = abs(hi - lo) / max(lo, 1)
        print(f"iteration spread across meshes: {100 * spread:.0f}%",
              file=out)
    return 0


_COMMANDS = {
    "mesh-info": cmd_mesh_info,
    "check-complex": cmd_check_complex,
    "run": cmd_run,
    "convergence": cmd_convergence,
    "precond-bench": cmd_precond_bench,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mhdfem",
        description="divergence-exact mixed finite elements for "
                    "incompressible MHD")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", default=None,
                        help="path to a key = value configuration file")
    parser.add_argument("--out", default=None,
                        help="output directory (overrides config)")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.out is not None:
            cfg.out = args.out
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2

    try:
        return _COMMANDS[args.command](cfg, sys.stdout)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except Exception as err:      # numerical failure path
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
