"""Coefficient-vector state of the coupled system at one time level."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True, eq=False)
class State:
    """Coefficients (u, E, B, p) plus time stamp and step index.

    u: vector P2 velocity (3 per node, node-major), E: edge (Nedelec),
    B: face (Raviart-Thomas), p: vertex (P1).  States are never mutated;
    steps produce new instances.
    """

    u: np.ndarray
    E: np.ndarray
    B: np.ndarray
    p: np.ndarray
    t: float = 0.0
    n: int = 0

    def advanced(self, u, E, B, p, k):
        return replace(self, u=u, E=E, B=B, p=p, t=self.t + k, n=self.n + 1)


def zero_state(cx) -> State:
    """All-zero state sized for a given de Rham complex."""
    nv, ne, nf, _ = cx.counts
    return State(u=np.zeros(3 * (nv + ne)), E=np.zeros(ne),
                 B=np.zeros(nf), p=np.zeros(nv))
