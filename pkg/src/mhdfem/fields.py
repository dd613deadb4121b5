"""Named analytic fields: initial conditions, forcings, exact solutions.

Everything is vectorized over point arrays of shape (n, 3) and scaled to a
unit box.  The solenoidal magnetic data come with their vector potential so
initialization can place the fluxes exactly in the image of the discrete
curl.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PI = np.pi


def _sincos(pts):
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    return (np.sin(PI * x), np.sin(PI * y), np.sin(PI * z),
            np.cos(PI * x), np.cos(PI * y), np.cos(PI * z))


def bump(pts):
    """Scalar sin(pi x) sin(pi y) sin(pi z), zero on the box boundary."""
    sx, sy, sz, _, _, _ = _sincos(pts)
    return sx * sy * sz


def velocity_bump(pts):
    """Velocity with all components proportional to the boundary bump."""
    psi = bump(pts)
    return np.stack([psi, psi, -2.0 * psi], axis=-1)


def grad_velocity_bump(pts):
    sx, sy, sz, cx, cy, cz = _sincos(pts)
    g = PI * np.stack([cx * sy * sz, sx * cy * sz, sx * sy * cz], axis=-1)
    return np.stack([g, g, -2.0 * g], axis=-2)   # (n, comp, deriv)


def potential_bump(pts):
    """Vector potential (psi, psi, psi); its curl is tangential-free B."""
    psi = bump(pts)
    return np.stack([psi, psi, psi], axis=-1)


def magnetic_trig(pts):
    """curl of potential_bump: solenoidal, zero normal trace on the box."""
    sx, sy, sz, cx, cy, cz = _sincos(pts)
    b1 = PI * sx * (cy * sz - sy * cz)
    b2 = PI * sy * (cz * sx - sz * cx)
    b3 = PI * sz * (cx * sy - sx * cy)
    return np.stack([b1, b2, b3], axis=-1)


def electric_trig(pts):
    """Tangential-free edge-space data: e_i vanishes where it is tangential."""
    sx, sy, sz, _, _, _ = _sincos(pts)
    return np.stack([sy * sz, sz * sx, sx * sy], axis=-1)


def curl_electric_trig(pts):
    sx, sy, sz, cx, cy, cz = _sincos(pts)
    c1 = PI * (sx * cy - cz * sx)
    c2 = PI * (sy * cz - cx * sy)
    c3 = PI * (sz * cx - cy * sz)
    return np.stack([c1, c2, c3], axis=-1)


def pressure_trig(pts):
    """cos products: mean-zero over the unit box."""
    _, _, _, cx, cy, cz = _sincos(pts)
    return cx * cy * cz


def forcing_gentle(pts):
    """Smooth momentum forcing of moderate amplitude."""
    sx, sy, sz, cx, cy, cz = _sincos(pts)
    return 0.1 * np.stack([sy * sz, sx * sz, sx * sy], axis=-1)


@dataclass(frozen=True)
class ExactSolution:
    """Bundle of callables for the manufactured-solution harness."""

    u: object
    grad_u: object
    E: object
    curl_E: object
    B: object
    p: object
    B_potential: object = None


TRIG_SOLUTION = ExactSolution(
    u=velocity_bump, grad_u=grad_velocity_bump,
    E=electric_trig, curl_E=curl_electric_trig,
    B=magnetic_trig, p=pressure_trig, B_potential=potential_bump)


# catalog amplitudes keep |B| small enough that the default time step sits
# inside the frozen-field well-posedness threshold k <= 1/(8S) |B|_inf^-2
_B_SCALE = 1.0 / PI ** 2
_U_SCALE = 0.3


def initial_velocity(pts):
    return _U_SCALE * velocity_bump(pts)


def initial_magnetic(pts):
    return _B_SCALE * magnetic_trig(pts)


def initial_potential(pts):
    return _B_SCALE * potential_bump(pts)


INITIAL_CONDITIONS = {
    "zero": {"u0": None, "B0": None, "B0_potential": None},
    "decaying": {"u0": initial_velocity, "B0": initial_magnetic,
                 "B0_potential": initial_potential},
    "magnetic-only": {"u0": None, "B0": initial_magnetic,
                      "B0_potential": initial_potential},
}

SOURCES = {
    "none": None,
    "gentle": forcing_gentle,
}
