"""Plane elasticity around an elliptical hole in an infinite plate.

Complex-potential solution (Kolosov-Muskhelishvili) for a traction-free
elliptical hole under remote uniaxial tension.  The exterior of the hole is
the image of ``|zeta| >= 1`` under

    z = omega(zeta) = R * (zeta + m / zeta),   R = (a + b) / 2,  m = (a - b) / (a + b)

with the semi-axis ``a`` on the local x axis.  Stresses follow from

    sxx + syy             = 4 Re Phi(z)
    syy - sxx + 2 i sxy   = 2 (conj(z) Phi'(z) + Psi(z))

where ``Phi = phi'(z)`` and ``Psi = psi'(z)``.
"""

from __future__ import annotations

import numpy as np


def inverse_map(z: np.ndarray, a: float, b: float) -> np.ndarray:
    """Map physical points outside the hole back to ``|zeta| >= 1``.

    The quadratic ``R zeta^2 - z zeta + R m = 0`` has two roots whose product
    is ``m``; the exterior root is the one of larger modulus.  Points inside
    the hole have no exterior pre-image and must be masked by the caller.
    """
    R = 0.5 * (a + b)
    m = (a - b) / (a + b)
    z = np.asarray(z, dtype=complex)
    disc = np.sqrt(z * z - 4.0 * R * R * m)
    r1 = (z + disc) / (2.0 * R)
    r2 = (z - disc) / (2.0 * R)
    return np.where(np.abs(r1) >= np.abs(r2), r1, r2)


def potentials(zeta, a, b, load_angle, sigma):
    """Return ``phi, psi`` evaluated at ``zeta`` (used by boundary checks)."""
    R = 0.5 * (a + b)
    m = (a - b) / (a + b)
    e2 = np.exp(2j * load_angle)
    phi = 0.25 * sigma * R * (zeta + (2.0 * e2 - m) / zeta)
    num = zeta**2 * (1.0 + m * m) - e2 * (1.0 + m * zeta**2)
    den = zeta * (zeta**2 - m)
    psi = -0.5 * sigma * R * (np.conj(e2) * zeta + num / den)
    return phi, psi


def hole_stresses(x, y, a: float, b: float, load_angle: float, sigma: float):
    """Cartesian stresses at ``(x, y)`` in the hole frame.

    Parameters
    ----------
    x, y : array_like
        Coordinates relative to the hole centre, ``x`` along semi-axis ``a``.
        Every point must lie outside the hole.
    a, b : float
        Semi-axes along local x and y.
    load_angle : float
        Angle of the remote tension direction measured from local x.
    sigma : float
        Remote tension magnitude.

    Returns
    -------
    sxx, syy, sxy : ndarray
    """
    R = 0.5 * (a + b)
    m = (a - b) / (a + b)
    e2 = np.exp(2j * load_angle)
    z = np.asarray(x, dtype=float) + 1j * np.asarray(y, dtype=float)
    zeta = inverse_map(z, a, b)

    c = 2.0 * e2 - m
    k = 0.25 * sigma * R
    dphi = k * (1.0 - c / zeta**2)
    d2phi = k * (2.0 * c / zeta**3)

    dom = R * (1.0 - m / zeta**2)
    d2om = R * (2.0 * m / zeta**3)

    num = zeta**2 * (1.0 + m * m) - e2 * (1.0 + m * zeta**2)
    dnum = 2.0 * zeta * (1.0 + m * m) - 2.0 * e2 * m * zeta
    den = zeta**3 - m * zeta
    dden = 3.0 * zeta**2 - m
    dpsi = -0.5 * sigma * R * (np.conj(e2) + (dnum * den - num * dden) / den**2)

    Phi = dphi / dom
    dPhi = (d2phi * dom - dphi * d2om) / dom**2 / dom
    Psi = dpsi / dom

    tr = 4.0 * Phi.real
    dev = 2.0 * (np.conj(z) * dPhi + Psi)
    sxx = 0.5 * (tr - dev.real)
    syy = 0.5 * (tr + dev.real)
    sxy = 0.5 * dev.imag
    return sxx, syy, sxy


def von_mises(sxx, syy, sxy):
    """Plane-stress von Mises equivalent stress."""
    return np.sqrt(sxx * sxx - sxx * syy + syy * syy + 3.0 * sxy * sxy)
