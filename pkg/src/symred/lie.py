"""Geometry kernel for SO(3), its Lie algebra so(3) and the dual so(3)*.

Both so(3) and so(3)* are identified with R^3 through the hat map and the
Euclidean pairing. Under these identifications

* ``hat(v) @ w == cross(v, w)``,
* ``Ad_g xi == g @ xi``,
* ``Ad*_g mu == g.T @ mu`` (so that ``<Ad*_g mu, xi> = <mu, Ad_g xi>``),
* ``ad*_xi mu == cross(mu, xi)``.

Rotations, algebra vectors and coalgebra vectors are plain numpy arrays of
shape ``(3, 3)`` and ``(3,)``. Functions accept a leading batch axis where
noted; this is what the ensemble integrators rely on.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "NotSkew",
    "Degenerate",
    "hat",
    "vee",
    "exp_so3",
    "cross",
    "ad_star",
    "Ad",
    "Ad_star",
    "reorthonormalize",
    "orthogonality_defect",
    "is_rotation",
    "inertia_map",
    "random_rotation",
]

_TAYLOR_CUTOFF = 1e-4


class NotSkew(ValueError):
    """Raised by :func:`vee` when the input matrix is not skew-symmetric."""


class Degenerate(ValueError):
    """Raised when a matrix cannot be projected onto SO(3)."""


def hat(v):
    """Skew-symmetric matrix of ``v``, so that ``hat(v) @ w == v x w``.

    Accepts ``(..., 3)`` and returns ``(..., 3, 3)``.
    """
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vee(s, atol=1e-10):
    """Inverse of :func:`hat`.

    Raises:
        NotSkew: if ``||s + s^T|| > atol``.
    """
    s = np.asarray(s, dtype=float)
    if s.shape[-2:] != (3, 3):
        raise NotSkew(f"expected (..., 3, 3) matrix, got shape {s.shape}")
    asym = np.linalg.norm(s + np.swapaxes(s, -1, -2), axis=(-2, -1))
    if np.any(asym > atol):
        raise NotSkew(f"matrix is not skew-symmetric (||s + s^T|| = {np.max(asym):.3g})")
    return np.stack([s[..., 2, 1], s[..., 0, 2], s[..., 1, 0]], axis=-1)


def exp_so3(v):
    """Matrix exponential ``exp(hat(v))`` by the Rodrigues formula.

    For ``|v| < 1e-4`` the coefficients ``sin(t)/t`` and ``(1 - cos(t))/t^2``
    are replaced by their Taylor series. Accepts a leading batch axis.
    """
    v = np.asarray(v, dtype=float)
    theta2 = np.sum(v * v, axis=-1)
    theta = np.sqrt(theta2)
    small = theta < _TAYLOR_CUTOFF
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta2 / 6.0 + theta2**2 / 120.0, np.sin(safe) / safe)
    b = np.where(
        small,
        0.5 - theta2 / 24.0 + theta2**2 / 720.0,
        (1.0 - np.cos(safe)) / (safe * safe),
    )
    K = hat(v)
    a = np.asarray(a)[..., None, None]
    b = np.asarray(b)[..., None, None]
    return np.eye(3) + a * K + b * (K @ K)


def cross(a, b):
    """Broadcasting cross product; same arithmetic as ``np.cross``, less overhead."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def ad_star(xi, mu):
    """Infinitesimal coadjoint action ``ad*_xi mu = mu x xi``."""
    return cross(mu, xi)


def Ad(g, xi):
    """Adjoint action ``Ad_g xi = g xi``."""
    return np.einsum("...ij,...j->...i", g, xi)


def Ad_star(g, mu):
    """Coadjoint action ``Ad*_g mu = g^T mu``.

    Composition is contravariant: ``Ad_star(g @ h, mu) == Ad_star(h, Ad_star(g, mu))``.
    """
    return np.einsum("...ji,...j->...i", g, mu)


def orthogonality_defect(m):
    """Frobenius norm of ``m^T m - I``."""
    m = np.asarray(m, dtype=float)
    return np.linalg.norm(np.swapaxes(m, -1, -2) @ m - np.eye(3), axis=(-2, -1))


def is_rotation(m, atol=1e-10):
    m = np.asarray(m, dtype=float)
    if m.shape[-2:] != (3, 3):
        return False
    return bool(
        np.all(orthogonality_defect(m) <= atol)
        and np.all(np.abs(np.linalg.det(m) - 1.0) <= atol)
    )


def reorthonormalize(m):
    """Nearest rotation to ``m`` in the Frobenius norm (orthogonal polar factor).

    Raises:
        Degenerate: if ``m`` is singular or has non-positive determinant.
    """
    m = np.asarray(m, dtype=float)
    det = np.linalg.det(m)
    if np.any(~np.isfinite(det)) or np.any(det <= 0.0):
        raise Degenerate("cannot project a matrix with det <= 0 onto SO(3)")
    u, s, vt = np.linalg.svd(m)
    if np.any(s[..., -1] <= np.finfo(float).eps * s[..., 0]):
        raise Degenerate("matrix is numerically singular")
    return u @ vt


def inertia_map(lam):
    """Validate and return an inverse-inertia matrix (symmetric positive definite).

    A length-3 input is read as the diagonal.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape == (3,):
        lam = np.diag(lam)
    if lam.shape != (3, 3):
        raise ValueError(f"inverse inertia must be 3x3, got shape {lam.shape}")
    if np.linalg.norm(lam - lam.T) > 1e-12:
        raise ValueError("inverse inertia must be symmetric")
    if np.min(np.linalg.eigvalsh(lam)) <= 0.0:
        raise ValueError("inverse inertia must be positive definite")
    return lam


def random_rotation(rng, scale=np.pi, size=None):
    """Rotation ``exp_so3(scale * n)`` with ``n`` standard Gaussian."""
    shape = (3,) if size is None else (size, 3)
    return exp_so3(scale * rng.standard_normal(shape))
