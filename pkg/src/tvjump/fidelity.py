"""Convex data terms ``psi`` acting on the residual ``w - f``.

Two families ship: the squared Euclidean norm and the isotropic Huber
function. Every routine broadcasts over leading axes, the last axis holding
the ``n`` channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Fidelity",
    "psi_value",
    "psi_grad",
    "psi_hessian",
    "psi_prox",
    "psi_conj",
    "quadratic_A_matrix",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


@dataclass(frozen=True)
class Fidelity:
    """``family`` is ``"l2"`` (``|v|^2/2``) or ``"huber"`` with threshold ``delta``."""

    family: str = "l2"
    delta: float | None = None

    def __post_init__(self):
        fam = self.family.lower()
        if fam in ("squaredl2", "squared_l2"):
            fam = "l2"
        object.__setattr__(self, "family", fam)
        if fam not in ("l2", "huber"):
            raise ValueError(f"unknown fidelity family {self.family!r}")
        if fam == "huber" and not (self.delta is not None and self.delta > 0):
            raise ValueError("Huber threshold must be positive")

    @classmethod
    def squared_l2(cls) -> "Fidelity":
        return cls("l2")

    @classmethod
    def huber(cls, delta: float) -> "Fidelity":
        return cls("huber", float(delta))

    @property
    def lambda_bound(self) -> float:
        """Lower bound of the Hessian eigenvalues."""
        return 1.0 if self.family == "l2" else 0.0

    @property
    def Lambda_bound(self) -> float:
        """Upper bound of the Hessian eigenvalues."""
        return 1.0

    def __str__(self):
        return "l2" if self.family == "l2" else f"huber:{self.delta:g}"


def _as_float(out):
    return float(out) if np.ndim(out) == 0 else out


def _norm(v):
    return np.sqrt(np.sum(v * v, axis=-1))


def psi_value(phi: Fidelity, v):
    """``psi(v)``."""
    v = np.asarray(v, dtype=float)
    r = _norm(v)
    if phi.family == "l2":
        return _as_float(0.5 * r**2)
    d = phi.delta
    return _as_float(np.where(r <= d, 0.5 * r**2, d * r - 0.5 * d * d))


def psi_grad(phi: Fidelity, v) -> np.ndarray:
    """``D psi(v)``; for Huber this is ``v`` clipped radially to ``|.| <= delta``."""
    v = np.asarray(v, dtype=float)
    if phi.family == "l2":
        return v.copy()
    r = _norm(v)[..., None]
    return v * np.minimum(1.0, phi.delta / np.maximum(r, 1e-300))


def psi_hessian(phi: Fidelity, v) -> np.ndarray:
    """``D^2 psi(v)``, shape ``(..., n, n)``. On the Huber kink circle the
    inner (identity) branch is returned."""
    v = np.asarray(v, dtype=float)
    n = v.shape[-1]
    eye = np.broadcast_to(np.eye(n), v.shape + (n,))
    if phi.family == "l2":
        return eye.copy()
    r = _norm(v)
    out = eye.copy()
    outer = r > phi.delta
    if np.any(outer):
        vo = v[outer]
        ro = r[outer][:, None, None]
        proj = vo[:, :, None] * vo[:, None, :] / ro**2
        out[outer] = (phi.delta / ro) * (np.eye(n) - proj)
    return out


def psi_prox(phi: Fidelity, v, f_pixel, t) -> np.ndarray:
    """``argmin_w |w - v|^2 / (2t) + psi(w - f)``."""
    v = np.asarray(v, dtype=float)
    f_pixel = np.asarray(f_pixel, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("prox step must be positive")
    if phi.family == "l2":
        return (v + t * f_pixel) / (1.0 + t)
    z = v - f_pixel
    r = _norm(z)[..., None]
    d = phi.delta
    inner = r <= d * (1.0 + t)
    shrink = z - t * d * z / np.maximum(r, 1e-300)
    return f_pixel + np.where(inner, z / (1.0 + t), shrink)


def psi_conj(phi: Fidelity, q) -> np.ndarray:
    """Convex conjugate ``psi^*(q)``; ``inf`` outside the Huber ball."""
    q = np.asarray(q, dtype=float)
    r2 = np.sum(q * q, axis=-1)
    if phi.family == "l2":
        return _as_float(0.5 * r2)
    tol = 1e-12 * max(1.0, phi.delta)
    return _as_float(np.where(np.sqrt(r2) <= phi.delta + tol, 0.5 * r2, np.inf))


def _segment_breaks(a, b, delta):
    """Parameters ``s in (0, 1)`` where ``|a + s(b-a)| = delta``."""
    d = b - a
    A = d @ d
    B = 2.0 * (a @ d)
    C = a @ a - delta * delta
    if A == 0:
        return []
    disc = B * B - 4 * A * C
    if disc <= 0:
        return []
    sq = np.sqrt(disc)
    roots = sorted({(-B - sq) / (2 * A), (-B + sq) / (2 * A)})
    return [s for s in roots if 0.0 < s < 1.0]


def quadratic_A_matrix(phi: Fidelity, a, b) -> np.ndarray:
    """Averaged Hessian ``int_0^1 D^2 psi(a + s(b - a)) ds``.

    Identity for the squared norm and for Huber segments inside the quadratic
    disc. Otherwise 32-point Gauss-Legendre quadrature on each piece of the
    segment between crossings of the kink circle, where the integrand is
    smooth.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError("a and b must have the same length")
    n = a.size
    if phi.family == "l2":
        return np.eye(n)
    d = phi.delta
    if max(np.linalg.norm(a), np.linalg.norm(b)) <= d:
        return np.eye(n)
    knots = [0.0] + _segment_breaks(a, b, d) + [1.0]
    out = np.zeros((n, n))
    for s0, s1 in zip(knots[:-1], knots[1:]):
        s = s0 + (s1 - s0) * 0.5 * (_GL_NODES + 1.0)
        w = 0.5 * (s1 - s0) * _GL_WEIGHTS
        pts = a + s[:, None] * (b - a)
        out += np.einsum("k,kij->ij", w, psi_hessian(phi, pts))
    return 0.5 * (out + out.T)
