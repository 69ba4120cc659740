"""Matrix regularizer integrands and their singular-value machinery.

All functions accept a single ``n x m`` matrix or a stack of them with shape
``(..., n, m)`` and broadcast over the leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._roots import newton_bisect

__all__ = [
    "SpectralRegularizer",
    "SingularSystem",
    "svd",
    "singular_values",
    "value",
    "dual_value",
    "recession",
    "project_dual_ball",
    "symmetric_gauge",
    "von_neumann_gap",
    "project_simplex_ball",
    "project_lq_ball",
    "FAMILIES",
    "HOMOGENEOUS_FAMILIES",
]

FAMILIES = ("frobenius", "nuclear", "spectral", "schatten", "lpq", "logsumexp")
HOMOGENEOUS_FAMILIES = FAMILIES[:5]
SPECTRAL_FAMILIES = ("frobenius", "nuclear", "spectral", "schatten", "logsumexp")


@dataclass(frozen=True)
class SpectralRegularizer:
    """Integrand ``rho = weight * norm`` for one of the supported families.

    ``p`` is the Schatten exponent, or the channel (inner) exponent of the
    mixed entrywise ``lpq`` norm whose outer exponent over spatial columns is
    ``q``.
    """

    family: str
    weight: float = 1.0
    p: float | None = None
    q: float | None = None

    def __post_init__(self):
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        if fam not in FAMILIES:
            raise ValueError(f"unknown regularizer family {self.family!r}")
        if not self.weight > 0:
            raise ValueError("weight must be positive")
        if fam == "schatten":
            if self.p is None or not 1 < self.p < np.inf:
                raise ValueError("Schatten exponent must lie in ]1, inf[")
        if fam == "lpq":
            for e in (self.p, self.q):
                if e is None or not 1 < e < np.inf:
                    raise ValueError("lpq exponents must lie in ]1, inf[")

    @property
    def homogeneous(self) -> bool:
        return self.family != "logsumexp"

    def scaled(self, factor: float) -> "SpectralRegularizer":
        return SpectralRegularizer(self.family, self.weight * factor, self.p, self.q)

    def dual(self) -> "SpectralRegularizer":
        """The dual norm (unit weight)."""
        fam = self.family
        if fam == "frobenius":
            return SpectralRegularizer("frobenius")
        if fam == "nuclear":
            return SpectralRegularizer("spectral")
        if fam == "spectral":
            return SpectralRegularizer("nuclear")
        if fam == "schatten":
            return SpectralRegularizer("schatten", p=_conj(self.p))
        if fam == "lpq":
            return SpectralRegularizer("lpq", p=_conj(self.p), q=_conj(self.q))
        raise ValueError("no dual norm for non-homogeneous family")

    def __str__(self):
        if self.family == "schatten":
            return f"schatten:{self.p:g}"
        if self.family == "lpq":
            return f"lpq:{self.p:g},{self.q:g}"
        return self.family


def _conj(p: float) -> float:
    return p / (p - 1.0)


@dataclass(frozen=True)
class SingularSystem:
    sigma: np.ndarray
    U: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


def _eig_two_columns(A: np.ndarray):
    """Right singular vectors of stacked ``n x 2`` matrices via one Givens
    rotation diagonalizing ``A^T A``. Returns ``(V, sigma)`` with
    ``sigma[..., 0] >= sigma[..., 1]``."""
    a = np.einsum("...i,...i->...", A[..., 0], A[..., 0])
    b = np.einsum("...i,...i->...", A[..., 0], A[..., 1])
    c = np.einsum("...i,...i->...", A[..., 1], A[..., 1])
    theta = 0.5 * np.arctan2(2.0 * b, a - c)
    cs, sn = np.cos(theta), np.sin(theta)
    V = np.empty(A.shape[:-2] + (2, 2))
    V[..., 0, 0] = cs
    V[..., 1, 0] = sn
    V[..., 0, 1] = -sn
    V[..., 1, 1] = cs
    AV = A @ V
    sigma = np.sqrt(np.einsum("...ij,...ij->...j", AV, AV))
    swap = sigma[..., 1] > sigma[..., 0]
    if np.any(swap):
        V[swap] = V[swap][..., ::-1]
        sigma[swap] = sigma[swap][..., ::-1]
        AV[swap] = AV[swap][..., ::-1]
    return V, sigma, AV


def _complete_basis(cols: np.ndarray, n: int) -> np.ndarray:
    """Extend orthonormal columns ``cols`` (n x k) to an orthonormal n x n basis."""
    q, _ = np.linalg.qr(np.hstack([cols, np.eye(n)]))
    q[:, : cols.shape[1]] = cols
    return q


def svd(A) -> SingularSystem:
    """Reduced SVD of one ``n x m`` matrix, singular values nonincreasing."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("svd expects a single matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    n, m = A.shape
    p = min(n, m)
    if m == 2 and n >= 2:
        V, sigma, AV = _eig_two_columns(A)
        scale = max(sigma[0], np.finfo(float).tiny)
        U = np.zeros((n, 2))
        good = sigma > 1e-14 * scale
        U[:, good] = AV[:, good] / sigma[good]
        if not good[0]:
            U = np.eye(n)[:, :2]
            sigma = np.zeros(2)
        elif not good[1]:
            U[:, 1] = _complete_basis(U[:, :1], n)[:, 1]
        return SingularSystem(sigma, U, V)
    if m == 1:
        s = np.linalg.norm(A[:, 0])
        U = A / s if s > 0 else np.eye(n)[:, :1]
        return SingularSystem(np.array([s]), U, np.ones((1, 1)))
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    return SingularSystem(s[:p], U[:, :p], Vh[:p].T)


def singular_values(A) -> np.ndarray:
    """Nonincreasing singular values of stacked matrices, shape ``(..., p)``."""
    A = np.asarray(A, dtype=float)
    n, m = A.shape[-2:]
    if m == 1:
        return np.linalg.norm(A[..., 0], axis=-1)[..., None]
    if n == 1:
        return np.linalg.norm(A[..., 0, :], axis=-1)[..., None]
    if m == 2:
        return _eig_two_columns(A)[1]
    return np.linalg.svd(A, compute_uv=False)


def _lp(x, p, axis=-1):
    if p == 1:
        return np.sum(np.abs(x), axis=axis)
    if p == np.inf:
        return np.max(np.abs(x), axis=axis)
    x = np.abs(x)
    scale = np.max(x, axis=axis, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    return np.squeeze(safe, axis) * np.sum((x / safe) ** p, axis=axis) ** (1.0 / p)


def _norm(rho: SpectralRegularizer, A: np.ndarray) -> np.ndarray:
    fam = rho.family
    if fam == "frobenius":
        return np.sqrt(np.einsum("...ij,...ij->...", A, A))
    if fam == "lpq":
        return _lp(_lp(A, rho.p, axis=-2), rho.q, axis=-1)
    s = singular_values(A)
    if fam == "nuclear":
        return s.sum(axis=-1)
    if fam == "spectral":
        return s[..., 0]
    if fam == "schatten":
        return _lp(s, rho.p)
    # log-sum-exp, shifted by the max for stability
    top = s[..., :1]
    return top[..., 0] + np.log(np.sum(np.exp(s - top), axis=-1))


def value(rho: SpectralRegularizer, A) -> np.ndarray:
    """``rho(A)`` for one matrix (returns a float) or a stack."""
    out = rho.weight * _norm(rho, np.asarray(A, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def dual_value(rho: SpectralRegularizer, B) -> np.ndarray:
    """Dual norm of ``B`` (without the weight); the dual ball of ``rho`` is
    ``{dual_value <= weight}``."""
    return value(rho.dual(), B)


def recession(rho: SpectralRegularizer, A) -> np.ndarray:
    """``lim_{t->inf} rho(tA)/t``."""
    if rho.homogeneous:
        return value(rho, A)
    out = rho.weight * singular_values(np.asarray(A, dtype=float))[..., 0]
    return float(out) if np.ndim(out) == 0 else out


# -- vector ball projections ---------------------------------------------------


def project_simplex_ball(y: np.ndarray, radius) -> np.ndarray:
    """Project each row of ``y`` (last axis) onto the l1 ball of ``radius``."""
    y = np.asarray(y, dtype=float)
    radius = np.broadcast_to(np.asarray(radius, dtype=float), y.shape[:-1])
    a = np.abs(y)
    inside = a.sum(axis=-1) <= radius
    srt = -np.sort(-a, axis=-1)
    css = np.cumsum(srt, axis=-1) - radius[..., None]
    k = np.arange(1, y.shape[-1] + 1)
    cond = srt - css / k > 0
    rho_idx = y.shape[-1] - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho_idx[..., None], axis=-1) / (rho_idx[..., None] + 1)
    out = np.sign(y) * np.maximum(a - theta, 0.0)
    return np.where(inside[..., None], y, out)


def _shrink_power(y, kappa, e, tol):
    """Solve ``x + kappa * x**e = y`` for ``x in [0, y]`` (``e > 0``) entrywise."""
    y, kappa = np.broadcast_arrays(np.asarray(y, float), np.asarray(kappa, float))

    def f(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            xe1 = np.where(x > 0, x ** (e - 1.0), np.inf if e < 1 else (1.0 if e == 1 else 0.0))
            slope = np.where(kappa > 0, kappa * e * xe1, 0.0)
        return x + kappa * x**e - y, 1.0 + slope

    # the root lies below both y and (y/kappa)**(1/e)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        x0 = np.minimum(y, (y / kappa) ** (1.0 / e))
    return newton_bisect(f, np.zeros_like(y), y.copy(), x0=x0, xtol=tol)


def project_lq_ball(y: np.ndarray, radius, q: float, tol: float = 1e-12, maxiter: int = 100):
    """Project rows of ``y`` onto the ``l^q`` ball of ``radius`` (``1 < q < inf``).

    Stationarity gives ``x_i + mu * q * x_i**(q-1) = |y_i|``; the multiplier
    ``mu`` is found by safeguarded Newton on ``sum x_i(mu)**q = radius**q``.
    """
    y = np.asarray(y, dtype=float)
    radius = np.broadcast_to(np.asarray(radius, dtype=float), y.shape[:-1])
    a = np.abs(y)
    norm = _lp(a, q)
    outside = norm > radius
    if not np.any(outside):
        return y.copy()
    ao = a[outside]
    ro = radius[outside]
    scale = np.max(ao, axis=-1, keepdims=True)
    ao_s = ao / scale
    ro_s = ro / scale[:, 0]
    e = q - 1.0

    def inner(mu):
        return _shrink_power(ao_s, mu[:, None] * q, e, tol * 1e-2)

    def g(mu):
        x = inner(mu)
        with np.errstate(divide="ignore", invalid="ignore"):
            dx = -q * x**e / (1.0 + mu[:, None] * q * e * np.where(x > 0, x ** (e - 1.0), np.inf if e < 1 else 0.0))
        dx = np.nan_to_num(dx)
        val = np.sum(x**q, axis=-1) - ro_s**q
        der = np.sum(q * x**e * dx, axis=-1)
        return val, der

    # bracket: x_i <= (y_i / (q mu))**(1/e), so sum x^q < r^q once mu large enough
    hi = np.ones(ao_s.shape[0])
    for _ in range(200):
        bad = g(hi)[0] > 0
        if not np.any(bad):
            break
        hi = np.where(bad, hi * 4.0, hi)
    mu = newton_bisect(g, np.zeros_like(hi), hi, x0=0.5 * hi, xtol=tol, maxiter=maxiter)
    x = inner(mu) * scale
    out = y.copy()
    out[outside] = np.sign(y[outside]) * x
    return out


def _lpq_column_prox(Y, mu, a, b, tol):
    """Prox of ``mu * ||x||_a**b`` on each column of ``Y`` (nonnegative, shape
    ``(k, n, m)``). Returns ``(X, r)`` with ``r`` the column ``l^a`` norms.

    The column solution is ``x_i + kappa * x_i**(a-1) = y_i`` with
    ``kappa = mu * b * r**(b-a)`` and ``r = ||x||_a``; the fixed point in ``r``
    is unique and found on a log scale.
    """
    k, n, m = Y.shape
    Yc = np.moveaxis(Y, -1, 1).reshape(k * m, n)
    mu_c = np.repeat(mu, m)
    ynorm = _lp(Yc, a)
    pos = ynorm > 0

    def x_of(r):
        kappa = mu_c * b * r ** (b - a)
        return _shrink_power(Yc, kappa[:, None], a - 1.0, tol * 1e-2)

    def F(logr):
        # log-log form is close to linear, which suits false position
        nrm = _lp(x_of(np.exp(logr)), a)
        return np.log(np.maximum(nrm, 1e-300)) - logr, None

    safe = np.where(pos, ynorm, 1.0)
    logr = newton_bisect(F, np.log(safe) - 70.0, np.log(safe), xtol=tol, maxiter=200)
    r = np.where(pos, np.exp(logr), 0.0)
    X = np.where(pos[:, None], x_of(np.where(pos, r, 1.0)), 0.0)
    return np.moveaxis(X.reshape(k, m, n), 1, -1), r.reshape(k, m)


def _project_lpq_ball(P, radius, a, b, tol=1e-12, maxiter=200):
    """Project stacked matrices onto ``{ || (||col_j||_a)_j ||_b <= radius }``."""
    shape = P.shape
    flat = P.reshape((-1,) + shape[-2:])
    rad = np.broadcast_to(np.asarray(radius, float), shape[:-2]).reshape(-1)
    Y = np.abs(flat)
    norm = _lp(_lp(Y, a, axis=-2), b, axis=-1)
    outside = norm > rad
    out = flat.copy()
    if not np.any(outside):
        return out.reshape(shape)
    Yo = Y[outside]
    scale = Yo.max(axis=(-2, -1))
    Yo = Yo / scale[:, None, None]
    ro = rad[outside] / scale

    def G(mu):
        _, r = _lpq_column_prox(Yo, mu, a, b, tol)
        return np.sum(r**b, axis=-1) - ro**b, None

    hi = np.ones(Yo.shape[0])
    for _ in range(200):
        bad = G(hi)[0] > 0
        if not np.any(bad):
            break
        hi = np.where(bad, hi * 4.0, hi)
    mu = newton_bisect(G, np.zeros_like(hi), hi, xtol=tol, maxiter=maxiter)
    X, _ = _lpq_column_prox(Yo, mu, a, b, tol)
    out[outside] = np.sign(flat[outside]) * X * scale[:, None, None]
    return out.reshape(shape)


def _spectral_apply(P: np.ndarray, shrink: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Replace the singular values of each matrix by ``shrink(sigma)``,
    keeping singular vectors. ``shrink`` must map 0 to 0."""
    n, m = P.shape[-2:]
    if m == 2 and n >= 2:
        V, sigma, AV = _eig_two_columns(P)
        new = shrink(sigma)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(sigma > 0, new / sigma, 0.0)
        return (AV * ratio[..., None, :]) @ np.swapaxes(V, -1, -2)
    if m == 1 or n == 1:
        s = np.linalg.norm(P, axis=(-2, -1))
        new = shrink(s[..., None])[..., 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(s > 0, new / s, 0.0)
        return P * ratio[..., None, None]
    U, s, Vh = np.linalg.svd(P, full_matrices=False)
    return (U * shrink(s)[..., None, :]) @ Vh


def project_dual_ball(rho: SpectralRegularizer, P) -> np.ndarray:
    """Euclidean projection of ``P`` onto ``{B : dual_norm(B) <= weight}``,
    the proximal map of the convex conjugate of ``rho``."""
    P = np.asarray(P, dtype=float)
    alpha = rho.weight
    fam = rho.family
    if fam == "logsumexp":
        raise ValueError("no dual-ball projection for non-homogeneous family")
    if fam == "frobenius":
        nrm = np.sqrt(np.einsum("...ij,...ij->...", P, P))
        return P * np.minimum(1.0, alpha / np.maximum(nrm, 1e-300))[..., None, None]
    if fam == "nuclear":
        return _spectral_apply(P, lambda s: np.minimum(s, alpha))
    if fam == "spectral":
        return _spectral_apply(P, lambda s: project_simplex_ball(s, alpha))
    if fam == "schatten":
        qd = _conj(rho.p)
        return _spectral_apply(P, lambda s: project_lq_ball(s, alpha, qd))
    return _project_lpq_ball(P, alpha, _conj(rho.p), _conj(rho.q))


def symmetric_gauge(htilde: Callable[[np.ndarray], float], A) -> float:
    """Evaluate ``h(A) = htilde(sigma(A))``."""
    return htilde(singular_values(np.asarray(A, dtype=float)))


def von_neumann_gap(A, B) -> np.ndarray:
    """``sum_i sigma_i(A) sigma_i(B) - Tr(A B^T)``; nonnegative by von Neumann."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError("A and B must have the same shape")
    sa = singular_values(A)
    sb = singular_values(B)
    out = np.sum(sa * sb, axis=-1) - np.einsum("...ij,...ij->...", A, B)
    return float(out) if np.ndim(out) == 0 else out
