"""Discrete operators and convex solvers for vectorial TV problems.

The discrete energy of ``w`` is

    E(w) = h^m * sum_x [ rho((Dw)_x) + psi(w_x - f_x) ]

with ``D`` forward differences divided by ``h`` and Neumann boundary. The
primal-dual iterations run on ``E / h^m``, which has the same minimizers.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import fidelity as fid
from . import specnorm as sn
from .fidelity import Fidelity
from .grid import GridSpec, MatrixField, VectorField
from .specnorm import SpectralRegularizer

__all__ = [
    "SolverConfig",
    "SolveReport",
    "PowerNorm",
    "HuberNorm",
    "MaxPrincipleReport",
    "grad_array",
    "div_array",
    "discrete_gradient",
    "divergence",
    "energy",
    "rof_solve",
    "taut_string_1d",
    "tgv_solve",
    "tgv_energy",
    "max_principle_check",
    "operator_norm_bound",
]

log = logging.getLogger(__name__)


# -- operators ---------------------------------------------------------------


def grad_array(u: np.ndarray, h: float) -> np.ndarray:
    """Forward differences of ``u`` (shape ``dims + (n,)``) along every grid
    axis, shape ``dims + (n, m)``; zero on the last slice of each axis."""
    m = u.ndim - 1
    out = np.empty(u.shape + (m,))
    for k in range(m):
        out[..., k] = np.diff(u, axis=k, append=np.take(u, [-1], axis=k))
    out /= h
    return out


def div_array(P: np.ndarray, h: float) -> np.ndarray:
    """Negative adjoint of :func:`grad_array`."""
    m = P.shape[-1]
    out = np.zeros(P.shape[:-1])
    for k in range(m):
        p = P[..., k].copy()
        last = [slice(None)] * m
        last[k] = -1
        p[tuple(last)] = 0.0
        out += np.diff(p, axis=k, prepend=0.0)
    out /= h
    return out


def discrete_gradient(w: VectorField) -> MatrixField:
    """``Dw`` as a :class:`MatrixField` (rows = channels, cols = axes)."""
    return MatrixField(w.spec, grad_array(w.data, w.spec.spacing))


def divergence(P: MatrixField) -> VectorField:
    """``div P`` with ``<Dw, P> = -<w, div P>`` exactly."""
    return VectorField(P.spec, div_array(P.data, P.spec.spacing))


def operator_norm_bound(spec: GridSpec) -> float:
    """``L`` with ``||D||^2 <= L^2 = 4m / h^2``."""
    return math.sqrt(4.0 * spec.ndim) / spec.spacing


# -- configuration and reports -------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    """Primal-dual settings.

    ``sigma`` and ``tau_step`` default to ``c / L`` and ``1 / (c L)`` with
    ``c = step_ratio``; explicit values must satisfy ``sigma * tau * L^2 <= 1``.
    When ``step_ratio`` is ``None`` the solvers pick ``c = 0.3 * D * range(f)``
    with ``D`` the longest domain side, which balances primal and dual
    progress across grid scales.
    ``box`` is ``None`` or a sequence of per-channel ``(lo, hi)`` pairs (a
    single pair applies to every channel).
    """

    max_iters: int = 20000
    tol_gap: float = 1e-6
    sigma: float | None = None
    tau_step: float | None = None
    theta_relax: float = 1.0
    box: tuple | None = None
    check_every: int = 10
    step_ratio: float | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not self.tol_gap > 0:
            raise ValueError("tol_gap must be positive")
        if not 0.0 <= self.theta_relax <= 1.0:
            raise ValueError("theta_relax must lie in [0, 1]")
        if self.step_ratio is not None and not self.step_ratio > 0:
            raise ValueError("step_ratio must be positive")
        for s in (self.sigma, self.tau_step):
            if s is not None and not s > 0:
                raise ValueError("step sizes must be positive")
        if self.box is not None:
            box = np.asarray(self.box, dtype=float)
            if box.ndim == 1:
                box = box[None, :]
            if box.shape[-1] != 2 or not np.all(np.isfinite(box)) or np.any(box[:, 0] > box[:, 1]):
                raise ValueError("box must be finite (lo, hi) pairs with lo <= hi")
            object.__setattr__(self, "box", tuple(map(tuple, box)))

    def steps(self, L: float, auto_ratio: float = 1.0) -> tuple[float, float]:
        sigma, tau = self.sigma, self.tau_step
        if sigma is None and tau is None:
            c = self.step_ratio if self.step_ratio is not None else auto_ratio
            return c / L, 1.0 / (c * L)
        if sigma is None:
            sigma = 1.0 / (tau * L * L)
        if tau is None:
            tau = 1.0 / (sigma * L * L)
        if sigma * tau * L * L > 1.0 + 1e-12:
            raise ValueError(f"step sizes violate sigma*tau*L^2 <= 1 (L^2 = {L * L:.6g})")
        return sigma, tau


@dataclass
class SolveReport:
    iterations: int
    final_gap: float
    primal_energy: float
    history: list = field(default_factory=list)
    converged: bool = False
    seconds: float = 0.0
    gap_kind: str = "relative primal-dual gap"

    def summary(self) -> str:
        flag = "converged" if self.converged else "NOT converged (max_iters reached)"
        return (
            f"{flag}: iterations={self.iterations} {self.gap_kind}={self.final_gap:.3e} "
            f"energy={self.primal_energy:.10g} time={self.seconds:.2f}s"
        )


def auto_step_ratio(f: VectorField) -> float:
    """``0.3 * D * range(f)``, ``D`` the longest side of the domain."""
    rng = float(np.ptp(f.data))
    return 0.3 * max(f.spec.dims) * f.spec.spacing * (rng if rng > 0 else 1.0)


def _box_arrays(box, n):
    if box is None:
        return None
    b = np.asarray(box, dtype=float)
    if b.ndim == 1:
        b = b[None, :]
    if b.shape[0] == 1:
        b = np.repeat(b, n, axis=0)
    if b.shape[0] != n:
        raise ValueError(f"box has {b.shape[0]} intervals for {n} channels")
    return b[:, 0], b[:, 1]


def _check_pair(w: VectorField, f: VectorField):
    if w.data.shape != f.data.shape or w.spec != f.spec:
        raise ValueError("shape mismatch between w and f")


# -- energy ------------------------------------------------------------------


def _reg_sum(rho: SpectralRegularizer, u: np.ndarray, h: float) -> float:
    return float(np.sum(sn.value(rho, grad_array(u, h))))


def _fid_sum(phi: Fidelity, u: np.ndarray, f: np.ndarray) -> float:
    return float(np.sum(fid.psi_value(phi, u - f)))


def _in_box(u: np.ndarray, box) -> bool:
    if box is None:
        return True
    lo, hi = _box_arrays(box, u.shape[-1])
    return bool(np.all(u >= lo) and np.all(u <= hi))


def energy(w: VectorField, f: VectorField, rho: SpectralRegularizer, phi: Fidelity, box=None) -> float:
    """``E(w) = h^m sum [rho(Dw) + psi(w - f)]``; ``inf`` if ``w`` leaves ``box``."""
    _check_pair(w, f)
    if not _in_box(w.data, box):
        return math.inf
    h = w.spec.spacing
    total = _reg_sum(rho, w.data, h) + _fid_sum(phi, w.data, f.data)
    return total * w.spec.cell_volume


# -- data term: prox and conjugate (with optional box) -------------------------


def _g_prox(phi: Fidelity, v, f, t, box):
    if box is None:
        if phi.family == "l2":
            return (v + t * f) / (1.0 + t)
        return fid.psi_prox(phi, v, f, t)
    lo, hi = box
    w = np.clip(fid.psi_prox(phi, v, f, t), lo, hi)
    if phi.family == "l2" or v.shape[-1] == 1:
        # separable (or scalar convex) problem: clipping the free minimizer is exact
        return w
    step = t / (1.0 + t)
    for _ in range(100):
        g = (w - v) / t + fid.psi_grad(phi, w - f)
        w_new = np.clip(w - step * g, lo, hi)
        if np.max(np.abs(w_new - w)) <= 1e-15 * (1.0 + np.max(np.abs(w))):
            return w_new
        w = w_new
    return w


def _g_conj_sum(phi: Fidelity, q, f, box) -> float:
    """``sum_x sup_u [q.u - psi(u - f)]`` over ``u`` in the box; an upper
    bound when the inner maximization is not solved in closed form."""
    if box is None:
        return float(np.sum(q * f) + np.sum(fid.psi_conj(phi, q)))
    lo, hi = box
    if phi.family == "l2":
        u = np.clip(f + q, lo, hi)
        return float(np.sum(q * u - 0.5 * (u - f) ** 2))
    # concave maximization: projected gradient ascent, then a Frank-Wolfe bound
    u = np.clip(f + q, lo, hi)
    for _ in range(50):
        u = np.clip(u + q - fid.psi_grad(phi, u - f), lo, hi)
    g = q - fid.psi_grad(phi, u - f)
    lin = np.maximum(g * (hi - u), g * (lo - u))
    return float(np.sum(q * u) - np.sum(fid.psi_value(phi, u - f)) + np.sum(lin))


# -- ROF ---------------------------------------------------------------------


def rof_solve(f: VectorField, rho: SpectralRegularizer, phi: Fidelity, cfg: SolverConfig | None = None, u0=None):
    """Minimize ``E(w)`` with the Chambolle-Pock primal-dual method.

    The dual variable lives in the dual-norm ball of radius ``rho.weight``.
    Every ``cfg.check_every`` iterations the duality gap is evaluated and the
    run stops once ``gap / (1 + |primal|) <= cfg.tol_gap`` (both measured on
    ``E / h^m``). Reaching ``max_iters`` returns the last iterate with
    ``report.converged = False``.

    Returns
    -------
    u : VectorField
    report : SolveReport
    """
    cfg = cfg or SolverConfig()
    if not rho.homogeneous:
        raise ValueError("unsupported regularizer for rof_solve")
    spec = f.spec
    h = spec.spacing
    fd = f.data
    n = f.channels
    box = _box_arrays(cfg.box, n)
    L = operator_norm_bound(spec)
    sigma, tau = cfg.steps(L, auto_step_ratio(f))
    theta = cfg.theta_relax

    u = fd.copy() if u0 is None else np.array(u0.data if isinstance(u0, VectorField) else u0, dtype=float)
    if box is not None:
        u = np.clip(u, *box)
    ubar = u.copy()
    P = np.zeros(fd.shape + (spec.ndim,))
    history = []
    t0 = time.perf_counter()
    rel = math.inf
    primal = math.inf
    it = 0
    converged = False
    for it in range(1, cfg.max_iters + 1):
        P = sn.project_dual_ball(rho, P + sigma * grad_array(ubar, h))
        u_old = u
        u = _g_prox(phi, u + tau * div_array(P, h), fd, tau, box)
        ubar = u + theta * (u - u_old)
        if it % cfg.check_every == 0 or it == cfg.max_iters:
            primal, rel = _rof_gap(rho, phi, u, P, fd, h, box)
            history.append((it, primal * spec.cell_volume, rel))
            log.debug("rof iter %d energy %.10g gap %.3e", it, primal * spec.cell_volume, rel)
            if rel <= cfg.tol_gap:
                converged = True
                break
    if not converged:
        log.warning("rof_solve stopped at max_iters=%d with relative gap %.3e", cfg.max_iters, rel)
    out = VectorField(spec, u)
    report = SolveReport(
        iterations=it,
        final_gap=rel,
        primal_energy=energy(out, f, rho, phi, cfg.box),
        history=history,
        converged=converged,
        seconds=time.perf_counter() - t0,
    )
    return out, report


def _rof_gap(rho, phi, u, P, fd, h, box):
    primal = _reg_sum(rho, u, h) + _fid_sum(phi, u, fd)
    q = div_array(P, h)
    if phi.family == "huber" and box is None:
        # keep psi^*(div P) finite by shrinking P toward 0 (stays dual-feasible)
        mx = np.max(np.sqrt(np.sum(q * q, axis=-1)))
        if mx > phi.delta:
            q = q * (phi.delta / mx)
    dual = -_g_conj_sum(phi, q, fd, box)
    gap = max(primal - dual, 0.0)
    return primal, gap / (1.0 + abs(primal))


# -- taut string ---------------------------------------------------------------


def _tv1d_direct(y: np.ndarray, lam: float) -> np.ndarray:
    """Exact minimizer of ``0.5 sum (x - y)^2 + lam sum |x_{i+1} - x_i|``.

    Condat's direct method: the taut string through the tube of radius
    ``lam`` around the cumulative sums, built left to right while tracking
    the lowest and highest admissible slopes of the current segment.
    """
    N = y.size
    x = np.empty(N)
    if N == 0:
        return x
    k = k0 = kplus = kminus = 0
    umin, umax = lam, -lam
    vmin, vmax = y[0] - lam, y[0] + lam
    while True:
        while k == N - 1:
            if umin < 0.0:
                x[k0 : kminus + 1] = vmin
                k0 = kminus + 1
                k = kminus = k0
                vmin = y[k0]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                x[k0 : kplus + 1] = vmax
                k0 = kplus + 1
                k = kplus = k0
                vmax = y[k0]
                umax = -lam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                x[k0 : k + 1] = vmin
                return x
        umin += y[k + 1] - vmin
        if umin < -lam:
            x[k0 : kminus + 1] = vmin
            k0 = kminus + 1
            k = kminus = kplus = k0
            vmin = y[k0]
            vmax = vmin + 2 * lam
            umin, umax = lam, -lam
            continue
        umax += y[k + 1] - vmax
        if umax > lam:
            x[k0 : kplus + 1] = vmax
            k0 = kplus + 1
            k = kminus = kplus = k0
            vmax = y[k0]
            vmin = vmax - 2 * lam
            umin, umax = lam, -lam
            continue
        k += 1
        if umin >= lam:
            kminus = k
            vmin += (umin - lam) / (kminus - k0 + 1)
            umin = lam
        if umax <= -lam:
            kplus = k
            vmax += (umax + lam) / (kplus - k0 + 1)
            umax = -lam


def taut_string_1d(f: VectorField, alpha: float) -> VectorField:
    """Exact discrete minimizer of ``E`` for ``Frobenius(alpha)`` TV and the
    squared fidelity on a scalar 1D signal.

    Dividing ``E`` by ``h`` gives ``(alpha/h) sum |u_{i+1} - u_i| +
    0.5 sum (u_i - f_i)^2``, so the tube radius is ``alpha / h``.
    """
    if f.spec.ndim != 1 or f.channels != 1:
        raise ValueError("taut_string_1d needs a scalar 1D field")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    y = f.data[:, 0]
    return f.with_data(_tv1d_direct(y, alpha / f.spec.spacing)[:, None])


# -- smoothed TGV ----------------------------------------------------------------


@dataclass(frozen=True)
class PowerNorm:
    """``rho2(M) = |M|^p / p`` (Frobenius norm), ``p > 1``."""

    p: float

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError("power must be >= 1")

    def value(self, M):
        r = np.sqrt(np.einsum("...ij,...ij->...", M, M))
        return r**self.p / self.p

    def radial_prox(self, r, c):
        """``argmin_s 0.5 (s - r)^2 + c s^p / p`` for ``s >= 0``."""
        if self.p == 2:
            return r / (1.0 + c)
        return sn._shrink_power(r, c, self.p - 1.0, 1e-14)

    def __str__(self):
        return f"power:{self.p:g}"


@dataclass(frozen=True)
class HuberNorm:
    """Huber-smoothed Frobenius norm: ``|M|^2 / (2 delta)`` below ``delta``,
    ``|M| - delta / 2`` above."""

    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("Huber threshold must be positive")

    def value(self, M):
        r = np.sqrt(np.einsum("...ij,...ij->...", M, M))
        d = self.delta
        return np.where(r <= d, r * r / (2 * d), r - d / 2)

    def radial_prox(self, r, c):
        d = self.delta
        s = r / (1.0 + c / d)
        return np.where(s <= d, s, r - c)

    def __str__(self):
        return f"huber:{self.delta:g}"


def _grad_mask(dims) -> np.ndarray:
    """1 where the forward difference along axis ``k`` exists, shape ``dims + (m,)``."""
    m = len(dims)
    mask = np.ones(tuple(dims) + (m,))
    for k in range(m):
        sl = [slice(None)] * m
        sl[k] = -1
        mask[tuple(sl) + (k,)] = 0.0
    return mask


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def tgv_energy(u, z, f, rho1: SpectralRegularizer, rho2, weights, symmetrized=True, phi: Fidelity | None = None) -> float:
    """``h^m sum [alpha1 rho1(Du - z) + alpha2 rho2(Ez) + psi(u - f)]`` with
    ``Ez = sym(Dz)`` (or ``Dz`` when not symmetrized). ``z`` is zeroed on
    the Neumann faces where ``Du`` vanishes identically."""
    phi = phi or Fidelity()
    a1, a2 = weights
    ud = u.data if isinstance(u, VectorField) else np.asarray(u)
    zd = z.data if isinstance(z, VectorField) else np.asarray(z)
    fd = f.data
    spec = f.spec
    h = spec.spacing
    mask = _grad_mask(spec.dims)
    A = grad_array(ud, h) - (mask * zd)[..., None, :]
    Ez = grad_array(zd, h)
    if symmetrized:
        Ez = _sym(Ez)
    total = a1 * np.sum(sn.value(rho1, A)) + a2 * np.sum(rho2.value(Ez)) + _fid_sum(phi, ud, fd)
    return float(total) * spec.cell_volume


def tgv_solve(
    f: VectorField,
    rho1: SpectralRegularizer,
    rho2,
    weights: Sequence[float] = (1.0, 2.0),
    symmetrized: bool = True,
    cfg: SolverConfig | None = None,
    phi: Fidelity | None = None,
):
    """Smoothed second-order TGV (or its non-symmetrized variant) for scalar data.

    Solves ``min_{u,z} alpha1 rho1(Du - z) + alpha2 rho2(Ez) + psi(u - f)``
    by primal-dual iterations on the stacked operator
    ``K(u, z) = (Du - z, Ez)``, with ``Ez = sym(Dz)`` when ``symmetrized``
    and ``Dz`` otherwise. ``rho2`` must be differentiable:
    :class:`HuberNorm` or :class:`PowerNorm` with ``p > 1``.

    The smooth ``rho2`` term has no bounded dual domain, so the stopping test
    uses the relative primal-dual residual instead of the duality gap.

    Returns
    -------
    u : VectorField
    z : VectorField with ``m`` channels
    report : SolveReport
    """
    cfg = cfg or SolverConfig()
    phi = phi or Fidelity()
    if isinstance(rho2, PowerNorm) and rho2.p == 1:
        raise ValueError("exact TGV out of scope")
    if not isinstance(rho2, (PowerNorm, HuberNorm)):
        raise TypeError("rho2 must be a PowerNorm or HuberNorm")
    if f.channels != 1:
        raise ValueError("tgv_solve handles scalar data (n = 1) only")
    if not rho1.homogeneous:
        raise ValueError("unsupported regularizer for tgv_solve")
    a1, a2 = (float(w) for w in weights)
    if not (a1 > 0 and a2 > 0):
        raise ValueError("TGV weights must be positive")
    spec = f.spec
    h = spec.spacing
    m = spec.ndim
    fd = f.data
    box = _box_arrays(cfg.box, 1)
    rho1w = rho1.scaled(a1)
    mask = _grad_mask(spec.dims)
    LD = operator_norm_bound(spec)
    L = math.sqrt((LD + 1.0) ** 2 + LD**2)
    sigma, tau = cfg.steps(L, auto_step_ratio(f))
    theta = cfg.theta_relax

    def K(u, z):
        A = grad_array(u, h) - (mask * z)[..., None, :]
        B = grad_array(z, h)
        return A, (_sym(B) if symmetrized else B)

    def Kt(P, Q):
        # adjoint of K: returns (D^T P, -mask * P + E^T Q)
        if symmetrized:
            Q = _sym(Q)
        gu = -div_array(P, h)
        gz = -mask * P[..., 0, :] - div_array(Q, h)
        return gu, gz

    def prox_dual_Q(Y):
        # Moreau: prox_{s g*}(Y) = Y - s prox_{g/s}(Y/s), g = a2 * rho2
        r = np.sqrt(np.einsum("...ij,...ij->...", Y, Y)) / sigma
        s = rho2.radial_prox(r, a2 / sigma)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(r > 0, s / r, 0.0)
        return Y - Y * ratio[..., None, None]

    u = fd.copy()
    if box is not None:
        u = np.clip(u, *box)
    z = mask * grad_array(u, h)[..., 0, :]
    ubar, zbar = u.copy(), z.copy()
    P = np.zeros(fd.shape + (m,))
    Q = np.zeros(fd.shape[:-1] + (m, m))
    history = []
    t0 = time.perf_counter()
    rel = math.inf
    it = 0
    converged = False
    for it in range(1, cfg.max_iters + 1):
        A, B = K(ubar, zbar)
        P_old, Q_old = P, Q
        P = sn.project_dual_ball(rho1w, P + sigma * A)
        Q = prox_dual_Q(Q + sigma * B)
        gu, gz = Kt(P, Q)
        u_old, z_old = u, z
        u = _g_prox(phi, u - tau * gu, fd, tau, box)
        z = z - tau * gz
        ubar = u + theta * (u - u_old)
        zbar = z + theta * (z - z_old)
        if it % cfg.check_every == 0 or it == cfg.max_iters:
            du, dz = u_old - u, z_old - z
            dP, dQ = P_old - P, Q_old - Q
            ku, kz = Kt(dP, dQ)
            pres = np.sqrt(np.sum((du / tau - ku) ** 2) + np.sum((dz / tau - kz) ** 2))
            kA, kB = K(du, dz)
            dres = np.sqrt(np.sum((dP / sigma - kA) ** 2) + np.sum((dQ / sigma - kB) ** 2))
            scale = 1.0 + np.sqrt(np.sum(u * u) + np.sum(z * z))
            rel = float((tau * pres + sigma * dres) / scale)
            e = tgv_energy(u, z, f, rho1, rho2, (a1, a2), symmetrized, phi)
            history.append((it, e, rel))
            log.debug("tgv iter %d energy %.10g residual %.3e", it, e, rel)
            if rel <= cfg.tol_gap:
                converged = True
                break
    if not converged:
        log.warning("tgv_solve stopped at max_iters=%d with residual %.3e", cfg.max_iters, rel)
    uf = VectorField(spec, u)
    zf = VectorField(spec, z)
    report = SolveReport(
        iterations=it,
        final_gap=rel,
        primal_energy=tgv_energy(uf, zf, f, rho1, rho2, (a1, a2), symmetrized, phi),
        history=history,
        converged=converged,
        seconds=time.perf_counter() - t0,
        gap_kind="relative primal-dual residual",
    )
    return uf, zf, report


# -- maximum principle -----------------------------------------------------------


@dataclass(frozen=True)
class MaxPrincipleReport:
    passed: tuple
    violation: np.ndarray
    worst: float
    eps: float

    @property
    def ok(self) -> bool:
        return all(self.passed)


def max_principle_check(u: VectorField, f: VectorField, eps: float = 1e-6) -> MaxPrincipleReport:
    """Per-channel check of ``min f_c - eps <= u_c <= max f_c + eps``.

    ``violation[c]`` is how far channel ``c`` of ``u`` leaves the range of
    ``f_c`` (0 when inside).
    """
    axes = tuple(range(u.spec.ndim))
    lo = f.data.min(axis=axes)
    hi = f.data.max(axis=axes)
    below = lo - u.data.min(axis=axes)
    above = u.data.max(axis=axes) - hi
    viol = np.maximum(np.maximum(below, above), 0.0)
    return MaxPrincipleReport(tuple(bool(v <= eps) for v in viol), viol, float(viol.max()), eps)
