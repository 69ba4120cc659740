"""Relaxed jump functional, jump-set detection, edge profiles and inequality checks.

For a direction ``nu`` and scale ``tau`` the squared jump estimate at ``x0`` is
the mean of ``g(y) = |f(y + tau nu) - f(y)|^2`` over the discrete half-cube
``Q^-_tau(x0, nu)``, averaged with the same reading for ``-nu``;
``j_{f,nu}`` takes the max over a finite ``tau`` list and ``j_f`` the max
over a finite set of directions.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .fidelity import Fidelity, quadratic_A_matrix
from .grid import (
    CubeOutOfDomain,
    Direction,
    GridSpec,
    VectorField,
    _halfcube_offsets,
    halfcube_average,
    halfcube_points,
    shift_sample,
)

__all__ = [
    "JumpEstimate",
    "EdgeProfile",
    "JumpMap",
    "InequalityReport",
    "MidpointResult",
    "default_directions",
    "default_taus",
    "resolve_threads",
    "estimate_jump_function",
    "jump_map",
    "detect_jump_set",
    "jump_mask",
    "edge_profile",
    "verify_main_inequality",
    "verify_inclusion",
    "midpoint_check_1d",
    "variance_bound",
]


def default_directions(m: int, count: int = 16) -> list[Direction]:
    """``count`` directions evenly spaced in ``[0, pi)`` (``j`` is even in ``nu``)."""
    if m == 1:
        return [Direction((1.0,))]
    if count < 1:
        raise ValueError("need at least one direction")
    return [Direction.from_angle(math.pi * k / count) for k in range(count)]


def default_taus(h: float) -> list[float]:
    return [16 * h, 8 * h, 4 * h]


def resolve_threads(threads: int | None = None) -> int:
    """Worker count: explicit value, else ``TVJUMP_THREADS``, else 1; ``0`` means all cores."""
    if threads is None:
        env = os.environ.get("TVJUMP_THREADS")
        threads = int(env) if env else 1
    if threads < 0:
        raise ValueError("thread count must be >= 0")
    return threads or (os.cpu_count() or 1)


@dataclass
class JumpEstimate:
    """``j_f`` at one point with the per-direction profile.

    ``per_tau`` maps each direction's index in ``per_direction`` to the list
    of ``(tau, j_tau)`` values it was maximized over.
    """

    x0: np.ndarray
    nu_best: Direction | None
    j_value: float
    per_direction: list = field(default_factory=list)
    tau_used: list = field(default_factory=list)
    per_tau: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)
    index: tuple | None = None


def _sq_diff(f: VectorField, nu: np.ndarray, tau: float) -> np.ndarray:
    shifted = shift_sample(f.data, f.spec.spacing, tau * nu)
    return np.sum((shifted - f.data) ** 2, axis=-1)


def estimate_jump_function(
    f: VectorField, x0, directions: Sequence[Direction] | None = None, tau_list: Sequence[float] | None = None
) -> JumpEstimate:
    """``j_f(x0)`` as the max over ``directions`` and ``tau_list``.

    The squared mean for ``(nu, tau)`` averages the readings taken with
    ``nu`` and with ``-nu``; the two agree in the continuum but not after
    interpolation, and averaging makes the estimate exactly even in ``nu``.
    A ``(nu, tau)`` pair is used only when both half-cubes ``Q^-`` and
    ``Q^+`` fit in the domain; directions with no usable ``tau`` are listed
    in ``skipped``.
    """
    spec = f.spec
    x0 = np.asarray(x0, dtype=float)
    directions = list(directions) if directions is not None else default_directions(spec.ndim)
    tau_list = list(tau_list) if tau_list is not None else default_taus(spec.spacing)
    est = JumpEstimate(x0=x0, nu_best=None, j_value=0.0, tau_used=tau_list)
    best = -1.0
    for nu in directions:
        v = nu.vector
        vals = []
        for tau in tau_list:
            try:
                halfcube_points(spec, x0, nu, tau, "plus")
                g = VectorField(spec, _sq_diff(f, v, tau)[..., None])
                gm = VectorField(spec, _sq_diff(f, -v, tau)[..., None])
                mean = halfcube_average(g, x0, nu, tau, "minus")[0] + halfcube_average(gm, x0, -nu, tau, "minus")[0]
                vals.append((tau, 0.5 * float(mean)))
            except CubeOutOfDomain:
                continue
        if not vals:
            est.skipped.append(nu)
            continue
        jv = math.sqrt(max(val for _, val in vals))
        est.per_tau[len(est.per_direction)] = [(t, math.sqrt(val)) for t, val in vals]
        est.per_direction.append((nu, jv))
        if jv > best:
            best = jv
            est.nu_best = nu
            est.j_value = jv
    return est


# -- whole-field maps ---------------------------------------------------------------


def _lattice_kernel(spec: GridSpec, v: np.ndarray, tau: float):
    """Bilinear weights of the ``Q^-`` lattice as integer pixel offsets."""
    h = spec.spacing
    count = math.ceil(tau / h - 1e-9)
    offs = _halfcube_offsets(spec.ndim, v, tau, "minus", count) / h
    base = np.floor(offs + 1e-12)
    frac = np.clip(offs - base, 0.0, 1.0)
    base = base.astype(int)
    keys = {}
    npts = offs.shape[0]
    for corner in np.ndindex(*([2] * spec.ndim)):
        c = np.array(corner)
        w = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1)
        for idx, wt in zip(map(tuple, base + c), w):
            if wt > 0:
                keys[idx] = keys.get(idx, 0.0) + wt / npts
    return keys


def _valid_mask(spec: GridSpec, v: np.ndarray, tau: float) -> np.ndarray:
    corners = [np.zeros(spec.ndim), -tau * v, tau * v]
    if spec.ndim == 2:
        t = np.array([-v[1], v[0]])
        corners = [c + e * tau * t for c in corners for e in (-1.0, 1.0)]
    corners = np.array(corners)
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)
    slack = 1e-9 * spec.spacing
    mask = np.ones(spec.dims, dtype=bool)
    for k, n in enumerate(spec.dims):
        x = np.arange(n) * spec.spacing
        ok = (x + lo[k] >= -slack) & (x + hi[k] <= spec.upper[k] + slack)
        shape = [1] * spec.ndim
        shape[k] = n
        mask = mask & ok.reshape(shape)
    return mask


def _correlate(g: np.ndarray, kernel: dict, valid: np.ndarray) -> np.ndarray:
    out = np.zeros(g.shape)
    dims = g.shape
    for off, w in kernel.items():
        dst = []
        src = []
        for k, o in enumerate(off):
            n = dims[k]
            lo_d = max(0, -o)
            hi_d = min(n, n - o)
            dst.append(slice(lo_d, hi_d))
            src.append(slice(lo_d + o, hi_d + o))
        out[tuple(dst)] += w * g[tuple(src)]
    out[~valid] = np.nan
    return out


@dataclass
class JumpMap:
    """Per-pixel ``j`` for every direction (``j_dir``, shape ``(d,) + dims``;
    NaN where no scale fits), its max ``j`` and argmax ``best``."""

    spec: GridSpec
    directions: list
    tau_list: list
    j_dir: np.ndarray
    j: np.ndarray
    best: np.ndarray


def _direction_map(f: VectorField, nu: Direction, tau_list) -> np.ndarray:
    spec = f.spec
    v = nu.vector
    acc = np.full(spec.dims, np.nan)
    for tau in tau_list:
        valid = _valid_mask(spec, v, tau)
        if not valid.any():
            continue
        m2 = _correlate(_sq_diff(f, v, tau), _lattice_kernel(spec, v, tau), valid)
        m2 += _correlate(_sq_diff(f, -v, tau), _lattice_kernel(spec, -v, tau), valid)
        m2 *= 0.5
        acc = np.fmax(acc, m2)
    return np.sqrt(np.maximum(acc, 0.0))


def jump_map(
    f: VectorField,
    directions: Sequence[Direction] | None = None,
    tau_list: Sequence[float] | None = None,
    threads: int | None = None,
) -> JumpMap:
    """``j_{f,nu}`` at every node for every direction.

    Equivalent to :func:`estimate_jump_function` at each node: the lattice
    mean is a fixed correlation of the squared-difference field.
    """
    spec = f.spec
    directions = list(directions) if directions is not None else default_directions(spec.ndim)
    tau_list = list(tau_list) if tau_list is not None else default_taus(spec.spacing)
    for tau in tau_list:
        if not tau >= 2 * spec.spacing * (1 - 1e-12):
            raise ValueError("tau must be at least two grid spacings")
    nthreads = resolve_threads(threads)
    if nthreads > 1 and len(directions) > 1:
        with ThreadPoolExecutor(nthreads) as pool:
            maps = list(pool.map(lambda nu: _direction_map(f, nu, tau_list), directions))
    else:
        maps = [_direction_map(f, nu, tau_list) for nu in directions]
    j_dir = np.stack(maps)
    filled = np.where(np.isnan(j_dir), -np.inf, j_dir)
    best = np.argmax(filled, axis=0)
    j = np.take_along_axis(filled, best[None], axis=0)[0]
    j[np.isinf(j)] = np.nan
    return JumpMap(spec, directions, tau_list, j_dir, j, best)


def _neighbor(idx, v, k, dims):
    p = tuple(int(round(i + k * c)) for i, c in zip(idx, v))
    if all(0 <= q < n for q, n in zip(p, dims)):
        return p
    return None


def detect_jump_set(
    u: VectorField,
    threshold: float,
    tau_list: Sequence[float] | None = None,
    directions: Sequence[Direction] | None = None,
    threads: int | None = None,
    jmap: JumpMap | None = None,
) -> list[JumpEstimate]:
    """Pixels where ``j_u >= threshold`` and ``j_u`` is a local maximum along
    the best direction ``nu`` within 2 pixels.

    Ties are broken toward ``+nu``: a pixel must beat its neighbours at
    ``x + nu, x + 2nu`` strictly and match or beat those at ``x - nu, x - 2nu``.
    For a straight step this keeps the first node past the interface.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    jm = jmap or jump_map(u, directions, tau_list, threads)
    J = jm.j
    dims = u.spec.dims
    scale = np.nanmax(J) if np.any(np.isfinite(J)) else 0.0
    tol = 1e-9 * max(scale, 1e-300)
    out = []
    cand = np.argwhere(np.nan_to_num(J, nan=-np.inf) >= threshold)
    for idx in (tuple(int(i) for i in c) for c in cand):
        d = int(jm.best[idx])
        v = jm.directions[d].vector
        val = J[idx]
        keep = True
        for k in (1, 2):
            for sign in (1, -1):
                p = _neighbor(idx, v, sign * k, dims)
                if p is None or not np.isfinite(J[p]):
                    continue
                if sign > 0 and not val > J[p] + tol:
                    keep = False
                elif sign < 0 and not val >= J[p] - tol:
                    keep = False
        if keep:
            per_dir = [(nu, float(jm.j_dir[k][idx])) for k, nu in enumerate(jm.directions) if np.isfinite(jm.j_dir[k][idx])]
            out.append(
                JumpEstimate(
                    x0=np.asarray(idx, dtype=float) * u.spec.spacing,
                    nu_best=jm.directions[d],
                    j_value=float(val),
                    per_direction=per_dir,
                    tau_used=list(jm.tau_list),
                    index=idx,
                )
            )
    return out


def jump_mask(estimates: Sequence[JumpEstimate], dims) -> np.ndarray:
    mask = np.zeros(tuple(dims), dtype=bool)
    for e in estimates:
        mask[e.index] = True
    return mask


# -- edge profiles and inequalities ---------------------------------------------------


@dataclass
class EdgeProfile:
    x0: np.ndarray
    nu: Direction
    u_plus: np.ndarray
    u_minus: np.ndarray
    f_plus: np.ndarray
    f_minus: np.ndarray
    A: np.ndarray
    lhs: float
    rhs: float
    offset: float
    depth: float

    @property
    def residual(self) -> float:
        return self.lhs - self.rhs


def edge_profile(
    u: VectorField,
    f: VectorField,
    x0,
    nu: Direction,
    offset: float | None = None,
    depth: float | None = None,
    phi: Fidelity | None = None,
) -> EdgeProfile:
    """One-sided values as half-cube means starting ``offset`` away from
    ``x0`` on each side of the edge, extending ``depth`` outward.

    ``lhs = (u+ - u-) . A (u+ - u-)`` and ``rhs = (f+ - f-) . A (u+ - u-)``
    with ``A`` the Hessian of ``psi`` averaged from ``u- - f-`` to ``u+ - f+``.
    """
    h = u.spec.spacing
    offset = 3 * h if offset is None else float(offset)
    depth = 2 * h if depth is None else float(depth)
    if offset < 2 * h * (1 - 1e-12):
        raise ValueError("offset must be at least two grid spacings")
    phi = phi or Fidelity()
    x0 = np.asarray(x0, dtype=float)
    v = nu.vector
    xp = x0 + offset * v
    xm = x0 - offset * v
    up = halfcube_average(u, xp, nu, depth, "plus")
    um = halfcube_average(u, xm, nu, depth, "minus")
    fp = halfcube_average(f, xp, nu, depth, "plus")
    fm = halfcube_average(f, xm, nu, depth, "minus")
    A = quadratic_A_matrix(phi, um - fm, up - fp)
    du = up - um
    lhs = float(du @ A @ du)
    rhs = float((fp - fm) @ A @ du)
    return EdgeProfile(x0, nu, up, um, fp, fm, A, lhs, rhs, offset, depth)


@dataclass
class InequalityReport:
    count: int
    passed: int
    worst_residual: float
    residuals: np.ndarray
    magnitude_checked: bool
    magnitude_passed: int
    worst_magnitude_residual: float

    @property
    def ok(self) -> bool:
        return self.passed == self.count and (not self.magnitude_checked or self.magnitude_passed == self.count)


def verify_main_inequality(u, f, profiles: Sequence[EdgeProfile], slack: float = 0.0, phi: Fidelity | None = None) -> InequalityReport:
    """Check ``lhs <= rhs + slack`` per profile and, when ``lambda > 0``,
    ``|u+ - u-| <= sqrt(Lambda / lambda) |f+ - f-| + slack``."""
    phi = phi or Fidelity()
    res = np.array([p.lhs - p.rhs for p in profiles], dtype=float)
    passed = int(np.sum(res <= slack))
    worst = float(res.max()) if res.size else -math.inf
    mag_ok = phi.lambda_bound > 0
    mag_passed, mag_worst = 0, -math.inf
    if mag_ok and profiles:
        c = math.sqrt(phi.Lambda_bound / phi.lambda_bound)
        mres = np.array([np.linalg.norm(p.u_plus - p.u_minus) - c * np.linalg.norm(p.f_plus - p.f_minus) for p in profiles])
        mag_passed = int(np.sum(mres <= slack))
        mag_worst = float(mres.max())
    return InequalityReport(len(profiles), passed, worst, res, mag_ok, mag_passed, mag_worst)


def verify_inclusion(J_u: np.ndarray, J_f: np.ndarray, dilation_px: int = 1) -> float:
    """Fraction of ``J_u`` pixels within ``dilation_px`` (square neighbourhood)
    of ``J_f``; 1.0 when ``J_u`` is empty."""
    J_u = np.asarray(J_u, dtype=bool)
    J_f = np.asarray(J_f, dtype=bool)
    if J_u.shape != J_f.shape:
        raise ValueError("jump masks must have the same shape")
    total = int(J_u.sum())
    if total == 0:
        return 1.0
    if dilation_px > 0:
        struct = np.ones((2 * dilation_px + 1,) * J_f.ndim, dtype=bool)
        J_f = ndimage.binary_dilation(J_f, structure=struct)
    return float(np.sum(J_u & J_f)) / total


@dataclass
class MidpointResult:
    index: int
    u_minus: float
    u_plus: float
    f_minus: float
    f_plus: float
    margin: float

    @property
    def passed(self) -> bool:
        return self.margin >= 0.0


def midpoint_check_1d(u: VectorField, f: VectorField, jump_pixels: Sequence[int], tol: float = 0.0) -> list[MidpointResult]:
    """``f- <= (u+ + u-)/2 <= f+`` at each jump between nodes ``i-1`` and ``i``,
    oriented so that ``u+ > u-``. ``margin`` is the smaller slack of the
    two inequalities (negative when violated); a pixel where ``u`` does not
    jump by more than ``tol`` passes vacuously with infinite margin."""
    if u.spec.ndim != 1 or u.channels != 1:
        raise ValueError("midpoint_check_1d needs scalar 1D fields")
    ud = u.data[:, 0]
    fd = f.data[:, 0]
    out = []
    for i in jump_pixels:
        i = int(i)
        if not 1 <= i < ud.size:
            raise ValueError("jump pixel must have a left neighbour")
        um, up, fm, fp = ud[i - 1], ud[i], fd[i - 1], fd[i]
        if up < um:
            um, up, fm, fp = up, um, fp, fm
        if up - um <= tol:
            out.append(MidpointResult(i, um, up, fm, fp, math.inf))
            continue
        mid = 0.5 * (up + um)
        out.append(MidpointResult(i, um, up, fm, fp, float(min(mid - fm, fp - mid))))
    return out


def variance_bound(f: VectorField, x0, nu: Direction, tau_list: Sequence[float]) -> float:
    """Upper bound ``4 * max_tau V_tau`` for ``j^2_{f,nu}(x0)``.

    ``V_tau`` is the variance-style mean of ``d = |f - m|^2`` over the cube
    ``Q_tau = Q^- u Q^+`` with ``m`` the mean of ``f`` there, computed through
    the same shift-and-interpolate pipeline as the ``j`` estimate, for both
    ``nu`` and ``-nu``, so the bound holds exactly for the discrete values.
    """
    spec = f.spec
    best = 0.0
    for tau in tau_list:
        try:
            m = 0.5 * (halfcube_average(f, x0, nu, tau, "minus") + halfcube_average(f, x0, nu, tau, "plus"))
        except CubeOutOfDomain:
            continue
        d = VectorField(spec, np.sum((f.data - m) ** 2, axis=-1)[..., None])
        acc = 0.0
        for s in (nu, -nu):
            d_shift = VectorField(spec, shift_sample(d.data, spec.spacing, tau * s.vector))
            acc += halfcube_average(d, x0, s, tau, "minus")[0] + halfcube_average(d_shift, x0, s, tau, "minus")[0]
        best = max(best, 0.25 * acc)
    return 4.0 * best
