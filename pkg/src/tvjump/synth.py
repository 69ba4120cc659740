"""Deterministic synthetic images with known jump sets.

Jump-set convention: every interface has an oriented normal ``nu`` and the
ground-truth jump pixels are the nodes on the ``+nu`` side that have a
4-neighbour with a different label. Disks and rectangles use outward
normals, half-planes the normal they were built with.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .grid import GridSpec, VectorField

__all__ = [
    "Disk",
    "Rect",
    "HalfPlane",
    "Step1D",
    "PiecewiseConstant2D",
    "DiskOnBackground",
    "RampPlusStep",
    "NoNoise",
    "Gaussian",
    "Oscillation",
    "SynthSpec",
    "GroundTruth",
    "generate",
    "splitmix64",
    "gaussian_noise",
    "oscillation_noise",
    "smooth_step",
]


# -- shapes ---------------------------------------------------------------------


@dataclass(frozen=True)
class Disk:
    center: tuple
    radius: float
    plus_inside = False

    def contains(self, X):
        return np.sum((X - np.asarray(self.center)) ** 2, axis=-1) < self.radius**2

    def normal(self, X):
        d = X - np.asarray(self.center)
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        return d / np.where(r > 0, r, 1.0)

    def check(self, spec: GridSpec):
        if self.radius < 2 * spec.spacing:
            raise ValueError("degenerate geometry: radius below two grid spacings")


@dataclass(frozen=True)
class Rect:
    lo: tuple
    hi: tuple
    plus_inside = False

    def contains(self, X):
        return np.all((X >= np.asarray(self.lo)) & (X < np.asarray(self.hi)), axis=-1)

    def normal(self, X):
        # outward normal of the nearest face
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        c = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        rel = (X - c) / half
        k = np.argmax(np.abs(rel), axis=-1)
        out = np.zeros(X.shape)
        np.put_along_axis(out, k[..., None], np.sign(np.take_along_axis(rel, k[..., None], axis=-1)), axis=-1)
        return out

    def check(self, spec: GridSpec):
        if np.any(np.asarray(self.hi) - np.asarray(self.lo) < 2 * spec.spacing):
            raise ValueError("degenerate geometry: rectangle thinner than two grid spacings")


@dataclass(frozen=True)
class HalfPlane:
    """Region ``(x - point) . normal >= 0``; ``normal`` points into it."""

    point: tuple
    normal_vec: tuple
    plus_inside = True

    def _n(self):
        n = np.asarray(self.normal_vec, dtype=float)
        return n / np.linalg.norm(n)

    def contains(self, X):
        return (X - np.asarray(self.point)) @ self._n() >= 0

    def normal(self, X):
        return np.broadcast_to(self._n(), X.shape).copy()

    def check(self, spec: GridSpec):
        if len(self.normal_vec) != spec.ndim:
            raise ValueError("half-plane dimension does not match grid")


Shape = Union[Disk, Rect, HalfPlane]


# -- kinds ------------------------------------------------------------------------


@dataclass(frozen=True)
class Step1D:
    """``levels[0]`` for ``x < position``, ``levels[1]`` beyond (along axis 0)."""

    levels: tuple = (0.0, 1.0)
    position: float = 0.5


@dataclass(frozen=True)
class PiecewiseConstant2D:
    """Shapes painted in order over ``background``; later regions on top."""

    regions: tuple
    background: object = 0.0


@dataclass(frozen=True)
class DiskOnBackground:
    center: tuple = (0.5, 0.5)
    radius: float = 0.25
    colors: tuple = (1.0, 0.0)  # (inside, outside)


@dataclass(frozen=True)
class RampPlusStep:
    """``slope * x + step * 1{x >= position}`` along axis 0, plus ``offset``."""

    slope: float = 0.5
    step: float = 0.5
    position: float = 0.5
    offset: float = 0.0


# -- noise -------------------------------------------------------------------------


@dataclass(frozen=True)
class NoNoise:
    pass


@dataclass(frozen=True)
class Gaussian:
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("noise sigma must be nonnegative")


@dataclass(frozen=True)
class Oscillation:
    amplitude: float
    period_px: int = 2

    def __post_init__(self):
        if not self.period_px >= 2 or int(self.period_px) != self.period_px:
            raise ValueError("oscillation period must be an integer >= 2 pixels")


@dataclass(frozen=True)
class SynthSpec:
    kind: object
    noise: object = field(default_factory=NoNoise)


@dataclass
class GroundTruth:
    """``mask`` of jump pixels with oriented ``normals`` and one-sided values
    (NaN away from the jump set); ``labels`` indexes the painted regions.

    ``interface`` marks the nodes on both sides of every interface, the
    orientation-free pixel set used for coverage tests.
    """

    mask: np.ndarray
    normals: np.ndarray
    f_minus: np.ndarray
    f_plus: np.ndarray
    labels: np.ndarray
    interface: np.ndarray

    def pixels(self) -> list:
        return [tuple(int(i) for i in p) for p in np.argwhere(self.mask)]

    def magnitudes(self) -> np.ndarray:
        return np.linalg.norm(self.f_plus[self.mask] - self.f_minus[self.mask], axis=-1)


# -- random numbers ------------------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, count: int) -> np.ndarray:
    """``count`` outputs of the splitmix64 generator started at ``seed``."""
    with np.errstate(over="ignore"):
        k = np.arange(1, count + 1, dtype=np.uint64)
        z = np.uint64(seed % 2**64) + k * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def gaussian_noise(shape, sigma: float, seed: int) -> np.ndarray:
    """Box-Muller normals from a splitmix64 counter stream, reproducible
    across platforms."""
    total = int(np.prod(shape))
    pairs = (total + 1) // 2
    bits = splitmix64(seed, 2 * pairs)
    unif = ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    u1, u2 = unif[0::2], unif[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(2 * np.pi * u2)
    z[1::2] = r * np.sin(2 * np.pi * u2)
    return sigma * z[:total].reshape(shape)


def oscillation_noise(dims, amplitude: float, period_px: int = 2) -> np.ndarray:
    """Product of square waves along each axis (a checkerboard for period 2)."""
    out = np.ones(tuple(dims))
    for k, n in enumerate(dims):
        s = np.where((np.arange(n) % period_px) < period_px / 2, 1.0, -1.0)
        shape = [1] * len(dims)
        shape[k] = n
        out = out * s.reshape(shape)
    return amplitude * out


# -- generation ----------------------------------------------------------------------


def _color(c, n: int) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.size == 1:
        c = np.repeat(c, n)
    if c.size != n:
        raise ValueError(f"color {c} does not have {n} channels")
    if np.any(c < 0) or np.any(c > 1):
        raise ValueError("colors must lie in [0, 1]")
    return c


def _paint(shapes: Sequence[Shape], colors, background, X, n):
    labels = np.full(X.shape[:-1], -1, dtype=int)
    for k, s in enumerate(shapes):
        labels[s.contains(X)] = k
    palette = np.stack([_color(background, n)] + [_color(c, n) for c in colors])
    return labels, palette


def _ground_truth(shapes, labels, palette, X, n):
    dims = labels.shape
    m = labels.ndim
    mask = np.zeros(dims, dtype=bool)
    interface = np.zeros(dims, dtype=bool)
    normals = np.full(dims + (m,), np.nan)
    fm = np.full(dims + (n,), np.nan)
    fp = np.full(dims + (n,), np.nan)
    for k in range(m):
        for step in (1, -1):
            nb = np.roll(labels, -step, axis=k)
            valid = np.ones(dims, dtype=bool)
            sl = [slice(None)] * m
            sl[k] = -1 if step == 1 else 0
            valid[tuple(sl)] = False
            diff = valid & (nb != labels)
            interface |= diff
            for idx in map(tuple, np.argwhere(diff)):
                top = max(labels[idx], nb[idx])
                shape = shapes[top]
                x = X[idx]
                # read membership from the painted labels, not from geometry,
                # so pixels on the boundary cannot be classified twice
                if (labels[idx] == top) != shape.plus_inside or mask[idx]:
                    continue
                nu = shape.normal(x[None])[0]
                other = nb[idx]
                mask[idx] = True
                normals[idx] = nu
                fp[idx] = palette[labels[idx] + 1]
                fm[idx] = palette[other + 1]
    return GroundTruth(mask, normals, fm, fp, labels, interface)


def generate(spec: SynthSpec, grid: GridSpec, n: int = 1):
    """Render ``spec`` on ``grid`` with ``n`` channels.

    Returns
    -------
    f : VectorField
    truth : GroundTruth
        Jump pixels with oriented normals and the exact one-sided colours.
    """
    if n < 1:
        raise ValueError("need at least one channel")
    X = grid.node_positions()
    kind = spec.kind
    ramp = 0.0
    if isinstance(kind, Step1D):
        pt = np.zeros(grid.ndim)
        pt[0] = kind.position
        nv = np.zeros(grid.ndim)
        nv[0] = 1.0
        shapes = [HalfPlane(tuple(pt), tuple(nv))]
        colors, background = [kind.levels[1]], kind.levels[0]
    elif isinstance(kind, RampPlusStep):
        pt = np.zeros(grid.ndim)
        pt[0] = kind.position
        nv = np.zeros(grid.ndim)
        nv[0] = 1.0
        shapes = [HalfPlane(tuple(pt), tuple(nv))]
        colors, background = [kind.step], 0.0
        ramp = kind.offset + kind.slope * X[..., 0]
    elif isinstance(kind, DiskOnBackground):
        if grid.ndim != 2:
            raise ValueError("DiskOnBackground needs a 2D grid")
        shapes = [Disk(tuple(kind.center), kind.radius)]
        colors, background = [kind.colors[0]], kind.colors[1]
    elif isinstance(kind, PiecewiseConstant2D):
        shapes = [r[0] for r in kind.regions]
        colors, background = [r[1] for r in kind.regions], kind.background
    else:
        raise TypeError(f"unknown synthetic kind {kind!r}")
    for s in shapes:
        s.check(grid)
    labels, palette = _paint(shapes, colors, background, X, n)
    data = palette[labels + 1]
    truth = _ground_truth(shapes, labels, palette, X, n)
    if isinstance(kind, RampPlusStep):
        data = data + np.asarray(ramp)[..., None]
        r0 = kind.offset + kind.slope * kind.position
        truth.f_minus[truth.mask] = r0
        truth.f_plus[truth.mask] = r0 + kind.step
    noise = spec.noise
    if isinstance(noise, Gaussian):
        data = data + gaussian_noise(data.shape, noise.sigma, noise.seed)
    elif isinstance(noise, Oscillation):
        data = data + oscillation_noise(grid.dims, noise.amplitude, noise.period_px)[..., None]
    elif not isinstance(noise, NoNoise):
        raise TypeError(f"unknown noise model {noise!r}")
    return VectorField(grid, data), truth


def smooth_step(grid: GridSpec, colors=(0.0, 1.0), position: float = 0.5, width_px: float = 2.0, n: int = 1) -> VectorField:
    """Step along axis 0 with a ``tanh`` profile of width ``width_px`` pixels."""
    X = grid.node_positions()[..., 0]
    a, b = _color(colors[0], n), _color(colors[1], n)
    t = 0.5 * (1.0 + np.tanh((X - position) / (width_px * grid.spacing)))
    return VectorField(grid, a + t[..., None] * (b - a))
