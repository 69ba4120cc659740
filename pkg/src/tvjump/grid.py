"""Field containers on regular 1D/2D grids and bilinear sampling.

Grid node ``i`` sits at physical position ``i * h`` along each axis, so the
bounding box of a grid with dims ``(N0, N1)`` is ``[0, (N0-1)h] x [0, (N1-1)h]``.
Points are always given in array-axis order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "GridSpec",
    "VectorField",
    "MatrixField",
    "Direction",
    "sample_bilinear",
    "sample_points",
    "shift_sample",
    "halfcube_points",
    "halfcube_average",
    "CubeOutOfDomain",
]


class CubeOutOfDomain(ValueError):
    """Raised when a (half-)cube is not contained in the grid's bounding box."""


@dataclass(frozen=True)
class GridSpec:
    dims: tuple[int, ...]
    spacing: float = 1.0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        if any(d < 2 for d in dims):
            raise ValueError("every grid dimension must be >= 2")
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise ValueError("grid spacing must be positive")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.ndim

    @property
    def upper(self) -> np.ndarray:
        """Upper corner of the bounding box."""
        return (np.asarray(self.dims, dtype=float) - 1.0) * self.spacing

    def node_positions(self) -> np.ndarray:
        """Physical coordinates of all nodes, shape ``dims + (m,)``."""
        axes = [np.arange(d) * self.spacing for d in self.dims]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def position(self, index: Sequence[int]) -> np.ndarray:
        return np.asarray(index, dtype=float) * self.spacing


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class VectorField:
    """An ``n``-channel field, ``data.shape == spec.dims + (n,)``."""

    spec: GridSpec
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.shape[:-1] != self.spec.dims or data.ndim != self.spec.ndim + 1:
            raise ValueError(
                f"data shape {data.shape} does not match grid dims {self.spec.dims} + (n,)"
            )
        if data.shape[-1] < 1:
            raise ValueError("a field needs at least one channel")
        if not np.all(np.isfinite(data)):
            raise ValueError("field data must be finite")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def channels(self) -> int:
        return self.data.shape[-1]

    @classmethod
    def from_array(cls, array, spacing: float = 1.0, vector: bool = False) -> "VectorField":
        """Wrap an array. With ``vector=False`` the array is scalar and a
        channel axis is appended; otherwise the last axis holds channels."""
        a = np.asarray(array, dtype=float)
        if not vector:
            a = a[..., None]
        return cls(GridSpec(a.shape[:-1], spacing), a)

    def with_data(self, data) -> "VectorField":
        return VectorField(self.spec, data)

    def __repr__(self):
        return f"VectorField(dims={self.spec.dims}, h={self.spec.spacing}, n={self.channels})"


@dataclass(frozen=True, eq=False)
class MatrixField:
    """Per-node ``n x m`` matrices, ``data.shape == spec.dims + (n, m)``."""

    spec: GridSpec
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.shape[: self.spec.ndim] != self.spec.dims or data.ndim != self.spec.ndim + 2:
            raise ValueError(
                f"data shape {data.shape} does not match grid dims {self.spec.dims} + (n, m)"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("field data must be finite")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def rows(self) -> int:
        return self.data.shape[-2]

    @property
    def cols(self) -> int:
        return self.data.shape[-1]

    def __repr__(self):
        return (
            f"MatrixField(dims={self.spec.dims}, h={self.spec.spacing}, "
            f"shape={self.rows}x{self.cols})"
        )


@dataclass(frozen=True)
class Direction:
    """Unit vector in R^m."""

    nu: tuple[float, ...]

    def __post_init__(self):
        nu = tuple(float(v) for v in np.ravel(self.nu))
        object.__setattr__(self, "nu", nu)
        if abs(math.sqrt(sum(v * v for v in nu)) - 1.0) > 1e-12:
            raise ValueError("direction must have unit length")

    @classmethod
    def of(cls, vector) -> "Direction":
        """Normalize ``vector`` into a direction."""
        v = np.asarray(vector, dtype=float).ravel()
        norm = np.linalg.norm(v)
        if not norm > 0:
            raise ValueError("cannot normalize a zero vector")
        return cls(tuple(v / norm))

    @classmethod
    def from_angle(cls, theta: float) -> "Direction":
        return cls((math.cos(theta), math.sin(theta)))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.nu)

    def __neg__(self) -> "Direction":
        return Direction(tuple(-v for v in self.nu))

    def tangent(self) -> np.ndarray:
        """A unit vector orthogonal to ``nu`` (2D only); empty basis in 1D."""
        if len(self.nu) == 1:
            return np.zeros((0, 1))
        return np.array([[-self.nu[1], self.nu[0]]])


def _check_points(points: np.ndarray):
    if not np.all(np.isfinite(points)):
        raise ValueError("invalid sample point")


def sample_points(data: np.ndarray, spacing: float, points) -> np.ndarray:
    """Multilinear interpolation of ``data`` (shape ``dims + (n,)``) at
    ``points`` (shape ``(..., m)``), clamped to the bounding box."""
    points = np.asarray(points, dtype=float)
    _check_points(points)
    m = data.ndim - 1
    if points.shape[-1] != m:
        raise ValueError(f"points must have {m} coordinates")
    dims = data.shape[:-1]
    flat = points.reshape(-1, m)
    idx0 = []
    frac = []
    for k in range(m):
        t = np.clip(flat[:, k] / spacing, 0.0, dims[k] - 1)
        i = np.minimum(np.floor(t).astype(np.intp), dims[k] - 2)
        idx0.append(i)
        frac.append(t - i)
    if m == 1:
        a = frac[0][:, None]
        out = (1 - a) * data[idx0[0]] + a * data[idx0[0] + 1]
    else:
        i, j = idx0
        a, b = frac[0][:, None], frac[1][:, None]
        out = (
            (1 - a) * (1 - b) * data[i, j]
            + a * (1 - b) * data[i + 1, j]
            + (1 - a) * b * data[i, j + 1]
            + a * b * data[i + 1, j + 1]
        )
    return out.reshape(points.shape[:-1] + (data.shape[-1],))


def sample_bilinear(w: VectorField, x) -> np.ndarray:
    """Value of ``w`` at the point ``x`` (or at an array of points)."""
    return sample_points(w.data, w.spec.spacing, x)


def _shift_axis(data: np.ndarray, axis: int, shift_px: float) -> np.ndarray:
    n = data.shape[axis]
    t = np.clip(np.arange(n) + shift_px, 0.0, n - 1)
    i = np.minimum(np.floor(t).astype(np.intp), n - 2)
    a = t - i
    shape = [1] * data.ndim
    shape[axis] = n
    a = a.reshape(shape)
    return (1 - a) * np.take(data, i, axis=axis) + a * np.take(data, i + 1, axis=axis)


def shift_sample(data: np.ndarray, spacing: float, offset) -> np.ndarray:
    """Sample ``data`` at every node displaced by ``offset``.

    Equivalent to ``sample_points`` at ``node_positions() + offset`` but done
    separably, since the fractional weights are the same at every node.
    """
    offset = np.asarray(offset, dtype=float)
    _check_points(offset)
    out = data
    for k in range(data.ndim - 1):
        if offset[k] != 0.0:
            out = _shift_axis(out, k, offset[k] / spacing)
    return out


def _halfcube_offsets(m: int, nu: np.ndarray, tau: float, side: str, count: int) -> np.ndarray:
    step = tau / count
    normal = (np.arange(count) + 0.5) * step
    if side == "minus":
        normal = -normal
    elif side != "plus":
        raise ValueError("side must be 'plus' or 'minus'")
    if m == 1:
        return normal[:, None] * nu[None, :]
    tangent = np.array([-nu[1], nu[0]])
    tang = -tau + (np.arange(2 * count) + 0.5) * step
    s, t = np.meshgrid(normal, tang, indexing="ij")
    return s.reshape(-1, 1) * nu + t.reshape(-1, 1) * tangent


def halfcube_points(spec: GridSpec, x0, nu: Direction, tau: float, side: str) -> np.ndarray:
    """Midpoint-rule lattice of the half-cube ``Q^side_tau(x0, nu)``.

    ``ceil(tau/h)`` points across the normal extent and twice as many across
    the (two-sided) tangential extent. Raises :class:`CubeOutOfDomain` when
    the half-cube leaves the bounding box.
    """
    x0 = np.asarray(x0, dtype=float)
    _check_points(x0)
    if not tau >= 2 * spec.spacing * (1 - 1e-12):
        raise ValueError("tau must be at least two grid spacings")
    v = nu.vector
    if v.shape != (spec.ndim,):
        raise ValueError("direction dimension does not match grid")
    _check_inside(spec, x0, v, tau, side)
    count = math.ceil(tau / spec.spacing - 1e-9)
    return x0 + _halfcube_offsets(spec.ndim, v, tau, side, count)


def _check_inside(spec: GridSpec, x0, v, tau, side):
    sign = 1.0 if side == "plus" else -1.0
    corners = [x0, x0 + sign * tau * v]
    if spec.ndim == 2:
        t = np.array([-v[1], v[0]])
        corners = [c + e * tau * t for c in corners for e in (-1.0, 1.0)]
    corners = np.array(corners)
    slack = 1e-9 * spec.spacing
    if np.any(corners < -slack) or np.any(corners > spec.upper + slack):
        raise CubeOutOfDomain("cube out of domain")


def halfcube_average(f: VectorField, x0, nu: Direction, tau: float, side: str) -> np.ndarray:
    """Mean of ``f`` over the half-cube ``Q^side_tau(x0, nu)``."""
    pts = halfcube_points(f.spec, x0, nu, tau, side)
    return sample_bilinear(f, pts).mean(axis=0)
