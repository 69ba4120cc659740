"""Inner variations ``w -> w(x + tau * phi(x))`` and difference-quotient diagnostics.

``phi = nu * bump`` with a scalar plateau ``bump`` that is 1 on a band, decays
through quintic ramps and vanishes on a border frame. ``tau`` is measured in
physical grid coordinates (node ``i`` at ``i * h``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import fidelity as fid
from . import specnorm as sn
from .fidelity import Fidelity
from .grid import Direction, GridSpec, VectorField, sample_points
from .solver import grad_array

__all__ = [
    "InnerVariation",
    "quintic_plateau",
    "apply_inner_variation",
    "regularizer_quotient_gap",
    "mixed_variation",
    "fidelity_variation_sum",
    "fit_loglog_slope",
    "tgv_inner_variation",
    "tgv_quotient_gap",
]

_QUINTIC_MAX_SLOPE = 15.0 / 8.0


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def _smoothstep_deriv(t):
    inside = (t > 0) & (t < 1)
    return np.where(inside, 30.0 * t * t * (1.0 - t) ** 2, 0.0)


def quintic_plateau(n: int, lo: float, hi: float, ramp: float, border: int = 2):
    """1D plateau profile and its derivative on node indices ``0..n-1``.

    Equal to 1 on ``[lo, hi]`` (index units), rising over ``ramp`` nodes
    on each side, and clamped to 0 on the first and last ``border`` nodes.
    Raises when the ramps do not fit between the border and the plateau.
    """
    if ramp <= 0:
        raise ValueError("ramp width must be positive")
    if lo - ramp < border - 1 or hi + ramp > n - border:
        raise ValueError("plateau and ramps do not fit inside the border frame")
    i = np.arange(n, dtype=float)
    left = (i - (lo - ramp)) / ramp
    right = ((hi + ramp) - i) / ramp
    val = np.minimum(_smoothstep(left), _smoothstep(right))
    der = np.where(i < lo, _smoothstep_deriv(left), 0.0) - np.where(i > hi, _smoothstep_deriv(right), 0.0)
    return val, der / ramp


@dataclass(frozen=True, eq=False)
class InnerVariation:
    """Direction ``nu`` and a bump ``phi~`` on ``spec`` (shape ``spec.dims``).

    ``max_slope`` is an upper bound on ``sup |D phi~|`` in physical units.
    """

    spec: GridSpec
    nu: Direction
    bump: np.ndarray
    max_slope: float

    def __post_init__(self):
        b = np.array(self.bump, dtype=float)
        if b.shape != self.spec.dims:
            raise ValueError("bump shape must equal grid dims")
        if np.any(b < -1e-15) or np.any(b > 1 + 1e-15):
            raise ValueError("bump values must lie in [0, 1]")
        frame = np.ones(b.shape, dtype=bool)
        inner = tuple(slice(2, -2) for _ in b.shape)
        frame[inner] = False
        if np.any(b[frame] != 0):
            raise ValueError("bump must vanish on a 2-pixel border frame")
        b.flags.writeable = False
        object.__setattr__(self, "bump", b)

    @classmethod
    def plateau(
        cls,
        spec: GridSpec,
        nu: Direction,
        center,
        eps_px: float = 3.0,
        ramp_px: float = 8.0,
        border_px: int = 2,
    ) -> "InnerVariation":
        """Separable plateau around the point ``center`` (physical units).

        Along the grid axis closest to ``nu`` the flat band has half-width
        ``eps_px``; along the other axis it extends as far as the border frame
        and ramps allow.
        """
        c = np.asarray(center, dtype=float) / spec.spacing
        v = nu.vector
        axis = int(np.argmax(np.abs(v)))
        bump = np.ones(spec.dims)
        slopes = []
        for k, n in enumerate(spec.dims):
            if k == axis:
                lo, hi = c[k] - eps_px, c[k] + eps_px
            else:
                lo, hi = border_px - 1 + ramp_px, n - border_px - ramp_px
            val, _ = quintic_plateau(n, lo, hi, ramp_px, border_px)
            shape = [1] * spec.ndim
            shape[k] = n
            bump = bump * val.reshape(shape)
            slopes.append(_QUINTIC_MAX_SLOPE / (ramp_px * spec.spacing))
        return cls(spec, nu, bump, float(np.sqrt(np.sum(np.square(slopes)))))

    def bump_gradient(self) -> np.ndarray:
        """Centered-difference gradient of the bump, shape ``dims + (m,)``."""
        g = np.gradient(self.bump, self.spec.spacing)
        if self.spec.ndim == 1:
            g = [g]
        return np.stack(g, axis=-1)

    def displacement(self, tau: float) -> np.ndarray:
        """``tau * phi(x)`` at all nodes, shape ``dims + (m,)``."""
        return tau * self.bump[..., None] * self.nu.vector


def _check_tau(iv: InnerVariation, tau: float):
    if not np.isfinite(tau):
        raise ValueError("tau must be finite")
    if abs(tau) * iv.max_slope >= 1.0:
        raise ValueError("not a diffeomorphism")


def apply_inner_variation(w: VectorField, iv: InnerVariation, tau: float) -> VectorField:
    """``w(x + tau * phi(x))`` sampled bilinearly at every node."""
    if w.spec != iv.spec:
        raise ValueError("field and inner variation live on different grids")
    _check_tau(iv, tau)
    if tau == 0:
        return w
    pts = iv.spec.node_positions() + iv.displacement(tau)
    return w.with_data(sample_points(w.data, w.spec.spacing, pts))


def mixed_variation(w: VectorField, iv: InnerVariation, theta: float, tau: float) -> VectorField:
    """``theta * w_tau + (1 - theta) * w``."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    wt = apply_inner_variation(w, iv, tau)
    return w.with_data(theta * wt.data + (1.0 - theta) * w.data)


def _regularizer(rho, w: VectorField) -> float:
    """``h^m sum rho(Dw)``; ``rho`` is a :class:`SpectralRegularizer` or a
    callable on stacks of ``n x m`` matrices."""
    Dw = grad_array(w.data, w.spec.spacing)
    vals = rho(Dw) if callable(rho) and not isinstance(rho, sn.SpectralRegularizer) else sn.value(rho, Dw)
    return float(np.sum(vals)) * w.spec.cell_volume


def regularizer_quotient_gap(w: VectorField, rho, iv: InnerVariation, tau_list: Sequence[float]):
    """``[(tau, gap(tau))]`` with
    ``gap = (R(w_tau) - R(w)) / tau + (R(w_-tau) - R(w)) / tau``."""
    base = _regularizer(rho, w)
    out = []
    for tau in tau_list:
        tau = float(tau)
        if not tau > 0:
            raise ValueError("tau values must be positive")
        rp = _regularizer(rho, apply_inner_variation(w, iv, tau))
        rm = _regularizer(rho, apply_inner_variation(w, iv, -tau))
        out.append((tau, (rp - base) / tau + (rm - base) / tau))
    return out


def fidelity_variation_sum(
    u: VectorField, f: VectorField, phi: Fidelity, iv: InnerVariation, theta: float, tau_list: Sequence[float]
):
    """``[(tau, S(tau))]`` with ``S = (F(u_{theta,tau} - f) - F(u - f)) / tau
    + (F(u_{theta,-tau} - f) - F(u - f)) / tau`` and ``F = h^m sum psi``."""
    vol = u.spec.cell_volume

    def F(w):
        return float(np.sum(fid.psi_value(phi, w.data - f.data))) * vol

    base = F(u)
    out = []
    for tau in tau_list:
        tau = float(tau)
        sp = F(mixed_variation(u, iv, theta, tau))
        sm = F(mixed_variation(u, iv, theta, -tau))
        out.append((tau, (sp - base) / tau + (sm - base) / tau))
    return out


def fit_loglog_slope(pairs) -> float:
    """Least-squares slope of ``log gap`` against ``log tau``; ``nan`` if any
    gap is not positive."""
    t = np.array([p[0] for p in pairs], dtype=float)
    g = np.array([p[1] for p in pairs], dtype=float)
    if np.any(g <= 0):
        return float("nan")
    return float(np.polyfit(np.log(t), np.log(g), 1)[0])


def tgv_inner_variation(u: VectorField, z: VectorField, iv: InnerVariation, tau: float):
    """Transform ``(u, z)`` to ``(u(x + tau phi), (I + tau D phi)^T z(x + tau phi))``.

    ``D phi = nu (x) grad phi~``, so the matrix acts as
    ``z + tau * (nu . z) grad phi~``, applied pointwise on the grid.
    """
    ut = apply_inner_variation(u, iv, tau)
    zs = apply_inner_variation(z, iv, tau).data
    nz = zs @ iv.nu.vector
    zt = zs + tau * nz[..., None] * iv.bump_gradient()
    return ut, z.with_data(zt)


def tgv_quotient_gap(u, z, f, rho1, rho2, weights, iv: InnerVariation, tau_list, symmetrized=True):
    """Symmetric difference quotients of the TGV regularizer along
    :func:`tgv_inner_variation` (report-only diagnostic)."""
    from .solver import tgv_energy

    zero_fid = Fidelity()
    u_field = u

    def R(uu, zz):
        # regularizer part only: evaluate against f = uu so the data term vanishes
        return tgv_energy(uu, zz, uu, rho1, rho2, weights, symmetrized, zero_fid)

    base = R(u_field, z)
    out = []
    for tau in tau_list:
        up, zp = tgv_inner_variation(u_field, z, iv, tau)
        um, zm = tgv_inner_variation(u_field, z, iv, -tau)
        out.append((tau, (R(up, zp) - base) / tau + (R(um, zm) - base) / tau))
    return out
