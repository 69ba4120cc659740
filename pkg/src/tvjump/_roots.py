"""Vectorized bracketed root finding (Newton or false position, bisection fallback)."""

import numpy as np


def newton_bisect(f, lo, hi, x0=None, xtol=1e-12, maxiter=100):
    """Find roots of ``f`` elementwise inside brackets ``[lo, hi]``.

    ``f(x)`` returns ``(value, derivative)``; ``derivative`` may be ``None``,
    in which case Illinois false-position steps replace Newton steps. Each
    iterate is kept inside the current bracket, falling back to bisection.
    Convergence is declared when the step or the bracket width drops below
    ``xtol * max(1, |x|)``.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    f_lo = f(lo)[0]
    f_hi = f(hi)[0]
    # orient so that f(lo) <= 0 <= f(hi)
    flip = f_lo > f_hi
    lo, hi = np.where(flip, hi, lo), np.where(flip, lo, hi)
    f_lo, f_hi = np.where(flip, f_hi, f_lo), np.where(flip, f_lo, f_hi)
    done = (f_lo == 0) | (f_hi == 0)
    x = np.where(f_lo == 0, lo, np.where(f_hi == 0, hi, 0.5 * (lo + hi)))
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        inside = (x0 - lo) * (x0 - hi) < 0
        x = np.where(~done & inside, x0, x)
    side = np.zeros(x.shape, dtype=np.int8)
    for _ in range(maxiter):
        if np.all(done):
            break
        v, d = f(x)
        v = np.asarray(v, dtype=float)
        hit = v == 0
        neg = v < 0
        lo = np.where(~done & neg, x, lo)
        f_lo_new = np.where(~done & neg, v, f_lo)
        hi = np.where(~done & ~neg, x, hi)
        f_hi_new = np.where(~done & ~neg, v, f_hi)
        if d is None:
            # Illinois: halve the stale endpoint value when the same side repeats
            stale_hi = neg & (side == -1)
            stale_lo = ~neg & (side == 1)
            f_hi_new = np.where(stale_hi, 0.5 * f_hi_new, f_hi_new)
            f_lo_new = np.where(stale_lo, 0.5 * f_lo_new, f_lo_new)
            side = np.where(neg, -1, 1).astype(np.int8)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = lo - f_lo_new * (hi - lo) / (f_hi_new - f_lo_new)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                step = x - v / np.asarray(d, dtype=float)
        f_lo, f_hi = f_lo_new, f_hi_new
        ok = np.isfinite(step) & (((step - lo) * (step - hi) < 0) | (step == x))
        xn = np.where(ok, step, 0.5 * (lo + hi))
        tol = xtol * np.maximum(1.0, np.abs(x))
        conv = hit | (np.abs(xn - x) <= tol) | (np.abs(hi - lo) <= tol)
        x = np.where(done | hit, x, xn)
        done = done | conv
    return x
