"""Verification suites and the denoising reproduction pipeline.

Every suite returns a list of :class:`Check` records; a suite passes when
all of them do. All randomness is seeded.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass

import numpy as np

from . import specnorm as sn
from .fidelity import Fidelity
from .grid import CubeOutOfDomain, Direction, GridSpec, VectorField, sample_points
from .imageio import save_image
from .innervar import InnerVariation, fit_loglog_slope, regularizer_quotient_gap
from .jump import detect_jump_set, edge_profile, jump_mask, verify_inclusion, verify_main_inequality, midpoint_check_1d
from .solver import (
    HuberNorm,
    PowerNorm,
    SolverConfig,
    max_principle_check,
    rof_solve,
    taut_string_1d,
    tgv_solve,
)
from .specnorm import SpectralRegularizer
from .synth import (
    DiskOnBackground,
    Gaussian,
    NoNoise,
    Oscillation,
    PiecewiseConstant2D,
    RampPlusStep,
    Rect,
    Step1D,
    SynthSpec,
    generate,
    smooth_step,
)

__all__ = [
    "Check",
    "SUITES",
    "run_suite",
    "suite_rof1d",
    "suite_inclusion2d",
    "suite_maxprinciple",
    "suite_innervar",
    "suite_vonneumann",
    "suite_tgv",
    "disk_colors",
    "disk_image",
    "truth_profiles",
    "lipschitz_constant",
    "staircase_count",
    "tangential_variance",
    "reproduce",
]

DISK_COLORS = ((0.9, 0.15, 0.8), (0.1, 0.85, 0.25))
DISK_RADIUS = 0.3


def disk_colors(n: int = 3):
    return tuple(c[:n] for c in DISK_COLORS)


def disk_image(size: int = 128, noise=None, n: int = 3):
    """Centred disk on a ``size x size`` grid in pixel units (``h = 1``)."""
    spec = GridSpec((size, size), 1.0)
    kind = DiskOnBackground((size / 2, size / 2), DISK_RADIUS * size, disk_colors(n))
    return generate(SynthSpec(kind, noise or NoNoise()), spec, n)


@dataclass
class Check:
    suite: str
    name: str
    value: float
    limit: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        extra = f" {self.detail}" if self.detail else ""
        return f"{flag} {self.suite}/{self.name} value={self.value:.6g} limit={self.limit:.6g}{extra}"


def _le(suite, name, value, limit, detail=""):
    return Check(suite, name, float(value), float(limit), bool(value <= limit), detail)


def _ge(suite, name, value, limit, detail=""):
    return Check(suite, name, float(value), float(limit), bool(value >= limit), detail)


# -- shared helpers ------------------------------------------------------------------


def truth_profiles(u: VectorField, f: VectorField, truth, phi: Fidelity | None = None, clean: VectorField | None = None):
    """Edge profiles at every ground-truth jump pixel whose half-cubes fit.

    ``clean`` (defaults to ``f``) supplies the one-sided data values.
    """
    ref = clean if clean is not None else f
    out = []
    h = u.spec.spacing
    for idx in truth.pixels():
        nu = Direction.of(truth.normals[idx])
        x0 = np.asarray(idx, dtype=float) * h
        try:
            out.append(edge_profile(u, ref, x0, nu, phi=phi))
        except CubeOutOfDomain:
            continue
    return out


def lipschitz_constant(rho: SpectralRegularizer, n: int, m: int) -> float:
    """Lipschitz constant of ``rho`` with respect to the Frobenius norm on
    ``n x m`` matrices."""
    k = min(n, m)
    fam = rho.family
    if fam in ("frobenius", "spectral"):
        c = 1.0
    elif fam == "nuclear":
        c = math.sqrt(k)
    elif fam == "schatten":
        c = k ** max(0.0, 1.0 / rho.p - 0.5)
    elif fam == "lpq":
        c = n ** max(0.0, 1.0 / rho.p - 0.5) * m ** max(0.0, 1.0 / rho.q - 0.5)
    else:
        raise ValueError("no Lipschitz bound for this family")
    return rho.weight * c


def staircase_count(u: VectorField, tol: float = 1e-4) -> int:
    """Sign changes of the second difference along axis 0 (entries below
    ``tol`` count as zero)."""
    d2 = np.diff(u.data, n=2, axis=0)
    s = np.sign(np.where(np.abs(d2) > tol, d2, 0.0))
    s = np.moveaxis(s, 0, -1).reshape(-1, s.shape[0])
    changes = 0
    for row in s:
        nz = row[row != 0]
        changes += int(np.sum(nz[1:] != nz[:-1]))
    return changes


def tangential_variance(u: VectorField, estimates) -> float:
    """Mean squared second difference of ``u`` along the edge tangent at the
    detected jump pixels."""
    if not estimates:
        return 0.0
    h = u.spec.spacing
    x = np.array([e.x0 for e in estimates])
    t = np.array([e.nu_best.tangent()[0] for e in estimates])
    hi = u.spec.upper
    pts = np.stack([x - h * t, x, x + h * t])
    pts = np.clip(pts, 0.0, hi)
    vals = sample_points(u.data, h, pts)
    d2 = vals[0] - 2 * vals[1] + vals[2]
    return float(np.mean(np.sum(d2 * d2, axis=-1)))


# -- suites ----------------------------------------------------------------------------


def suite_rof1d(tol: float = 1e-10, seed: int = 0, **_) -> list[Check]:
    """Taut-string agreement, step jump magnitude and midpoint property."""
    name = "rof1d"
    out = []
    cfg = SolverConfig(tol_gap=tol, max_iters=200000)
    rng = np.random.default_rng(seed)
    N = 64
    spec = GridSpec((N,), 1.0 / N)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(20):
        f = VectorField(spec, rng.uniform(0, 1, (N, 1)))
        for alpha in (0.05, 0.1, 0.3):
            u, _rep = rof_solve(f, SpectralRegularizer("frobenius", alpha), Fidelity(), cfg)
            ref = taut_string_1d(f, alpha)
            worst = max(worst, float(np.max(np.abs(u.data - ref.data))))
    elapsed = time.perf_counter() - t0
    out.append(_le(name, "taut_string_sup_error", worst, 1e-4))
    out.append(_le(name, "taut_string_runtime_s", elapsed, 10.0))

    g = GridSpec((256,), 1.0 / 256)
    f, truth = generate(SynthSpec(Step1D((0.0, 1.0))), g, 1)
    u, _rep = rof_solve(f, SpectralRegularizer("frobenius", 0.1), Fidelity(), cfg)
    profs = truth_profiles(u, f, truth)
    p = profs[0]
    du = float(np.linalg.norm(p.u_plus - p.u_minus))
    out.append(_le(name, "step_jump_error", abs(du - 0.6), 0.02, f"u-={p.u_minus[0]:.6f} u+={p.u_plus[0]:.6f}"))
    rep = verify_main_inequality(u, f, profs, slack=1e-3)
    out.append(_le(name, "step_magnitude_residual", rep.worst_magnitude_residual, 1e-3))
    out.append(_le(name, "step_main_inequality_residual", rep.worst_residual, 1e-3))

    worst_margin = math.inf
    for _ in range(10):
        n_seg = int(rng.integers(3, 8))
        cuts = np.sort(rng.choice(np.arange(8, 120), n_seg - 1, replace=False))
        levels = rng.uniform(0, 1, n_seg)
        data = levels[np.searchsorted(cuts, np.arange(128), side="right")]
        f = VectorField(GridSpec((128,), 1.0 / 128), data[:, None])
        u = taut_string_1d(f, 0.02)
        jumps = np.nonzero(np.abs(np.diff(u.data[:, 0])) > 1e-9)[0] + 1
        for r in midpoint_check_1d(u, f, jumps):
            worst_margin = min(worst_margin, r.margin)
    out.append(_ge(name, "midpoint_margin", worst_margin, -1e-3))
    return out


def _solve(f, rho, tol, phi=None, max_iters=20000):
    return rof_solve(f, rho, phi or Fidelity(), SolverConfig(tol_gap=tol, max_iters=max_iters))


def suite_inclusion2d(tol: float = 1e-6, size: int = 128, threads: int | None = None, threshold: float = 0.2, **_) -> list[Check]:
    """Main inequality on a clean disk and jump inclusion under oscillation."""
    name = "inclusion2d"
    out = []
    f, truth = disk_image(size)
    spec = f.spec
    for fam in ("frobenius", "nuclear"):
        u, rep = _solve(f, SpectralRegularizer(fam, 0.1), tol)
        profs = truth_profiles(u, f, truth)
        ineq = verify_main_inequality(u, f, profs, slack=1e-2)
        frac = ineq.passed / max(ineq.count, 1)
        out.append(_ge(name, f"main_inequality_{fam}", frac, 1.0, f"profiles={ineq.count} worst={ineq.worst_residual:.3e}"))
        out.append(_le(name, f"runtime_{fam}_s", rep.seconds, 60.0))
    fo, _t = disk_image(size, Oscillation(0.1))
    for fam in ("frobenius", "nuclear", "spectral"):
        u, _rep = _solve(fo, SpectralRegularizer(fam, 0.1), tol)
        est = detect_jump_set(u, threshold, threads=threads)
        cov = verify_inclusion(jump_mask(est, spec.dims), truth.interface, 1)
        if fam == "spectral":
            out.append(Check(name, "coverage_spectral_report", cov, 0.99, True, f"report-only detected={len(est)}"))
        else:
            out.append(_ge(name, f"coverage_{fam}", cov, 0.99, f"detected={len(est)}"))
    return out


def maxprinciple_images(size: int = 32):
    a, _ = disk_image(size, Gaussian(0.1, 42))
    spec = a.spec
    rect = PiecewiseConstant2D(((Rect((0.2 * size, 0.3 * size), (0.7 * size, 0.8 * size)), (0.9, 0.1, 0.4)),), (0.2, 0.6, 0.5))
    b, _ = generate(SynthSpec(rect, Oscillation(0.1)), spec, 3)
    c = VectorField(spec, np.random.default_rng(7).uniform(0, 1, spec.dims + (3,)))
    return {"noisy_disk": a, "oscillating_rect": b, "uniform_noise": c}


MAXPRINCIPLE_REGS = ("frobenius", "nuclear", "spectral", "schatten:1.5")
MAXPRINCIPLE_FIDS = ("l2", "huber:0.1")


def suite_maxprinciple(tol: float = 1e-6, size: int = 32, **_) -> list[Check]:
    from .cli import parse_fidelity, parse_regularizer

    name = "maxprinciple"
    out = []
    for img_name, f in maxprinciple_images(size).items():
        for reg in MAXPRINCIPLE_REGS:
            for fid in MAXPRINCIPLE_FIDS:
                u, _rep = _solve(f, parse_regularizer(reg, 0.1), tol, parse_fidelity(fid))
                r = max_principle_check(u, f, 1e-6)
                out.append(_le(name, f"{img_name}/{reg}/{fid}", r.worst, 1e-6))
    return out


def innervar_image(size: int = 64, width_px: float = 2.0):
    spec = GridSpec((size, size), 1.0 / size)
    h = spec.spacing
    c = 0.5 + 0.3 * h
    colors = ((0.1, 0.6, 0.9), (0.9, 0.9, 0.4))
    if width_px > 0:
        w = smooth_step(spec, colors, c, width_px, 3)
    else:
        kind = PiecewiseConstant2D(((Rect((c, -1.0), (2.0, 2.0)), colors[1]),), colors[0])
        w, _ = generate(SynthSpec(kind), spec, 3)
    iv = InnerVariation.plateau(spec, Direction.of((1.0, 0.0)), (c, 0.5))
    return w, iv


INNERVAR_TAUS = (0.04, 0.02, 0.01)
INNERVAR_REGS = ("frobenius", "nuclear", "schatten:1.5")


def suite_innervar(size: int = 64, width_px: float = 2.0, **_) -> list[Check]:
    """Log-log slope of the symmetric regularizer quotient on a step."""
    from .cli import parse_regularizer

    name = "innervar"
    out = []
    for label, width in (("smooth", width_px), ("sharp", 0.0)):
        w, iv = innervar_image(size, width)
        for reg in INNERVAR_REGS:
            rho = parse_regularizer(reg, 1.0)
            gaps = regularizer_quotient_gap(w, rho, iv, INNERVAR_TAUS)
            slope = fit_loglog_slope(gaps)
            bound = -2.0 * lipschitz_constant(rho, 3, 2) * w.spec.spacing
            if label == "smooth":
                out.append(_ge(name, f"slope_{reg}", slope, 0.8))
            else:
                out.append(Check(name, f"slope_{reg}_sharp_report", slope, 0.8, True, "report-only"))
            out.append(_ge(name, f"gap_lower_{label}_{reg}", min(g for _, g in gaps), bound))
    return out


def _random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def suite_vonneumann(seed: int = 0, pairs: int = 10000, samples: int = 1000, **_) -> list[Check]:
    name = "vonneumann"
    rng = np.random.default_rng(seed)
    worst = math.inf
    for n in range(1, 5):
        for m in range(1, 5):
            k = pairs // 16
            A = rng.standard_normal((k, n, m)) * rng.uniform(0.01, 10, (k, 1, 1))
            B = rng.standard_normal((k, n, m)) * rng.uniform(0.01, 10, (k, 1, 1))
            worst = min(worst, float(np.min(sn.von_neumann_gap(A, B))))
    out = [_ge(name, "gap_min", worst, -1e-10)]
    regs = [SpectralRegularizer("frobenius"), SpectralRegularizer("nuclear"), SpectralRegularizer("spectral"),
            SpectralRegularizer("schatten", p=1.5), SpectralRegularizer("schatten", p=3.0)]
    err = 0.0
    for _ in range(samples):
        n, m = rng.integers(1, 5, 2)
        A = rng.standard_normal((n, m))
        U, V = _random_orthogonal(rng, n), _random_orthogonal(rng, m)
        B = U @ A @ V
        for rho in regs:
            a, b = float(sn.value(rho, A)), float(sn.value(rho, B))
            err = max(err, abs(a - b) / max(1.0, abs(a)))
    out.append(_le(name, "unitary_invariance", err, 1e-10))
    return out


def suite_tgv(tol: float = 1e-7, size: int = 32, **_) -> list[Check]:
    name = "tgv"
    out = []
    rho1 = SpectralRegularizer("frobenius")
    rho2 = HuberNorm(0.05)
    cfg = SolverConfig(tol_gap=tol, max_iters=100000)
    spec = GridSpec((size, size), 1.0 / size)
    ramp, _ = generate(SynthSpec(RampPlusStep(slope=0.5, step=0.0, offset=0.2)), spec, 1)
    u, _z, _rep = tgv_solve(ramp, rho1, rho2, (0.1, 0.2), True, cfg)
    out.append(_le(name, "ramp_sup_error", float(np.max(np.abs(u.data - ramp.data))), 1e-3))

    g1 = GridSpec((128,), 1.0 / 128)
    step, truth = generate(SynthSpec(Step1D((0.2, 0.8))), g1, 1)
    u, _z, _rep = tgv_solve(step, rho1, rho2, (0.05, 0.1), True, cfg)
    ineq = verify_main_inequality(u, step, truth_profiles(u, step, truth), slack=1e-2)
    out.append(_le(name, "step_main_inequality_residual", ineq.worst_residual, 1e-2))
    ur, _rep = rof_solve(step, rho1.scaled(0.05), Fidelity(), SolverConfig(tol_gap=tol))
    st_t, st_r = staircase_count(u), staircase_count(ur)
    out.append(Check(name, "staircase_tgv_vs_rof_report", st_t, st_r, True, f"report-only rof={st_r}"))
    try:
        tgv_solve(step, rho1, PowerNorm(1.0))
        refused = 0.0
    except ValueError:
        refused = 1.0
    out.append(_ge(name, "exact_tgv_refused", refused, 1.0))
    return out


SUITES = {
    "rof1d": suite_rof1d,
    "inclusion2d": suite_inclusion2d,
    "maxprinciple": suite_maxprinciple,
    "innervar": suite_innervar,
    "vonneumann": suite_vonneumann,
    "tgv": suite_tgv,
}


def run_suite(name: str, **kwargs) -> list[Check]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}")
    kwargs = {k: v for k, v in kwargs.items() if v is not None}
    return SUITES[name](**kwargs)


# -- reproduction ------------------------------------------------------------------------

REPRODUCE_REGS = ("frobenius", "nuclear", "spectral")


def reproduce(
    noise: float,
    outdir,
    input_image: VectorField | None = None,
    alpha: float = 0.1,
    seed: int = 42,
    size: int = 128,
    tol: float = 1e-6,
    threshold: float = 0.2,
    threads: int | None = None,
) -> dict:
    """Add Gaussian noise, denoise with three regularizers and measure the
    tangential oscillation along detected edges.

    Writes ``noisy``, ``frobenius``, ``nuclear`` and ``spectral`` images and
    ``edge_oscillation.csv`` into ``outdir``; returns the per-regularizer
    tangential variances and solve reports.
    """
    os.makedirs(outdir, exist_ok=True)
    if input_image is None:
        clean, _ = disk_image(size)
    else:
        clean = input_image
    from .synth import gaussian_noise

    f = clean.with_data(clean.data + gaussian_noise(clean.data.shape, noise, seed))
    ext = ".ppm" if f.channels == 3 else ".pgm"
    if f.channels not in (1, 3):
        raise ValueError("reproduce needs 1- or 3-channel input")
    save_image(os.path.join(outdir, "noisy" + ext), f)
    result = {"variance": {}, "reports": {}, "detected": {}}
    for fam in REPRODUCE_REGS:
        u, rep = _solve(f, SpectralRegularizer(fam, alpha), tol)
        save_image(os.path.join(outdir, fam + ext), u)
        est = detect_jump_set(u, threshold, threads=threads)
        result["variance"][fam] = tangential_variance(u, est)
        result["reports"][fam] = rep
        result["detected"][fam] = len(est)
    with open(os.path.join(outdir, "edge_oscillation.csv"), "w") as fh:
        fh.write("regularizer,detected,tangential_variance,iterations,gap\n")
        for fam in REPRODUCE_REGS:
            rep = result["reports"][fam]
            fh.write(f"{fam},{result['detected'][fam]},{result['variance'][fam]:.9g},{rep.iterations},{rep.final_gap:.9g}\n")
    return result
