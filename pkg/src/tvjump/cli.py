"""``tvjump`` command-line front end.

Subcommands: ``denoise``, ``tgv``, ``jumps``, ``verify`` and ``reproduce``.
Parameters come from built-in defaults, then an optional ``--config`` file
of ``key = value`` lines, then explicit flags.

Exit codes: 0 success, 1 unreadable input or failed verification,
2 invalid or unsupported parameters.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .fidelity import Fidelity
from .grid import CubeOutOfDomain
from .imageio import load_image, read_config, save_image, write_jump_csv
from .jump import default_directions, detect_jump_set, edge_profile
from .solver import HuberNorm, PowerNorm, SolverConfig, rof_solve, tgv_solve
from .specnorm import SpectralRegularizer

__all__ = ["main", "RunConfig", "parse_regularizer", "parse_fidelity", "parse_rho2", "build_parser"]

log = logging.getLogger("tvjump")


class UsageError(ValueError):
    """Bad or unsupported parameter value (exit code 2)."""


class InputError(OSError):
    """Missing or unreadable input (exit code 1)."""


# -- value parsers -----------------------------------------------------------------


def parse_regularizer(text: str, alpha: float = 1.0) -> SpectralRegularizer:
    """``frobenius|nuclear|spectral|schatten:p|lpq:p,q`` weighted by ``alpha``."""
    name, _, arg = str(text).strip().lower().partition(":")
    try:
        if name in ("frobenius", "nuclear", "spectral") and not arg:
            return SpectralRegularizer(name, alpha)
        if name == "schatten":
            return SpectralRegularizer("schatten", alpha, p=float(arg))
        if name == "lpq":
            p, q = (float(s) for s in arg.split(","))
            return SpectralRegularizer("lpq", alpha, p=p, q=q)
    except ValueError as exc:
        raise UsageError(f"bad regularizer {text!r}: {exc}") from None
    raise UsageError(f"unsupported regularizer {text!r}")


def parse_fidelity(text: str) -> Fidelity:
    name, _, arg = str(text).strip().lower().partition(":")
    try:
        if name == "l2" and not arg:
            return Fidelity.squared_l2()
        if name == "huber":
            return Fidelity.huber(float(arg))
    except ValueError as exc:
        raise UsageError(f"bad fidelity {text!r}: {exc}") from None
    raise UsageError(f"unsupported fidelity {text!r}")


def parse_rho2(text: str):
    name, _, arg = str(text).strip().lower().partition(":")
    try:
        val = float(arg)
    except ValueError:
        raise UsageError(f"bad rho2 {text!r}") from None
    if name == "power":
        if val == 1.0:
            raise UsageError("exact TGV out of scope (rho2 power:1 is not differentiable)")
        try:
            return PowerNorm(val)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if name == "huber":
        try:
            return HuberNorm(val)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    raise UsageError(f"unsupported rho2 {text!r}")


def parse_box(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    try:
        lo, hi = (float(s) for s in str(text).split(","))
    except ValueError:
        raise UsageError(f"bad box {text!r}, expected lo,hi") from None
    if not lo <= hi:
        raise UsageError("box needs lo <= hi")
    return (lo, hi)


def parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"bad boolean {text!r}")


def parse_float_list(text) -> list[float]:
    try:
        return [float(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad number list {text!r}") from None


def _num(kind, text, key):
    try:
        return kind(text)
    except (TypeError, ValueError):
        raise UsageError(f"bad value for {key}: {text!r}") from None


# -- configuration -------------------------------------------------------------------

GLOBAL_DEFAULTS = {"threads": None, "verbose": False}

DEFAULTS = {
    "denoise": {
        "input": None, "output": None, "reg": "frobenius", "alpha": "0.1", "fidelity": "l2",
        "box": None, "tol": "1e-6", "iters": "20000",
    },
    "tgv": {
        "input": None, "output": None, "reg1": "frobenius", "rho2": "huber:0.05", "alpha1": "0.1",
        "alpha2": "0.2", "symmetrized": "true", "fidelity": "l2", "tol": "1e-6", "iters": "50000",
    },
    "jumps": {
        "input": None, "output": None, "reference": None, "tau_list": "16,8,4", "directions": "16",
        "threshold": "auto", "fidelity": "l2",
    },
    "verify": {"suite": None, "report": None, "tol": None, "size": None, "seed": None},
    "reproduce": {
        "noise": "0.1", "input": None, "outdir": "reproduce_out", "alpha": None, "seed": "42",
        "size": "128", "tol": "1e-6", "threshold": "0.2",
    },
}


@dataclass
class RunConfig:
    """Resolved command with its flat parameter table."""

    command: str
    params: dict = field(default_factory=dict)

    def get(self, key):
        return self.params.get(key)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cmd = args.command
    params = dict(GLOBAL_DEFAULTS)
    params.update(DEFAULTS[cmd])
    if args.config:
        try:
            file_vals = read_config(args.config)
        except OSError as exc:
            raise InputError(f"cannot read config: {exc}") from None
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        unknown = sorted(set(file_vals) - set(params))
        if unknown:
            raise UsageError(f"unknown config keys for {cmd}: {', '.join(unknown)}")
        params.update(file_vals)
    for key in params:
        val = getattr(args, key, None)
        if val is not None and val is not False:
            params[key] = val
    return RunConfig(cmd, params)


# -- commands ---------------------------------------------------------------------------


def _load(path):
    if not path:
        raise InputError("no input image given")
    if not os.path.isfile(path):
        raise InputError(f"input not found: {path}")
    try:
        return load_image(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _need_output(cfg: RunConfig):
    out = cfg.get("output")
    if not out:
        raise UsageError("no output path given")
    return out


def _write_report(path, lines):
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_denoise(cfg: RunConfig) -> int:
    alpha = _num(float, cfg.get("alpha"), "alpha")
    rho = parse_regularizer(cfg.get("reg"), alpha)
    phi = parse_fidelity(cfg.get("fidelity"))
    scfg = SolverConfig(
        tol_gap=_num(float, cfg.get("tol"), "tol"),
        max_iters=_num(int, cfg.get("iters"), "iters"),
        box=parse_box(cfg.get("box")),
    )
    out = _need_output(cfg)
    f = _load(cfg.get("input"))
    u, rep = rof_solve(f, rho, phi, scfg)
    save_image(out, u)
    _write_report(
        out + ".report.txt",
        [
            "command = denoise",
            f"input = {cfg.get('input')}",
            f"reg = {rho}",
            f"alpha = {alpha:.9g}",
            f"fidelity = {phi}",
            f"energy = {rep.primal_energy:.12g}",
            f"gap = {rep.final_gap:.6e}",
            f"gap_kind = {rep.gap_kind}",
            f"iterations = {rep.iterations}",
            f"converged = {rep.converged}",
            f"seconds = {rep.seconds:.3f}",
        ],
    )
    print(rep.summary())
    return 0


def cmd_tgv(cfg: RunConfig) -> int:
    rho1 = parse_regularizer(cfg.get("reg1"))
    rho2 = parse_rho2(cfg.get("rho2"))
    phi = parse_fidelity(cfg.get("fidelity"))
    a1 = _num(float, cfg.get("alpha1"), "alpha1")
    a2 = _num(float, cfg.get("alpha2"), "alpha2")
    sym = parse_bool(cfg.get("symmetrized"))
    scfg = SolverConfig(tol_gap=_num(float, cfg.get("tol"), "tol"), max_iters=_num(int, cfg.get("iters"), "iters"))
    out = _need_output(cfg)
    f = _load(cfg.get("input"))
    if f.channels != 1:
        raise UsageError("tgv handles single-channel (PGM) input only")
    try:
        u, _z, rep = tgv_solve(f, rho1, rho2, (a1, a2), sym, scfg, phi)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    save_image(out, u)
    _write_report(
        out + ".report.txt",
        [
            "command = tgv",
            f"input = {cfg.get('input')}",
            f"reg1 = {rho1}",
            f"rho2 = {rho2}",
            f"alpha1 = {a1:.9g}",
            f"alpha2 = {a2:.9g}",
            f"symmetrized = {sym}",
            f"fidelity = {phi}",
            f"energy = {rep.primal_energy:.12g}",
            f"gap = {rep.final_gap:.6e}",
            f"gap_kind = {rep.gap_kind}",
            f"iterations = {rep.iterations}",
            f"converged = {rep.converged}",
            f"seconds = {rep.seconds:.3f}",
        ],
    )
    print(rep.summary())
    return 0


def jump_rows(u, f, estimates, phi: Fidelity) -> list[dict]:
    """CSV rows for :func:`tvjump.imageio.write_jump_csv`."""
    rows = []
    n = u.channels
    for e in estimates:
        row = {"x0": e.x0, "nu": e.nu_best.vector, "j": e.j_value}
        try:
            p = edge_profile(u, f, e.x0, e.nu_best, phi=phi)
            row.update(u_minus=p.u_minus, u_plus=p.u_plus, f_minus=p.f_minus, f_plus=p.f_plus,
                       lhs=p.lhs, rhs=p.rhs, **{"pass": p.lhs <= p.rhs + 1e-2})
        except CubeOutOfDomain:
            nan = np.full(n, np.nan)
            row.update(u_minus=nan, u_plus=nan, f_minus=nan, f_plus=nan, lhs=np.nan, rhs=np.nan, **{"pass": False})
        rows.append(row)
    return rows


def cmd_jumps(cfg: RunConfig) -> int:
    taus_px = parse_float_list(cfg.get("tau_list"))
    ndir = _num(int, cfg.get("directions"), "directions")
    phi = parse_fidelity(cfg.get("fidelity"))
    if ndir < 1 or not taus_px or min(taus_px) < 2:
        raise UsageError("need at least one direction and tau values >= 2 pixels")
    out = _need_output(cfg)
    u = _load(cfg.get("input"))
    f = _load(cfg.get("reference")) if cfg.get("reference") else u
    if f.spec != u.spec or f.channels != u.channels:
        raise UsageError("reference image does not match input")
    h = u.spec.spacing
    threads = cfg.get("threads")
    if cfg.get("threshold") == "auto":
        # heuristic default: a tenth of the largest channel range
        thr = 0.1 * float(np.max(np.ptp(u.data.reshape(-1, u.channels), axis=0)))
    else:
        thr = _num(float, cfg.get("threshold"), "threshold")
    try:
        est = [] if thr == 0.0 else detect_jump_set(
            u, thr, [t * h for t in taus_px], default_directions(u.spec.ndim, ndir),
            threads=None if threads is None else _num(int, threads, "threads"),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = jump_rows(u, f, est, phi)
    write_jump_csv(out, rows, u.channels)
    _write_report(
        out + ".report.txt",
        [
            "command = jumps",
            f"input = {cfg.get('input')}",
            f"reference = {cfg.get('reference')}",
            f"tau_px = {','.join(f'{t:g}' for t in taus_px)}",
            f"directions = {ndir}",
            f"threshold = {thr:.9g}",
            f"detected = {len(rows)}",
            f"profiles_passed = {sum(bool(r['pass']) for r in rows)}",
        ],
    )
    print(f"{len(rows)} jump pixels written to {out}")
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    from .verify import SUITES, run_suite

    suite = cfg.get("suite")
    if suite not in SUITES:
        raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    kwargs = {
        "tol": None if cfg.get("tol") is None else _num(float, cfg.get("tol"), "tol"),
        "size": None if cfg.get("size") is None else _num(int, cfg.get("size"), "size"),
        "seed": None if cfg.get("seed") is None else _num(int, cfg.get("seed"), "seed"),
    }
    if suite in ("inclusion2d",) and cfg.get("threads") is not None:
        kwargs["threads"] = _num(int, cfg.get("threads"), "threads")
    t0 = time.perf_counter()
    checks = run_suite(suite, **kwargs)
    ok = all(c.passed for c in checks)
    lines = [c.line() for c in checks]
    lines.append(f"{'PASS' if ok else 'FAIL'} {suite} checks={len(checks)} failed={sum(not c.passed for c in checks)} "
                 f"seconds={time.perf_counter() - t0:.2f}")
    for line in lines:
        print(line)
    if cfg.get("report"):
        _write_report(cfg.get("report"), lines)
    return 0 if ok else 1


def cmd_reproduce(cfg: RunConfig) -> int:
    from .verify import REPRODUCE_REGS, reproduce

    noise = _num(float, cfg.get("noise"), "noise")
    if not noise >= 0:
        raise UsageError("noise must be nonnegative")
    image = _load(cfg.get("input")) if cfg.get("input") else None
    outdir = cfg.get("outdir")
    threads = cfg.get("threads")
    res = reproduce(
        noise,
        outdir,
        image,
        alpha=noise if cfg.get("alpha") is None else _num(float, cfg.get("alpha"), "alpha"),
        seed=_num(int, cfg.get("seed"), "seed"),
        size=_num(int, cfg.get("size"), "size"),
        tol=_num(float, cfg.get("tol"), "tol"),
        threshold=_num(float, cfg.get("threshold"), "threshold"),
        threads=None if threads is None else _num(int, threads, "threads"),
    )
    var = res["variance"]
    lines = ["command = reproduce", f"noise = {noise:g}", f"input = {cfg.get('input') or 'synthetic disk'}"]
    for fam in REPRODUCE_REGS:
        rep = res["reports"][fam]
        lines.append(f"{fam}: tangential_variance = {var[fam]:.9g} detected = {res['detected'][fam]} {rep.summary()}")
    order = sorted(REPRODUCE_REGS, key=lambda k: -var[k])
    lines.append("ranking (largest tangential variance first) = " + " > ".join(order))
    _write_report(os.path.join(outdir, "reproduce.report.txt"), lines)
    for line in lines:
        print(line)
    return 0


COMMANDS = {
    "denoise": cmd_denoise,
    "tgv": cmd_tgv,
    "jumps": cmd_jumps,
    "verify": cmd_verify,
    "reproduce": cmd_reproduce,
}


# -- parser --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tvjump", description="Vectorial TV denoising and jump-set analysis.")
    ap.add_argument("--config", help="key = value file; flags override its values")
    ap.add_argument("--threads", type=int, help="worker threads for jump maps (0 = all cores)")
    ap.add_argument("--verbose", action="store_true", help="log solver iterations")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("denoise", help="ROF-type denoising")
    p.add_argument("input", nargs="?")
    p.add_argument("output", nargs="?")
    p.add_argument("--reg", help="frobenius|nuclear|spectral|schatten:p|lpq:p,q")
    p.add_argument("--alpha")
    p.add_argument("--fidelity", help="l2|huber:delta")
    p.add_argument("--box", help="lo,hi")
    p.add_argument("--tol")
    p.add_argument("--iters")

    p = sub.add_parser("tgv", help="smoothed second-order TGV denoising")
    p.add_argument("input", nargs="?")
    p.add_argument("output", nargs="?")
    p.add_argument("--reg1")
    p.add_argument("--rho2", help="power:p|huber:delta")
    p.add_argument("--alpha1")
    p.add_argument("--alpha2")
    p.add_argument("--symmetrized", help="true|false")
    p.add_argument("--fidelity")
    p.add_argument("--tol")
    p.add_argument("--iters")

    p = sub.add_parser("jumps", help="jump-set detection to CSV")
    p.add_argument("input", nargs="?")
    p.add_argument("output", nargs="?")
    p.add_argument("--reference", help="data image f for the one-sided f values")
    p.add_argument("--tau-list", dest="tau_list", help="comma list of scales in pixels")
    p.add_argument("--directions")
    p.add_argument("--threshold")
    p.add_argument("--fidelity")

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("--suite")
    p.add_argument("--report")
    p.add_argument("--tol", help="override solver tolerance")
    p.add_argument("--size")
    p.add_argument("--seed")

    p = sub.add_parser("reproduce", help="noisy disk denoised by three regularizers")
    p.add_argument("--noise")
    p.add_argument("--input")
    p.add_argument("--outdir")
    p.add_argument("--alpha", help="regularization weight (default: equal to --noise)")
    p.add_argument("--seed")
    p.add_argument("--size")
    p.add_argument("--tol")
    p.add_argument("--threshold")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if cfg.get("threads") is not None:
            t = _num(int, cfg.get("threads"), "threads")
            if t < 0:
                raise UsageError("threads must be >= 0")
            cfg.params["threads"] = t
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"tvjump: error: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"tvjump: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
