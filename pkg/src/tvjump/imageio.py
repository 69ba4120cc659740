"""Binary PGM/PPM images, jump CSV reports and ``key = value`` config files."""

from __future__ import annotations

import csv
import os
from typing import Sequence

import numpy as np

from .grid import GridSpec, VectorField

__all__ = [
    "read_pnm",
    "write_pnm",
    "load_image",
    "save_image",
    "write_jump_csv",
    "read_jump_csv",
    "jump_csv_header",
    "read_config",
]


def _token(buf: bytes, pos: int):
    # skip whitespace and comments
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ValueError("truncated PNM header")
    return buf[start:pos], pos


def read_pnm(path) -> np.ndarray:
    """Read a P5 (gray) or P6 (RGB) file into floats in ``[0, 1]``.

    Returns an array of shape ``(rows, cols, channels)``.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, pos = _token(buf, 0)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: not a binary PGM/PPM file")
    w, pos = _token(buf, pos)
    h, pos = _token(buf, pos)
    mx, pos = _token(buf, pos)
    w, h, mx = int(w), int(h), int(mx)
    if not (0 < mx < 65536) or w <= 0 or h <= 0:
        raise ValueError(f"{path}: bad PNM header")
    pos += 1  # single whitespace byte after maxval
    ch = 1 if magic == b"P5" else 3
    dtype = np.dtype(">u2") if mx > 255 else np.dtype("u1")
    count = w * h * ch
    if len(buf) - pos < count * dtype.itemsize:
        raise ValueError(f"{path}: truncated pixel data")
    raw = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
    return raw.reshape(h, w, ch).astype(np.float64) / mx


def write_pnm(path, data, maxval: int = 65535) -> None:
    """Write ``(rows, cols, 1|3)`` data in ``[0, 1]`` (values are clipped)."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 2:
        data = data[..., None]
    if data.ndim != 3 or data.shape[-1] not in (1, 3):
        raise ValueError("PNM output needs 1 or 3 channels")
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    h, w, ch = data.shape
    q = np.rint(np.clip(data, 0.0, 1.0) * maxval)
    q = q.astype(">u2" if maxval > 255 else "u1")
    magic = b"P5" if ch == 1 else b"P6"
    with open(path, "wb") as fh:
        fh.write(magic + f"\n{w} {h}\n{maxval}\n".encode())
        fh.write(q.tobytes())


def load_image(path) -> VectorField:
    """PNM file as a field in pixel units (``h = 1``).

    A single-row image is treated as a 1D signal.
    """
    arr = read_pnm(path)
    if arr.shape[0] == 1:
        arr = arr[0]
    return VectorField(GridSpec(arr.shape[:-1], 1.0), arr)


def save_image(path, w: VectorField, maxval: int = 65535) -> None:
    data = w.data
    if w.spec.ndim == 1:
        data = data[None]
    elif w.spec.ndim != 2:
        raise ValueError("only 1D and 2D fields can be saved as images")
    write_pnm(path, data, maxval)


# -- CSV -------------------------------------------------------------------------


def jump_csv_header(n: int) -> list[str]:
    def block(name):
        return [f"{name}{k}" for k in range(n)] if n > 1 else [name]

    return ["x", "y", "nu_x", "nu_y", "j"] + block("u_minus") + block("u_plus") + block("f_minus") + block("f_plus") + ["lhs", "rhs", "pass"]


def _fmt(v) -> str:
    return f"{float(v):.9g}"


def write_jump_csv(path, rows: Sequence[dict], n: int) -> None:
    """Rows carry ``x0``, ``nu``, ``j``, ``u_minus``, ``u_plus``, ``f_minus``,
    ``f_plus`` (length ``n``), ``lhs``, ``rhs`` and ``pass``. ``x``/``y``
    follow array-axis order; 1D data gets ``y = 0``."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(jump_csv_header(n))
        for r in rows:
            x0 = list(np.ravel(r["x0"])) + [0.0]
            nu = list(np.ravel(r["nu"])) + [0.0]
            vals = [x0[0], x0[1], nu[0], nu[1], r["j"]]
            for key in ("u_minus", "u_plus", "f_minus", "f_plus"):
                vals.extend(np.ravel(r[key]))
            vals.extend([r["lhs"], r["rhs"]])
            wr.writerow([_fmt(v) for v in vals] + [int(bool(r["pass"]))])


def read_jump_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and a float array of the rows (shape ``(rows, columns)``)."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = [[float(v) for v in line] for line in rd if line]
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


# -- config ------------------------------------------------------------------------


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment. Keys are normalised
    to lower case with ``-`` mapped to ``_``."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{os.fspath(path)}:{lineno}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            if not k:
                raise ValueError(f"{os.fspath(path)}:{lineno}: empty key")
            out[k.lower().replace("-", "_")] = v
    return out
