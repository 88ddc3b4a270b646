"""Plain-text formats: key=value configs, dense matrix text and mesh files.

Matrix text has one row per line with comma-separated entries. Complex
entries are written as ``a+bi``. Header lines start with ``#`` and hold
``key=value`` pairs.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np


def parse_config(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        out[key] = value
    return out


def read_config(path) -> dict[str, str]:
    return parse_config(Path(path).read_text())


def format_kv(pairs: dict) -> str:
    return "".join(f"{k}={v}\n" for k, v in pairs.items())


def format_number(x) -> str:
    x = complex(x) if np.iscomplexobj(x) else float(x)
    if isinstance(x, complex):
        re_, im_ = x.real, x.imag
        return f"{re_:.17g}{'+' if im_ >= 0 or np.isnan(im_) else '-'}{abs(im_):.17g}i"
    return f"{x:.17g}"


def parse_number(s: str) -> complex:
    s = s.strip()
    if not s.endswith("i"):
        return complex(float(s))
    # split at the last sign that is not part of an exponent
    body = s[:-1]
    for pos in range(len(body) - 1, 0, -1):
        if body[pos] in "+-" and body[pos - 1] not in "eE":
            return complex(float(body[:pos]), float(body[pos:]))
    return complex(0.0, float(body))


def format_matrix(A, header: dict | None = None) -> str:
    A = np.atleast_2d(np.asarray(A))
    lines = [f"# {k}={v}" for k, v in (header or {}).items()]
    if np.iscomplexobj(A):
        fmt = format_number
    else:
        def fmt(x):
            return f"{float(x):.17g}"
    lines += [",".join(fmt(x) for x in row) for row in A]
    return "\n".join(lines) + "\n"


def write_matrix(path, A, header: dict | None = None) -> None:
    Path(path).write_text(format_matrix(A, header))


def parse_matrix(text: str) -> tuple[np.ndarray, dict[str, str]]:
    header, rows = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                header[k.strip()] = v.strip()
            continue
        if line.strip():
            rows.append([parse_number(s) for s in line.split(",")])
    A = np.array(rows, dtype=complex)
    if A.size and not np.any(A.imag):
        A = A.real
    return A, header


def read_matrix(path) -> tuple[np.ndarray, dict[str, str]]:
    return parse_matrix(Path(path).read_text())


def array_hash(*arrays) -> str:
    """Short content hash of one or more arrays, used as a cache key."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


def write_pgm(path, image, vmin: float, vmax: float) -> None:
    """8-bit binary graymap with the linear map ``vmin -> 0``, ``vmax -> 255``."""
    img = np.nan_to_num(np.asarray(image, dtype=float), nan=vmin)
    scaled = np.clip(np.round((img - vmin) / (vmax - vmin) * 255), 0, 255).astype(np.uint8)
    # row 0 of the image is the top, which is the largest y
    scaled = scaled[::-1]
    head = f"P5\n{scaled.shape[1]} {scaled.shape[0]}\n255\n".encode()
    Path(path).write_bytes(head + scaled.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary graymap")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)[::-1]
