"""File-format helpers: atomic writes, 16-bit PGM, CSV and run manifests."""
from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataError

PGM_MAX = 65535


def atomic_write_bytes(path, data):
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    atomic_write_text(path, dump_json(obj))


def sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def scale_to_u16(values):
    """Min-max scale to 0..65535.  Returns ``(u16, vmin, vmax)``; a constant
    image maps to all zeros."""
    values = np.asarray(values, dtype=np.float64)
    vmin, vmax = float(values.min()), float(values.max())
    if vmax > vmin:
        scaled = np.rint((values - vmin) / (vmax - vmin) * PGM_MAX)
    else:
        scaled = np.zeros_like(values)
    return scaled.astype(np.uint16), vmin, vmax


def encode_pgm(u16, comment=None):
    """Binary (P5) PGM, 16-bit big-endian samples."""
    u16 = np.asarray(u16, dtype=np.uint16)
    h, w = u16.shape
    head = "P5\n"
    if comment:
        head += "".join(f"# {line}\n" for line in comment.splitlines())
    head += f"{w} {h}\n{PGM_MAX}\n"
    return head.encode("ascii") + u16.astype(">u2").tobytes()


def decode_pgm(data):
    m = re.match(rb"P5\s(?:\s*#.*[\r\n])*\s*(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise DataError("not a binary PGM", offset=0)
    w, h, maxval = (int(g) for g in m.groups())
    dtype = ">u2" if maxval > 255 else "u1"
    need = m.end() + w * h * np.dtype(dtype).itemsize
    if len(data) < need:
        raise DataError("PGM pixel data truncated", offset=len(data))
    return np.frombuffer(data, dtype=dtype, count=w * h, offset=m.end()).reshape(h, w)


def encode_csv(values):
    """One row per image row; ``repr`` floats so the text parses back exactly."""
    values = np.asarray(values, dtype=np.float64)
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in values)


def decode_csv(text):
    rows = [line.split(",") for line in text.splitlines() if line.strip()]
    return np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
