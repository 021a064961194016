"""Binary and text formats: FSR1 series, field CSV, PGM heatmaps, checkpoints."""
from __future__ import annotations

import csv
import hashlib
import re
import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .fields import Field, FieldSeries

FSR_MAGIC = b"FSR1"
CKPT_MAGIC = b"CKP1"
_NAME_BYTES = 16


# --------------------------------------------------------------------------
# FSR1


def write_fsr1(path, series: FieldSeries) -> None:
    T = len(series)
    rows, cols = series.shape.as_tuple()
    with open(path, "wb") as fh:
        fh.write(FSR_MAGIC)
        fh.write(struct.pack("<III", rows, cols, T))
        fh.write(series.land.astype(np.uint8).tobytes(order="C"))
        fh.write(series.values.astype("<f4").tobytes(order="C"))
        fh.write(series.stamps.astype("<u2").tobytes(order="C"))


def read_fsr1(path) -> FieldSeries:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    buf = path.read_bytes()
    if buf[:4] != FSR_MAGIC:
        raise DataError(f"{path}: bad magic {buf[:4]!r}")
    rows, cols, T = struct.unpack_from("<III", buf, 4)
    n = rows * cols
    expected = 16 + n + 4 * T * n + 4 * T
    if len(buf) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(buf)}")
    off = 16
    land = np.frombuffer(buf, np.uint8, n, off).reshape(rows, cols).astype(bool)
    off += n
    values = np.frombuffer(buf, "<f4", T * n, off).reshape(T, rows, cols).astype(np.float64)
    off += 4 * T * n
    stamps = np.frombuffer(buf, "<u2", 2 * T, off).reshape(T, 2).astype(np.int64)
    return FieldSeries(values, land, stamps)


# --------------------------------------------------------------------------
# CSV


def write_field_csv(path, fld: Field) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in fld.values:
            w.writerow(["NaN" if not np.isfinite(v) else repr(float(v)) for v in row])


def read_field_csv(path) -> Field:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    values = np.array(rows, dtype=np.float64)
    return Field(values, np.isnan(values))


def write_cells_csv(path, cells, header=("row", "col")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r, c in cells:
            w.writerow([int(r), int(c)])


def read_cells_csv(path) -> list[tuple[int, int]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        return [(int(r), int(c)) for r, c in reader]


# --------------------------------------------------------------------------
# PGM


def write_pgm(path, values: np.ndarray, valid: np.ndarray | None = None) -> tuple[float, float]:
    """8-bit binary PGM with linear min-max scaling over valid cells.

    Invalid cells are written as 0. The scaling is recorded in ``<path>.txt``.
    """
    values = np.asarray(values, dtype=np.float64)
    if valid is None:
        valid = np.isfinite(values)
    valid = valid & np.isfinite(values)
    if valid.any():
        lo, hi = float(values[valid].min()), float(values[valid].max())
    else:
        lo = hi = 0.0
    span = hi - lo if hi > lo else 1.0
    img = np.zeros(values.shape, dtype=np.uint8)
    img[valid] = np.clip(np.rint((values[valid] - lo) / span * 254.0) + 1, 1, 255).astype(np.uint8)
    rows, cols = values.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    Path(str(path) + ".txt").write_text(
        f"scaling=linear\nmin={lo!r}\nmax={hi!r}\nlevels=1..255\ninvalid=0\n"
    )
    return lo, hi


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise DataError(f"{path}: not a binary PGM")
    cols, rows = int(m.group(1)), int(m.group(2))
    return np.frombuffer(data, np.uint8, rows * cols, m.end()).reshape(rows, cols)


# --------------------------------------------------------------------------
# checkpoints: magic, u32 section count, then per section a 16-byte ASCII
# name, u32 ndim, u32 dims, float64 little-endian payload.


def write_checkpoint(path, sections: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(sections)))
        for name, arr in sections.items():
            arr = np.asarray(arr, dtype="<f8")
            raw = name.encode("ascii")
            if len(raw) > _NAME_BYTES:
                raise ValueError(f"section name too long: {name}")
            fh.write(raw.ljust(_NAME_BYTES, b"\0"))
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def read_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    buf = path.read_bytes()
    if buf[:4] != CKPT_MAGIC:
        raise DataError(f"{path}: bad checkpoint magic {buf[:4]!r}")
    (count,) = struct.unpack_from("<I", buf, 4)
    off = 8
    out = {}
    for _ in range(count):
        name = buf[off:off + _NAME_BYTES].rstrip(b"\0").decode("ascii")
        off += _NAME_BYTES
        (ndim,) = struct.unpack_from("<I", buf, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        out[name] = np.frombuffer(buf, "<f8", n, off).reshape(shape).copy()
        off += 8 * n
    return out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
