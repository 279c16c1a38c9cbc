"""Raster files and binary PGM heatmaps."""

from __future__ import annotations

import csv
import io

import numpy as np

from .core import DataError
from .intensity import GridSpec, Raster

PGM_MAXVAL = {"pgm8": 255, "pgm16": 65535}


def scale_to_levels(values: np.ndarray, maxval: int) -> tuple[np.ndarray, float, float, float]:
    """Map ``[min, max]`` linearly onto ``[0, maxval]``, rounding half up.

    A constant raster maps to all zeros (scale 0).
    """
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        scale = maxval / (hi - lo)
        levels = np.floor((values - lo) * scale + 0.5)
    else:
        scale = 0.0
        levels = np.zeros_like(values)
    return np.clip(levels, 0, maxval).astype(np.int64), lo, hi, scale


def pgm_bytes(raster: Raster, mode: str = "pgm8") -> tuple[bytes, dict[str, str]]:
    """Binary ``P5`` image with the top row at the largest y, plus sidecar fields."""
    try:
        maxval = PGM_MAXVAL[mode]
    except KeyError:
        raise ValueError(f"unknown heatmap mode {mode!r}") from None
    levels, lo, hi, scale = scale_to_levels(raster.values, maxval)
    levels = levels[::-1]
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    g = raster.grid
    header = f"P5\n{g.width} {g.height}\n{maxval}\n".encode("ascii")
    meta = raster_meta(raster)
    meta.update({"min": repr(lo), "max": repr(hi), "scale": repr(scale), "maxval": str(maxval)})
    return header + levels.astype(dtype).tobytes(), meta


def read_pgm(data: bytes) -> np.ndarray:
    """Decode a ``P5`` image written by :func:`pgm_bytes` (top row first)."""
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    width, height = (int(v) for v in parts[1].split())
    maxval = int(parts[2])
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    return np.frombuffer(parts[3], dtype=dtype).reshape(height, width)


def raster_meta(raster: Raster) -> dict[str, str]:
    g = raster.grid
    return {
        "origin_x": repr(float(g.x0)),
        "origin_y": repr(float(g.y0)),
        "cell_size": repr(float(g.cell_size)),
        "width": str(g.width),
        "height": str(g.height),
        "category": str(raster.category),
        "min": repr(float(raster.values.min())),
        "max": repr(float(raster.values.max())),
    }


def format_kv(meta: dict[str, str]) -> str:
    return "".join(f"{k}={v}\n" for k, v in meta.items())


def parse_kv(text: str, source: str | None = None) -> dict[str, str]:
    """``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise DataError(f"expected key=value, got {raw!r}", lineno, source)
        out[key.strip()] = value.strip()
    return out


def raster_csv(raster: Raster) -> str:
    """Long-format ``col,row,x,y,density``; row 0 is the bottom row."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["col", "row", "x", "y", "density"])
    centers = raster.grid.centers()
    for k, (x, y) in enumerate(centers):
        row, col = divmod(k, raster.grid.width)
        writer.writerow([col, row, repr(float(x)), repr(float(y)), repr(float(raster.values[row, col]))])
    return buf.getvalue()


def read_raster(csv_text: str, meta_text: str, source: str | None = None) -> Raster:
    meta = parse_kv(meta_text, source)
    try:
        grid = GridSpec(
            float(meta["origin_x"]), float(meta["origin_y"]), float(meta["cell_size"]),
            int(meta["width"]), int(meta["height"]),
        )
        category = int(meta["category"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"bad raster metadata: {exc}", None, source) from None
    values = np.full((grid.height, grid.width), np.nan)
    reader = csv.reader(io.StringIO(csv_text))
    if next(reader, None) != ["col", "row", "x", "y", "density"]:
        raise DataError("expected header col,row,x,y,density", 1, source)
    for row in reader:
        if not row:
            continue
        try:
            col, r, value = int(row[0]), int(row[1]), float(row[4])
            values[r, col] = value
        except (ValueError, IndexError):
            raise DataError("malformed raster row", reader.line_num, source) from None
    if np.isnan(values).any():
        raise DataError("raster file is missing cells", None, source)
    return Raster(grid, values, category)
