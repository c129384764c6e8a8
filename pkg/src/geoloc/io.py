"""File formats shared by the runner and the command line.

Cost-map binary layout (little endian)::

    magic  b"GLCM"   4 bytes
    version u16      (1)
    layers  u16      (2: cost, roughness)
    origin  2 x f64  (x, y of the lower-left corner)
    cell    f64
    width   u32, height u32
    cost       f64[height * width]  row-major, inf = non-navigable
    roughness  f64[height * width]  NaN = unknown
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .terrain import CostMapGlobal

MAGIC = b"GLCM"
VERSION = 1
_HEADER = struct.Struct("<4sHH3dII")


class FormatError(ValueError):
    pass


def write_costmap(path, cm: CostMapGlobal, meta: dict | None = None) -> None:
    path = Path(path)
    h, w = cm.cost.shape
    with path.open("wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, 2, float(cm.origin_utm[0]), float(cm.origin_utm[1]),
                             float(cm.cell_size), w, h))
        f.write(np.ascontiguousarray(cm.cost, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(cm.roughness, dtype="<f8").tobytes())
    info = {"width": w, "height": h, "cell_size": cm.cell_size,
            "origin": [float(v) for v in cm.origin_utm],
            "navigable_cells": int(cm.navigable.sum()), "unknown_cells": int((~cm.known).sum())}
    info.update(meta or {})
    Path(str(path) + ".meta.txt").write_text("".join(f"{k}: {info[k]}\n" for k in sorted(info)))


def read_costmap(path) -> CostMapGlobal:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, layers, ox, oy, cell, w, h = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION or layers != 2:
        raise FormatError(f"{path}: not a version-{VERSION} cost-map file")
    n = w * h
    if len(data) != _HEADER.size + 16 * n:
        raise FormatError(f"{path}: expected {n} cells per layer")
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    cost = body[:n].reshape(h, w).copy()
    rough = body[n:].reshape(h, w).copy()
    return CostMapGlobal((ox, oy), cell, rough, cost)


def write_roughness_csv(path, cm: CostMapGlobal) -> None:
    iy, ix = np.mgrid[0:cm.height, 0:cm.width]
    x = cm.origin_utm[0] + (ix + 0.5) * cm.cell_size
    y = cm.origin_utm[1] + (iy + 0.5) * cm.cell_size
    with Path(path).open("w") as f:
        f.write("ix,iy,x,y,roughness,cost\n")
        for row in zip(ix.ravel(), iy.ravel(), x.ravel(), y.ravel(), cm.roughness.ravel(), cm.cost.ravel()):
            f.write("{},{},{:.3f},{:.3f},{!r},{!r}\n".format(*(int(v) if k < 2 else float(v)
                                                             for k, v in enumerate(row))))


def read_xyz(path) -> np.ndarray:
    """Whitespace- or comma-separated ``x y z`` rows; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"point cloud not found: {path}")
    rows = []
    for k, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].replace(",", " ").strip()
        if not line:
            continue
        parts = line.split()
        try:
            vals = [float(v) for v in parts]
        except ValueError:
            raise FormatError(f"{path}:{k}: non-numeric value") from None
        if len(vals) < 3 or not np.all(np.isfinite(vals[:3])):
            raise FormatError(f"{path}:{k}: expected finite x y z")
        rows.append(vals[:3])
    if not rows:
        raise FormatError(f"{path}: empty point cloud")
    return np.array(rows)


def write_xyz(path, points) -> None:
    np.savetxt(path, np.asarray(points, dtype=float).reshape(-1, 3), fmt="%.6f")


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def write_jsonl(path, records) -> None:
    with Path(path).open("w") as f:
        for r in records:
            f.write(json.dumps(r, sort_keys=True) + "\n")


def write_csv(path, header: list[str], rows) -> None:
    def fmt(v):
        if isinstance(v, bool):
            return str(v).lower()
        if isinstance(v, float):
            return repr(v)
        return str(v)

    with Path(path).open("w") as f:
        f.write(",".join(header) + "\n")
        for r in rows:
            f.write(",".join(fmt(v) for v in r) + "\n")
