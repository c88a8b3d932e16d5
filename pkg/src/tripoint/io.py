"""Small on-disk formats: raw float64 fields, CSV traces, PGM label maps."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np
from PIL import Image


def write_raw(path, layers, meta: dict):
    """Write layers as little-endian float64, row-major, concatenated.

    A ``<path>.json`` sidecar records shape, layer order and ``meta``.
    """
    path = Path(path)
    arr = np.ascontiguousarray(np.stack([np.asarray(a, dtype="<f8") for a in layers]))
    path.write_bytes(arr.tobytes())
    side = dict(meta)
    side.update({"dtype": "float64", "endian": "little", "order": "row-major",
                 "layers": int(arr.shape[0]), "shape": list(arr.shape[1:])})
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    return [path, sidecar]


def read_raw(path):
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    arr = np.frombuffer(path.read_bytes(), dtype="<f8")
    return arr.reshape([meta["layers"], *meta["shape"]]), meta


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")
    return path


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_pgm(path, labels, levels=None):
    """Label map as an 8-bit greyscale PGM; label 0 (outside the disk) is black."""
    labels = np.asarray(labels)
    levels = levels or {0: 0, 1: 85, 2: 170, 3: 255}
    img = np.zeros(labels.shape, dtype=np.uint8)
    for k, v in levels.items():
        img[labels == k] = v
    # image rows run top to bottom, grid rows run in increasing y
    Image.fromarray(img[::-1]).save(path, format="PPM")
    return path


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
