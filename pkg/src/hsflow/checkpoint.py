"""Checkpoint files: one UTF-8 JSON header line, then raw float64 arrays.

Each declared component is a grid-shaped array written little-endian in C
order (x3 fastest), in the order listed in the header.  A triple is stored
as eighteen components ``omega{i}.e{ab}``.
"""
import json

import numpy as np

from .torus import Grid

FORMAT = "hsflow-checkpoint"
VERSION = 1
LABELS = ("01", "02", "03", "23", "31", "12")
DTYPE = np.dtype("<f8")


def omega_components():
    return [f"omega{i + 1}.e{lab}" for i in range(3) for lab in LABELS]


def write_checkpoint(path, grid, omega, t, chart=False, extra=None):
    omega = np.asarray(omega, dtype=float)
    header = {
        "format": FORMAT,
        "version": VERSION,
        "N": grid.shape[-1],
        "shape": list(grid.shape),
        "L": grid.lengths[-1],
        "lengths": list(grid.lengths),
        "spacing": list(grid.spacing),
        "origin": list(grid.origin),
        "backend": grid.backend,
        "dealias": grid.dealias_enabled,
        "periodic": grid.periodic,
        "chart": bool(chart),
        "t": float(t),
        "dtype": "float64-le",
        "order": "C (x3 fastest)",
        "components": omega_components(),
        "extra": extra or {},
    }
    line = json.dumps(header, sort_keys=True, allow_nan=False)
    with open(path, "wb") as fh:
        fh.write(line.encode("utf-8") + b"\n")
        for i in range(3):
            for c in range(6):
                fh.write(np.ascontiguousarray(omega[..., i, c], dtype=DTYPE).tobytes())


def read_header(path):
    with open(path, "rb") as fh:
        return json.loads(fh.readline().decode("utf-8"))


def read_checkpoint(path, workers=1):
    """(header, grid, omega) from a checkpoint file."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != FORMAT:
            raise ValueError(f"{path} is not an {FORMAT} file")
        shape = tuple(header["shape"])
        n = int(np.prod(shape))
        data = np.frombuffer(fh.read(), dtype=DTYPE)
    comps = header["components"]
    if data.size != n * len(comps):
        raise ValueError(f"{path}: expected {n * len(comps)} values, found {data.size}")
    omega = np.empty(shape + (3, 6))
    for k in range(len(comps)):
        omega[..., k // 6, k % 6] = data[k * n:(k + 1) * n].reshape(shape)
    grid = Grid(shape, header["spacing"], header["periodic"], header["backend"], workers,
                header["dealias"], tuple(header["origin"]))
    return header, grid, omega
