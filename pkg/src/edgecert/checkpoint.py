"""Flat text container for model checkpoints.

Layout::

    edgecert-checkpoint v1
    kind <kind>
    scalar <name> <value>
    tensor <name> <dim0> [<dim1>]
    <row-major payload, one line per leading row>
    ...
    end

Values are written with Python repr so float64 payloads round-trip exactly
and files are byte-stable across runs.
"""

from __future__ import annotations

import ast

import numpy as np

_MAGIC = "edgecert-checkpoint v1"


def write_checkpoint(path, kind: str, scalars: dict, tensors: dict) -> None:
    lines = [_MAGIC, f"kind {kind}"]
    for name, value in scalars.items():
        lines.append(f"scalar {name} {value!r}")
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 1:
            lines.append(f"tensor {name} {arr.shape[0]}")
            lines.append(" ".join(repr(x) for x in arr.tolist()))
        elif arr.ndim == 2:
            lines.append(f"tensor {name} {arr.shape[0]} {arr.shape[1]}")
            for row in arr.tolist():
                lines.append(" ".join(repr(x) for x in row))
        else:
            raise ValueError(f"tensor {name} must be 1-D or 2-D")
    lines.append("end")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_checkpoint(path, kind: str) -> tuple[dict, dict]:
    """Read back (scalars, tensors); validates the format tag and kind."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"{path}: not an edgecert checkpoint")
    if len(lines) < 2 or lines[1] != f"kind {kind}":
        raise ValueError(f"{path}: expected checkpoint kind {kind!r}")
    scalars: dict = {}
    tensors: dict = {}
    i = 2
    while i < len(lines):
        line = lines[i]
        if line == "end":
            return scalars, tensors
        if line.startswith("scalar "):
            _, name, value = line.split(" ", 2)
            scalars[name] = ast.literal_eval(value)
            i += 1
        elif line.startswith("tensor "):
            parts = line.split()
            name = parts[1]
            shape = tuple(int(p) for p in parts[2:])
            n_rows = shape[0] if len(shape) == 2 else 1
            rows = []
            for j in range(n_rows):
                rows.append([float(t) for t in lines[i + 1 + j].split()])
            arr = np.array(rows, dtype=np.float64)
            arr = arr.reshape(shape)
            tensors[name] = arr
            i += 1 + n_rows
        else:
            raise ValueError(f"{path}: unexpected line {line!r}")
    raise ValueError(f"{path}: truncated checkpoint (missing 'end')")
