"""Binary snapshots and CSV output.

A snapshot file is

    MEMBRANE-SNAPSHOT 1\\n
    {json header}\\n
    raw float64 little-endian payload, row-major, fields in header order

The header lists each field with its component count; the grid size and
periods and the scalar time are also stored, so a file is self-describing.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import FlowState
from .errors import FormatError
from .spectral import Grid

MAGIC = b"MEMBRANE-SNAPSHOT"
VERSION = 1
STATE_FIELDS = ("R", "U1", "U2", "Un", "H")


@dataclass
class SnapshotFile:
    grid: Grid
    t: float
    R: np.ndarray
    flow: FlowState
    extra: dict = field(default_factory=dict)


def write_snapshot(path, grid: Grid, t: float, R: np.ndarray, flow: FlowState,
                   extra: dict | None = None) -> None:
    """Write the surface, the flow and any extra named fields losslessly."""
    arrays = {"R": R, "U1": flow.U1, "U2": flow.U2, "Un": flow.Un, "H": flow.H}
    for name, arr in (extra or {}).items():
        if name in arrays:
            raise ValueError(f"extra field {name!r} clashes with a state field")
        arrays[name] = arr
    entries = []
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape[-2:] != grid.shape:
            raise ValueError(f"field {name!r} has shape {arr.shape}, grid is {grid.shape}")
        comps = 1 if arr.ndim == 2 else int(np.prod(arr.shape[:-2]))
        entries.append({"name": name, "components": comps})
    header = {"n1": grid.n1, "n2": grid.n2, "l1": grid.l1, "l2": grid.l2,
              "scalars": 1, "fields": entries}
    with open(path, "wb") as fh:
        fh.write(MAGIC + b" %d\n" % VERSION)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.asarray([t], dtype="<f8").tobytes())
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_snapshot(path) -> SnapshotFile:
    data = Path(path).read_bytes()
    first, sep, rest = data.partition(b"\n")
    parts = first.split()
    if not sep or len(parts) != 2 or parts[0] != MAGIC:
        raise FormatError(f"{path}: not a snapshot file")
    if parts[1] != str(VERSION).encode():
        raise FormatError(f"{path}: unsupported snapshot version {parts[1].decode(errors='replace')}")
    line, sep, payload = rest.partition(b"\n")
    if not sep:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(line)
        n1, n2 = int(header["n1"]), int(header["n2"])
        grid = Grid(n1, n2, float(header["l1"]), float(header["l2"]))
        nscalar = int(header["scalars"])
        entries = [(e["name"], int(e["components"])) for e in header["fields"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: bad header ({exc})") from None
    expected = 8 * (nscalar + n1 * n2 * sum(c for _, c in entries))
    if len(payload) != expected:
        raise FormatError(f"{path}: payload has {len(payload)} bytes, header implies {expected}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    t = float(values[0])
    pos = nscalar
    arrays = {}
    for name, comps in entries:
        size = comps * n1 * n2
        chunk = values[pos:pos + size]
        arrays[name] = chunk.reshape((n1, n2) if comps == 1 else (comps, n1, n2)).copy()
        pos += size
    missing = [f for f in STATE_FIELDS if f not in arrays]
    if missing:
        raise FormatError(f"{path}: missing fields {missing}")
    flow = FlowState(arrays.pop("U1"), arrays.pop("U2"), arrays.pop("Un"), arrays.pop("H"))
    return SnapshotFile(grid, t, arrays.pop("R"), flow, arrays)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows) -> None:
    """CSV with shortest round-trip float formatting (byte-stable across runs)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
