"""Binary snapshot files and CSV tables.

Snapshot layout (little-endian)::

    offset  size  field
    0       4     magic b"NLCF"
    4       1     version (u8) = 1
    5       1     n (u8)
    6       4     m (u32)
    10      8     L (f64)
    18      8     t (f64)
    26      ...   (n + n*n) * m**n complex128, row-major, u first then F row-major
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .fields import Grid, StateUF, hermitian_defect

MAGIC = b"NLCF"
VERSION = 1
HEADER = struct.Struct("<4sBBIdd")
HEADER_SIZE = HEADER.size  # 26


class SnapshotError(Exception):
    """Base class for unreadable snapshot files."""


class SnapshotFormatError(SnapshotError):
    pass


class SnapshotVersionError(SnapshotError):
    pass


class SnapshotTruncatedError(SnapshotError):
    pass


class SnapshotHermitianError(SnapshotError):
    pass


PathLike = Union[str, Path]


def snapshot_size(n: int, m: int) -> int:
    return HEADER_SIZE + (n + n * n) * m**n * 16


def encode_snapshot(state: StateUF) -> bytes:
    g = state.grid
    head = HEADER.pack(MAGIC, VERSION, g.n, g.m, float(g.length), float(state.t))
    body = np.ascontiguousarray(state.packed(), dtype="<c16").tobytes()
    return head + body


def write_snapshot(path: PathLike, state: StateUF, overwrite: bool = False) -> None:
    """Write ``state``; refuses to replace an existing file unless ``overwrite``."""
    with open(path, "wb" if overwrite else "xb") as fh:
        fh.write(encode_snapshot(state))


def decode_snapshot(raw: bytes, hermitian_tol: float = 1e-12) -> StateUF:
    if not MAGIC.startswith(raw[:4]) or len(raw) == 0:
        raise SnapshotFormatError("bad magic: not a snapshot file")
    if len(raw) < HEADER_SIZE:
        raise SnapshotTruncatedError(f"file holds {len(raw)} bytes, header needs {HEADER_SIZE}")
    magic, version, n, m, length, t = HEADER.unpack_from(raw)
    if version != VERSION:
        raise SnapshotVersionError(f"unsupported format version {version}")
    try:
        grid = Grid(n, m, length)
    except ValueError as exc:
        raise SnapshotFormatError(f"invalid grid in header: {exc}") from None
    want = snapshot_size(n, m)
    if len(raw) < want:
        raise SnapshotTruncatedError(f"file holds {len(raw)} bytes, expected {want}")
    if len(raw) > want:
        raise SnapshotFormatError(f"{len(raw) - want} trailing bytes after the data")
    z = np.frombuffer(raw, dtype="<c16", offset=HEADER_SIZE).astype(complex)
    z = z.reshape((grid.ncomp,) + grid.shape)
    if not np.all(np.isfinite(z)):
        raise SnapshotFormatError("non-finite coefficients")
    if np.any(z[:, grid.nyquist] != 0):
        raise SnapshotHermitianError("Nyquist coefficients must be zero")
    for c in range(grid.ncomp):
        d = hermitian_defect(grid, z[c])
        if d > hermitian_tol:
            raise SnapshotHermitianError(f"component {c} violates Hermitian symmetry by {d:.3g}")
    return StateUF.from_packed(grid, z, float(t))


def read_snapshot(path: PathLike, hermitian_tol: float = 1e-12) -> StateUF:
    return decode_snapshot(Path(path).read_bytes(), hermitian_tol)


# ---------------------------------------------------------------------------
# CSV

ENERGY_COLUMNS = ("t", "kinetic", "elastic", "dissipation_integral", "budget_residual")
GRONWALL_COLUMNS = ("t", "lhs", "rhs", "C_used")
BLOWUP_COLUMNS = ("t", "accumulator")


def _fmt(x) -> str:
    return repr(float(x))


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[float]],
              overwrite: bool = False) -> None:
    with open(path, "w" if overwrite else "x", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def table(output, kind: str = "") -> tuple[list[str], list[list[float]]]:
    """Header and rows for a monitor result (``kind`` only needed for empty lists)."""
    from .diagnostics import BlowupAccumulator, Dashboard, EnergyRecord
    from .stability import GronwallReport

    if isinstance(output, Dashboard):
        return output.header, output.rows()
    if isinstance(output, GronwallReport):
        return list(GRONWALL_COLUMNS), [[t, l, r, output.C_used] for t, l, r in zip(output.times, output.lhs, output.rhs)]
    if isinstance(output, BlowupAccumulator):
        return list(BLOWUP_COLUMNS), [[t, a] for t, a in zip(output.times, output.accumulator)]
    items = list(output)
    if (items and isinstance(items[0], EnergyRecord)) or (not items and kind == "energy"):
        return list(ENERGY_COLUMNS), [[getattr(r, c) for c in ENERGY_COLUMNS] for r in items]
    if not items and kind in ("gronwall", "blowup"):
        return list(GRONWALL_COLUMNS if kind == "gronwall" else BLOWUP_COLUMNS), []
    raise TypeError(f"no CSV schema for {type(output).__name__}")


def emit_csv(output, path: PathLike, kind: str = "", overwrite: bool = False) -> None:
    header, rows = table(output, kind)
    write_csv(path, header, rows, overwrite)
