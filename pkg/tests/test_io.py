import math
import struct

import numpy as np
import pytest

from lcflow.diagnostics import energy_monitor
from lcflow.evolution import integrate
from lcflow.fields import Grid, StateUF
from lcflow.io import (HEADER_SIZE, SnapshotError, SnapshotFormatError, SnapshotHermitianError,
                       SnapshotTruncatedError, SnapshotVersionError, decode_snapshot, emit_csv,
                       encode_snapshot, read_snapshot, snapshot_size, write_snapshot)
from lcflow.random_fields import random_band_state, shear_state

G16 = Grid(2, 16)


@pytest.fixture
def state():
    s = random_band_state(G16, 3, 1, 7, 1.3)
    s.t = 0.375
    return s


def test_header_layout(state):
    raw = encode_snapshot(state)
    assert HEADER_SIZE == 26 and len(raw) == snapshot_size(2, 16)
    magic, version, n, m, L, t = struct.unpack("<4sBBIdd", raw[:26])
    assert (magic, version, n, m, L, t) == (b"NLCF", 1, 2, 16, 2 * math.pi, 0.375)


def test_round_trip_bit_exact(tmp_path, state):
    path = tmp_path / "s.nlcf"
    write_snapshot(path, state)
    back = read_snapshot(path)
    assert back.grid == state.grid and back.t == state.t
    assert back.packed().tobytes() == state.packed().tobytes()


def test_round_trip_3d(tmp_path):
    s = random_band_state(Grid(3, 8), 1, 1, 3, 0.5)
    write_snapshot(tmp_path / "a", s)
    assert np.array_equal(read_snapshot(tmp_path / "a").packed(), s.packed())


def test_exclusive_create(tmp_path, state):
    path = tmp_path / "s.nlcf"
    write_snapshot(path, state)
    with pytest.raises(FileExistsError):
        write_snapshot(path, state)
    write_snapshot(path, shear_state(G16, 1.0), overwrite=True)
    assert read_snapshot(path).t == 0.0


def test_truncated(state):
    raw = encode_snapshot(state)
    with pytest.raises(SnapshotTruncatedError):
        decode_snapshot(raw[:-1])
    with pytest.raises(SnapshotTruncatedError):
        decode_snapshot(raw[:10])


def test_bad_magic_and_empty(state):
    raw = bytearray(encode_snapshot(state))
    raw[0:4] = b"XLCF"
    with pytest.raises(SnapshotFormatError):
        decode_snapshot(bytes(raw))
    with pytest.raises(SnapshotFormatError):
        decode_snapshot(b"")


def test_version_mismatch(state):
    raw = bytearray(encode_snapshot(state))
    raw[4] = 2
    with pytest.raises(SnapshotVersionError):
        decode_snapshot(bytes(raw))


def test_trailing_bytes_and_bad_grid(state):
    raw = encode_snapshot(state)
    with pytest.raises(SnapshotFormatError):
        decode_snapshot(raw + b"\0")
    bad = bytearray(raw)
    bad[6:10] = struct.pack("<I", 15)
    with pytest.raises(SnapshotFormatError):
        decode_snapshot(bytes(bad))


def test_hermitian_violation(state):
    z = state.packed().copy()
    z[0, 1, 2] += 1e-3
    raw = encode_snapshot(state)[:HEADER_SIZE] + z.astype("<c16").tobytes()
    with pytest.raises(SnapshotHermitianError):
        decode_snapshot(raw)
    z = state.packed().copy()
    z[0, 8, 0] = 1.0
    raw = encode_snapshot(state)[:HEADER_SIZE] + z.astype("<c16").tobytes()
    with pytest.raises(SnapshotHermitianError):
        decode_snapshot(raw)


def test_errors_share_a_base(state):
    for exc in (SnapshotFormatError, SnapshotVersionError, SnapshotTruncatedError, SnapshotHermitianError):
        assert issubclass(exc, SnapshotError)


def test_csv_header_only(tmp_path):
    path = tmp_path / "e.csv"
    emit_csv([], path, kind="energy")
    assert path.read_text() == "t,kinetic,elastic,dissipation_integral,budget_residual\n"
    with pytest.raises(TypeError):
        emit_csv([], tmp_path / "x.csv")


def test_csv_shear_row(tmp_path):
    tr = integrate(shear_state(Grid(2, 32), 1.0), 1.0, snapshots=5)
    path = tmp_path / "e.csv"
    emit_csv(energy_monitor(tr), path)
    lines = path.read_text().splitlines()
    assert len(lines) == 6
    last = [float(x) for x in lines[-1].split(",")]
    assert last[0] == 1.0
    assert last[1] == pytest.approx(0.5 * math.exp(-2), rel=1e-6)
    assert last[1] / float(lines[1].split(",")[1]) == pytest.approx(0.135335, rel=1e-5)
    # shortest round-trip decimals
    assert all(repr(float(x)) == x for x in lines[-1].split(","))


def test_csv_deterministic(tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        tr = integrate(random_band_state(Grid(2, 16), 4, 1, 5, 0.5), 0.2, snapshots=5)
        emit_csv(energy_monitor(tr), tmp_path / name)
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
