"""Binary persistence for states and trajectories.

Layout (all integers and floats little-endian):

state file      magic ``DSMCFSNP`` | u32 version | u8 mode | u8 dimension
                | u8 bc kind | u8 reserved | u32 resolution | f64 extent
                | f64 s | u64 value count | u32 crc32 of the payload
                | payload: value count f64 heights, row-major

trajectory file magic ``DSMCFTRJ`` | u32 version | u8 mode | u8 dimension
                | u8 bc kind | u8 reserved | u32 resolution | f64 extent
                | u64 snapshot count | u64 values per snapshot
                | u32 failure length | u32 crc32 of the payload
                | failure utf-8 bytes | payload: snapshot times, per-snapshot
                dt, then each profile in order, all f64

Heights round-trip bit-exactly.  Step diagnostics are cheap to recompute
and are not persisted; a reloaded trajectory carries empty diagnostics.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from . import flow, grids
from .errors import CorruptFileError, VersionMismatchError

FORMAT_VERSION = 1

_STATE_MAGIC = b"DSMCFSNP"
_TRAJ_MAGIC = b"DSMCFTRJ"
_STATE_HEADER = struct.Struct("<8sI4BIddQI")
_TRAJ_HEADER = struct.Struct("<8sI4BIdQQII")

_MODES = (grids.RADIAL, grids.CARTESIAN)
_BC_KINDS = (flow.SLICING, flow.PINNED, flow.FROZEN)


def _code(value, table, what):
    try:
        return table.index(value)
    except ValueError:
        raise ValueError(f"cannot encode {what} {value!r}") from None


def _decode(code, table, what, path):
    if not 0 <= code < len(table):
        raise CorruptFileError(f"{path}: invalid {what} code {code}")
    return table[code]


def _payload(data: bytes, offset: int, count: int, crc: int, path) -> np.ndarray:
    need = offset + 8 * count
    if len(data) < need:
        raise CorruptFileError(
            f"{path}: truncated, expected {need} bytes but file has {len(data)}"
        )
    blob = data[offset:need]
    if zlib.crc32(blob) != crc:
        raise CorruptFileError(f"{path}: payload checksum mismatch")
    return np.frombuffer(blob, dtype="<f8").astype(np.float64)


def _check_version(version: int, path) -> None:
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: file is format version {version}, "
            f"this library reads version {FORMAT_VERSION}"
        )


def _read(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _rebound(grid: grids.Grid, values: np.ndarray, bc_kind: str, s: float) -> flow.GraphState:
    state = flow.GraphState(
        u=grids.Field(grid, values.reshape(grid.shape)),
        s=s,
        bc=flow.BoundaryCondition(bc_kind),
    )
    return flow.GraphState(u=state.u, s=s, bc=state.bc.bound_to(state))


def save_state(state: flow.GraphState, path) -> None:
    grid = state.grid
    values = np.ascontiguousarray(state.u.values, dtype=np.float64)
    blob = values.astype("<f8").tobytes()
    header = _STATE_HEADER.pack(
        _STATE_MAGIC,
        FORMAT_VERSION,
        _code(grid.mode, _MODES, "grid mode"),
        grid.dimension,
        _code(state.bc.kind, _BC_KINDS, "boundary kind"),
        0,
        grid.resolution,
        grid.extent,
        state.s,
        values.size,
        zlib.crc32(blob),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(blob)


def load_state(path) -> flow.GraphState:
    data = _read(path)
    if len(data) < _STATE_HEADER.size or not data.startswith(_STATE_MAGIC):
        raise CorruptFileError(f"{path}: not a dsmcf state file")
    (_, version, mode_code, dimension, bc_code, _, resolution,
     extent, s, count, crc) = _STATE_HEADER.unpack_from(data)
    _check_version(version, path)
    mode = _decode(mode_code, _MODES, "grid mode", path)
    bc_kind = _decode(bc_code, _BC_KINDS, "boundary kind", path)
    values = _payload(data, _STATE_HEADER.size, count, crc, path)
    grid = grids.Grid(mode, dimension, extent=extent, resolution=resolution)
    if values.size != np.prod(grid.shape):
        raise CorruptFileError(
            f"{path}: payload holds {values.size} values, grid needs {np.prod(grid.shape)}"
        )
    return _rebound(grid, values, bc_kind, s)


def save_trajectory(traj: flow.Trajectory, path) -> None:
    if not traj.snapshots:
        raise ValueError("cannot save an empty trajectory")
    first = traj.snapshots[0]
    grid = first.grid
    count = len(traj.snapshots)
    per = int(np.prod(grid.shape))
    s_values = np.array([snap.s for snap in traj.snapshots], dtype=np.float64)
    dts = np.zeros(count)
    dts[: len(traj.dt_history)] = np.asarray(traj.dt_history, dtype=np.float64)[:count]
    profiles = np.stack(
        [np.ascontiguousarray(snap.u.values, dtype=np.float64).ravel() for snap in traj.snapshots]
    )
    blob = (
        s_values.astype("<f8").tobytes()
        + dts.astype("<f8").tobytes()
        + profiles.astype("<f8").tobytes()
    )
    failure = (traj.failure or "").encode("utf-8")
    header = _TRAJ_HEADER.pack(
        _TRAJ_MAGIC,
        FORMAT_VERSION,
        _code(grid.mode, _MODES, "grid mode"),
        grid.dimension,
        _code(first.bc.kind, _BC_KINDS, "boundary kind"),
        0,
        grid.resolution,
        grid.extent,
        count,
        per,
        len(failure),
        zlib.crc32(blob),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(failure)
        fh.write(blob)


def load_trajectory(path) -> flow.Trajectory:
    data = _read(path)
    if len(data) < _TRAJ_HEADER.size or not data.startswith(_TRAJ_MAGIC):
        raise CorruptFileError(f"{path}: not a dsmcf trajectory file")
    (_, version, mode_code, dimension, bc_code, _, resolution,
     extent, count, per, failure_len, crc) = _TRAJ_HEADER.unpack_from(data)
    _check_version(version, path)
    mode = _decode(mode_code, _MODES, "grid mode", path)
    bc_kind = _decode(bc_code, _BC_KINDS, "boundary kind", path)
    offset = _TRAJ_HEADER.size
    failure = data[offset : offset + failure_len].decode("utf-8") or None
    flat = _payload(data, offset + failure_len, count * (2 + per), crc, path)
    s_values = flat[:count]
    dts = flat[count : 2 * count]
    profiles = flat[2 * count :].reshape(count, per)
    grid = grids.Grid(mode, dimension, extent=extent, resolution=resolution)
    traj = flow.Trajectory(failure=failure)
    for k in range(count):
        traj.snapshots.append(_rebound(grid, profiles[k], bc_kind, float(s_values[k])))
        traj.dt_history.append(float(dts[k]))
        traj.diagnostics.append(None)
    return traj


def save(obj, path) -> None:
    """Write a GraphState or Trajectory to ``path`` based on its type."""
    if isinstance(obj, flow.Trajectory):
        save_trajectory(obj, path)
    elif isinstance(obj, flow.GraphState):
        save_state(obj, path)
    else:
        raise TypeError(f"cannot save object of type {type(obj).__name__}")


def load(path):
    """Read back whatever ``save`` wrote, dispatching on the file magic."""
    data_head = _read(path)[:8]
    if data_head == _TRAJ_MAGIC:
        return load_trajectory(path)
    if data_head == _STATE_MAGIC:
        return load_state(path)
    raise CorruptFileError(f"{path}: not a dsmcf snapshot file")
