"""Versioned binary layout for parameters and optimizer state.

All multi-byte fields are little-endian. A parameter table is:

    magic   4 bytes  (b"PNPS" for parameters, b"PNAD" for Adam state)
    version u32      (currently 1)
    count   u32
    entries, in declared order:
        name   u16 length + UTF-8 bytes
        ndim   u32
        dims   ndim x u64
        values prod(dims) x f64 raw little-endian

Adam blobs carry lr/beta1/beta2/eps as f64 and the step counter as u64
between the header and two nested tables (first and second moments).
Round-trips are bit-exact; short reads and bad magic raise
:class:`SerializationError`.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .adam import AdamState
from .autodiff import Tensor
from .params import ParamSet

PARAMS_MAGIC = b"PNPS"
ADAM_MAGIC = b"PNAD"
FORMAT_VERSION = 1


class SerializationError(ValueError):
    """Corrupt, truncated, or version-mismatched binary payload."""


def _read_exact(buf, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise SerializationError(f"truncated payload: wanted {n} bytes, got {len(data)}")
    return data


def _write_array_table(buf, arrays: dict[str, np.ndarray]) -> None:
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<Q", dim))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_array_table(buf) -> dict[str, np.ndarray]:
    (count,) = struct.unpack("<I", _read_exact(buf, 4))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _read_exact(buf, 2))
        name = _read_exact(buf, name_len).decode("utf-8")
        (ndim,) = struct.unpack("<I", _read_exact(buf, 4))
        shape = tuple(struct.unpack("<Q", _read_exact(buf, 8))[0] for _ in range(ndim))
        n = int(np.prod(shape)) if shape else 1
        raw = _read_exact(buf, 8 * n)
        arrays[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    return arrays


def _check_header(buf, magic: bytes) -> None:
    got = _read_exact(buf, 4)
    if got != magic:
        raise SerializationError(f"bad magic {got!r}, expected {magic!r}")
    (version,) = struct.unpack("<I", _read_exact(buf, 4))
    if version != FORMAT_VERSION:
        raise SerializationError(f"unsupported format version {version}")


def dump_params(params: ParamSet) -> bytes:
    buf = io.BytesIO()
    buf.write(PARAMS_MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    _write_array_table(buf, {name: p.data for name, p in params.items()})
    return buf.getvalue()


def load_params(payload: bytes) -> dict[str, np.ndarray]:
    buf = io.BytesIO(payload)
    _check_header(buf, PARAMS_MAGIC)
    return _read_array_table(buf)


def restore_params(params: ParamSet, payload: bytes) -> None:
    params.load_values(load_params(payload))


def params_from_payload(payload: bytes) -> ParamSet:
    ps = ParamSet()
    for name, arr in load_params(payload).items():
        ps.add(name, Tensor(arr))
    return ps


def dump_adam(state: AdamState) -> bytes:
    buf = io.BytesIO()
    buf.write(ADAM_MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(struct.pack("<dddd", state.lr, state.beta1, state.beta2, state.eps))
    buf.write(struct.pack("<Q", state.t))
    _write_array_table(buf, state.m)
    _write_array_table(buf, state.v)
    return buf.getvalue()


def load_adam(payload: bytes) -> AdamState:
    buf = io.BytesIO(payload)
    _check_header(buf, ADAM_MAGIC)
    lr, beta1, beta2, eps = struct.unpack("<dddd", _read_exact(buf, 32))
    (t,) = struct.unpack("<Q", _read_exact(buf, 8))
    m = _read_array_table(buf)
    v = _read_array_table(buf)
    return AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, t=t, m=m, v=v)
