"""Versioned binary checkpoints: networks, optimizer state, config, RNG.

Container layout (little-endian):

    magic    b"PNCP"
    version  u32 (currently 1)
    count    u32
    sections count x { name: u16 len + utf8, payload: u64 len + bytes }
    crc32    u32 over all section payloads in order

Sections: "config" and "state" are UTF-8 JSON; "params/<group>" uses the
parameter-table format from probenav.nn.serialize; "adam/<group>" likewise.
Round-trips are bit-exact. Truncated or corrupt files raise
:class:`CheckpointError` without partial effects.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import AdamState
from .nn.serialize import dump_adam, dump_params, load_adam, load_params

MAGIC = b"PNCP"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: dict
    env_steps: int
    updates: int
    val_round: int
    rng_states: dict
    params: dict = field(default_factory=dict)        # group -> {name: ndarray}
    adam: dict = field(default_factory=dict)          # group -> AdamState

    def save(self, path: str | Path) -> None:
        sections: list[tuple[str, bytes]] = [
            ("config", json.dumps(self.config, sort_keys=True).encode("utf-8")),
            ("state", json.dumps({
                "env_steps": self.env_steps,
                "updates": self.updates,
                "val_round": self.val_round,
                "rng_states": self.rng_states,
            }, sort_keys=True).encode("utf-8")),
        ]
        for group in sorted(self.params):
            ps = _ParamsView(self.params[group])
            sections.append((f"params/{group}", dump_params(ps)))
        for group in sorted(self.adam):
            sections.append((f"adam/{group}", dump_adam(self.adam[group])))

        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<I", VERSION))
        buf.write(struct.pack("<I", len(sections)))
        crc = 0
        for name, payload in sections:
            encoded = name.encode("utf-8")
            buf.write(struct.pack("<H", len(encoded)))
            buf.write(encoded)
            buf.write(struct.pack("<Q", len(payload)))
            buf.write(payload)
            crc = zlib.crc32(payload, crc)
        buf.write(struct.pack("<I", crc))
        Path(path).write_bytes(buf.getvalue())

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        raw = Path(path).read_bytes()
        buf = io.BytesIO(raw)

        def read_exact(n):
            data = buf.read(n)
            if len(data) != n:
                raise CheckpointError("truncated checkpoint file")
            return data

        if read_exact(4) != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", read_exact(4))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (count,) = struct.unpack("<I", read_exact(4))
        sections: dict[str, bytes] = {}
        crc = 0
        for _ in range(count):
            (name_len,) = struct.unpack("<H", read_exact(2))
            name = read_exact(name_len).decode("utf-8")
            (size,) = struct.unpack("<Q", read_exact(8))
            payload = read_exact(size)
            crc = zlib.crc32(payload, crc)
            sections[name] = payload
        (stored_crc,) = struct.unpack("<I", read_exact(4))
        if stored_crc != crc:
            raise CheckpointError("checkpoint payload corrupt (CRC mismatch)")

        try:
            config = json.loads(sections["config"].decode("utf-8"))
            state = json.loads(sections["state"].decode("utf-8"))
        except KeyError as exc:
            raise CheckpointError(f"missing checkpoint section {exc}") from exc
        params = {name.split("/", 1)[1]: load_params(payload)
                  for name, payload in sections.items() if name.startswith("params/")}
        adam = {name.split("/", 1)[1]: load_adam(payload)
                for name, payload in sections.items() if name.startswith("adam/")}
        return cls(config=config, env_steps=state["env_steps"],
                   updates=state["updates"], val_round=state["val_round"],
                   rng_states=state["rng_states"], params=params, adam=adam)


class _ParamsView:
    """Adapter exposing a plain {name: array} dict as dump_params input."""

    def __init__(self, values: dict[str, np.ndarray]):
        self._values = values

    def items(self):
        return [(name, _DataBox(arr)) for name, arr in self._values.items()]


class _DataBox:
    def __init__(self, arr):
        self.data = np.asarray(arr, dtype=np.float64)
