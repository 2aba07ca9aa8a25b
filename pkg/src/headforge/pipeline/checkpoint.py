"""Binary run-state container with a canonical JSON header.

Layout: magic line, 8-byte little-endian header length, canonical JSON
header (sorted keys, compact separators), then raw C-order array bytes in
header order. Everything is deterministic, so save -> load -> save produces
byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"HEADFORGE-CKPT\n"
CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class RunState:
    stage: str
    iteration: int
    config: dict
    rng_state: dict | None = None
    arrays: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)


def save_checkpoint(path, state: RunState) -> None:
    names = sorted(state.arrays)
    specs = []
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(state.arrays[name])
        specs.append({"name": name, "dtype": str(arr.dtype),
                      "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {
        "version": CHECKPOINT_VERSION,
        "stage": state.stage,
        "iteration": int(state.iteration),
        "config": state.config,
        "rng": state.rng_state,
        "arrays": specs,
        "counters": state.counters,
    }
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)
    tmp.replace(path)


def load_checkpoint(path) -> RunState:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    offset = len(MAGIC)
    if len(raw) < offset + 8:
        raise CheckpointError(f"{path} is truncated before the header")
    (header_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    try:
        header = json.loads(raw[offset:offset + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path} has a corrupt header: {exc}") from exc
    offset += header_len
    version = header.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path} is checkpoint version {version}; this build reads "
            f"version {CHECKPOINT_VERSION}")
    arrays = {}
    for spec in header["arrays"]:
        dtype = np.dtype(spec["dtype"])
        shape = tuple(spec["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        chunk = raw[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path} is truncated in array {spec['name']}")
        arrays[spec["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(shape).copy()
        offset += nbytes
    return RunState(stage=header["stage"], iteration=header["iteration"],
                    config=header["config"], rng_state=header["rng"],
                    arrays=arrays, counters=header.get("counters", {}))


def rng_state_of(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def rng_from_state(state: dict) -> np.random.Generator:
    gen = np.random.default_rng()
    gen.bit_generator.state = state
    return gen


def parameter_hash(params) -> str:
    """Order-independent digest of named parameter values."""
    digest = hashlib.sha256()
    for name, tensor in sorted(params, key=lambda item: item[0]):
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(tensor.data).tobytes())
    return digest.hexdigest()[:16]
