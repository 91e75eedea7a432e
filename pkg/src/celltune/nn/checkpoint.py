"""Versioned binary checkpoints: architecture descriptor + named float64
tensors. Round trips are bit-exact."""

import json
import struct

import numpy as np

MAGIC = b"CTN1"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, architecture, params, extra=None):
    """Write parameters with their architecture descriptor and extra state.

    `extra` is for JSON-serializable training state (step counter, epsilon
    schedule, ...).
    """
    tensors = [(name, t.data) for name, t in params]
    header = {
        "version": FORMAT_VERSION,
        "architecture": architecture,
        "extra": extra or {},
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Return (architecture, extra, name -> float64 array)."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported version")
        state = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise CheckpointError(f"{path}: truncated tensor data")
            state[spec["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return header["architecture"], header["extra"], state
