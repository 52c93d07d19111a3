"""
Model checkpoint module for aonkit.

File layout:
    8 bytes   magic b"AONKIT01"
    1 byte    flag, 0 = trainable, 1 = frozen
    4 bytes   little-endian uint32 manifest length L
    L bytes   UTF-8 JSON manifest (layer kinds, constructor settings, tensor names and shapes)
    payload   every tensor in manifest order as little-endian float64
"""
import json
import logging
import os
import struct
from typing import Any, Dict, List

import numpy as np

from lib.nn import LAYER_TYPES, Network
from lib.utils.errors import FormatError, LengthError

logger = logging.getLogger(__name__)

MAGIC = b"AONKIT01"
FLAG_TRAINABLE = 0
FLAG_FROZEN = 1
FORMAT_VERSION = 1
PAYLOAD_DTYPE = np.dtype("<f8")


def _manifest(model: Network) -> Dict[str, Any]:
    layers = []
    for layer in model.layers:
        tensors = layer.state_tensors()
        layers.append({
            "kind": layer.kind,
            "config": layer.config(),
            "tensors": [{"name": name, "shape": list(np.shape(t))} for name, t in tensors.items()],
        })
    return {
        "format_version": FORMAT_VERSION,
        "input_shape": list(model.input_shape),
        "layers": layers,
    }


def save_checkpoint(path: str, model: Network) -> None:
    """Write the model to `path`; frozen models are flagged as such."""
    manifest = _manifest(model)
    body = json.dumps(manifest, sort_keys=True).encode("utf-8")
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(bytes([FLAG_FROZEN if model.frozen else FLAG_TRAINABLE]))
        f.write(struct.pack("<I", len(body)))
        f.write(body)
        for layer in model.layers:
            for tensor in layer.state_tensors().values():
                f.write(np.ascontiguousarray(tensor, dtype=PAYLOAD_DTYPE).tobytes())
    logger.info(f"Saved {'frozen' if model.frozen else 'trainable'} checkpoint to {path}")


def load_checkpoint(path: str) -> Network:
    """
    Rebuild a Network from a checkpoint file.

    Raises:
        FormatError: bad magic, unknown flag or version, unreadable manifest, unknown layer kind
        LengthError: file shorter than the manifest announces
    """
    with open(path, "rb") as f:
        data = f.read()

    header = len(MAGIC) + 1 + 4
    if len(data) < header:
        raise LengthError(f"{path}: {len(data)} bytes is shorter than the checkpoint header")
    if data[:len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: not an aonkit checkpoint (magic {data[:len(MAGIC)]!r})")
    flag = data[len(MAGIC)]
    if flag not in (FLAG_TRAINABLE, FLAG_FROZEN):
        raise FormatError(f"{path}: unknown checkpoint flag {flag}")
    (manifest_len,) = struct.unpack("<I", data[len(MAGIC) + 1:header])
    if len(data) < header + manifest_len:
        raise LengthError(f"{path}: manifest truncated")

    try:
        manifest = json.loads(data[header:header + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: unreadable manifest: {e}")
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {manifest.get('format_version')}")

    frozen = flag == FLAG_FROZEN
    offset = header + manifest_len
    layers: List = []
    for entry in manifest["layers"]:
        cls = LAYER_TYPES.get(entry["kind"])
        if cls is None:
            raise FormatError(f"{path}: unknown layer kind {entry['kind']!r}")
        layer = cls(**entry["config"])

        tensors = {}
        for spec in entry["tensors"]:
            count = int(np.prod(spec["shape"], dtype=np.int64))
            end = offset + count * PAYLOAD_DTYPE.itemsize
            if end > len(data):
                raise LengthError(f"{path}: payload for {entry['kind']}.{spec['name']} truncated")
            tensors[spec["name"]] = np.frombuffer(data[offset:end], dtype=PAYLOAD_DTYPE).reshape(spec["shape"]).astype(np.float64)
            offset = end
        layer.load_state_tensors(tensors, frozen)
        layers.append(layer)

    model = Network(layers, tuple(manifest["input_shape"]))
    model.frozen = frozen
    logger.info(f"Loaded {'frozen' if frozen else 'trainable'} checkpoint from {path}")
    return model
