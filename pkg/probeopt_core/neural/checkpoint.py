"""Versioned binary checkpoints holding one or more named networks.

Layout: magic ``PBCK``, little-endian uint16 format version, uint32 header
length, UTF-8 JSON header (network specs, offsets, metadata), then the
concatenated little-endian float64 parameter vectors.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from probeopt_core.errors import CheckpointFormatError, OutputPathError
from probeopt_core.neural.network import DenseNetSpec, ParameterSet

MAGIC = b"PBCK"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<HI")


@dataclass
class Checkpoint:
    networks: Dict[str, ParameterSet]
    metadata: Dict[str, Any] = field(default_factory=dict)


def save_checkpoint(
    path: Union[str, Path], networks: Dict[str, ParameterSet], metadata: Dict[str, Any] = None
) -> None:
    """
    Write networks and metadata to ``path``.

    Raises:
        OutputPathError: If the file cannot be written
    """
    entries = []
    offset = 0
    for name, params in networks.items():
        entries.append(
            {"name": name, "spec": params.spec.to_descriptor(), "offset": offset, "length": params.size}
        )
        offset += params.size
    header = json.dumps({"networks": entries, "metadata": metadata or {}}, sort_keys=True).encode("utf-8")
    payload = np.concatenate([p.flat for p in networks.values()]) if networks else np.zeros(0)

    try:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as f:
            f.write(MAGIC)
            f.write(_PREAMBLE.pack(FORMAT_VERSION, len(header)))
            f.write(header)
            f.write(payload.astype("<f8").tobytes())
    except OSError as e:
        raise OutputPathError(f"Failed to write checkpoint {path}: {e}")


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Raises:
        FileNotFoundError: If the file does not exist
        CheckpointFormatError: If the magic, version or sizes are wrong
    """
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointFormatError(f"{path} is not a checkpoint (bad magic)")
    version, header_length = _PREAMBLE.unpack_from(data, 4)
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version}")
    start = 4 + _PREAMBLE.size
    header = json.loads(data[start : start + header_length].decode("utf-8"))
    payload = np.frombuffer(data[start + header_length :], dtype="<f8")

    networks = {}
    for entry in header["networks"]:
        spec = DenseNetSpec.from_descriptor(entry["spec"])
        stop = entry["offset"] + entry["length"]
        if stop > payload.size:
            raise CheckpointFormatError(f"{path}: network '{entry['name']}' is truncated")
        networks[entry["name"]] = ParameterSet(spec, payload[entry["offset"] : stop].astype(float))
    return Checkpoint(networks=networks, metadata=header.get("metadata", {}))
