"""
Binary File Helpers
Files are one JSON manifest line followed by little-endian binary payload
"""
import json
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import FileFormatError

FLOAT_DTYPE = np.dtype("<f8")


def write_manifest_file(path, kind: str, version: int, manifest: Dict, payload: bytes) -> Path:
    """Write a manifest line followed by raw payload bytes"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = dict(manifest)
    header["format"] = kind
    header["version"] = version
    line = json.dumps(header, sort_keys=True).encode("utf-8")

    with open(path, "wb") as f:
        f.write(line + b"\n")
        f.write(payload)
    return path


def read_manifest_file(path, kind: str, version: int) -> Tuple[Dict, bytes]:
    """
    Read a manifest file written by write_manifest_file

    Raises:
        FileFormatError: header missing, unparseable, of another kind or version
    """
    data = Path(path).read_bytes()
    newline = data.find(b"\n")
    if newline < 0:
        raise FileFormatError(f"{path}: missing manifest line")

    try:
        manifest = json.loads(data[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FileFormatError(f"{path}: unreadable manifest ({e})") from e

    if not isinstance(manifest, dict) or manifest.get("format") != kind:
        raise FileFormatError(f"{path}: not a {kind} file")
    if manifest.get("version") != version:
        raise FileFormatError(
            f"{path}: {kind} version {manifest.get('version')} not supported (expected {version})"
        )
    return manifest, data[newline + 1:]


def pack_arrays(named: Sequence[Tuple[str, np.ndarray]]) -> Tuple[List[Dict], bytes]:
    """Flatten named float arrays into (entries, little-endian bytes)"""
    entries = []
    chunks = []
    for name, array in named:
        array = np.ascontiguousarray(array, dtype=FLOAT_DTYPE)
        entries.append({"name": name, "shape": list(array.shape)})
        chunks.append(array.tobytes())
    return entries, b"".join(chunks)


def unpack_arrays(entries: Sequence[Dict], payload: bytes) -> Dict[str, np.ndarray]:
    """Inverse of pack_arrays"""
    arrays = {}
    offset = 0
    for entry in entries:
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * FLOAT_DTYPE.itemsize
        if offset + nbytes > len(payload):
            raise FileFormatError(f"payload truncated while reading '{entry['name']}'")
        chunk = np.frombuffer(payload, dtype=FLOAT_DTYPE, count=count, offset=offset)
        arrays[entry["name"]] = chunk.astype(np.float64).reshape(shape)
        offset += nbytes

    if offset != len(payload):
        raise FileFormatError(f"payload has {len(payload) - offset} trailing bytes")
    return arrays
