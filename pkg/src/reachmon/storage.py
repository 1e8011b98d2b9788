"""Versioned binary container shared by datasets, checkpoints and bundles.

A container is a directory holding ``meta.json`` plus one raw little-endian
array file per named array.  The meta records dtype, shape and a sha256
digest for every array, so a load detects truncation and bit flips; the same
format is used for every persisted artifact, which keeps round-trips
bit-exact and language-neutral.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .errors import IntegrityError, MissingArtifact

FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8", "uint8": "|u1", "int32": "<i4",
           "int64": "<i8"}


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def save_container(path, meta: dict, arrays: dict[str, np.ndarray]):
    """Write ``meta`` and ``arrays`` under directory ``path`` (created)."""
    os.makedirs(path, exist_ok=True)
    index = {}
    for name, arr in arrays.items():
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise ValueError(f"unsupported array dtype {dtype} for {name!r}")
        data = np.ascontiguousarray(arr).astype(_DTYPES[dtype]).tobytes()
        fname = f"{name}.bin"
        with open(os.path.join(path, fname), "wb") as fh:
            fh.write(data)
        index[name] = {
            "file": fname,
            "dtype": dtype,
            "shape": list(arr.shape),
            "sha256": _sha256(data),
        }
    doc = {"format_version": FORMAT_VERSION, "meta": meta, "arrays": index}
    with open(os.path.join(path, "meta.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_container(path):
    """Load a container; returns ``(meta, arrays)``.

    Raises :class:`MissingArtifact` when the directory or meta file is
    absent and :class:`IntegrityError` on version or checksum mismatch.
    """
    meta_path = os.path.join(path, "meta.json")
    if not os.path.isfile(meta_path):
        raise MissingArtifact(f"no container at {path}")
    try:
        with open(meta_path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"malformed meta.json in {path}: {exc}") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise IntegrityError(
            f"{path}: format version {doc.get('format_version')} != {FORMAT_VERSION}")
    arrays = {}
    for name, entry in doc["arrays"].items():
        fpath = os.path.join(path, entry["file"])
        try:
            with open(fpath, "rb") as fh:
                data = fh.read()
        except OSError:
            raise MissingArtifact(f"{path}: array file {entry['file']} missing") from None
        if _sha256(data) != entry["sha256"]:
            raise IntegrityError(f"{path}: checksum failure for array {name!r}")
        arr = np.frombuffer(data, dtype=_DTYPES[entry["dtype"]])
        arrays[name] = arr.reshape(entry["shape"]).astype(entry["dtype"], copy=False)
    return doc["meta"], arrays
