"""Named-tensor archive with a JSON manifest and a payload checksum.

On disk this is a plain safetensors file: an 8-byte little-endian header
length, a JSON header listing every tensor's dtype, shape and byte offsets,
then the raw little-endian payload.  The header's ``__metadata__`` map holds a
single key, ``manifest``, whose value is a JSON document.  ``payload_sha256``
inside the manifest covers every tensor (sorted by name: name, dtype, shape,
raw bytes) and ``manifest_sha256`` covers the rest of the manifest, so bit
flips anywhere in the file are detected on load.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import torch
from safetensors import SafetensorError
from safetensors.torch import load_file, save_file

from .errors import IntegrityError

MANIFEST_KEY = "manifest"
_DIGEST_KEYS = ("payload_sha256", "manifest_sha256")


def payload_digest(tensors: dict[str, torch.Tensor]) -> str:
    h = hashlib.sha256()
    for name in sorted(tensors):
        t = tensors[name].detach().cpu().contiguous()
        h.update(name.encode())
        h.update(str(t.dtype).encode())
        h.update(repr(tuple(t.shape)).encode())
        h.update(t.view(torch.uint8).numpy().tobytes() if t.numel() else b"")
    return h.hexdigest()


def manifest_digest(manifest: dict) -> str:
    """SHA-256 of the canonical JSON of ``manifest`` without its digest fields."""
    body = {k: v for k, v in manifest.items() if k not in _DIGEST_KEYS}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def write_archive(path, tensors: dict[str, torch.Tensor], manifest: dict) -> None:
    """Write atomically: the target only appears once fully written."""
    path = Path(path)
    tensors = {k: v.detach().cpu().contiguous() for k, v in tensors.items()}
    manifest = {k: v for k, v in manifest.items() if k not in _DIGEST_KEYS}
    manifest["payload_sha256"] = payload_digest(tensors)
    manifest["manifest_sha256"] = manifest_digest(manifest)
    tmp = path.with_name(path.name + ".partial")
    save_file(tensors, str(tmp), metadata={MANIFEST_KEY: json.dumps(manifest, sort_keys=True)})
    os.replace(tmp, path)


def read_manifest(path) -> dict:
    """Parse only the manifest, without touching the payload."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read(8)
            if len(raw) < 8:
                raise IntegrityError(f"{path}: file too short to be an archive")
            n = int.from_bytes(raw, "little")
            if n <= 0 or n > path.stat().st_size - 8:
                raise IntegrityError(f"{path}: header length {n} exceeds file size")
            header = json.loads(fh.read(n))
        manifest = json.loads(header["__metadata__"][MANIFEST_KEY])
        if not isinstance(manifest, dict):
            raise TypeError("manifest is not a JSON object")
        return manifest
    except (KeyError, TypeError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"{path}: unreadable manifest ({exc})") from exc


def read_archive(path) -> tuple[dict[str, torch.Tensor], dict]:
    """Load tensors and manifest; raise IntegrityError on any corruption."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    manifest = read_manifest(path)
    if manifest.get("manifest_sha256") != manifest_digest(manifest):
        raise IntegrityError(f"{path}: manifest hash mismatch")
    try:
        tensors = load_file(str(path))
    except (SafetensorError, OSError, ValueError, RuntimeError) as exc:
        raise IntegrityError(f"{path}: corrupted payload ({exc})") from exc
    expected = manifest.get("payload_sha256")
    actual = payload_digest(tensors)
    if expected != actual:
        raise IntegrityError(f"{path}: payload hash mismatch (manifest {expected}, data {actual})")
    return tensors, manifest
