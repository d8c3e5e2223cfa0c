"""Self-describing checkpoint containers with content digests.

A checkpoint is a torch-serialized dict of plain containers and tensors:
configs, parameter tensors by hierarchical name, the training seed, and
the pixel-normalization constants. Every parameter set carries a SHA-256
digest so freezing and file integrity can be verified independently.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
from pathlib import Path

import torch

BASE_FORMAT = "triact.base.v1"
JOINT_FORMAT = "triact.joint.v1"


class CheckpointError(RuntimeError):
    """Missing, unreadable, corrupt, or tampered checkpoint."""


def state_digest(state: dict[str, torch.Tensor]) -> str:
    """SHA-256 over parameter names, dtypes, shapes, and raw little-endian bytes."""
    h = hashlib.sha256()
    for name in sorted(state):
        t = state[name].detach().cpu().contiguous()
        h.update(name.encode("utf-8"))
        h.update(str(t.dtype).encode("ascii"))
        h.update(",".join(str(d) for d in t.shape).encode("ascii"))
        h.update(t.numpy().tobytes())
    return h.hexdigest()


def module_digest(module: torch.nn.Module) -> str:
    return state_digest(dict(module.state_dict()))


def save_checkpoint(payload: dict, path: str | Path) -> None:
    """Atomic write: serialize to a temp file, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            torch.save(payload, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | Path, expected_format: str | None = None) -> dict:
    """Load a checkpoint and verify its stored digests against the tensors."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format" not in payload:
        raise CheckpointError(f"not a triact checkpoint: {path}")
    if expected_format is not None and payload["format"] != expected_format:
        raise CheckpointError(
            f"{path}: expected format {expected_format!r}, got {payload['format']!r}"
        )
    for key, value in payload.items():
        if not key.endswith("_state"):
            continue
        digest_key = key[: -len("_state")] + "_digest"
        stored = payload.get(digest_key)
        if stored is None:
            raise CheckpointError(f"{path}: missing digest for {key!r}")
        actual = state_digest(value)
        if actual != stored:
            raise CheckpointError(
                f"digest mismatch for {key!r} in {path}: checkpoint is corrupt "
                f"or was tampered with"
            )
    return payload
