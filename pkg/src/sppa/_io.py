"""Atomic file writes and run manifests."""

from __future__ import annotations

import hashlib
import os
import tempfile
from pathlib import Path


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def manifest_text(command: str, version: str, params: dict, inputs: list, outputs: list) -> str:
    """Plain-text record of everything that determines a command's outputs.

    No timestamps, so repeated runs produce identical manifests.
    """
    lines = [f"command={command}", f"tool_version={version}"]
    for key in sorted(params):
        lines.append(f"param.{key}={params[key]}")
    for p in inputs:
        lines.append(f"input={p} sha256={sha256_file(p)}")
    for p in outputs:
        lines.append(f"output={p} sha256={sha256_file(p)}")
    return "\n".join(lines) + "\n"
