"""Run manifests written next to every artifact-producing command's outputs."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Mapping

from . import __version__


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: str | Path, config: Mapping, inputs: Iterable[str | Path],
                   outputs: Mapping[str, str | Path]) -> Path:
    manifest = {
        "tool": "bgan",
        "version": __version__,
        "config": dict(config),
        "inputs": {str(p): file_sha256(p) for p in inputs if p and Path(p).is_file()},
        "outputs": {k: str(v) for k, v in outputs.items()},
    }
    path = Path(path)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
