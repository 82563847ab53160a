"""Run manifests: the reproducibility record written next to every artifact."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from . import __version__


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict[str, str] = field(default_factory=dict)  # path -> sha256
    seed: Optional[int] = None
    tool_version: str = __version__
    created_at: str = ""

    def __post_init__(self) -> None:
        if not self.created_at:
            self.created_at = datetime.now(timezone.utc).isoformat()

    @classmethod
    def for_run(cls, command: str, config: dict, input_paths: list[str | Path],
                seed: Optional[int] = None) -> "RunManifest":
        digests = {str(p): file_digest(p) for p in input_paths}
        return cls(command=command, config=config, inputs=digests, seed=seed)

    def write(self, path: str | Path) -> None:
        payload = {
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "seed": self.seed,
            "tool_version": self.tool_version,
            "created_at": self.created_at,
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write("\n")


def manifest_path_for(artifact: str | Path) -> Path:
    """Manifest sits next to its artifact: dir/manifest.json or file.manifest.json."""
    artifact = Path(artifact)
    if artifact.is_dir():
        return artifact / "manifest.json"
    return artifact.with_name(artifact.name + ".manifest.json")
