"""Run-directory layout, deterministic JSON writing and per-stage manifests.

A manifest records the sha256 of every input a stage read and every output
it wrote, plus the config hash. Nothing time-dependent is stored, so two
runs with the same config produce byte-identical directories.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import ManifestMismatch, MissingArtifactError


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def dumps_line(obj) -> str:
    """Compact single-line JSON for JSONL stores."""
    return json.dumps(_plain(obj), ensure_ascii=False, allow_nan=False) + "\n"


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunStore:
    """Paths and I/O helpers for one self-describing run directory."""

    def __init__(self, root):
        self.root = Path(root)

    def path(self, rel: str) -> Path:
        return self.root / rel

    def rel(self, path: Path) -> str:
        return Path(path).relative_to(self.root).as_posix()

    def exists(self, rel: str) -> bool:
        return self.path(rel).exists()

    def require(self, rel: str, stage: str) -> Path:
        p = self.path(rel)
        if not p.exists():
            raise MissingArtifactError(str(p), stage)
        return p

    def write_text(self, rel: str, text: str) -> Path:
        p = self.path(rel)
        p.parent.mkdir(parents=True, exist_ok=True)
        tmp = p.with_name(p.name + ".tmp")
        tmp.write_text(text)
        tmp.replace(p)
        return p

    def write_json(self, rel: str, obj) -> Path:
        return self.write_text(rel, dumps(obj))

    def read_json(self, rel: str, stage: str = ""):
        return json.loads(self.require(rel, stage).read_text())

    def read_jsonl(self, rel: str, stage: str = "") -> list:
        with self.require(rel, stage).open() as fh:
            return [json.loads(line) for line in fh if line.strip()]

    # manifests

    def manifest_rel(self, stage: str) -> str:
        return f"manifests/{stage}.json"

    def hashes(self, rels: Iterable[str]) -> dict[str, str]:
        return {r: sha256_file(self.path(r)) for r in sorted(set(rels))}

    def write_manifest(self, stage: str, config_hash: str, inputs: Iterable[str], outputs: Iterable[str]) -> dict:
        manifest = {
            "stage": stage,
            "config_hash": config_hash,
            "inputs": self.hashes(inputs),
            "outputs": self.hashes(outputs),
        }
        self.write_json(self.manifest_rel(stage), manifest)
        return manifest

    def manifests(self) -> dict[str, dict]:
        d = self.path("manifests")
        if not d.exists():
            return {}
        return {p.stem: json.loads(p.read_text()) for p in sorted(d.glob("*.json"))}

    def verify_manifest(self, manifest: Mapping, sections: tuple[str, ...] = ("inputs", "outputs")) -> None:
        """Raise :class:`ManifestMismatch` naming the first file whose hash differs."""
        for section in sections:
            for rel, digest in manifest[section].items():
                p = self.path(rel)
                if not p.exists():
                    raise ManifestMismatch(f"stage {manifest['stage']}: {section[:-1]} {rel} is missing")
                actual = sha256_file(p)
                if actual != digest:
                    raise ManifestMismatch(
                        f"stage {manifest['stage']}: {section[:-1]} {rel} changed (recorded {digest[:12]}, found {actual[:12]})"
                    )
