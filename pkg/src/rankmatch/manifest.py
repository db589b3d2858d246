"""Content-digest manifests for resumable pipeline stages.

A stage directory's manifest.json is written only after every output landed,
so its presence marks the stage complete. It records sha256 digests of the
stage's inputs and outputs plus the parameters used; resume logic compares
those digests to decide between skip, rerun, and refusing to trust a
tampered artifact.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .errors import StaleArtifactError

MANIFEST_NAME = "manifest.json"
_CHUNK = 1 << 20


def file_digest(path) -> str:
    """Streaming sha256 hex digest of a file."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(_CHUNK)
            if not chunk:
                break
            h.update(chunk)
    return h.hexdigest()


def params_digest(params: dict) -> str:
    """Digest of a canonical-JSON parameter dict."""
    payload = json.dumps(params, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def digest_map(paths: dict[str, Path | str]) -> dict[str, str]:
    """name -> sha256 for a set of files."""
    return {name: file_digest(p) for name, p in sorted(paths.items())}


def write_stage_manifest(
    stage_dir,
    stage: str,
    params: dict,
    inputs: dict[str, str],
    outputs: dict[str, str],
) -> Path:
    """Persist the completion marker for a stage. inputs/outputs map
    name -> sha256 hex digest."""
    stage_dir = Path(stage_dir)
    manifest = {
        "stage": stage,
        "params": params,
        "params_digest": params_digest(params),
        "inputs": dict(sorted(inputs.items())),
        "outputs": dict(sorted(outputs.items())),
    }
    path = stage_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_stage_manifest(stage_dir) -> dict | None:
    """Load a stage manifest; None when absent (stage incomplete),
    StaleArtifactError when unreadable (corrupt marker)."""
    path = Path(stage_dir) / MANIFEST_NAME
    if not path.exists():
        return None
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise StaleArtifactError(f"unreadable stage manifest {path}: {exc}") from None
    for key in ("stage", "params", "inputs", "outputs"):
        if key not in manifest:
            raise StaleArtifactError(f"stage manifest {path} is missing {key!r}")
    return manifest


def outputs_intact(stage_dir, manifest: dict) -> bool:
    """True when every recorded output exists and matches its digest."""
    stage_dir = Path(stage_dir)
    for name, digest in manifest["outputs"].items():
        path = stage_dir / name
        if not path.exists() or file_digest(path) != digest:
            return False
    return True
