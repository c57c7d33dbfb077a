"""Delimited report files, checksums and the per-run manifest.

All floating-point output uses repr round-trip precision so that re-running a
command from its manifest reproduces byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
import os
from datetime import datetime, timezone
from pathlib import Path

from . import __version__

__all__ = ["fmt", "write_csv", "sha256_file", "write_run_manifest", "load_json"]


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item"):  # numpy scalar
        return fmt(value.item())
    return str(value)


def write_csv(path: str | Path, header: list[str], rows: list[dict | list]) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        if isinstance(row, dict):
            lines.append(",".join(fmt(row[h]) for h in header))
        else:
            lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_run_manifest(out_dir: str | Path, command: str, config: dict, seed: int,
                       outputs: list[Path], started: datetime, status: str = "ok") -> Path:
    """Atomically write the run manifest (config echo, checksums of every output)."""
    out_dir = Path(out_dir)
    entries = []
    for p in sorted(outputs):
        p = Path(p)
        entries.append({
            "path": p.name,
            "sha256": sha256_file(p),
            "bytes": p.stat().st_size,
        })
    doc = {
        "schema_version": 1,
        "command": command,
        "config": config,
        "seed": seed,
        "code_version": __version__,
        "started_utc": started.astimezone(timezone.utc).isoformat(),
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "status": status,
        "outputs": entries,
    }
    target = out_dir / "manifest.json"
    tmp = out_dir / ".manifest.json.tmp"
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    os.replace(tmp, target)
    return target


def load_json(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)
