"""Deterministic artifact writing: CSV files and run manifests.

Every artifact is UTF-8 with LF line endings, '.' decimal separator, and
floats printed to 12 significant digits, so identical configs and seeds
produce byte-identical files.  Each CSV carries the config hash in a header
comment row.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence


def fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_csv(
    path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence],
    comments: Sequence[str] = (),
) -> Path:
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def write_manifest(out_dir: Path, subcommand: str, config: dict, seed: int,
                   outputs: Sequence[str]) -> Path:
    import numpy

    from . import __version__

    manifest = {
        "subcommand": subcommand,
        "config_sha256": config_hash(config),
        "seed": seed,
        "versions": {"gatekeeper": __version__, "numpy": numpy.__version__},
        "outputs": sorted(outputs),
    }
    path = Path(out_dir) / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
