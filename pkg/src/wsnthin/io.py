"""CSV persistence with an embedded provenance manifest."""

from __future__ import annotations

import io
from pathlib import Path

import pandas as pd

MANIFEST_PREFIX = "# "


class MissingArtifactError(FileNotFoundError):
    def __init__(self, path, stage):
        super().__init__(f"missing {Path(path).name}; run the `{stage}` stage first")
        self.stage = stage


def write_csv(path, df: pd.DataFrame, manifest: dict) -> None:
    """Write ``df`` preceded by ``# key: value`` lines; output depends only on the inputs."""
    buf = io.StringIO()
    for k in sorted(manifest):
        buf.write(f"{MANIFEST_PREFIX}{k}: {manifest[k]}\n")
    df.to_csv(buf, index=False, lineterminator="\n")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(buf.getvalue())


def read_manifest(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith(MANIFEST_PREFIX):
                break
            key, _, value = line[len(MANIFEST_PREFIX):].rstrip("\n").partition(": ")
            out[key] = value
    return out


def read_csv(path, stage: str | None = None, **kw) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        if stage is not None:
            raise MissingArtifactError(path, stage)
        raise FileNotFoundError(path)
    skip = len(read_manifest(path))
    return pd.read_csv(path, skiprows=skip, **kw)
