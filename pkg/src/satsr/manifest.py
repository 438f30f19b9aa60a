"""Dataset manifests: JSONL files mapping sample ids to container paths.

One JSON object per line with keys id, path, split.  Paths are stored as
written (usually relative to the manifest's directory); split is "train",
"test", or "" while unassigned.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

VALID_SPLITS = ("", "train", "test")

# Fraction reproducing the reference 1377/476 partition of 1853 samples.
DEFAULT_TRAIN_FRACTION = 0.743


@dataclass
class ManifestEntry:
    sample_id: str
    path: str
    split: str = ""


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def validate(self) -> None:
        seen = set()
        for entry in self.entries:
            if not entry.sample_id:
                raise ValueError("manifest entry with empty id")
            if entry.sample_id in seen:
                raise ValueError(f"duplicate sample id {entry.sample_id!r}")
            seen.add(entry.sample_id)
            if entry.split not in VALID_SPLITS:
                raise ValueError(
                    f"split must be one of {VALID_SPLITS}, got {entry.split!r}"
                )

    def subset(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def save(self, path: str | Path) -> None:
        self.validate()
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(json.dumps(
                    {"id": e.sample_id, "path": e.path, "split": e.split},
                    separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    entries.append(ManifestEntry(
                        sample_id=str(obj["id"]),
                        path=str(obj["path"]),
                        split=str(obj.get("split", ""))))
                except (json.JSONDecodeError, KeyError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad manifest line: {exc}")
        manifest = cls(entries)
        manifest.validate()
        return manifest


def split_dataset(manifest: DatasetManifest, seed: int,
                  train_fraction: float = DEFAULT_TRAIN_FRACTION) -> DatasetManifest:
    """Assign train/test splits by seeded shuffle.

    Exactly round(train_fraction * n) entries become train; assignment
    depends only on the seed and the sorted id list, not manifest order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    manifest.validate()
    ids = sorted(e.sample_id for e in manifest.entries)
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(round(train_fraction * len(ids)))
    train_ids = {ids[i] for i in order[:n_train]}
    out = [
        ManifestEntry(e.sample_id, e.path,
                      "train" if e.sample_id in train_ids else "test")
        for e in manifest.entries
    ]
    return DatasetManifest(out)
