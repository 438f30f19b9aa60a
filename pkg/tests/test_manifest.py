"""Dataset manifests and the seeded train/test split."""

import numpy as np
import pytest

from satsr.manifest import (DEFAULT_TRAIN_FRACTION, DatasetManifest,
                            ManifestEntry, split_dataset)


def _manifest(n, prefix="s"):
    return DatasetManifest([
        ManifestEntry(f"{prefix}{i:05d}", f"{prefix}{i:05d}.lssr")
        for i in range(n)
    ])


def test_reference_partition_counts():
    split = split_dataset(_manifest(1853), seed=0)
    train = split.subset("train")
    test = split.subset("test")
    assert len(train) == 1377
    assert len(test) == 476
    ids = {e.sample_id for e in split.entries}
    assert {e.sample_id for e in train} | {e.sample_id for e in test} == ids
    assert {e.sample_id for e in train} & {e.sample_id for e in test} == set()


def test_split_fraction_rounds():
    split = split_dataset(_manifest(10), seed=1, train_fraction=0.743)
    assert len(split.subset("train")) == 7


def test_split_ignores_entry_order():
    m = _manifest(50)
    shuffled = DatasetManifest(list(reversed(m.entries)))
    a = {e.sample_id: e.split for e in split_dataset(m, seed=3).entries}
    b = {e.sample_id: e.split
         for e in split_dataset(shuffled, seed=3).entries}
    assert a == b


def test_split_depends_on_seed():
    m = _manifest(200)
    a = {e.sample_id: e.split for e in split_dataset(m, seed=0).entries}
    b = {e.sample_id: e.split for e in split_dataset(m, seed=1).entries}
    assert a != b


def test_split_preserves_paths_and_order():
    m = _manifest(20)
    out = split_dataset(m, seed=5)
    assert [e.sample_id for e in out.entries] == [e.sample_id for e in m.entries]
    assert [e.path for e in out.entries] == [e.path for e in m.entries]


def test_bad_fraction_rejected():
    for frac in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(ValueError):
            split_dataset(_manifest(5), seed=0, train_fraction=frac)


def test_save_load_round_trip(tmp_path):
    m = split_dataset(_manifest(17), seed=2)
    path = tmp_path / "manifest.jsonl"
    m.save(path)
    back = DatasetManifest.load(path)
    assert back == m


def test_load_skips_blank_lines(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text('{"id":"a","path":"a.lssr","split":"train"}\n\n'
                    '{"id":"b","path":"b.lssr"}\n')
    m = DatasetManifest.load(path)
    assert len(m.entries) == 2
    assert m.entries[1].split == ""


def test_load_reports_line_number(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text('{"id":"a","path":"a.lssr"}\nnot json\n')
    with pytest.raises(ValueError, match=":2"):
        DatasetManifest.load(path)


def test_duplicate_ids_rejected():
    m = DatasetManifest([ManifestEntry("x", "a"), ManifestEntry("x", "b")])
    with pytest.raises(ValueError, match="duplicate"):
        m.validate()


def test_empty_id_rejected():
    with pytest.raises(ValueError):
        DatasetManifest([ManifestEntry("", "a")]).validate()


def test_unknown_split_rejected():
    with pytest.raises(ValueError):
        DatasetManifest([ManifestEntry("a", "a", "val")]).validate()


def test_default_fraction_value():
    assert abs(DEFAULT_TRAIN_FRACTION - 0.743) < 1e-12
    assert int(round(DEFAULT_TRAIN_FRACTION * 1853)) == 1377
