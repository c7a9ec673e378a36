import json

import pytest

from scantrainer.data import BatchSampler, PatchFolder, StoreFormatError

from conftest import write_store


def test_load_scanned_store(scanned_store):
    folder = PatchFolder.load(scanned_store)
    assert len(folder) == 8
    assert folder.gt.shape == (8, 3, 32, 32)
    assert folder.scan.shape == (8, 3, 32, 32)
    assert folder.gt.min() >= 0.0 and folder.gt.max() <= 1.0
    assert folder.ids == [f"p{i}" for i in range(8)]


def test_load_unscanned_store(unscanned_store):
    folder = PatchFolder.load(unscanned_store)
    assert len(folder) == 6
    assert folder.scan is None


def test_load_missing_index(tmp_path):
    with pytest.raises(StoreFormatError):
        PatchFolder.load(tmp_path)


def test_load_rejects_mixed_records(tmp_path):
    write_store(tmp_path / "s", n=2, with_scan=True)
    index_path = tmp_path / "s" / "index.json"
    index = json.loads(index_path.read_text())
    index["records"][1]["scan_file"] = None
    index_path.write_text(json.dumps(index))
    with pytest.raises(StoreFormatError):
        PatchFolder.load(tmp_path / "s")


def test_batch_sampler_deterministic():
    a = BatchSampler(10, 4, seed=3)
    b = BatchSampler(10, 4, seed=3)
    for _ in range(5):
        assert (a.next_indices() == b.next_indices()).all()


def test_batch_sampler_empty_rejected():
    with pytest.raises(ValueError):
        BatchSampler(0, 4)
