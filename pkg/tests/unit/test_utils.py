from pathlib import Path

import pytest

from memlab import InvalidInputError, MemlabError, OutOfHistoryError, SolverBlowUpError
from memlab.utils import SUBFOLDERS, calculate_sha256, init_data, sha256_bytes, worker_count


def test_init_data(tmp_path):
    root = init_data(tmp_path / "data")
    assert root == tmp_path / "data"
    for name in SUBFOLDERS:
        assert (root / name).is_dir()
    # idempotent
    assert init_data(root) == root


def test_exit_codes():
    assert InvalidInputError.exit_code == 1
    assert SolverBlowUpError.exit_code == 2
    assert OutOfHistoryError.exit_code == 3
    assert issubclass(OutOfHistoryError, MemlabError)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("MEMLAB_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.delenv("MEMLAB_WORKERS")
    assert worker_count() >= 1


def test_worker_count_rejects_garbage(monkeypatch):
    monkeypatch.setenv("MEMLAB_WORKERS", "many")
    with pytest.raises(InvalidInputError):
        worker_count()
    monkeypatch.setenv("MEMLAB_WORKERS", "0")
    with pytest.raises(InvalidInputError):
        worker_count()


def test_sha256(tmp_path):
    path = Path(tmp_path) / "blob"
    path.write_bytes(b"membrane")
    assert calculate_sha256(path) == sha256_bytes(b"membrane").hex()
    assert len(sha256_bytes(b"")) == 32
