import numpy as np
import pytest

from conftest import make_window
from tinyfit.errors import BadMagic, EmptyDataset, Truncated
from tinyfit.twin import read_twin, write_twin


def _corpus(n=12, seed=0):
    rng = np.random.default_rng(seed)
    labels = ["walk", "run", "sit"]
    return [
        make_window(
            rng.normal(size=(60, 6)).astype(np.float32).astype(np.float64),
            subject=f"subj{i % 4}",
            label=labels[i % 3],
        )
        for i in range(n)
    ]


def test_roundtrip(tmp_path):
    wins = _corpus()
    path = tmp_path / "d.twin"
    write_twin(path, wins)
    back, classes = read_twin(path)
    assert classes == ["run", "sit", "walk"]
    assert len(back) == len(wins)
    for a, b in zip(wins, back):
        assert a.label == b.label
        assert np.array_equal(a.data, b.data)  # f32 values survive exactly
    # subjects come back as sorted-order indices
    assert {w.subject_id for w in back} == {"0", "1", "2", "3"}


def test_byte_deterministic(tmp_path):
    wins = _corpus()
    write_twin(tmp_path / "a.twin", wins)
    write_twin(tmp_path / "b.twin", wins)
    assert (tmp_path / "a.twin").read_bytes() == (tmp_path / "b.twin").read_bytes()


def test_empty_rejected(tmp_path):
    with pytest.raises(EmptyDataset):
        write_twin(tmp_path / "e.twin", [])


def test_bad_magic(tmp_path):
    path = tmp_path / "d.twin"
    write_twin(path, _corpus(3))
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(BadMagic):
        read_twin(path)


def test_truncation(tmp_path):
    path = tmp_path / "d.twin"
    write_twin(path, _corpus(3))
    raw = path.read_bytes()
    for cut in (5, 12, len(raw) // 2, len(raw) - 1):
        path.write_bytes(raw[:cut])
        with pytest.raises(Truncated):
            read_twin(path)
