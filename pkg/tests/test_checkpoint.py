import numpy as np
import pytest

from rgp.numcore import Tensor, load_checkpoint, save_checkpoint
from rgp.numcore.checkpoint import MAGIC


def test_roundtrip_preserves_names_shapes_and_f32_values(tmp_path, rng):
    params = {
        "gcn.0.w": Tensor(rng.normal(0, 1, (4, 8))),
        "pool.score": rng.normal(0, 1, (8, 1)),
        "cls": rng.normal(0, 1, (1, 8)),
    }
    path = tmp_path / "model.rgp1"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    assert sorted(loaded) == sorted(params)
    for name, original in params.items():
        data = original.data if isinstance(original, Tensor) else original
        np.testing.assert_array_equal(loaded[name], data.astype(np.float32).astype(np.float64))


def test_save_load_save_is_byte_stable(tmp_path, rng):
    params = {"w": rng.normal(0, 1, (3, 3))}
    first = tmp_path / "a.rgp1"
    second = tmp_path / "b.rgp1"
    save_checkpoint(first, params)
    save_checkpoint(second, load_checkpoint(first))
    assert first.read_bytes() == second.read_bytes()


def test_magic_header(tmp_path):
    path = tmp_path / "m.rgp1"
    save_checkpoint(path, {"w": np.zeros((1, 1))})
    assert path.read_bytes()[:4] == MAGIC


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.rgp1"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError, match="bad magic"):
        load_checkpoint(path)


def test_truncated_file_rejected(tmp_path, rng):
    path = tmp_path / "t.rgp1"
    save_checkpoint(path, {"w": rng.normal(0, 1, (4, 4))})
    (tmp_path / "cut.rgp1").write_bytes(path.read_bytes()[:-7])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(tmp_path / "cut.rgp1")


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "x.rgp1"
    save_checkpoint(path, {"w": np.zeros((1, 1))})
    path.write_bytes(path.read_bytes() + b"junk")
    with pytest.raises(ValueError, match="trailing"):
        load_checkpoint(path)


def test_no_temp_file_left_behind(tmp_path):
    save_checkpoint(tmp_path / "c.rgp1", {"w": np.zeros((2, 2))})
    assert list(tmp_path.glob("*.tmp")) == []


def test_entries_sorted_by_name(tmp_path):
    path = tmp_path / "s.rgp1"
    save_checkpoint(path, {"zz": np.zeros((1, 1)), "aa": np.ones((1, 1))})
    raw = path.read_bytes()
    assert raw.index(b"aa") < raw.index(b"zz")
