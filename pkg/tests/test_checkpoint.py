import hashlib
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgefuse.core.checkpoint import CheckpointError, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint
from edgefuse.core.rng import Rng


def test_empty_map_is_header_only():
    buf = save_checkpoint({})
    assert buf == b"TGVM" + struct.pack("<I", 1)
    assert load_checkpoint(buf) == {}


def test_single_tensor_bit_exact():
    back = load_checkpoint(save_checkpoint({"w": np.array([1.0, 2.0, 3.0], np.float32)}))
    assert list(back) == ["w"]
    assert back["w"].tobytes() == np.array([1.0, 2.0, 3.0], np.float32).tobytes()


def test_fifty_random_tensors_hash_equal():
    rng = Rng(50)
    tensors = {}
    for i in range(50):
        ndim = int(rng.integers(0, 4))
        shape = tuple(int(v) for v in rng.integers(1, 5, (ndim,)))
        tensors[f"layer{i}.w"] = rng.normal(shape).astype(np.float32)
    buf = save_checkpoint(tensors)
    back = load_checkpoint(buf)
    assert hashlib.sha256(save_checkpoint(back)).digest() == hashlib.sha256(buf).digest()
    for k, v in tensors.items():
        assert back[k].shape == v.shape and back[k].tobytes() == v.tobytes()


def test_special_floats_survive():
    arr = np.array([np.nan, -0.0, np.inf, -np.inf, 1e-45], np.float32)
    back = load_checkpoint(save_checkpoint({"s": arr}))["s"]
    assert back.tobytes() == arr.tobytes()


def test_truncation_names_the_tensor():
    buf = save_checkpoint({"first": np.ones(3, np.float32), "second.weight": np.ones((4, 4), np.float32)})
    with pytest.raises(CheckpointError, match="second.weight"):
        load_checkpoint(buf[:-5])


@pytest.mark.parametrize("buf,msg", [
    (b"XXXX" + struct.pack("<I", 1), "magic"),
    (b"TGVM" + struct.pack("<I", 7), "version"),
    (b"TG", "truncated"),
])
def test_rejects_bad_headers(buf, msg):
    with pytest.raises(CheckpointError, match=msg):
        load_checkpoint(buf)


def test_empty_name_rejected():
    with pytest.raises(CheckpointError):
        save_checkpoint({"": np.zeros(1)})


def test_file_roundtrip(tmp_path):
    p = tmp_path / "m.tgvm"
    write_checkpoint(p, {"a": np.arange(6, dtype=np.float32).reshape(2, 3)})
    assert read_checkpoint(p)["a"].tolist() == [[0, 1, 2], [3, 4, 5]]


@given(st.dictionaries(st.text(min_size=1, max_size=12),
                       st.lists(st.floats(width=32, allow_nan=False), max_size=20), max_size=6))
@settings(max_examples=40)
def test_roundtrip_property(d):
    tensors = {k: np.array(v, np.float32) for k, v in d.items()}
    buf = save_checkpoint(tensors)
    assert save_checkpoint(load_checkpoint(buf)) == buf
