import numpy as np
import pytest

from emoeeg import store


def test_pack_round_trip_and_canonical_bytes():
    t = {"a": np.arange(6, dtype=np.float64).reshape(2, 3), "b": np.array([1, 2], dtype=np.int32),
         "c": np.ones((2, 2), dtype=np.float32)}
    blob = store.pack("thing", t, {"z": 1, "a": [1, 2]})
    kind, back, meta = store.unpack(blob)
    assert kind == "thing" and meta == {"z": 1, "a": [1, 2]}
    np.testing.assert_array_equal(back["a"], t["a"])
    assert back["b"].dtype == np.int64 and back["c"].dtype == np.float32
    assert store.pack("thing", t, {"a": [1, 2], "z": 1}) == blob


def test_header_layout_is_little_endian():
    blob = store.pack("k", {"x": np.array([1.5])})
    assert blob[:8] == store.MAGIC
    assert int.from_bytes(blob[8:12], "little") == store.FORMAT_VERSION
    hlen = int.from_bytes(blob[12:16], "little")
    assert np.frombuffer(blob[16 + hlen:], dtype="<f8")[0] == 1.5


def test_rejects_foreign_and_future_containers():
    with pytest.raises(store.StoreError):
        store.unpack(b"NOTMAGIC" + bytes(8))
    blob = bytearray(store.pack("k", {}))
    blob[8:12] = (99).to_bytes(4, "little")
    with pytest.raises(store.StoreError):
        store.unpack(bytes(blob))


def test_tensor_store_and_kind_check(tmp_path):
    arr = np.random.default_rng(0).random((3, 32, 32, 3))
    store.save_tensor(tmp_path / "t.store", arr, {"kind": "image"})
    back, meta = store.load_tensor(tmp_path / "t.store")
    assert back.dtype == np.float32 and back.shape == (3, 32, 32, 3)
    np.testing.assert_array_equal(back, arr.astype(np.float32))
    with pytest.raises(store.StoreError):
        store.load(tmp_path / "t.store", "network")


def test_ppm(tmp_path):
    img = np.zeros((32, 32, 3))
    img[0, 0] = [1.0, 0.5, 0.0]
    store.write_ppm(tmp_path / "a.ppm", img)
    data = (tmp_path / "a.ppm").read_bytes()
    assert data.startswith(b"P6\n32 32\n255\n")
    assert data[len(b"P6\n32 32\n255\n"):][:3] == bytes([255, 128, 0])
    with pytest.raises(store.StoreError):
        store.write_ppm(tmp_path / "b.ppm", np.zeros((4, 4)))
