"""Store semantics: round-trips, lazy allocation, touch accounting, compression."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxeldb import codec, keys
from voxeldb.errors import BadRequestError, BoundsError, IntegrityError, ReadOnlyError
from voxeldb.model import DatasetConfig, DenseVolume, ProjectConfig, VoxelRegion, VoxelType
from voxeldb.registry import Registry
from voxeldb.store import Cuboid, CuboidStore

from conftest import make_registry


def region(x, y, z):
    return VoxelRegion(x, y, z)


def test_unwritten_region_reads_zero(store):
    out = store.read_cutout("img", 0, region((0, 300), (0, 300), (0, 20)))
    assert out.data.shape == (20, 300, 300)
    assert not out.data.any()


def test_single_voxel_roundtrip(store):
    store.write_cutout("img", 0, region((0, 1), (0, 1), (0, 1)), np.full((1, 1, 1), 7, np.uint8))
    out = store.read_cutout("img", 0, region((0, 1), (0, 1), (0, 1)))
    assert out.data.tolist() == [[[7]]]


def test_write_read_identity_and_zero_elsewhere(store):
    rng = np.random.default_rng(7)
    payload = rng.integers(0, 256, size=(10, 40, 60), dtype=np.uint8)
    r = region((100, 160), (200, 240), (5, 15))
    store.write_cutout("img", 0, r, payload)
    back = store.read_cutout("img", 0, r)
    assert np.array_equal(back.data, payload)
    # adjacent, never-written space still zero
    side = store.read_cutout("img", 0, region((160, 200), (200, 240), (5, 15)))
    assert not side.data.any()


def test_adjacent_writes_concatenate(store):
    a = np.full((4, 4, 4), 1, np.uint8)
    b = np.full((4, 4, 4), 2, np.uint8)
    store.write_cutout("img", 0, region((0, 4), (0, 4), (0, 4)), a)
    store.write_cutout("img", 0, region((4, 8), (0, 4), (0, 4)), b)
    out = store.read_cutout("img", 0, region((0, 8), (0, 4), (0, 4)))
    assert np.array_equal(out.data[:, :, :4], a)
    assert np.array_equal(out.data[:, :, 4:], b)


def test_zero_write_is_elided(registry, store):
    backend = registry.backends["default"]
    store.write_cutout("img", 0, region((0, 128), (0, 128), (0, 16)), np.zeros((16, 128, 128), np.uint8))
    assert len(backend) == 0
    out = store.read_cutout("img", 0, region((0, 128), (0, 128), (0, 16)))
    assert not out.data.any()


def test_overwrite_with_zero_deletes_key(registry, store):
    backend = registry.backends["default"]
    r = region((0, 128), (0, 128), (0, 16))
    store.write_cutout("img", 0, r, np.full((16, 128, 128), 3, np.uint8))
    assert len(backend) == 1
    store.write_cutout("img", 0, r, np.zeros((16, 128, 128), np.uint8))
    assert len(backend) == 0
    assert not store.read_cutout("img", 0, r).data.any()


def test_lazy_allocation_bound(registry, store):
    backend = registry.backends["default"]
    r = region((100, 250), (0, 100), (0, 20))  # spans 2x1x2 grid cells
    store.write_cutout("img", 0, r, np.ones((20, 100, 150), np.uint8))
    assert len(backend) == 4


def test_get_put_cuboid_roundtrip(store):
    lvl_shape = (1, 16, 128, 128)
    data = np.arange(np.prod(lvl_shape), dtype=np.uint32).reshape(lvl_shape) % 11
    data = data.astype(np.uint32)
    store.put_cuboid("anno", 0, 0, 5, Cuboid(data, {3: [9]}))
    out = store.get_cuboid("anno", 0, 0, 5)
    assert np.array_equal(out.data, data)
    assert out.exceptions == {3: [9]}
    absent = store.get_cuboid("anno", 0, 0, 77)
    assert not absent.data.any() and absent.exceptions is None


def test_put_zero_cuboid_elides(registry, store):
    backend = registry.backends["default"]
    store.put_cuboid("img", 0, 0, 3, Cuboid(store.zero_cuboid(registry.dataset("small").level(0), VoxelType.UINT8)))
    assert all(not k.startswith(b"c/img") for k in [k for k, _ in backend.scan(b"", b"\xff")])
    out = store.get_cuboid("img", 0, 0, 3)
    assert not out.data.any()


def test_write_outside_extent_rejected(store):
    with pytest.raises(BoundsError):
        store.write_cutout("img", 0, region((500, 540), (0, 4), (0, 4)), np.ones((4, 4, 40), np.uint8))


def test_wrong_dtype_rejected(store):
    with pytest.raises(BadRequestError):
        store.write_cutout("img", 0, region((0, 4), (0, 4), (0, 4)), np.ones((4, 4, 4), np.uint16))


def test_read_only_project_rejects_writes(small_dataset):
    reg = make_registry(small=small_dataset)
    reg.create_project(
        ProjectConfig(token="ro", dataset="small", kind="image", voxel_type=VoxelType.UINT8, read_only=True)
    )
    s = CuboidStore(reg)
    with pytest.raises(ReadOnlyError):
        s.write_cutout("ro", 0, region((0, 4), (0, 4), (0, 4)), np.ones((4, 4, 4), np.uint8))


def test_touch_accounting_aligned_and_unaligned(registry, store):
    backend = registry.backends["default"]
    full = region((0, 512), (0, 512), (0, 64))
    rng = np.random.default_rng(1)
    store.write_cutout("img", 0, full, rng.integers(0, 256, size=(64, 512, 512), dtype=np.uint8))

    backend.record_gets()
    before = backend.stats.snapshot()
    store.read_cutout("img", 0, region((128, 384), (0, 256), (16, 48)))
    delta = backend.stats.delta(before)
    assert delta.gets == 2 * 2 * 2  # exactly prod(ceil(e/shape))

    ascending = backend.get_log[:]
    assert ascending == sorted(ascending)

    before = backend.stats.snapshot()
    store.read_cutout("img", 0, region((127, 383), (1, 257), (15, 47)))
    delta = backend.stats.delta(before)
    assert delta.gets <= (2 + 1) * (2 + 1) * (2 + 1)


def test_morton_read_order_strictly_ascends(registry, store):
    backend = registry.backends["default"]
    store.write_cutout("img", 0, region((0, 512), (0, 512), (0, 64)),
                       np.ones((64, 512, 512), np.uint8))
    backend.record_gets()
    store.read_cutout("img", 0, region((3, 509), (5, 500), (2, 60)))
    log = backend.get_log
    assert len(log) > 1
    assert all(a < b for a, b in zip(log, log[1:]))


@given(st.data())
@settings(max_examples=25, deadline=None)
def test_roundtrip_property_multilevel(data):
    ds = DatasetConfig.build("d", (512, 512, 64), num_levels=3)
    reg = make_registry(d=ds)
    vt = data.draw(st.sampled_from(list(VoxelType)))
    kind = "annotation" if vt is VoxelType.LABEL32 else "image"
    reg.create_project(ProjectConfig(token="p", dataset="d", kind=kind, voxel_type=vt))
    s = CuboidStore(reg)
    level = data.draw(st.integers(0, 2))
    ext = ds.level(level).extent
    lo = [data.draw(st.integers(0, ext[d] - 2), label=f"lo{d}") for d in range(3)]
    hi = [data.draw(st.integers(lo[d] + 1, min(ext[d], lo[d] + 40)), label=f"hi{d}") for d in range(3)]
    r = VoxelRegion((lo[0], hi[0]), (lo[1], hi[1]), (lo[2], hi[2]))
    shape = (hi[2] - lo[2], hi[1] - lo[1], hi[0] - lo[0])
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    payload = rng.integers(0, np.iinfo(vt.dtype).max, size=shape).astype(vt.dtype)
    s.write_cutout("p", level, r, payload)
    assert np.array_equal(s.read_cutout("p", level, r).data, payload)


def test_scan_stored_pairs_exceptions(store):
    lvl = store.registry.dataset("small").level(0)
    a = store.zero_cuboid(lvl, VoxelType.LABEL32)
    a[0, 0, 0, 0] = 4
    store.put_cuboid("anno", 0, 0, 2, Cuboid(a.copy(), {0: [9, 12]}))
    store.put_cuboid("anno", 0, 0, 5, Cuboid(a.copy()))
    out = list(store.scan_stored("anno", 0))
    assert [m for m, _, _ in out] == [2, 5]
    assert out[0][2] == {0: [9, 12]}
    assert out[1][2] is None


# --- codec ------------------------------------------------------------------


def test_codec_roundtrip_and_integrity():
    raw = bytes(range(256)) * 11
    assert codec.decompress(codec.compress(raw)) == raw
    assert codec.decompress(codec.compress(raw, codec.CODEC_NONE)) == raw
    with pytest.raises(IntegrityError):
        codec.decompress(b"\x01\x00\x00\x00\x10garbage")
    with pytest.raises(IntegrityError):
        codec.decompress(b"")


def test_zero_cuboid_compresses_below_one_percent():
    raw = bytes(2**18)
    assert len(codec.compress(raw)) < len(raw) * 0.01


def test_dense_labels_compress_below_fifteen_percent():
    # >= 90% labeled, few distinct ids, long runs: what segmentation output looks like
    rng = np.random.default_rng(3)
    labels = np.repeat(rng.integers(1, 12, size=2**12), 64).astype(np.uint32)
    mask = rng.random(labels.size) < 0.08
    labels[mask] = 0
    raw = labels.tobytes()
    assert len(codec.compress(raw)) <= 0.15 * len(raw)


def test_random_noise_is_incompressible():
    rng = np.random.default_rng(4)
    raw = rng.integers(0, 256, size=2**18, dtype=np.uint8).tobytes()
    assert len(codec.compress(raw)) >= 0.85 * len(raw)


@given(st.binary(max_size=4096))
@settings(max_examples=100)
def test_codec_lossless_property(raw):
    assert codec.decompress(codec.compress(raw)) == raw


def test_exception_blob_roundtrip():
    exc = {0: [1, 2], 77: [5], 2**20: [9, 10, 11]}
    assert codec.unpack_exceptions(codec.pack_exceptions(exc)) == exc
    assert codec.unpack_exceptions(codec.pack_exceptions({})) == {}


def test_index_blob_roundtrip():
    assert codec.unpack_index(codec.pack_index([5, 1, 9])) == [1, 5, 9]
    assert codec.unpack_index(b"") == []
