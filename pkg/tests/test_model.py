import numpy as np
import pytest

from voxeldb.errors import BadRequestError, BoundsError, ConfigError
from voxeldb.model import (
    CUBOID_VOXELS,
    DatasetConfig,
    DenseVolume,
    Placement,
    ProjectConfig,
    VoxelRegion,
    VoxelType,
    default_cuboid_shape,
)


def test_cuboid_shape_constants():
    assert 128 * 128 * 16 == CUBOID_VOXELS == 2**18
    assert 64 * 64 * 64 == CUBOID_VOXELS
    assert default_cuboid_shape(0, 0) == (128, 128, 16, 1)
    assert default_cuboid_shape(3, 0) == (128, 128, 16, 1)
    assert default_cuboid_shape(4, 0) == (64, 64, 64, 1)


def test_dataset_levels_halve_xy_only():
    ds = DatasetConfig.build("d", (1000, 900, 100), num_levels=4)
    assert [l.extent for l in ds.levels] == [
        (1000, 900, 100),
        (500, 450, 100),
        (250, 225, 100),
        (125, 113, 100),
    ]
    for l in ds.levels:
        assert l.extent[2] == 100  # Z untouched


def test_dataset_validation_rejects_bad_shape():
    with pytest.raises(ConfigError):
        DatasetConfig.build(
            "bad", (256, 256, 64), num_levels=1, cuboid_shapes={0: (100, 100, 16, 1)}
        )


def test_dataset_grid_and_json_roundtrip():
    ds = DatasetConfig.build("d", (300, 200, 40), num_levels=2)
    assert ds.level(0).grid == (3, 2, 3)
    doc = ds.to_json()
    assert DatasetConfig.from_json(doc) == ds


def test_time_dataset_uses_4d_grid():
    ds = DatasetConfig.build("t", (256, 256, 16), num_levels=1, time=8, time_chunk=4)
    lvl = ds.level(0)
    assert lvl.cuboid_shape == (128, 128, 4, 4)
    assert lvl.grid == (2, 2, 4, 2)
    assert ds.dims == 4


def test_region_validation_and_clip():
    with pytest.raises(BadRequestError):
        VoxelRegion((5, 5), (0, 1), (0, 1))
    ds = DatasetConfig.build("d", (300, 200, 40), num_levels=1)
    r = VoxelRegion((250, 400), (0, 10), (0, 10)).clip(ds.level(0))
    assert r.x == (250, 300)
    with pytest.raises(BoundsError):
        VoxelRegion((300, 400), (0, 10), (0, 10)).clip(ds.level(0))


def test_dense_volume_dims_and_bytes():
    data = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)  # (z, y, x)
    v = DenseVolume(VoxelType.UINT8, (0, 0, 0), data)
    assert v.dims == (4, 3, 2)
    assert v.tobytes()[:4] == bytes([0, 1, 2, 3])  # x fastest


def test_project_validation():
    with pytest.raises(ConfigError):
        ProjectConfig("a b", "d", "image", VoxelType.UINT8).validate()
    with pytest.raises(ConfigError):
        ProjectConfig("a", "d", "annotation", VoxelType.UINT8).validate()
    with pytest.raises(ConfigError):
        ProjectConfig("a", "d", "image", VoxelType.UINT8, tile_size=64).validate()


def test_placement_validation():
    with pytest.raises(ConfigError):
        Placement(shard_count=2, backends=("one",)).validate()
    with pytest.raises(ConfigError):
        Placement(active_write=True).validate()
    Placement(shard_count=2, backends=("a", "b")).validate()
