import numpy as np
import pytest

from voxeldb.model import DatasetConfig, Placement, ProjectConfig, VoxelType
from voxeldb.registry import Registry
from voxeldb.router import Router
from voxeldb.store import CuboidStore


def make_registry(**datasets) -> Registry:
    reg = Registry.memory()
    for name, cfg in datasets.items():
        reg.create_dataset(cfg)
    return reg


@pytest.fixture
def small_dataset():
    # 2 flat levels plus the level-4 style cube shape exercised via cuboid_shapes
    return DatasetConfig.build("small", (512, 512, 64), num_levels=3)


@pytest.fixture
def registry(small_dataset):
    reg = make_registry(small=small_dataset)
    reg.create_project(
        ProjectConfig(token="img", dataset="small", kind="image", voxel_type=VoxelType.UINT8)
    )
    reg.create_project(
        ProjectConfig(
            token="anno",
            dataset="small",
            kind="annotation",
            voxel_type=VoxelType.LABEL32,
            exceptions=True,
        )
    )
    return reg


@pytest.fixture
def store(registry):
    return CuboidStore(registry)


def pytest_runtest_logreport(report):
    # acceptance criteria print one PASS/FAIL line each (see test_acceptance.py)
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if name.startswith("test_c"):
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\n[acceptance] {name}: {outcome}")
