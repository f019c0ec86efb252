"""Morton (z-order) key math for the cuboid grid.

Keys interleave coordinate bits with X in the least-significant lane,
then Y, Z, and time: bit i of coordinate k lands at output bit
``i * dims + k``.  The 64-bit budget is split evenly, so 32 bits per
dimension in 2-d, 21 in 3-d and 16 in 4-d.  Any power-of-two aligned
block of grid cells maps to a contiguous key interval, which is what
lets range scans and range sharding line up with spatial locality.

Coordinates here are cuboid-grid indices, not voxels; callers convert
voxel boxes to grid cells via the cuboid shape.
"""

from __future__ import annotations

from itertools import product
from typing import Iterable, Sequence

from .errors import AlignmentError, BadRequestError, CoordinateRangeError

BITS_PER_DIM = {2: 32, 3: 21, 4: 16}

GridCoord = tuple[int, ...]
# Half-open voxel box: (lo, hi) per-dimension tuples.
Box = tuple[tuple[int, ...], tuple[int, ...]]


def _spread1(n: int) -> int:
    # 32-bit input, one zero bit between output bits.
    n &= 0xFFFFFFFF
    n = (n | (n << 16)) & 0x0000FFFF0000FFFF
    n = (n | (n << 8)) & 0x00FF00FF00FF00FF
    n = (n | (n << 4)) & 0x0F0F0F0F0F0F0F0F
    n = (n | (n << 2)) & 0x3333333333333333
    n = (n | (n << 1)) & 0x5555555555555555
    return n


def _compact1(n: int) -> int:
    n &= 0x5555555555555555
    n = (n ^ (n >> 1)) & 0x3333333333333333
    n = (n ^ (n >> 2)) & 0x0F0F0F0F0F0F0F0F
    n = (n ^ (n >> 4)) & 0x00FF00FF00FF00FF
    n = (n ^ (n >> 8)) & 0x0000FFFF0000FFFF
    n = (n ^ (n >> 16)) & 0x00000000FFFFFFFF
    return n


def _spread2(n: int) -> int:
    # 21-bit input, two zero bits between output bits.
    n &= 0x1FFFFF
    n = (n | (n << 32)) & 0x001F00000000FFFF
    n = (n | (n << 16)) & 0x001F0000FF0000FF
    n = (n | (n << 8)) & 0x100F00F00F00F00F
    n = (n | (n << 4)) & 0x10C30C30C30C30C3
    n = (n | (n << 2)) & 0x1249249249249249
    return n


def _compact2(n: int) -> int:
    n &= 0x1249249249249249
    n = (n ^ (n >> 2)) & 0x10C30C30C30C30C3
    n = (n ^ (n >> 4)) & 0x100F00F00F00F00F
    n = (n ^ (n >> 8)) & 0x001F0000FF0000FF
    n = (n ^ (n >> 16)) & 0x001F00000000FFFF
    n = (n ^ (n >> 32)) & 0x1FFFFF
    return n


def _spread3(n: int) -> int:
    # 16-bit input, three zero bits between output bits.
    n &= 0xFFFF
    n = (n | (n << 24)) & 0x000000FF000000FF
    n = (n | (n << 12)) & 0x000F000F000F000F
    n = (n | (n << 6)) & 0x0303030303030303
    n = (n | (n << 3)) & 0x1111111111111111
    return n


def _compact3(n: int) -> int:
    n &= 0x1111111111111111
    n = (n ^ (n >> 3)) & 0x0303030303030303
    n = (n ^ (n >> 6)) & 0x000F000F000F000F
    n = (n ^ (n >> 12)) & 0x000000FF000000FF
    n = (n ^ (n >> 24)) & 0x000000000000FFFF
    return n


_SPREAD = {2: _spread1, 3: _spread2, 4: _spread3}
_COMPACT = {2: _compact1, 3: _compact2, 4: _compact3}


def bits_per_dim(dims: int) -> int:
    try:
        return BITS_PER_DIM[dims]
    except KeyError:
        raise BadRequestError(f"curve supports 2-4 dimensions, got {dims}") from None


def morton_encode(coords: Sequence[int]) -> int:
    """Interleave grid coordinates into a Morton key (X least significant)."""
    dims = len(coords)
    bits = bits_per_dim(dims)
    limit = 1 << bits
    spread = _SPREAD[dims]
    key = 0
    for lane, c in enumerate(coords):
        if not 0 <= c < limit:
            raise CoordinateRangeError(
                f"coordinate {c} in dimension {lane} exceeds {bits}-bit budget for {dims}-d keys"
            )
        key |= spread(c) << lane
    return key


def morton_decode(key: int, dims: int) -> GridCoord:
    """Exact inverse of :func:`morton_encode` for a key of known dimensionality."""
    bits_per_dim(dims)
    if not 0 <= key < 1 << 64:
        raise CoordinateRangeError(f"key {key} outside unsigned 64-bit range")
    compact = _COMPACT[dims]
    return tuple(compact(key >> lane) for lane in range(dims))


def grid_range(lo: Sequence[int], hi: Sequence[int], cuboid_shape: Sequence[int]) -> list[range]:
    """Per-dimension range of grid cells whose cuboids intersect [lo, hi)."""
    return [
        range(lo[d] // cuboid_shape[d], -(-hi[d] // cuboid_shape[d]))
        for d in range(len(cuboid_shape))
    ]


def cuboids_for_region(
    lo: Sequence[int], hi: Sequence[int], cuboid_shape: Sequence[int]
) -> list[tuple[int, Box]]:
    """Enumerate cuboids intersecting the half-open voxel box [lo, hi).

    Returns (morton key, intersection box) pairs sorted ascending by key.
    The intersection boxes tile the region exactly.
    """
    dims = len(cuboid_shape)
    if any(lo[d] >= hi[d] for d in range(dims)):
        return []
    cells = []
    for cell in product(*grid_range(lo, hi, cuboid_shape)):
        clo = tuple(max(lo[d], cell[d] * cuboid_shape[d]) for d in range(dims))
        chi = tuple(min(hi[d], (cell[d] + 1) * cuboid_shape[d]) for d in range(dims))
        cells.append((morton_encode(cell), (clo, chi)))
    cells.sort(key=lambda kv: kv[0])
    return cells


def aligned_block_key_range(
    lo: Sequence[int], hi: Sequence[int], cuboid_shape: Sequence[int]
) -> tuple[int, int]:
    """Contiguous key interval [lo_key, hi_key] of a power-of-two aligned block.

    The voxel box [lo, hi) must cover a cube of 2^k x ... x 2^k whole grid
    cells whose grid origin is a multiple of 2^k in every dimension.
    """
    dims = len(cuboid_shape)
    glo, side = [], None
    for d in range(dims):
        if lo[d] % cuboid_shape[d] or hi[d] % cuboid_shape[d]:
            raise AlignmentError(f"block bounds not cuboid-aligned in dimension {d}")
        g = lo[d] // cuboid_shape[d]
        w = hi[d] // cuboid_shape[d] - g
        if side is None:
            side = w
        elif w != side:
            raise AlignmentError(f"block is {w} cells wide in dimension {d}, expected {side}")
        glo.append(g)
    if side is None or side < 1 or side & (side - 1):
        raise AlignmentError(f"block side {side} is not a power of two")
    if any(g % side for g in glo):
        raise AlignmentError("block origin is not a multiple of its side")
    lo_key = morton_encode(tuple(glo))
    return lo_key, lo_key + side**dims - 1


def shard_of(key: int, shard_count: int, grid_cell_count: int) -> int:
    """Contiguous range partitioning: shard i owns keys [i*w, (i+1)*w), w = ceil(N/S)."""
    if shard_count < 1:
        raise BadRequestError("shard_count must be >= 1")
    if grid_cell_count < 1:
        raise BadRequestError("grid_cell_count must be >= 1")
    width = -(-grid_cell_count // shard_count)
    return min(key // width, shard_count - 1)


def key_space_size(grid_extent: Iterable[int]) -> int:
    """Size of the Morton key space for a grid, padded to powers of two.

    Uniform interleaving bounds every key by (2^b)^dims where b is the
    bit length of the largest per-dimension extent; unused key values in
    the padding never occur but still belong to some shard range.
    """
    extents = list(grid_extent)
    bits = max((e - 1).bit_length() for e in extents) if extents else 0
    if any(e < 1 for e in extents):
        raise BadRequestError("grid extents must be >= 1")
    return 1 << (bits * len(extents))
