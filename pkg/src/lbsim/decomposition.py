"""Box tiling of the cell domain, Morton ordering, and box-to-rank mappings.

The domain is an (N_z, N_x) grid of cells cut into square boxes of M cells
per side. Boxes are stored in row-major order (z outer, x inner) and keep a
stable id for the lifetime of the run; load balancing only ever changes the
owning rank of a box, never the tiling itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Box:
    """A square sub-domain of cells; ``lo``/``hi`` are inclusive (i_z, i_x)."""

    id: int
    lo: tuple[int, int]
    hi: tuple[int, int]

    def __post_init__(self):
        if self.lo[0] > self.hi[0] or self.lo[1] > self.hi[1]:
            raise ValueError(f"box {self.id}: lo {self.lo} exceeds hi {self.hi}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.hi[0] - self.lo[0] + 1, self.hi[1] - self.lo[1] + 1)

    @property
    def n_cells(self) -> int:
        sz, sx = self.shape
        return sz * sx


@dataclass(frozen=True)
class BoxArray:
    """Exact tiling of an (N_z, N_x) cell domain into square boxes."""

    domain_extent: tuple[int, int]
    box_size: int
    boxes: tuple[Box, ...]

    @property
    def n_boxes(self) -> int:
        return len(self.boxes)

    @property
    def grid_shape(self) -> tuple[int, int]:
        """Shape of the box grid (boxes along z, boxes along x)."""
        return (self.domain_extent[0] // self.box_size,
                self.domain_extent[1] // self.box_size)

    @property
    def cells_per_box(self) -> int:
        return self.box_size * self.box_size

    def box_coords(self, box_id: int) -> tuple[int, int]:
        """Box-grid coordinate (b_z, b_x) of a box id."""
        nbx = self.grid_shape[1]
        return (box_id // nbx, box_id % nbx)

    def cells_vector(self) -> np.ndarray:
        """Per-box cell counts (constant for this uniform tiling)."""
        return np.full(self.n_boxes, self.cells_per_box, dtype=np.int64)

    def interior_faces(self) -> tuple[np.ndarray, np.ndarray]:
        """All interior box faces as two box-id arrays (a, b), each face once.

        Used by the communication model: a face is off-rank when its two
        boxes have different owners.
        """
        nbz, nbx = self.grid_shape
        ids = np.arange(nbz * nbx, dtype=np.int64).reshape(nbz, nbx)
        a = np.concatenate([ids[:-1, :].ravel(), ids[:, :-1].ravel()])
        b = np.concatenate([ids[1:, :].ravel(), ids[:, 1:].ravel()])
        return a, b


@dataclass(frozen=True)
class DistributionMapping:
    """Per-box owning rank; the object load balancing produces and consumes."""

    owner: np.ndarray
    n_ranks: int

    def __post_init__(self):
        owner = np.ascontiguousarray(np.asarray(self.owner, dtype=np.int64))
        owner.flags.writeable = False
        object.__setattr__(self, "owner", owner)
        if self.n_ranks < 1:
            raise ValueError(f"n_ranks must be >= 1, got {self.n_ranks}")
        if owner.size and (owner.min() < 0 or owner.max() >= self.n_ranks):
            raise ValueError(
                f"owner entries must lie in [0, {self.n_ranks}), "
                f"got range [{owner.min()}, {owner.max()}]")

    @property
    def n_boxes(self) -> int:
        return int(self.owner.size)

    def __eq__(self, other) -> bool:
        return (isinstance(other, DistributionMapping)
                and self.n_ranks == other.n_ranks
                and np.array_equal(self.owner, other.owner))


def build_box_array(domain_extent: tuple[int, int], box_size: int) -> BoxArray:
    """Tile the domain into square boxes of ``box_size`` cells per side.

    Raises ConfigError when the box size does not divide a domain extent,
    naming the offending axis.
    """
    if box_size < 1:
        raise ConfigError(f"box_size must be >= 1, got {box_size}")
    for axis, name in ((0, "z"), (1, "x")):
        if domain_extent[axis] % box_size != 0:
            raise ConfigError(
                f"box_size {box_size} does not divide the {name}-extent "
                f"{domain_extent[axis]}")
    nbz = domain_extent[0] // box_size
    nbx = domain_extent[1] // box_size
    boxes = []
    for bz in range(nbz):
        for bx in range(nbx):
            lo = (bz * box_size, bx * box_size)
            hi = (lo[0] + box_size - 1, lo[1] + box_size - 1)
            boxes.append(Box(id=bz * nbx + bx, lo=lo, hi=hi))
    return BoxArray(domain_extent=tuple(domain_extent), box_size=box_size,
                    boxes=tuple(boxes))


def morton_index(bx: tuple[int, int]) -> int:
    """Z-order index of a box-grid coordinate pair.

    Bits of the first coordinate land on even positions (starting at bit 0),
    bits of the second on odd positions. Bijective on any square power-of-two
    grid; on other grids indices are taken from the enclosing power-of-two
    grid, which is the standard way to keep the curve's locality.
    """
    a, b = bx
    if a < 0 or b < 0:
        raise ValueError(f"coordinates must be nonnegative, got {bx}")
    return _spread_bits(a) | (_spread_bits(b) << 1)


def _spread_bits(n: int) -> int:
    """Insert a zero bit between consecutive bits of n (arbitrary width)."""
    out = 0
    shift = 0
    while n:
        out |= (n & 1) << shift
        n >>= 1
        shift += 2
    return out


def morton_order(ba: BoxArray) -> np.ndarray:
    """Box ids sorted along the Z-order curve through the box grid."""
    nbz, nbx = ba.grid_shape
    codes = np.fromiter(
        (morton_index(((i // nbx), (i % nbx))) for i in range(ba.n_boxes)),
        dtype=np.int64, count=ba.n_boxes)
    return np.argsort(codes, kind="stable").astype(np.int64)


def rank_box_counts(dm: DistributionMapping) -> np.ndarray:
    """Number of boxes owned by each rank."""
    return np.bincount(dm.owner, minlength=dm.n_ranks).astype(np.int64)


def slab_mapping(ba: BoxArray, n_ranks: int) -> DistributionMapping:
    """Contiguous equal chunks of box ids per rank (naive initial mapping)."""
    edges = np.linspace(0, ba.n_boxes, n_ranks + 1)
    owner = np.searchsorted(edges, np.arange(ba.n_boxes), side="right") - 1
    owner = np.clip(owner, 0, n_ranks - 1)
    return DistributionMapping(owner=owner, n_ranks=n_ranks)


def round_robin_mapping(ba: BoxArray, n_ranks: int) -> DistributionMapping:
    """Box id modulo rank count."""
    owner = np.arange(ba.n_boxes, dtype=np.int64) % n_ranks
    return DistributionMapping(owner=owner, n_ranks=n_ranks)
