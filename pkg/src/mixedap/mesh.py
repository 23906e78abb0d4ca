"""One-dimensional dyadic geometry.

A :class:`Mesh` is a half-open interval split into ``2**L`` equal cells.
Dyadic cubes are identified by ``(level, offset)``; a cube at level ``k``
covers ``2**k`` consecutive cells. Geometry is always derived from the
integer identity so containment tests never touch floating point.

Cubes are also addressed by their heap index ``2**(L-k) - 1 + offset``,
which is exactly the position in :meth:`Mesh.enumerate_dyadic`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Interval:
    """Mesh-aligned half-open cell range ``[start, end)``."""

    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise MeshError(f"empty or negative interval [{self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start

    def __str__(self):
        return f"[{self.start},{self.end})"


@dataclass(frozen=True)
class Cube:
    level: int
    offset: int

    def __post_init__(self):
        if self.level < 0 or self.offset < 0:
            raise MeshError(f"invalid cube ({self.level}, {self.offset})")

    @property
    def start(self) -> int:
        return self.offset << self.level

    @property
    def end(self) -> int:
        return (self.offset + 1) << self.level

    @property
    def length(self) -> int:
        return 1 << self.level

    def as_interval(self) -> Interval:
        return Interval(self.start, self.end)

    def key(self) -> str:
        return f"{self.level}:{self.offset}"

    @classmethod
    def from_key(cls, key: str) -> "Cube":
        level, offset = key.split(":")
        return cls(int(level), int(offset))

    def __str__(self):
        return f"Q({self.level},{self.offset})=[{self.start},{self.end})"


Region = Union[Cube, Interval]


@dataclass(frozen=True)
class Mesh:
    """Universe ``[origin, origin + num_cells * cell_width)`` with a dyadic grid."""

    num_cells: int
    cell_width: float = 1.0
    origin: float = 0.0

    def __post_init__(self):
        n = self.num_cells
        if n < 1 or n & (n - 1):
            raise MeshError(f"num_cells must be a power of two, got {n}")
        if not (self.cell_width > 0 and np.isfinite(self.cell_width)):
            raise MeshError(f"cell_width must be positive, got {self.cell_width}")

    @property
    def levels(self) -> int:
        """L, with ``num_cells == 2**L``."""
        return self.num_cells.bit_length() - 1

    @property
    def length(self) -> float:
        return self.num_cells * self.cell_width

    @property
    def top(self) -> Cube:
        return Cube(self.levels, 0)

    @property
    def num_dyadic(self) -> int:
        return 2 * self.num_cells - 1

    def edges(self) -> np.ndarray:
        return self.origin + self.cell_width * np.arange(self.num_cells + 1)

    def refine(self) -> "Mesh":
        """Same universe, twice the cells."""
        return Mesh(2 * self.num_cells, self.cell_width / 2, self.origin)

    def check(self, region: Region) -> Region:
        if isinstance(region, Cube):
            if region.level > self.levels or region.end > self.num_cells:
                raise MeshError(f"{region} outside mesh with L={self.levels}")
        elif region.end > self.num_cells:
            raise MeshError(f"{region} outside mesh of {self.num_cells} cells")
        return region

    def children(self, cube: Cube) -> tuple[Cube, Cube]:
        self.check(cube)
        if cube.level == 0:
            raise MeshError("leaf cube")
        k = cube.level - 1
        return Cube(k, 2 * cube.offset), Cube(k, 2 * cube.offset + 1)

    def parent(self, cube: Cube) -> Cube:
        self.check(cube)
        if cube.level >= self.levels:
            raise MeshError("top cube has no parent")
        return Cube(cube.level + 1, cube.offset // 2)

    def ancestors(self, cube: Cube) -> Iterator[Cube]:
        """Strict ancestors, nearest first."""
        while cube.level < self.levels:
            cube = self.parent(cube)
            yield cube

    def enumerate_dyadic(self) -> list[Cube]:
        """All ``2**(L+1) - 1`` cubes, by descending level then offset."""
        L = self.levels
        return [Cube(k, m) for k in range(L, -1, -1) for m in range(1 << (L - k))]

    def heap_index(self, cube: Cube) -> int:
        self.check(cube)
        return (1 << (self.levels - cube.level)) - 1 + cube.offset

    def cube_at(self, index: int) -> Cube:
        if not 0 <= index < self.num_dyadic:
            raise MeshError(f"heap index {index} out of range")
        depth = (index + 1).bit_length() - 1
        return Cube(self.levels - depth, index - ((1 << depth) - 1))

    def dyadic_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """(start, end) cell arrays for every cube, in heap order."""
        L = self.levels
        starts, ends = [], []
        for k in range(L, -1, -1):
            m = np.arange(1 << (L - k), dtype=np.int64)
            starts.append(m << k)
            ends.append((m + 1) << k)
        return np.concatenate(starts), np.concatenate(ends)

    def enumerate_intervals(self) -> Iterator[Interval]:
        """All N(N+1)/2 mesh-aligned intervals, by start then length."""
        n = self.num_cells
        for a in range(n):
            for b in range(a + 1, n + 1):
                yield Interval(a, b)

    def containing_cube(self, cell: int, level: int) -> Cube:
        return Cube(level, cell >> level)


def contains(outer: Region, inner: Region) -> bool:
    """Set containment of the cell ranges."""
    return outer.start <= inner.start and inner.end <= outer.end


def intersects(a: Region, b: Region) -> bool:
    return a.start < b.end and b.start < a.end
