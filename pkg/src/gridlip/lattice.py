"""Grids, point configurations, dyadic partitions, exact cell assignment.

A configuration is an n^d-point subset of the integer box [1, floor(c*n)]^d
with rational c >= 1.  Scaled by 1/(cn) it lives in the half-open unit cube
(0,1]^d, which the dyadic partition tiles with k^d right-closed cells
prod_i (p_i/k, (p_i+1)/k].  Cell assignment is exact rational arithmetic:
p_i = ceil(x_i * k / (cn)) - 1, never a float comparison, so membership at
cell faces is unambiguous.

Sampling draws a uniformly random n^d-subset of the flattened index space by
partial Fisher-Yates driven by the counter-based generator in `rng`: memory
O(n^d), exactly uniform, and identical output for identical seeds on every
platform.

Configurations over the unbounded integer lattice are out of scope here; a
finite box loses nothing for grid-image questions (empty hyperplanes can be
deleted and the rest contracted), and that reduction is deliberately not
implemented.

All types are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import itertools
import json
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping

from .errors import CapacityError, ValidationError
from .rational import ceil_fraction, fraction_str, parse_fraction
from .rng import CounterRng

__all__ = [
    "GridSpec",
    "Configuration",
    "DyadicPartition",
    "CellCounts",
    "WellDistributedResult",
    "sample_configuration",
    "assign_cell",
    "cell_counts",
    "well_distributed_check",
]

_MAGIC = b"FGCF"
_BINARY_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class GridSpec:
    """Ambient geometry: dimension d >= 2, grid side n >= 1, scale c >= 1."""

    d: int
    n: int
    c: Fraction
    extent: int = field(init=False)

    def __post_init__(self) -> None:
        if not isinstance(self.d, int) or self.d < 2:
            raise ValidationError(f"dimension must be an integer >= 2, got {self.d!r}")
        if not isinstance(self.n, int) or self.n < 1:
            raise ValidationError(f"grid side must be an integer >= 1, got {self.n!r}")
        if not isinstance(self.c, Fraction):
            raise ValidationError("scale c must be an exact Fraction")
        if self.c < 1:
            raise ValidationError(f"scale c must be >= 1, got {self.c}")
        extent = (self.c.numerator * self.n) // self.c.denominator
        object.__setattr__(self, "extent", extent)
        if extent < self.n:
            raise CapacityError(
                f"box side {extent} cannot hold an n^d-point configuration with n={self.n}"
            )

    @property
    def scale(self) -> Fraction:
        """The denominator cn of the shrinking map x -> x/(cn)."""
        return self.c * self.n

    @property
    def population(self) -> int:
        return self.extent**self.d


@dataclass(frozen=True)
class Configuration:
    """An n^d-point subset of [1, extent]^d, stored in lexicographic order."""

    spec: GridSpec
    points: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        spec = self.spec
        want = spec.n**spec.d
        if len(self.points) != want:
            raise ValidationError(
                f"configuration needs exactly {want} points, got {len(self.points)}"
            )
        d, hi = spec.d, spec.extent
        prev = None
        for p in self.points:
            if len(p) != d:
                raise ValidationError(f"point {p!r} is not {d}-dimensional")
            if prev is not None and p <= prev:
                raise ValidationError("points must be strictly increasing (sorted, distinct)")
            prev = p
            for x in p:
                if not 1 <= x <= hi:
                    raise ValidationError(f"coordinate {x} outside [1, {hi}]")

    @classmethod
    def from_points(cls, spec: GridSpec, points: Iterable[Iterable[int]]) -> "Configuration":
        pts = tuple(sorted(tuple(int(x) for x in p) for p in points))
        return cls(spec, pts)

    def scaled_points(self) -> tuple[tuple[Fraction, ...], ...]:
        """Points divided by cn, landing in (0,1]^d."""
        s = self.spec.scale
        return tuple(tuple(Fraction(x) / s for x in p) for p in self.points)

    # -- serialization ----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "d": self.spec.d,
            "n": self.spec.n,
            "c": fraction_str(self.spec.c),
            "points": [list(p) for p in self.points],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "Configuration":
        try:
            spec = GridSpec(int(data["d"]), int(data["n"]), parse_fraction(str(data["c"])))
            points = data["points"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed configuration JSON: {exc}") from exc
        return cls.from_points(spec, points)

    @classmethod
    def from_json(cls, text: str) -> "Configuration":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"not JSON: {exc}") from exc
        return cls.from_json_dict(data)

    def to_binary(self) -> bytes:
        """16-byte header (magic, version, d, n) + flat little-endian int32 coords.

        The binary form carries geometry only; the scale c is supplied again
        at load time.
        """
        spec = self.spec
        header = _HEADER.pack(_MAGIC, _BINARY_VERSION, spec.d, spec.n)
        flat = [x for p in self.points for x in p]
        return header + struct.pack(f"<{len(flat)}i", *flat)

    @classmethod
    def from_binary(cls, blob: bytes, c: Fraction) -> "Configuration":
        if len(blob) < _HEADER.size:
            raise ValidationError("binary configuration shorter than its header")
        magic, version, d, n = _HEADER.unpack_from(blob)
        if magic != _MAGIC:
            raise ValidationError(f"bad magic {magic!r}")
        if version != _BINARY_VERSION:
            raise ValidationError(f"unsupported binary version {version}")
        spec = GridSpec(d, n, c)
        count = n**d * d
        body = blob[_HEADER.size :]
        if len(body) != 4 * count:
            raise ValidationError("binary configuration has wrong payload length")
        flat = struct.unpack(f"<{count}i", body)
        points = [flat[i : i + d] for i in range(0, count, d)]
        return cls.from_points(spec, points)


@dataclass(frozen=True)
class DyadicPartition:
    """The k^d half-open right-closed cells of (0,1]^d."""

    d: int
    k: int

    def __post_init__(self) -> None:
        if self.d < 1 or self.k < 1:
            raise ValidationError("partition wants d >= 1 and k >= 1")

    def cells(self) -> Iterator[tuple[int, ...]]:
        """All cell indices in lexicographic order."""
        return itertools.product(range(self.k), repeat=self.d)

    def cell_bounds(self, cell: tuple[int, ...]) -> tuple[tuple[Fraction, Fraction], ...]:
        """Per-axis (lo, hi] interval of a cell."""
        k = self.k
        return tuple((Fraction(p, k), Fraction(p + 1, k)) for p in cell)

    @property
    def size(self) -> int:
        return self.k**self.d


@dataclass(frozen=True)
class CellCounts:
    """Occupancy of the dyadic cells by a scaled configuration."""

    partition: DyadicPartition
    counts: Mapping[tuple[int, ...], int]
    total: int

    def __post_init__(self) -> None:
        if sum(self.counts.values()) != self.total:
            raise ValidationError("cell counts do not sum to the declared total")
        if any(v < 0 for v in self.counts.values()):
            raise ValidationError("cell counts must be nonnegative")

    def get(self, cell: tuple[int, ...]) -> int:
        return self.counts.get(cell, 0)

    def min_max(self) -> tuple[int, int]:
        """Smallest and largest count over all k^d cells (absent cells count 0)."""
        values = self.counts.values()
        lo = min(values) if len(self.counts) == self.partition.size else 0
        return (lo, max(values) if values else 0)


@dataclass(frozen=True)
class WellDistributedResult:
    ok: bool
    lo_threshold: Fraction
    hi_threshold: Fraction
    min_cell: tuple[int, ...]
    min_count: int
    max_cell: tuple[int, ...]
    max_count: int


def sample_configuration(spec: GridSpec, seed: int) -> Configuration:
    """Uniformly random n^d-subset of the box, deterministic per seed.

    Partial Fisher-Yates over the flattened index space: after step i the
    i-th slot holds a uniform choice among the unused indices, so the first
    n^d slots form an exactly uniform subset.  Only touched slots are stored.
    """
    npop = spec.population
    k = spec.n**spec.d
    state: dict[int, int] = {}
    get = state.get
    rng = CounterRng(seed, block=8192)
    next_raw = rng.next_raw
    chosen = []
    append = chosen.append
    for i in range(k):
        span = npop - i
        mask = (1 << (span - 1).bit_length()) - 1
        while True:
            v = next_raw() & mask
            if v < span:
                break
        j = i + v
        vj = get(j, j)
        state[j] = get(i, i)
        append(vj)
    chosen.sort()
    extent, d = spec.extent, spec.d
    points = []
    for idx in chosen:
        coords = [0] * d
        for axis in range(d - 1, -1, -1):
            idx, r = divmod(idx, extent)
            coords[axis] = r + 1
        points.append(tuple(coords))
    return Configuration(spec, tuple(points))


def assign_cell(
    point: tuple[int, ...], spec: GridSpec, partition: DyadicPartition
) -> tuple[int, ...]:
    """Cell of the scaled point x/(cn); exact, p_i = ceil(x_i*k/(cn)) - 1."""
    if len(point) != spec.d or partition.d != spec.d:
        raise ValidationError("dimension mismatch in cell assignment")
    s = spec.scale
    k = partition.k
    cell = []
    for x in point:
        if not 1 <= x <= spec.extent:
            raise ValidationError(f"coordinate {x} outside [1, {spec.extent}]")
        cell.append(ceil_fraction(Fraction(x) * k / s) - 1)
    return tuple(cell)


def cell_counts(config: Configuration, k: int) -> CellCounts:
    """Occupancy of the level-k cells; integer arithmetic only.

    ceil(x*k/(cn)) = (x*k*den + num - 1) // num with cn = num/den, so the
    hot loop never builds a Fraction.  Matches assign_cell exactly.
    """
    spec = config.spec
    s = spec.scale
    num, kden = s.numerator, k * s.denominator
    shift = num - 1
    counts: dict[tuple[int, ...], int] = {}
    get = counts.get
    for p in config.points:
        cell = tuple((x * kden + shift) // num - 1 for x in p)
        counts[cell] = get(cell, 0) + 1
    return CellCounts(DyadicPartition(spec.d, k), counts, total=len(config.points))


def well_distributed_check(
    counts: CellCounts, n: int, a: Fraction, b: Fraction
) -> WellDistributedResult:
    """Are all cell counts within [a,b] * n^d/k^d?  Exact comparisons.

    Scans every cell of the partition, so zero-count cells are seen; returns
    the extreme cells (first in lexicographic order on ties).
    """
    part = counts.partition
    share = Fraction(n**part.d, part.size)
    lo_thr, hi_thr = a * share, b * share
    min_cell = max_cell = None
    min_count = max_count = 0
    for cell in part.cells():
        v = counts.get(cell)
        if min_cell is None or v < min_count:
            min_cell, min_count = cell, v
        if max_cell is None or v > max_count:
            max_cell, max_count = cell, v
    ok = lo_thr <= min_count and max_count <= hi_thr
    return WellDistributedResult(ok, lo_thr, hi_thr, min_cell, min_count, max_cell, max_count)
