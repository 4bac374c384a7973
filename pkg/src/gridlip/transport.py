"""Exact dyadic proportional transport of a piecewise-constant density.

Input: a density rho on the level-l dyadic partition (k = 2^l cells per
axis), constant and positive on each cell, total mass exactly 1.  Output: an
axis-aligned box for every cell such that the boxes tile (0,1]^d and each
box's volume equals its cell's mass exactly.

The boxes arise by recursive proportional splitting, mirroring a sequential
coordinate-by-coordinate rearrangement: descend levels 1..l; within a level
halve the current source block along each coordinate in turn, and cut the
current target box along that coordinate at the exact mass fraction of the
lower source half.  By induction vol(box) = mass(block) at every node of the
split tree, and the cut points are rationals, so the tiling and pushforward
identities hold with no rounding at all.

What this module does NOT provide is a homeomorphism of the cube fixing the
boundary: the realized map is per-cell affine (see `evaluate`) and may jump
across cell faces.  Its face coherence is therefore a measured quantity
(`transport_metrics`), never an asserted bound.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .errors import ValidationError, ZeroCellError
from .lattice import CellCounts, DyadicPartition
from .rational import fraction_str, parse_fraction

__all__ = [
    "Box",
    "CellDensity",
    "TransportPlan",
    "TransportMetrics",
    "MassCheck",
    "density_from_counts",
    "build_dyadic_transport",
    "evaluate",
    "transport_metrics",
    "verify_mass_preservation",
    "plan_to_json_dict",
    "plan_from_json_dict",
]

_ZERO = Fraction(0)
_ONE = Fraction(1)


@dataclass(frozen=True)
class Box:
    """Axis-aligned half-open box prod_i (lo_i, hi_i]."""

    lo: tuple[Fraction, ...]
    hi: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        if len(self.lo) != len(self.hi):
            raise ValidationError("box endpoints disagree in dimension")
        if any(l >= h for l, h in zip(self.lo, self.hi)):
            raise ValidationError("box must be nondegenerate (lo < hi per axis)")

    @property
    def volume(self) -> Fraction:
        v = _ONE
        for l, h in zip(self.lo, self.hi):
            v *= h - l
        return v

    def side(self, axis: int) -> Fraction:
        return self.hi[axis] - self.lo[axis]

    def linf_diameter(self) -> Fraction:
        return max(h - l for l, h in zip(self.lo, self.hi))

    def linf_distance_point(self, point: tuple[Fraction, ...]) -> Fraction:
        """Distance from a point to the box closure in the max norm."""
        gap = _ZERO
        for x, l, h in zip(point, self.lo, self.hi):
            if x < l:
                gap = max(gap, l - x)
            elif x > h:
                gap = max(gap, x - h)
        return gap

    def linf_gap_to_box(self, other: "Box") -> Fraction:
        """Distance between two box closures in the max norm."""
        gap = _ZERO
        for l1, h1, l2, h2 in zip(self.lo, self.hi, other.lo, other.hi):
            if l2 > h1:
                gap = max(gap, l2 - h1)
            elif l1 > h2:
                gap = max(gap, l1 - h2)
        return gap


@dataclass(frozen=True)
class CellDensity:
    """Positive piecewise-constant density on a dyadic partition, mass 1."""

    partition: DyadicPartition
    values: Mapping[tuple[int, ...], Fraction]
    level: int

    def __post_init__(self) -> None:
        if self.partition.k != 2**self.level:
            raise ValidationError("partition side must be 2**level")
        if len(self.values) != self.partition.size:
            raise ValidationError("density must assign a value to every cell")
        total = _ZERO
        for cell, v in self.values.items():
            if v <= 0:
                raise ValidationError(f"density must be positive, cell {cell} has {v}")
            total += v
        if total != self.partition.size:
            raise ValidationError("density values must average to 1 (unit total mass)")

    def mass(self, cell: tuple[int, ...]) -> Fraction:
        return self.values[cell] / self.partition.size


def density_from_counts(counts: CellCounts, n: int) -> CellDensity:
    """rho constant on each cell, value (k^d/n^d) * count; all counts positive."""
    part = counts.partition
    level = part.k.bit_length() - 1
    if 2**level != part.k:
        raise ValidationError("counts must live on a dyadic partition (k a power of two)")
    total = n**part.d
    if counts.total != total:
        raise ValidationError(f"counts total {counts.total} != n^d = {total}")
    values: dict[tuple[int, ...], Fraction] = {}
    for cell in part.cells():
        cnt = counts.get(cell)
        if cnt == 0:
            raise ZeroCellError(f"cell {cell} is empty; density undefined")
        values[cell] = Fraction(part.size * cnt, total)
    return CellDensity(part, values, level)


@dataclass(frozen=True)
class TransportPlan:
    """Box assignment produced by the dyadic proportional splitting."""

    source: CellDensity
    boxes: Mapping[tuple[int, ...], Box]
    split_order: tuple[tuple[int, int], ...]  # (level, axis), level 1-based


def build_dyadic_transport(rho: CellDensity) -> TransportPlan:
    """Assign each cell its target box; exact, vol(box) = mass(cell).

    Per level the source blocks are halved along axes 0..d-1 in turn and the
    target boxes are cut at the lower half's exact mass fraction.  The unit
    density reproduces the identity assignment: every fraction is then 1/2
    and each cut lands on the dyadic midpoint.
    """
    part = rho.partition
    d, k, level_count = part.d, part.k, rho.level
    mass = {cell: rho.mass(cell) for cell in part.cells()}

    def block_mass(ranges: tuple[tuple[int, int], ...]) -> Fraction:
        total = _ZERO
        for cell in itertools.product(*(range(a, b) for a, b in ranges)):
            total += mass[cell]
        return total

    boxes: dict[tuple[int, ...], Box] = {}

    def descend(
        level: int,
        ranges: tuple[tuple[int, int], ...],
        lo: tuple[Fraction, ...],
        hi: tuple[Fraction, ...],
        m_block: Fraction,
    ) -> None:
        if level == level_count:
            cell = tuple(a for a, _ in ranges)
            boxes[cell] = Box(lo, hi)
            return
        split_axis(level, 0, ranges, lo, hi, m_block)

    def split_axis(
        level: int,
        axis: int,
        ranges: tuple[tuple[int, int], ...],
        lo: tuple[Fraction, ...],
        hi: tuple[Fraction, ...],
        m_block: Fraction,
    ) -> None:
        if axis == d:
            descend(level + 1, ranges, lo, hi, m_block)
            return
        a, b = ranges[axis]
        mid = (a + b) // 2
        lo_ranges = ranges[:axis] + ((a, mid),) + ranges[axis + 1 :]
        hi_ranges = ranges[:axis] + ((mid, b),) + ranges[axis + 1 :]
        m_lo = block_mass(lo_ranges)
        alpha = m_lo / m_block
        cut = lo[axis] + alpha * (hi[axis] - lo[axis])
        split_axis(
            level,
            axis + 1,
            lo_ranges,
            lo,
            hi[:axis] + (cut,) + hi[axis + 1 :],
            m_lo,
        )
        split_axis(
            level,
            axis + 1,
            hi_ranges,
            lo[:axis] + (cut,) + lo[axis + 1 :],
            hi,
            m_block - m_lo,
        )

    full = tuple((0, k) for _ in range(d))
    unit_lo = tuple(_ZERO for _ in range(d))
    unit_hi = tuple(_ONE for _ in range(d))
    if level_count == 0:
        boxes[tuple(0 for _ in range(d))] = Box(unit_lo, unit_hi)
    else:
        descend(0, full, unit_lo, unit_hi, _ONE)
    order = tuple((lvl, ax) for lvl in range(1, level_count + 1) for ax in range(d))
    return TransportPlan(rho, boxes, order)


def evaluate(plan: TransportPlan, x: tuple[Fraction, ...]) -> tuple[Fraction, ...]:
    """Per-cell affine image of a point of (0,1]^d under the box assignment."""
    part = plan.source.partition
    if len(x) != part.d:
        raise ValidationError("point dimension mismatch")
    k = part.k
    cell = []
    for t in x:
        if not 0 < t <= 1:
            raise ValidationError(f"coordinate {t} outside (0,1]")
        scaled = t * k
        cell.append(-((-scaled.numerator) // scaled.denominator) - 1)
    box = plan.boxes[tuple(cell)]
    return tuple(
        bl + (t - Fraction(p, k)) * k * (bh - bl)
        for t, p, bl, bh in zip(x, cell, box.lo, box.hi)
    )


@dataclass(frozen=True)
class TransportMetrics:
    max_image_diameter: Fraction
    per_cell_lipschitz: Fraction
    coherence: Fraction


def transport_metrics(plan: TransportPlan) -> TransportMetrics:
    """Max box diameter (l-inf), max axis stretch, max gap across cell faces."""
    part = plan.source.partition
    k = part.k
    diam = _ZERO
    stretch = _ZERO
    for box in plan.boxes.values():
        diam = max(diam, box.linf_diameter())
        stretch = max(stretch, max(box.side(ax) for ax in range(part.d)) * k)
    coherence = _ZERO
    for cell, box in plan.boxes.items():
        for axis in range(part.d):
            if cell[axis] + 1 < k:
                nbr = cell[:axis] + (cell[axis] + 1,) + cell[axis + 1 :]
                coherence = max(coherence, box.linf_gap_to_box(plan.boxes[nbr]))
    return TransportMetrics(diam, stretch, coherence)


@dataclass(frozen=True)
class MassCheck:
    ok: bool
    cell: tuple[int, ...] | None
    reason: str | None


def verify_mass_preservation(plan: TransportPlan) -> MassCheck:
    """Exact check: boxes sit in (0,1]^d, tile it, and vol(box) = mass(cell)."""
    part = plan.source.partition
    if set(plan.boxes) != set(part.cells()):
        return MassCheck(False, None, "box set does not cover the cell index set")
    total = _ZERO
    for cell in part.cells():
        box = plan.boxes[cell]
        if any(l < 0 for l in box.lo) or any(h > 1 for h in box.hi):
            return MassCheck(False, cell, "box leaves the unit cube")
        vol = box.volume
        if vol != plan.source.mass(cell):
            return MassCheck(False, cell, "box volume differs from cell mass")
        total += vol
    if total != _ONE:
        return MassCheck(False, None, "box volumes do not sum to 1")
    items = [(cell, plan.boxes[cell]) for cell in part.cells()]
    for i, (cell_a, a) in enumerate(items):
        for cell_b, b in items[i + 1 :]:
            if all(l1 < h2 and l2 < h1 for l1, h1, l2, h2 in zip(a.lo, a.hi, b.lo, b.hi)):
                return MassCheck(False, cell_a, f"box interiors overlap with {cell_b}")
    return MassCheck(True, None, None)


def plan_to_json_dict(plan: TransportPlan) -> dict:
    """Serializable form of a plan; every number is an exact num/den string."""
    part = plan.source.partition
    cells = list(part.cells())
    key = lambda cell: ",".join(str(p) for p in cell)
    return {
        "d": part.d,
        "level": plan.source.level,
        "values": {key(c): fraction_str(plan.source.values[c]) for c in cells},
        "boxes": {
            key(c): {
                "lo": [fraction_str(x) for x in plan.boxes[c].lo],
                "hi": [fraction_str(x) for x in plan.boxes[c].hi],
            }
            for c in cells
        },
        "split_order": [[lv, ax] for lv, ax in plan.split_order],
    }


def plan_from_json_dict(data: Mapping) -> TransportPlan:
    """Inverse of plan_to_json_dict; re-runs all structural validation."""
    try:
        d = int(data["d"])
        level = int(data["level"])
        values = {
            tuple(int(p) for p in key.split(",")): parse_fraction(v)
            for key, v in data["values"].items()
        }
        boxes = {
            tuple(int(p) for p in key.split(",")): Box(
                lo=tuple(parse_fraction(x) for x in entry["lo"]),
                hi=tuple(parse_fraction(x) for x in entry["hi"]),
            )
            for key, entry in data["boxes"].items()
        }
        split_order = tuple((int(lv), int(ax)) for lv, ax in data["split_order"])
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValidationError(f"malformed transport plan payload: {exc}") from None
    source = CellDensity(DyadicPartition(d=d, k=2**level), values, level)
    plan = TransportPlan(source, boxes, split_order)
    check = verify_mass_preservation(plan)
    if not check.ok:
        raise ValidationError(f"plan fails mass preservation: {check.reason}")
    return plan
