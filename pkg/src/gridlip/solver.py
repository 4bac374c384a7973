"""Upper and lower bounds for the minimal surjection stretch of a configuration.

Three estimators keep each other honest.  The pipeline chains the cell
counting, dyadic transport, and neighborhood matching stages into a concrete
bijection whose exact Lipschitz constant is an upper bound.  A packing
argument gives a lower bound: a crowded l-inf ball must be spread over the
image grid, which costs stretch no map can avoid.  For tiny inputs (at most
twelve points) exhaustive branch and bound finds the true optimum, pinning
the other two from inside.

Level selection degrades gracefully: if the requested dyadic depth leaves
some cell empty, the report drops to the deepest level that does not, with
depth zero always available since the whole cube holds every point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .errors import InternalInvariantError, SizeCapError, ValidationError
from .lattice import Configuration, cell_counts
from .matching import BijectionCertificate, HallViolation, build_instance
from .matching import solve_matching as _solve
from .rational import fraction_str
from .transport import (
    TransportMetrics,
    TransportPlan,
    build_dyadic_transport,
    density_from_counts,
    transport_metrics,
)

__all__ = [
    "PipelineResult",
    "BruteForceResult",
    "PackingResult",
    "BoundsReport",
    "BRUTE_FORCE_CAP",
    "level_for",
    "feasible_level",
    "pipeline_upper_bound",
    "brute_force_min_lipschitz",
    "packing_lower_bound",
    "bounds_report",
]

BRUTE_FORCE_CAP = 12


def level_for(n: int, q: float = 2.0) -> int:
    """Dyadic depth floor(log2 n - q log2 log2 n), at least 1 once n >= 2."""
    if n < 2:
        return 0
    value = math.log2(n) - q * math.log2(math.log2(n))
    level = math.floor(value)
    return level if level >= 1 else 1


def feasible_level(config: Configuration, requested: int) -> int:
    """Deepest level <= requested whose cells all hold a point."""
    if requested < 0:
        raise ValidationError("level must be nonnegative")
    for level in range(requested, 0, -1):
        counts = cell_counts(config, 2**level)
        if counts.min_max()[0] > 0:
            return level
    return 0


@dataclass(frozen=True)
class PipelineResult:
    certificate: BijectionCertificate
    plan: TransportPlan
    metrics: TransportMetrics
    level: int


def pipeline_upper_bound(
    config: Configuration, level: int, radius: Fraction | None = None
) -> PipelineResult:
    """Counts -> density -> transport -> matching, with the exact constant.

    Raises ZeroCellError when the level is too deep for the configuration and
    ValidationError when a caller-forced radius below 1/n kills the matching.
    At the default radius a failed matching is impossible by construction, so
    it surfaces as an internal invariant error.
    """
    spec = config.spec
    if radius is None:
        radius = Fraction(1, spec.n)
    counts = cell_counts(config, 2**level)
    rho = density_from_counts(counts, spec.n)
    plan = build_dyadic_transport(rho)
    inst = build_instance(config, plan, radius)
    outcome = _solve(inst)
    if isinstance(outcome, HallViolation):
        if radius >= Fraction(1, spec.n):
            raise InternalInvariantError(
                "matching failed at radius >= 1/n; the transport guarantee is broken"
            )
        raise ValidationError(
            f"no perfect matching at radius {fraction_str(radius)}; "
            f"{len(outcome.sources)} sources share only "
            f"{len(outcome.neighborhood)} targets"
        )
    return PipelineResult(outcome, plan, transport_metrics(plan), level)


@dataclass(frozen=True)
class BruteForceResult:
    constant: float
    constant_sq: Fraction
    mapping: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]


def _chain_order(pts: list[tuple[int, ...]]) -> list[int]:
    # nearest-neighbor chain so tightly packed pairs are assigned early,
    # which is where the bottleneck prune bites
    count = len(pts)
    sq = [[sum((a - b) ** 2 for a, b in zip(p, q)) for q in pts] for p in pts]
    best_pair = min(
        ((sq[i][j], i, j) for i in range(count) for j in range(i + 1, count)),
        default=(0, 0, 0),
    )
    order = [best_pair[1]]
    seen = {best_pair[1]}
    while len(order) < count:
        last = order[-1]
        nxt = min(
            (i for i in range(count) if i not in seen),
            key=lambda i: (sq[last][i], i),
        )
        order.append(nxt)
        seen.add(nxt)
    return order


def brute_force_min_lipschitz(config: Configuration) -> BruteForceResult:
    """Exact optimum by branch and bound; refuses more than twelve points."""
    pts = list(config.points)
    count = len(pts)
    if count > BRUTE_FORCE_CAP:
        raise SizeCapError(
            f"{count} points exceeds the exhaustive cap of {BRUTE_FORCE_CAP}"
        )
    n, d = config.spec.n, config.spec.d
    targets = list(product(range(1, n + 1), repeat=d))
    order = _chain_order(pts)
    src_sq = [
        [sum((a - b) ** 2 for a, b in zip(pts[i], pts[j])) for j in range(count)]
        for i in range(count)
    ]
    tgt_sq = [
        [sum((a - b) ** 2 for a, b in zip(s, t)) for t in targets] for s in targets
    ]

    # greedy completion seeds the incumbent
    assign: list[int] = []
    used = [False] * count
    for step, i in enumerate(order):
        best_t, best_key = -1, None
        for t in range(count):
            if used[t]:
                continue
            worst = Fraction(0)
            for prev in range(step):
                r = Fraction(tgt_sq[assign[prev]][t], src_sq[order[prev]][i])
                if r > worst:
                    worst = r
            if best_key is None or worst < best_key:
                best_key, best_t = worst, t
        assign.append(best_t)
        used[best_t] = True
    best_sq = Fraction(0)
    for a in range(count):
        for b in range(a + 1, count):
            r = Fraction(tgt_sq[assign[a]][assign[b]], src_sq[order[a]][order[b]])
            if r > best_sq:
                best_sq = r
    best_assign = list(assign)

    used = [False] * count
    partial: list[int] = []

    def descend(step: int, cur_num: int, cur_den: int) -> None:
        nonlocal best_sq, best_assign
        if step == count:
            cand = Fraction(cur_num, cur_den) if cur_den else Fraction(0)
            if cand < best_sq:
                best_sq = cand
                best_assign = list(partial)
            return
        i = order[step]
        for t in range(count):
            if used[t]:
                continue
            new_num, new_den = cur_num, cur_den
            ok = True
            for prev in range(step):
                num = tgt_sq[partial[prev]][t]
                den = src_sq[order[prev]][i]
                if num * new_den > new_num * den:
                    new_num, new_den = num, den
                if new_num * best_sq.denominator >= best_sq.numerator * new_den:
                    ok = False
                    break
            if not ok:
                continue
            used[t] = True
            partial.append(t)
            descend(step + 1, new_num, new_den)
            partial.pop()
            used[t] = False

    if count:
        descend(0, 0, 1)
    mapping = {pts[order[s]]: targets[best_assign[s]] for s in range(count)}
    pairs = tuple(sorted(mapping.items()))
    return BruteForceResult(math.sqrt(best_sq), best_sq, pairs)


@dataclass(frozen=True)
class PackingResult:
    bound: float
    center: tuple[int, ...] | None
    radius: int
    count: int


def packing_lower_bound(config: Configuration) -> PackingResult:
    """Crowding bound: k points within l-inf radius r force stretch
    at least (k^(1/d) - 1) / (4 r sqrt(d)).  Maximized over every center
    and every realized radius."""
    pts = np.asarray(config.points, dtype=np.int64)
    count, d = pts.shape
    if count < 2:
        return PackingResult(0.0, None, 0, 0)
    root = 1.0 / d
    denom_scale = 4.0 * math.sqrt(d)
    best = 0.0
    best_at: tuple[int, ...] | None = None
    best_r, best_k = 0, 0
    for i in range(count):
        dist = np.abs(pts - pts[i]).max(axis=1)
        dist.sort()
        radii = np.unique(dist[1:])
        ks = np.searchsorted(dist, radii, side="right")
        vals = (ks**root - 1.0) / (denom_scale * radii)
        j = int(np.argmax(vals))
        if vals[j] > best:
            best = float(vals[j])
            best_at = tuple(int(x) for x in pts[i])
            best_r = int(radii[j])
            best_k = int(ks[j])
    return PackingResult(best, best_at, best_r, best_k)


@dataclass(frozen=True)
class BoundsReport:
    d: int
    n: int
    c: Fraction
    level_requested: int
    level_used: int
    lower: float
    lower_witness: PackingResult
    upper: float
    upper_sq: Fraction
    brute: float | None
    brute_sq: Fraction | None
    metrics: TransportMetrics
    certificate: BijectionCertificate

    def to_json_dict(self) -> dict:
        out = {
            "d": self.d,
            "n": self.n,
            "c": fraction_str(self.c),
            "level_requested": self.level_requested,
            "level_used": self.level_used,
            "lower": self.lower,
            "lower_center": None
            if self.lower_witness.center is None
            else list(self.lower_witness.center),
            "lower_radius": self.lower_witness.radius,
            "lower_count": self.lower_witness.count,
            "upper": self.upper,
            "upper_sq": fraction_str(self.upper_sq),
            "brute": self.brute,
            "brute_sq": None if self.brute_sq is None else fraction_str(self.brute_sq),
            "max_image_diameter": fraction_str(self.metrics.max_image_diameter),
            "per_cell_lipschitz": fraction_str(self.metrics.per_cell_lipschitz),
            "coherence": fraction_str(self.metrics.coherence),
        }
        return out


def bounds_report(
    config: Configuration,
    level: int | None = None,
    radius: Fraction | None = None,
    brute: bool | None = None,
) -> BoundsReport:
    """One-stop bound comparison; sanity-checks lower <= optimum <= upper.

    brute=None runs the exhaustive solver exactly when it is allowed to.
    """
    spec = config.spec
    requested = level_for(spec.n) if level is None else level
    used = feasible_level(config, requested)
    pipe = pipeline_upper_bound(config, used, radius)
    packing = packing_lower_bound(config)
    if brute is None:
        brute = len(config.points) <= BRUTE_FORCE_CAP
    brute_res = brute_force_min_lipschitz(config) if brute else None

    upper_sq = pipe.certificate.lipschitz_sq
    if brute_res is not None:
        if brute_res.constant_sq > upper_sq:
            raise InternalInvariantError(
                "exhaustive optimum exceeds the pipeline upper bound"
            )
        if packing.bound > brute_res.constant * (1 + 1e-12) + 1e-12:
            raise InternalInvariantError(
                "packing lower bound exceeds the exhaustive optimum"
            )
    elif packing.bound > pipe.certificate.lipschitz * (1 + 1e-12) + 1e-12:
        raise InternalInvariantError("packing lower bound exceeds the upper bound")

    return BoundsReport(
        d=spec.d,
        n=spec.n,
        c=spec.c,
        level_requested=requested,
        level_used=used,
        lower=packing.bound,
        lower_witness=packing,
        upper=pipe.certificate.lipschitz,
        upper_sq=upper_sq,
        brute=None if brute_res is None else brute_res.constant,
        brute_sq=None if brute_res is None else brute_res.constant_sq,
        metrics=pipe.metrics,
        certificate=pipe.certificate,
    )
