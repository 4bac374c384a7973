"""Neighborhood matching of a scaled configuration onto the unit grid.

The source side X is the configuration shrunk by 1/(cn) into (0,1]^d; the
target side Y is the grid {1/n, ..., 1}^d.  A source point x may be matched
to any grid point within l-inf distance `radius` of the box its cell received
from the transport plan, so each neighborhood R(x) is a coordinate box of
grid indices, shared by all points of a cell; adjacency is generated lazily
from that geometry instead of being stored edge by edge.

A perfect matching is searched by augmenting paths in lexicographic source
order, consuming free targets through a per-column index first; ties are
broken first-found, so the outcome is a pure function of the instance.  At
radius >= 1/n a perfect matching always exists for plans produced by the
dyadic transport: every union of boxes E satisfies vol(E) <= |{y : d(y,E) <=
1/n}| / n^d (each grid point accounts for the grid cell it right-closes), and
box volumes equal cell masses, which together give the counting inequality a
perfect matching needs.  When the caller forces a smaller radius and the
search fails, the exhausted alternating tree yields a set A of sources with
|A| > |R(A)|, returned as a checkable certificate.

Lipschitz constants are exact: squared distance ratios are compared by
integer cross-multiplication, never by float division.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import InternalInvariantError, ValidationError
from .lattice import Configuration, GridSpec, cell_counts
from .rational import ceil_fraction, floor_fraction, fraction_str, parse_fraction
from .transport import TransportPlan

__all__ = [
    "MatchingInstance",
    "BijectionCertificate",
    "HallViolation",
    "LipschitzResult",
    "build_instance",
    "solve_matching",
    "lipschitz_of_map",
    "rescale_bijection",
    "verify_certificate",
]


@dataclass(frozen=True)
class MatchingInstance:
    """Bipartite instance: sources with their cells, and per-cell index boxes.

    `index_ranges` maps a cell to the inclusive per-axis grid index window of
    its neighborhood; `explicit_adjacency`, when given, overrides the
    geometry entirely (used to build unsatisfiable instances in tests).
    """

    config: Configuration
    plan: TransportPlan | None
    radius: Fraction
    cell_of: tuple[tuple[int, ...], ...]
    index_ranges: Mapping[tuple[int, ...], tuple[tuple[int, int], ...]]
    explicit_adjacency: tuple[tuple[tuple[int, ...], ...], ...] | None = None

    @property
    def n(self) -> int:
        return self.config.spec.n

    @property
    def d(self) -> int:
        return self.config.spec.d

    def scaled_sources(self) -> tuple[tuple[Fraction, ...], ...]:
        return self.config.scaled_points()

    def adjacency(self, i: int) -> Iterator[tuple[int, ...]]:
        """Grid points of R(x_i) as integer tuples, lexicographic."""
        if self.explicit_adjacency is not None:
            yield from self.explicit_adjacency[i]
            return
        import itertools

        ranges = self.index_ranges[self.cell_of[i]]
        yield from itertools.product(*(range(lo, hi + 1) for lo, hi in ranges))


@dataclass(frozen=True)
class LipschitzResult:
    constant: float
    constant_sq: Fraction
    witness: tuple[tuple[int, ...], tuple[int, ...]] | None


@dataclass(frozen=True)
class BijectionCertificate:
    """A bijection from configuration points onto [n]^d with its exact constant."""

    d: int
    n: int
    c: Fraction
    level: int
    radius: Fraction
    pairs: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    lipschitz_sq: Fraction
    lipschitz: float
    witness: tuple[tuple[int, ...], tuple[int, ...]] | None

    def mapping(self) -> dict[tuple[int, ...], tuple[int, ...]]:
        return dict(self.pairs)

    def to_json_dict(self) -> dict:
        return {
            "d": self.d,
            "n": self.n,
            "c": fraction_str(self.c),
            "level": self.level,
            "radius": fraction_str(self.radius),
            "pairs": [[list(src), list(img)] for src, img in self.pairs],
            "lipschitz_sq": fraction_str(self.lipschitz_sq),
            "lipschitz": self.lipschitz,
            "witness": None if self.witness is None else [list(p) for p in self.witness],
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "BijectionCertificate":
        try:
            pairs = tuple(
                (tuple(int(x) for x in src), tuple(int(x) for x in img))
                for src, img in data["pairs"]
            )
            witness = data.get("witness")
            return cls(
                d=int(data["d"]),
                n=int(data["n"]),
                c=parse_fraction(str(data["c"])),
                level=int(data["level"]),
                radius=parse_fraction(str(data["radius"])),
                pairs=pairs,
                lipschitz_sq=parse_fraction(str(data["lipschitz_sq"])),
                lipschitz=float(data["lipschitz"]),
                witness=None if witness is None else tuple(tuple(int(x) for x in p) for p in witness),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed certificate JSON: {exc}") from exc


@dataclass(frozen=True)
class HallViolation:
    """Sources A and their joint neighborhood R(A) with |A| > |R(A)|."""

    sources: tuple[tuple[int, ...], ...]
    neighborhood: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if len(self.sources) <= len(self.neighborhood):
            raise InternalInvariantError("claimed violation does not violate the count")

    def to_json_dict(self) -> dict:
        return {
            "sources": [list(p) for p in self.sources],
            "neighborhood": [list(p) for p in self.neighborhood],
        }


def build_instance(
    config: Configuration, plan: TransportPlan, radius: Fraction
) -> MatchingInstance:
    """Index windows per cell: grid indices within `radius` of the cell's box."""
    if radius < 0:
        raise ValidationError("radius must be nonnegative")
    spec = config.spec
    part = plan.source.partition
    if part.d != spec.d:
        raise ValidationError("plan dimension does not match the configuration")
    n = spec.n
    counts = cell_counts(config, part.k)
    index_ranges: dict[tuple[int, ...], tuple[tuple[int, int], ...]] = {}
    for cell in counts.counts:
        box = plan.boxes[cell]
        window = []
        for axis in range(spec.d):
            lo = max(1, ceil_fraction(n * (box.lo[axis] - radius)))
            hi = min(n, floor_fraction(n * (box.hi[axis] + radius)))
            window.append((lo, hi))
        index_ranges[cell] = tuple(window)
    s = spec.scale
    num, kden = s.numerator, part.k * s.denominator
    shift = num - 1
    cell_of = tuple(
        tuple((x * kden + shift) // num - 1 for x in p) for p in config.points
    )
    return MatchingInstance(config, plan, radius, cell_of, index_ranges)


class _FreeGrid:
    """Free grid points, keyed by their first d-1 coordinates, sorted on the last."""

    def __init__(self, n: int, d: int):
        import itertools

        self.cols: dict[tuple[int, ...], list[int]] = {
            prefix: list(range(1, n + 1))
            for prefix in itertools.product(range(1, n + 1), repeat=d - 1)
        }

    def find(self, ranges: Sequence[tuple[int, int]]) -> tuple[int, ...] | None:
        import itertools

        (lo_last, hi_last) = ranges[-1]
        cols = self.cols
        for prefix in itertools.product(*(range(lo, hi + 1) for lo, hi in ranges[:-1])):
            col = cols.get(prefix)
            if not col:
                continue
            i = bisect_left(col, lo_last)
            if i < len(col) and col[i] <= hi_last:
                return prefix + (col[i],)
        return None

    def remove(self, y: tuple[int, ...]) -> None:
        col = self.cols[y[:-1]]
        del col[bisect_left(col, y[-1])]


def solve_matching(inst: MatchingInstance) -> BijectionCertificate | HallViolation:
    """Perfect matching with exact Lipschitz constant, or a Hall violation.

    Deterministic: sources in lexicographic order, free targets consumed
    lexicographically, alternating search first-found.
    """
    spec = inst.config.spec
    n, d = spec.n, spec.d
    total = n**d
    points = inst.config.points
    explicit = inst.explicit_adjacency

    match_of_x: list[tuple[int, ...] | None] = [None] * len(points)
    match_of_y: dict[tuple[int, ...], int] = {}
    free = _FreeGrid(n, d)

    def neighbors(i: int) -> Iterator[tuple[int, ...]]:
        return inst.adjacency(i)

    def find_free(i: int) -> tuple[int, ...] | None:
        if explicit is not None:
            for y in explicit[i]:
                if y not in match_of_y:
                    return y
            return None
        return free.find(inst.index_ranges[inst.cell_of[i]])

    import sys

    limit = max(sys.getrecursionlimit(), 4 * total + 128)
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(limit)
    try:
        for start in range(len(points)):
            visited: set[tuple[int, ...]] = set()

            def try_augment(i: int) -> bool:
                y = find_free(i)
                if y is not None:
                    match_of_x[i] = y
                    match_of_y[y] = i
                    if explicit is None:
                        free.remove(y)
                    return True
                for y in neighbors(i):
                    if y in visited:
                        continue
                    visited.add(y)
                    if try_augment(match_of_y[y]):
                        match_of_x[i] = y
                        match_of_y[y] = i
                        return True
                return False

            if not try_augment(start):
                owners = sorted({match_of_y[y] for y in visited} | {start})
                return HallViolation(
                    sources=tuple(points[i] for i in owners),
                    neighborhood=tuple(sorted(visited)),
                )
    finally:
        sys.setrecursionlimit(old_limit)

    mapping = {points[i]: match_of_x[i] for i in range(len(points))}
    lip = lipschitz_of_map(mapping)
    pairs = tuple(sorted(mapping.items()))
    return BijectionCertificate(
        d=d,
        n=n,
        c=spec.c,
        level=inst.plan.source.level if inst.plan is not None else 0,
        radius=inst.radius,
        pairs=pairs,
        lipschitz_sq=lip.constant_sq,
        lipschitz=lip.constant,
        witness=lip.witness,
    )


# -- exact Lipschitz constants -------------------------------------------


def _pair_sq(p: tuple, q: tuple) -> tuple:
    num = 0
    for a, b in zip(p, q):
        num += (a - b) * (a - b)
    return num


def _lipschitz_scan(
    pts: Sequence[tuple], imgs: Sequence[tuple]
) -> tuple[Fraction, tuple | None]:
    best = Fraction(0)
    witness = None
    count = len(pts)
    for i in range(count):
        pi, gi = pts[i], imgs[i]
        for j in range(i + 1, count):
            num = _pair_sq(gi, imgs[j])
            den = _pair_sq(pi, pts[j])
            if den == 0:
                raise ValidationError("source points must be distinct")
            ratio = Fraction(num, den) if not isinstance(num, Fraction) else num / den
            if ratio > best:
                best = ratio
                witness = (pts[i], pts[j])
    return best, witness


def _lipschitz_pruned(
    pts: Sequence[tuple[int, ...]], imgs: Sequence[tuple[int, ...]]
) -> tuple[Fraction, tuple | None]:
    """Sorted sweep with the axis-gap prune.

    Any image pair differs by at most cap = sum of image coordinate spans
    squared, so a pair at squared source distance den can only improve on
    best = bn/bd when cap*bd > bn*den.  Points arrive lexicographically
    sorted, hence for fixed i the axis-0 gap to later points never shrinks
    and den >= gap^2: once the gap alone rules out any improvement the inner
    scan stops early.
    """
    d = len(pts[0])
    if len(set(pts)) != len(pts):
        raise ValidationError("source points must be distinct")
    spans = [max(g[a] for g in imgs) - min(g[a] for g in imgs) for a in range(d)]
    cap = sum(s * s for s in spans)
    count = len(pts)
    best_num, best_den = 0, 1
    witness = None
    for i in range(count - 1):
        p = pts[i]
        gi = imgs[i]
        for j in range(i + 1, count):
            q = pts[j]
            gap = q[0] - p[0]
            if best_num * gap * gap > cap * best_den:
                break
            den = _pair_sq(p, q)
            if best_num * den >= cap * best_den and best_num:
                continue
            num = _pair_sq(gi, imgs[j])
            if num * best_den > best_num * den:
                best_num, best_den = num, den
                witness = (p, q)
    if witness is None:
        return Fraction(0), None
    return Fraction(best_num, best_den), witness


_NUMPY_MIN = 600
_EXACT_SQ_LIMIT = 1 << 51  # d * max|coord|^2 below this keeps float64 exact


def _lipschitz_numpy(
    pts: Sequence[tuple[int, ...]], imgs: Sequence[tuple[int, ...]]
) -> tuple[Fraction, tuple | None]:
    src = np.asarray(pts, dtype=np.float64)
    img = np.asarray(imgs, dtype=np.float64)
    count, dim = src.shape
    k_sq = max(float(np.abs(src).max()), float(np.abs(img).max())) ** 2
    if 4.0 * dim * k_sq >= float(_EXACT_SQ_LIMIT):
        raise ValidationError("coordinates too large for the vectorized path")
    # Squared distances by Gram expansion stay exact: every intermediate is
    # an integer below 2^53, and one correctly rounded division per pair errs
    # by under half an ulp.  A relative margin of 1e-12 therefore captures
    # every pair that could tie or beat the true maximum; exact integer
    # cross-multiplication then decides among the few candidates.
    sn = np.einsum("ij,ij->i", src, src)
    im = np.einsum("ij,ij->i", img, img)
    best_num, best_den = 0, 1
    best_r = 0.0
    witness = None
    chunk = max(1, (1 << 21) // max(count, 1))
    js = np.arange(count)
    for lo in range(0, count, chunk):
        hi = min(count, lo + chunk)
        den = sn[lo:hi, None] + sn[None, :] - 2.0 * (src[lo:hi] @ src.T)
        num = im[lo:hi, None] + im[None, :] - 2.0 * (img[lo:hi] @ img.T)
        mask = js[None, :] <= np.arange(lo, hi)[:, None]  # keep j > i only
        ratio = np.where(mask, -1.0, num / np.where(mask, 1.0, den))
        m = float(ratio.max(initial=-1.0))
        if m < best_r * (1.0 - 1e-12):
            continue
        thr = m * (1.0 - 1e-12)
        for i_loc, j in np.argwhere(ratio >= thr):
            n_i, d_i = int(num[i_loc, j]), int(den[i_loc, j])
            if n_i * best_den > best_num * d_i:
                best_num, best_den = n_i, d_i
                witness = (pts[lo + int(i_loc)], pts[int(j)])
        best_r = best_num / best_den
    if witness is None:
        return Fraction(0), None
    return Fraction(best_num, best_den), witness


def lipschitz_of_map(
    g: Mapping[tuple, tuple], method: str = "auto"
) -> LipschitzResult:
    """Exact max over pairs of |g(x)-g(x')| / |x-x'| (Euclidean).

    Injectivity is required.  methods: "scan" (plain O(N^2), any exact
    number type), "pruned" (ring search with the distance cutoff, integer
    coordinates), "numpy" (chunked vectorized, integer coordinates), "auto".
    """
    items = sorted(g.items())
    pts = [p for p, _ in items]
    imgs = [q for _, q in items]
    if len(set(imgs)) != len(imgs):
        raise ValidationError("map must be injective")
    if len(pts) <= 1:
        return LipschitzResult(0.0, Fraction(0), None)
    all_int = all(
        isinstance(x, int) for p in (pts[0], imgs[0]) for x in p
    )
    if method == "auto":
        if not all_int:
            method = "scan"
        elif len(pts) >= _NUMPY_MIN:
            method = "numpy"
        else:
            method = "pruned"
    if method == "scan":
        best, witness = _lipschitz_scan(pts, imgs)
    elif method == "pruned":
        best, witness = _lipschitz_pruned(pts, imgs)
    elif method == "numpy":
        try:
            best, witness = _lipschitz_numpy(pts, imgs)
        except ValidationError:
            best, witness = _lipschitz_pruned(pts, imgs)
    else:
        raise ValidationError(f"unknown method {method!r}")
    return LipschitzResult(math.sqrt(best), best, witness)


def rescale_bijection(
    g_scaled: Mapping[tuple[Fraction, ...], tuple[Fraction, ...]], spec: GridSpec
) -> dict[tuple[int, ...], tuple[int, ...]]:
    """Blow the unit-scale matching back up: x -> n * g_scaled(x / (cn)).

    Sources multiply by cn, images by n; both must come out integral.  The
    constant transforms as Lip(g) = Lip(g_scaled)/c, verified elsewhere by
    direct recomputation rather than assumed.
    """
    s = spec.scale
    out: dict[tuple[int, ...], tuple[int, ...]] = {}
    for xs, ys in g_scaled.items():
        src = tuple(x * s for x in xs)
        img = tuple(y * spec.n for y in ys)
        if any(v.denominator != 1 for v in src) or any(v.denominator != 1 for v in img):
            raise ValidationError("rescaled map must have integer coordinates")
        out[tuple(int(v) for v in src)] = tuple(int(v) for v in img)
    return out


def verify_certificate(
    cert: BijectionCertificate,
    config: Configuration,
    plan: TransportPlan,
) -> list[str]:
    """Re-check a certificate from scratch; returns human-readable problems."""
    problems: list[str] = []
    mapping = dict(cert.pairs)
    if set(mapping) != set(config.points):
        problems.append("certificate sources differ from the configuration")
        return problems
    images = list(mapping.values())
    if len(set(images)) != len(images):
        problems.append("images are not distinct")
    n = cert.n
    for img in images:
        if any(not 1 <= v <= n for v in img):
            problems.append(f"image {img} outside the grid")
            break
    inst = build_instance(config, plan, cert.radius)
    for i, p in enumerate(config.points):
        window = inst.index_ranges[inst.cell_of[i]]
        img = mapping[p]
        if any(not lo <= v <= hi for v, (lo, hi) in zip(img, window)):
            problems.append(f"image of {p} leaves its neighborhood")
            break
    if not problems:
        lip = lipschitz_of_map(mapping)
        if lip.constant_sq != cert.lipschitz_sq:
            problems.append(
                f"stored squared constant {cert.lipschitz_sq} != recomputed {lip.constant_sq}"
            )
    return problems
