"""Entropy, binomial sandwiches, and hypergeometric tail machinery.

Everything here speaks base 2: log means log2 and exp(x) means 2**x, so the
entropy identity C(p,q) ~ 2**(p*H(q/p)) holds on the nose.  Probabilities are
exact rationals whenever population sizes stay small enough for big-integer
binomials to be pleasant (EXACT_SIZE_LIMIT), and log2-space floats beyond
that; the two paths are separate functions so callers always know which
arithmetic they got.

The named constants Lambda (Stirling sandwich) and Gamma (tail bounds) are
of different character.  Lambda is derived: the Stirling correction n! /
(sqrt(2 pi n) (n/e)**n) is largest at n=1 where it equals e/sqrt(2 pi), and
tends to 1 from above, so Lambda = e**2/(2 pi) covers the three-factor ratio
in both directions.  Gamma is genuinely free and is fitted empirically
elsewhere, then frozen; functions here take it as an argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

from .errors import RegimeError, ValidationError
from .rational import floor_root

__all__ = [
    "LAMBDA_STIRLING",
    "EXACT_SIZE_LIMIT",
    "entropy",
    "entropy_derivative",
    "stirling_sandwich",
    "stirling_sandwich_log2",
    "hypergeom_pmf",
    "hypergeom_tail",
    "hypergeom_pmf_log2",
    "hypergeom_tail_log2",
    "gamma_exponent",
    "gamma_lower_bound_low",
    "gamma_lower_bound_high",
    "pmf_upper_via_entropy",
    "TailBoundParams",
    "bonnet_tail_bounds",
    "concave_interp_bound",
    "DeviationParams",
    "RegimeReport",
    "validate_regime",
    "deviation_bound",
    "deviation_union_bound",
    "tail_validation_grid",
]

LAMBDA_STIRLING = math.e**2 / (2.0 * math.pi)

EXACT_SIZE_LIMIT = 10_000


def entropy(t) -> float:
    """Binary entropy H(t) = -t log t - (1-t) log(1-t), H(0) = H(1) = 0."""
    t = Fraction(t) if not isinstance(t, float) else t
    if t < 0 or t > 1:
        raise ValidationError("entropy wants t in [0, 1]")
    t = float(t)
    if t in (0.0, 1.0):
        return 0.0
    return -t * math.log2(t) - (1.0 - t) * math.log2(1.0 - t)


def entropy_derivative(t) -> float:
    """H'(t) = -log(t / (1-t)) on the open interval."""
    t = Fraction(t) if not isinstance(t, float) else t
    if t <= 0 or t >= 1:
        raise ValidationError("entropy_derivative wants t in (0, 1)")
    t = float(t)
    return -math.log2(t / (1.0 - t))


def _sigma(p: int, q: int) -> float:
    # sqrt(p / (2 pi q (p-q))) away from the edges, 1 at them
    if q in (0, p):
        return 1.0
    return math.sqrt(p / (2.0 * math.pi * q * (p - q)))


def stirling_sandwich(p: int, q: int) -> tuple[float, float]:
    """Two-sided bound on C(p,q): center * Lambda**(+-1).

    The center is sqrt(p/(2 pi q(p-q))) * 2**(p H(q/p)), degenerating to 1
    at q in {0, p} where the coefficient itself is 1.  Overflows to inf for
    large p; use the log2 variant there.
    """
    lo, hi = stirling_sandwich_log2(p, q)

    def lift(x: float) -> float:
        try:
            return 2.0**x
        except OverflowError:
            return math.inf

    return (lift(lo), lift(hi))


def stirling_sandwich_log2(p: int, q: int) -> tuple[float, float]:
    """log2 of the sandwich bounds; safe for large p."""
    if not (isinstance(p, int) and isinstance(q, int)):
        raise ValidationError("stirling_sandwich wants integers")
    if p < 1 or q < 0 or q > p:
        raise ValidationError("stirling_sandwich wants 0 <= q <= p, p >= 1")
    center = math.log2(_sigma(p, q)) + p * entropy(Fraction(q, p))
    width = math.log2(LAMBDA_STIRLING)
    return (center - width, center + width)


def _check_hypergeom(size_x: int, size_y: int, draws: int) -> None:
    if size_y < 0 or size_x < size_y:
        raise ValidationError("need 0 <= sizeY <= sizeX")
    if draws < 0 or draws > size_x:
        raise ValidationError("need 0 <= N <= sizeX")


def hypergeom_pmf(size_x: int, size_y: int, draws: int, k: int) -> Fraction:
    """P[|S cap Y| = k] for a uniform N-subset S of an X with |Y| marked."""
    _check_hypergeom(size_x, size_y, draws)
    if k < 0 or k > min(draws, size_y):
        raise ValidationError("k outside [0, min(N, sizeY)]")
    num = math.comb(size_y, k) * math.comb(size_x - size_y, draws - k)
    return Fraction(num, math.comb(size_x, draws))


def _tail_numerator(size_x: int, size_y: int, draws: int, lo: int, hi: int) -> int:
    k0 = max(lo, 0, draws - (size_x - size_y))
    k1 = min(hi, draws, size_y)
    if k0 > k1:
        return 0
    a = math.comb(size_y, k0)
    b = math.comb(size_x - size_y, draws - k0)
    total = a * b
    for k in range(k0, k1):
        a = a * (size_y - k) // (k + 1)
        b = b * (draws - k) // (size_x - size_y - draws + k + 1)
        total += a * b
    return total


def hypergeom_tail(size_x: int, size_y: int, draws: int, lo: int, hi: int) -> Fraction:
    """Exact P[lo <= |S cap Y| <= hi]; an empty range is 0.

    Incremental big-integer numerators over the common denominator C(X, N),
    so the full-range tail is 1 exactly.
    """
    _check_hypergeom(size_x, size_y, draws)
    if lo > hi:
        return Fraction(0)
    if lo < 0 or hi > min(draws, size_y):
        raise ValidationError("tail range outside [0, min(N, sizeY)]")
    return Fraction(
        _tail_numerator(size_x, size_y, draws, lo, hi), math.comb(size_x, draws)
    )


_INV_LN2 = 1.0 / math.log(2.0)


def _log2_comb(p: int, q: int) -> float:
    if q < 0 or q > p:
        return -math.inf
    return (
        math.lgamma(p + 1) - math.lgamma(q + 1) - math.lgamma(p - q + 1)
    ) * _INV_LN2


def hypergeom_pmf_log2(size_x: int, size_y: int, draws: int, k: int) -> float:
    """log2 of the pmf via lgamma; -inf where the pmf vanishes."""
    _check_hypergeom(size_x, size_y, draws)
    if k < 0 or k > min(draws, size_y):
        raise ValidationError("k outside [0, min(N, sizeY)]")
    if draws - k > size_x - size_y:
        return -math.inf
    return (
        _log2_comb(size_y, k)
        + _log2_comb(size_x - size_y, draws - k)
        - _log2_comb(size_x, draws)
    )


def hypergeom_tail_log2(
    size_x: int, size_y: int, draws: int, lo: int, hi: int
) -> float:
    """log2 of the tail probability, summed stably in log space."""
    _check_hypergeom(size_x, size_y, draws)
    if lo > hi:
        return -math.inf
    if lo < 0 or hi > min(draws, size_y):
        raise ValidationError("tail range outside [0, min(N, sizeY)]")
    terms = [
        hypergeom_pmf_log2(size_x, size_y, draws, k) for k in range(lo, hi + 1)
    ]
    peak = max(terms)
    if peak == -math.inf:
        return -math.inf
    return peak + math.log2(sum(2.0 ** (t - peak) for t in terms))


def gamma_exponent(size_x: int, size_y: int, draws: int, k: int) -> float:
    """The exponent gamma_k with which 2**(-|Y| gamma_k) tracks the pmf.

    gamma_k = (X/Y) H(N/X) - H(k/Y) - (X/Y - 1) H((N-k)/(X-Y)); zero exactly
    at the balanced point k/Y = N/X = (N-k)/(X-Y), negative off-regime.
    """
    if size_x <= size_y or size_y < 1:
        raise ValidationError("need sizeX > sizeY >= 1")
    if not (0 <= draws <= size_x and 0 <= k <= size_y and 0 <= draws - k <= size_x - size_y):
        raise ValidationError("entropy arguments leave [0, 1]")
    ratio = size_x / size_y
    return (
        ratio * entropy(Fraction(draws, size_x))
        - entropy(Fraction(k, size_y))
        - (ratio - 1.0) * entropy(Fraction(draws - k, size_x - size_y))
    )


def pmf_upper_via_entropy(size_x: int, size_y: int, draws: int, k: int) -> float:
    """Closed-form upper bound on the exact pmf through the entropy exponent.

    Lambda**3 * sigma(Y,k) * sigma(X-Y,N-k) / sigma(X,N) * 2**(-Y gamma_k);
    each sigma carries its own 1/sqrt(2 pi) and collapses to 1 at an edge,
    where the sandwich bound [1/Lambda, Lambda] still holds.
    """
    gamma = gamma_exponent(size_x, size_y, draws, k)
    pref = (
        LAMBDA_STIRLING**3
        * _sigma(size_y, k)
        * _sigma(size_x - size_y, draws - k)
        / _sigma(size_x, draws)
    )
    return pref * 2.0 ** (-size_y * gamma)


def gamma_lower_bound_low(size_x: int, draws: int, a, delta) -> float:
    """Closed-form floor for gamma_k on the sparse side k <= aN/M:
    (1-(a+d))^2 N (X-N) / (2 X (X-(a+d)N))."""
    ad = float(a) + float(delta)
    if size_x <= draws:
        raise ValidationError("need sizeX > N")
    if size_x - ad * draws <= 0:
        raise ValidationError("need sizeX > (a+delta) N")
    return (
        (1.0 - ad) ** 2
        * draws
        * (size_x - draws)
        / (2.0 * size_x * (size_x - ad * draws))
    )


def gamma_lower_bound_high(size_x: int, draws: int, b, delta) -> float:
    """Closed-form floor for gamma_k on the crowded side k >= bN/M:
    (b-2d-1)^2 N (X-(b-2d)N) / (2 X (X-N))."""
    bd = float(b) - 2.0 * float(delta)
    if size_x <= draws:
        raise ValidationError("need sizeX > N")
    return (
        (bd - 1.0) ** 2
        * draws
        * (size_x - bd * draws)
        / (2.0 * size_x * (size_x - draws))
    )


@dataclass(frozen=True)
class TailBoundParams:
    """Parameters of the two-sided tail bound, validated exactly."""

    delta: Fraction
    N: int
    M: Fraction
    a: Fraction
    b: Fraction
    sizeX: int
    sizeY: int
    Gamma: float

    def __post_init__(self) -> None:
        if not 0 <= self.delta < Fraction(1, 2):
            raise ValidationError("delta must lie in [0, 1/2)")
        if self.N < 1:
            raise ValidationError("N must be a positive integer")
        if self.M <= 1:
            raise ValidationError("M must exceed 1")
        if not Fraction(1, 2) < self.a < 1 - self.delta:
            raise ValidationError("a must lie in (1/2, 1-delta)")
        if not 1 + 2 * self.delta < self.b < 2:
            raise ValidationError("b must lie in (1+2delta, 2)")
        if self.sizeX <= self.b * self.N:
            raise ValidationError("sizeX must exceed bN")
        lo = (1 - self.delta) * self.sizeX / self.M
        hi = (1 + self.delta) * self.sizeX / self.M
        if not lo <= self.sizeY <= hi:
            raise ValidationError("sizeY must lie in [(1-delta)X/M, (1+delta)X/M]")
        if self.Gamma <= 0:
            raise ValidationError("Gamma must be positive")


def bonnet_tail_bounds(
    p: TailBoundParams, sharper_prefactor: bool = False
) -> tuple[float, float]:
    """Closed-form ceilings for both hypergeometric tails.

    bound_low covers P[|S cap Y| <= aN/M], bound_high covers
    P[|S cap Y| >= bN/M].  The shared prefactor needs X(1-2/M) > N and
    X > N + Y; outside that regime the bound is meaningless and a regime
    error is raised.  sharper_prefactor swaps the N**(3/2) of the high side
    for sqrt(N) * min(N, Y), a strictly better constant that the plain form
    rounds up for simplicity.
    """
    X, Y, N, M = p.sizeX, p.sizeY, p.N, float(p.M)
    root_den = X * (1.0 - 2.0 / M) - N
    if root_den <= 0:
        raise RegimeError("tail bound needs sizeX (1 - 2/M) > N")
    if X - N - Y <= 0:
        raise RegimeError("tail bound needs sizeX > N + sizeY")
    pref = p.Gamma * math.sqrt((X - N) / root_den)
    ad = float(p.a + p.delta)
    bd = float(p.b - 2 * p.delta)
    exp_low = (1.0 - ad) ** 2 * N * (X - N) / (p.Gamma * M * (X - ad * N))
    bound_low = pref * (N**1.5 / M) * 2.0 ** (-exp_low)
    high_factor = math.sqrt(N) * min(N, Y) if sharper_prefactor else N**1.5
    exp_high = (bd - 1.0) ** 2 * N * (X - bd * N) / (p.Gamma * M * (X - N))
    bound_high = pref * high_factor * 2.0 ** (-exp_high)
    return (bound_low, bound_high)


def concave_interp_bound(s, t, lam) -> tuple[float, float]:
    """Both sides of f((1-l)s + lt) <= (f'(s)/f'(t)) ((1-l)f(s) + lf(t)).

    Implemented for f = log.  The statement needs f >= 0 on [s, t], so for
    s <= 1 the shifted g(u) = log u - log s is used instead, exactly as the
    reduction in the proof does.
    """
    s, t, lam = float(s), float(t), float(lam)
    if not 0 < s < t:
        raise ValidationError("need 0 < s < t")
    if not 0 < lam < 1:
        raise ValidationError("need lambda in (0, 1)")
    mix = (1.0 - lam) * s + lam * t
    ratio = t / s  # f'(s)/f'(t) for any log base
    if s > 1.0:
        lhs = math.log2(mix)
        rhs = ratio * ((1.0 - lam) * math.log2(s) + lam * math.log2(t))
    else:
        lhs = math.log2(mix) - math.log2(s)
        rhs = ratio * lam * (math.log2(t) - math.log2(s))
    return (lhs, rhs)


@dataclass(frozen=True)
class DeviationParams:
    """Scale parameters of the cell-deviation regime (d, n, m, C, q)."""

    d: int
    n: int
    m: int
    C: Fraction
    q: float

    def __post_init__(self) -> None:
        if self.d < 1 or self.n < 2 or self.m < 1:
            raise ValidationError("need d >= 1, n >= 2, m >= 1")
        if self.C <= 0:
            raise ValidationError("C must be positive")


@dataclass(frozen=True)
class RegimeReport:
    ok: bool
    failures: tuple[str, ...]
    divisible: bool
    sizeX: int
    N: int
    M: int
    delta: Fraction
    a: float
    b: float


def _is_divisible(C: Fraction, n: int, m: int, d: int) -> bool:
    # C^(1/d) n / m integral <=> C == (t m / n)**d for some integer t
    seed = int((float(C) ** (1.0 / d)) * n / m)
    for t in range(max(seed - 1, 0), seed + 3):
        if t >= 1 and Fraction(t * m, n) ** d == C:
            return True
    return False


def validate_regime(p: DeviationParams) -> RegimeReport:
    """Check the scale conditions and the three internal ratio inequalities.

    All checks are reported, none raised: the report lists every failed
    condition.  The ratio checks are evaluated for the instantiated sizes
    X = floor(C^(1/d) n)^d, N = n^d, M = m^d with delta = 2^(d+2) m/n (or 0
    when C^(1/d) n/m is an integer) and the thresholds a, b at distance
    2^(d+5)/log n from 1.
    """
    d, n, m, C, q = p.d, p.n, p.m, p.C, p.q
    failures: list[str] = []
    L = math.log2(n)
    if not n / (2.0 * L**q) <= m <= 2.0 * n / L**q:
        failures.append("m outside [n/(2 (log n)^q), 2n/(log n)^q]")
    if float(C) < 1.0 + 2.0 ** (d + 7) / L:
        failures.append("C below 1 + 2^(d+7)/log n")
    divisible = _is_divisible(C, n, m, d)
    if divisible:
        if q <= 0:
            failures.append("q must be positive")
    elif q < 1:
        failures.append("q must be at least 1 in the non-divisible case")

    extent = floor_root(C * n**d, d)
    size_x = extent**d
    N = n**d
    M = m**d
    delta = Fraction(0) if divisible else Fraction(2 ** (d + 2) * m, n)
    a = 1.0 - 2.0 ** (d + 5) / L
    b = 1.0 + 2.0 ** (d + 5) / L

    if size_x <= N:
        failures.append("population does not exceed the draw count")
    else:
        # ratio checks, exact where the quantities are integers
        den1 = size_x * (M - 2) - N * M
        if den1 <= 0:
            failures.append("ratio check 1: denominator not positive")
        elif (size_x - N) * M > 2 * den1:
            failures.append("(X-N)/(X(1-2/M)-N) exceeds 2")
        ad = a + float(delta)
        if 2.0 * (size_x - N) < size_x - ad * N:
            failures.append("(X-N)/(X-(a+delta)N) below 1/2")
        bd = b - 2.0 * float(delta)
        if 2.0 * (size_x - bd * N) < size_x - N:
            failures.append("(X-(b-2delta)N)/(X-N) below 1/2")

    return RegimeReport(
        ok=not failures,
        failures=tuple(failures),
        divisible=divisible,
        sizeX=size_x,
        N=N,
        M=M,
        delta=delta,
        a=a,
        b=b,
    )


def deviation_bound(p: DeviationParams, Gamma: float) -> float:
    """Closed-form ceiling Gamma n^Gamma 2^(-(log n)^(qd-2)/Gamma)."""
    if Gamma <= 0:
        raise ValidationError("Gamma must be positive")
    L = math.log2(p.n)
    log2_value = math.log2(Gamma) + Gamma * L - L ** (p.q * p.d - 2.0) / Gamma
    try:
        return 2.0**log2_value
    except OverflowError:
        return math.inf


def _axis_part_sizes(C: Fraction, n: int, m: int, d: int) -> dict[int, int]:
    # cut [extent] into m chunks at the exact scaled positions; chunk p gets
    # floor((p+1) C^(1/d) n / m) - floor(p C^(1/d) n / m) lattice columns
    marks = [floor_root(C * Fraction(j * n, m) ** d, d) for j in range(m + 1)]
    sizes: dict[int, int] = {}
    for j in range(m):
        width = marks[j + 1] - marks[j]
        sizes[width] = sizes.get(width, 0) + 1
    return sizes


def tail_validation_grid(
    size_max: int = 4096, Gamma: float = 1.0
) -> list[TailBoundParams]:
    """The fixed grid the tail-bound constant is fitted and re-checked on.

    Populations are powers of two up to size_max, M in {4, 16, 64}, three
    draw densities, delta in {0, 1/8}, two choices each of a and b; tuples
    whose denominators leave the bound's regime are skipped.  Deterministic,
    so the fitting tool and the regression tests see the same instances.
    """
    grid: list[TailBoundParams] = []
    size_x = 64
    while size_x <= size_max:
        for m_val in (4, 16, 64):
            M = Fraction(m_val)
            base_y = size_x // m_val
            if base_y < 2:
                continue
            for draws in (size_x // 64, size_x // 16, size_x // 8):
                if draws < 1:
                    continue
                for delta in (Fraction(0), Fraction(1, 8)):
                    if delta == 0:
                        offsets: tuple[int, ...] = (0,)
                    else:
                        offsets = tuple(sorted({-(base_y // 8), 0, base_y // 8}))
                    for off in offsets:
                        size_y = base_y + off
                        for a in (Fraction(3, 5), Fraction(3, 4)):
                            if not a < 1 - delta:
                                continue
                            for b in (1 + 2 * delta + Fraction(1, 4), Fraction(7, 4)):
                                if not 1 + 2 * delta < b < 2:
                                    continue
                                if size_x <= b * draws:
                                    continue
                                if size_x * (1 - Fraction(2) / M) <= draws:
                                    continue
                                if size_x - draws - size_y <= 0:
                                    continue
                                lo = (1 - delta) * size_x / M
                                hi = (1 + delta) * size_x / M
                                if not lo <= size_y <= hi:
                                    continue
                                grid.append(
                                    TailBoundParams(
                                        delta=delta,
                                        N=draws,
                                        M=M,
                                        a=a,
                                        b=b,
                                        sizeX=size_x,
                                        sizeY=size_y,
                                        Gamma=Gamma,
                                    )
                                )
        size_x *= 2
    return grid


def deviation_union_bound(
    p: DeviationParams,
    Gamma: float,
    threshold_scale: float = 1.0,
    exact: bool | None = None,
) -> Fraction | float:
    """Union bound over all cells for the two-sided deviation event.

    Sums, over every cell of the m-fold split of the population cube, the
    exact (or log-space, for large populations) hypergeometric probability
    of that cell's count leaving [(1 -+ s Gamma/log n) N/M].  Cells share
    one of at most two sizes per axis, so the sum groups them by size
    vector instead of walking all m^d cells.  threshold_scale widens or
    narrows the deviation band; 1 is the stated event.
    """
    if Gamma <= 0:
        raise ValidationError("Gamma must be positive")
    if threshold_scale <= 0:
        raise ValidationError("threshold_scale must be positive")
    d, n, m, C = p.d, p.n, p.m, p.C
    N = n**d
    M = m**d
    extent = floor_root(C * n**d, d)
    size_x = extent**d
    if exact is None:
        exact = size_x <= EXACT_SIZE_LIMIT
    L = math.log2(n)
    width = threshold_scale * Gamma / L
    k_lo = math.floor((1.0 - width) * N / M)
    k_hi = math.ceil((1.0 + width) * N / M)
    axis_sizes = _axis_part_sizes(C, n, m, d)
    total: Fraction | float = Fraction(0) if exact else 0.0
    for combo in product(sorted(axis_sizes.items()), repeat=d):
        size_y = 1
        mult = 1
        for value, count in combo:
            size_y *= value
            mult *= count
        top = min(N, size_y)
        if exact:
            low = hypergeom_tail(size_x, size_y, N, 0, min(k_lo, top))
            high = (
                hypergeom_tail(size_x, size_y, N, max(k_hi, 0), top)
                if k_hi <= top
                else Fraction(0)
            )
            total += mult * (low + high)
        else:
            low = (
                2.0 ** hypergeom_tail_log2(size_x, size_y, N, 0, min(k_lo, top))
                if k_lo >= 0
                else 0.0
            )
            high = (
                2.0 ** hypergeom_tail_log2(size_x, size_y, N, max(k_hi, 0), top)
                if k_hi <= top
                else 0.0
            )
            total += mult * (low + high)
    return total
