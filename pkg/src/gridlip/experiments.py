"""Desk-scale Monte Carlo studies of the deviation and scaling behaviour.

Two studies share one plan shape.  The deviation study samples random
configurations and tallies how often some cell of the m-fold split leaves
the band (1 -+ 2^(d+5)/log n) n^d/m^d, against the per-cell union bound and
the closed-form ceiling.  The scaling study runs the full pipeline per trial
and tracks max Lip(g)/(log n)^q.  At desk scale the literal thresholds are
extremely forgiving (2^(d+5)/log n is far above 1 for small n), so plans can
carry extra threshold scale factors; rows produced under a scaled threshold
or outside the validated regime are marked exploratory.

Reproducibility contract: every trial's seed is derived from (master_seed,
n, trial), so records are bit-for-bit identical whatever the execution
order or process count.  CSV output deliberately excludes wall-clock time;
timing lives in the JSON-lines event log, which is not under the
byte-identity contract.

c_n strategies: theorem_main takes the smallest c with denominator 2^16 and
c^d >= 1 + 2^(d+7)/log n; sharper picks the least c_n = j m_n / n inside
[e_n + 2^(d+7)/(log n)^(1/d), e_n + (2^(d+7)+1)/(log n)^(1/d)], which forces
c_n n / m_n integral.  Both use rational lower bounds on log n so the
divisibility and regime claims hold exactly, not just in floating point.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .constants import load_constants
from .errors import InternalInvariantError, RegimeError, ValidationError
from .lattice import GridSpec, cell_counts, sample_configuration
from .matching import verify_certificate
from .rational import (
    ceil_fraction,
    floor_root,
    fraction_str,
    log2_lower_fraction,
)
from .rng import derive_seed
from .solver import level_for, pipeline_upper_bound
from .stats import (
    DeviationParams,
    deviation_bound,
    deviation_union_bound,
    validate_regime,
)

__all__ = [
    "ExperimentPlan",
    "TrialRecord",
    "DeviationRow",
    "ScalingRow",
    "StudyResult",
    "theorem_main_cn",
    "sharper_cn",
    "plan_c",
    "deviation_thresholds",
    "deviation_study",
    "scaling_study",
    "records_to_csv",
]

_C_DENOM_BITS = 16
_ROOT_BITS = 40


def theorem_main_cn(d: int, n: int) -> Fraction:
    """Smallest c with denominator 2^16 whose d-th power clears 1 + 2^(d+7)/log n.

    Uses a rational lower bound on log n, which can only raise the target,
    so c^d >= 1 + 2^(d+7)/log n holds with the true logarithm too.
    """
    if n < 2:
        raise ValidationError("need n >= 2")
    L = log2_lower_fraction(n)
    target = 1 + Fraction(2 ** (d + 7)) / L
    den = 1 << _C_DENOM_BITS
    k = floor_root(target * den**d, d)
    if Fraction(k, den) ** d < target:
        k += 1
    return Fraction(k, den)


def sharper_cn(e_n: Fraction | int, d: int, n: int, alpha: float) -> Fraction:
    """Least c_n = j m_n/n in the prescribed window above e_n.

    The window endpoints involve (log n)^(1/d); both are bracketed by
    rationals tight to ~2^-40 so that the returned c_n provably lies inside
    the true window.  m_n = 2^floor(log n - (alpha/d) log log n); when that
    exponent drops below 1 the construction has no room and a regime error
    is raised.
    """
    e_n = Fraction(e_n)
    if e_n < 1:
        raise ValidationError("need e_n >= 1")
    if alpha <= 3:
        raise ValidationError("need alpha > 3")
    if n < 2:
        raise RegimeError("n too small for the level rule")
    q = alpha / d
    value = math.log2(n) - q * math.log2(math.log2(n)) if n > 2 else 1.0
    level = math.floor(value)
    if level < 1:
        raise RegimeError(f"level rule gives {level} < 1 at n={n}")
    m = 1 << level
    L = log2_lower_fraction(n, bits=_ROOT_BITS)
    scale = 1 << _ROOT_BITS
    root = floor_root(L * Fraction(scale) ** d, d)
    r_lo = Fraction(root, scale)
    r_hi = Fraction(root + 2, scale)
    lo = e_n + Fraction(2 ** (d + 7)) / r_lo
    hi = e_n + Fraction(2 ** (d + 7) + 1) / r_hi
    j = ceil_fraction(lo * Fraction(n, m))
    c = Fraction(j * m, n)
    if c > hi:
        raise RegimeError("window narrower than the divisibility spacing")
    return c


@dataclass(frozen=True)
class ExperimentPlan:
    """Shared settings for both studies."""

    d: int
    n_list: tuple[int, ...]
    q: float
    c_strategy: str = "theorem_main"
    c_values: tuple[Fraction, ...] | None = None
    alpha: float | None = None
    e_values: tuple[Fraction, ...] | None = None
    trials: int = 100
    master_seed: int = 0
    threshold_scales: tuple[float, ...] = (1.0,)

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ValidationError("need d >= 2")
        if not self.n_list or any(n < 2 for n in self.n_list):
            raise ValidationError("n_list must be nonempty with every n >= 2")
        if self.trials < 0:
            raise ValidationError("trials must be nonnegative")
        if not 0 <= self.master_seed < 1 << 64:
            raise ValidationError("master_seed must fit in 64 bits")
        if self.c_strategy == "theorem_main":
            if not (self.q >= 1 and self.q > 3 / self.d):
                raise ValidationError("theorem_main needs q >= 1 and q > 3/d")
        elif self.c_strategy == "sharper":
            if self.alpha is None or self.alpha <= 3:
                raise ValidationError("sharper needs alpha > 3")
            if self.q != self.alpha / self.d:
                raise ValidationError("sharper fixes q = alpha/d")
        elif self.c_strategy == "fixed":
            if self.c_values is None or len(self.c_values) != len(self.n_list):
                raise ValidationError("fixed needs one c per n")
            if any(c < 1 for c in self.c_values):
                raise ValidationError("every c must be >= 1")
        else:
            raise ValidationError(f"unknown c_strategy {self.c_strategy!r}")
        if self.e_values is not None and len(self.e_values) != len(self.n_list):
            raise ValidationError("e_values must align with n_list")
        if not self.threshold_scales or any(s <= 0 for s in self.threshold_scales):
            raise ValidationError("threshold_scales must be positive")


def plan_c(plan: ExperimentPlan, index: int) -> Fraction:
    n = plan.n_list[index]
    if plan.c_strategy == "fixed":
        return plan.c_values[index]
    if plan.c_strategy == "sharper":
        e_n = plan.e_values[index] if plan.e_values is not None else Fraction(1)
        return sharper_cn(e_n, plan.d, n, plan.alpha)
    return theorem_main_cn(plan.d, n)


@dataclass(frozen=True)
class TrialRecord:
    """Everything one trial produced; regenerable from (master_seed, n, trial)."""

    n: int
    trial: int
    seed: int
    c: Fraction
    level: int
    min_count: int
    max_count: int
    deviation_low: bool
    deviation_high: bool
    lipschitz: float | None
    status: str
    elapsed: float


def deviation_thresholds(
    d: int, n: int, m: int, scale: float = 1.0
) -> tuple[int, int]:
    """Integer cutoffs (k_lo, k_hi) of the two deviation events.

    A cell count <= k_lo triggers the low event, >= k_hi the high one; the
    band is (1 -+ scale * 2^(d+5)/log n) n^d / m^d.
    """
    width = scale * 2.0 ** (d + 5) / math.log2(n)
    center = n**d / m**d
    return (math.floor((1.0 - width) * center), math.ceil((1.0 + width) * center))


def _deviation_task(args: tuple) -> TrialRecord:
    d, n, trial, seed, c, m = args
    t0 = time.perf_counter()
    config = sample_configuration(GridSpec(d=d, n=n, c=c), seed)
    lo_count, hi_count = cell_counts(config, m).min_max()
    k_lo, k_hi = deviation_thresholds(d, n, m)
    return TrialRecord(
        n=n,
        trial=trial,
        seed=seed,
        c=c,
        level=m.bit_length() - 1,
        min_count=lo_count,
        max_count=hi_count,
        deviation_low=lo_count <= k_lo,
        deviation_high=hi_count >= k_hi,
        lipschitz=None,
        status="ok",
        elapsed=time.perf_counter() - t0,
    )


def _scaling_task(args: tuple) -> TrialRecord:
    d, n, trial, seed, c, level = args
    t0 = time.perf_counter()
    config = sample_configuration(GridSpec(d=d, n=n, c=c), seed)
    m = 1 << level
    lo_count, hi_count = cell_counts(config, m).min_max()
    k_lo, k_hi = deviation_thresholds(d, n, m)
    flags = dict(
        deviation_low=lo_count <= k_lo,
        deviation_high=hi_count >= k_hi,
    )
    if lo_count == 0:
        return TrialRecord(
            n=n,
            trial=trial,
            seed=seed,
            c=c,
            level=level,
            min_count=lo_count,
            max_count=hi_count,
            lipschitz=None,
            status="zero-cell",
            elapsed=time.perf_counter() - t0,
            **flags,
        )
    result = pipeline_upper_bound(config, level)
    problems = verify_certificate(result.certificate, config, result.plan)
    if problems:
        raise InternalInvariantError(
            f"certificate failed re-validation at n={n} trial={trial}: {problems[0]}"
        )
    return TrialRecord(
        n=n,
        trial=trial,
        seed=seed,
        c=c,
        level=level,
        min_count=lo_count,
        max_count=hi_count,
        lipschitz=result.certificate.lipschitz,
        status="ok",
        elapsed=time.perf_counter() - t0,
        **flags,
    )


def _run_tasks(task, args_list: list[tuple], jobs: int) -> list[TrialRecord]:
    if jobs <= 1 or len(args_list) <= 1:
        return [task(a) for a in args_list]
    chunk = max(1, len(args_list) // (jobs * 8))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(task, args_list, chunksize=chunk))


@dataclass(frozen=True)
class DeviationRow:
    n: int
    m: int
    c: Fraction
    threshold_scale: float
    regime_ok: bool
    exploratory: bool
    trials: int
    freq_low: float
    freq_high: float
    union_bound: float
    closed_form: float

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "c": fraction_str(self.c),
            "threshold_scale": self.threshold_scale,
            "regime_ok": self.regime_ok,
            "exploratory": self.exploratory,
            "trials": self.trials,
            "freq_low": self.freq_low,
            "freq_high": self.freq_high,
            "union_bound": self.union_bound,
            "closed_form": self.closed_form,
        }


@dataclass(frozen=True)
class ScalingRow:
    n: int
    c: Fraction
    level: int
    trials: int
    rejections: int
    max_lipschitz: float | None
    max_ratio: float | None

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "c": fraction_str(self.c),
            "level": self.level,
            "trials": self.trials,
            "rejections": self.rejections,
            "max_lipschitz": self.max_lipschitz,
            "max_ratio": self.max_ratio,
        }


@dataclass(frozen=True)
class StudyResult:
    kind: str
    plan: ExperimentPlan
    records: tuple[TrialRecord, ...]
    rows: tuple

    def to_csv(self) -> str:
        return records_to_csv(self.records)

    def to_summary_dict(self) -> dict:
        return {
            "kind": self.kind,
            "plan": _plan_json(self.plan),
            "rows": [row.to_json_dict() for row in self.rows],
        }

    def to_summary_json(self) -> str:
        return json.dumps(self.to_summary_dict(), indent=2, sort_keys=True)

    def to_events_jsonl(self) -> str:
        lines = []
        for r in self.records:
            lines.append(
                json.dumps(
                    {
                        "n": r.n,
                        "trial": r.trial,
                        "seed": r.seed,
                        "status": r.status,
                        "elapsed": r.elapsed,
                    },
                    sort_keys=True,
                )
            )
        return "\n".join(lines) + ("\n" if lines else "")


def _plan_json(plan: ExperimentPlan) -> dict:
    return {
        "d": plan.d,
        "n_list": list(plan.n_list),
        "q": plan.q,
        "c_strategy": plan.c_strategy,
        "c_values": None
        if plan.c_values is None
        else [fraction_str(c) for c in plan.c_values],
        "alpha": plan.alpha,
        "e_values": None
        if plan.e_values is None
        else [fraction_str(e) for e in plan.e_values],
        "trials": plan.trials,
        "master_seed": plan.master_seed,
        "threshold_scales": list(plan.threshold_scales),
    }


_CSV_HEADER = (
    "n,trial,seed,c,level,min_count,max_count,"
    "deviation_low,deviation_high,lipschitz,status"
)


def records_to_csv(records: Sequence[TrialRecord]) -> str:
    """One row per trial, sorted by (n, trial); no wall-clock columns."""
    lines = [_CSV_HEADER]
    for r in sorted(records, key=lambda r: (r.n, r.trial)):
        lip = "" if r.lipschitz is None else repr(r.lipschitz)
        lines.append(
            f"{r.n},{r.trial},{r.seed},{fraction_str(r.c)},{r.level},"
            f"{r.min_count},{r.max_count},{int(r.deviation_low)},"
            f"{int(r.deviation_high)},{lip},{r.status}"
        )
    return "\n".join(lines) + "\n"


def deviation_study(
    plan: ExperimentPlan, gamma_dev: float | None = None, jobs: int = 1
) -> StudyResult:
    """Cell-count deviation frequencies against union and closed-form bounds.

    Frequencies for every threshold scale come from one set of trials: the
    events depend only on each trial's min and max cell count.
    """
    if gamma_dev is None:
        gamma_dev = load_constants().gamma_dev
    args: list[tuple] = []
    setups = []
    for i, n in enumerate(plan.n_list):
        c = plan_c(plan, i)
        m = 1 << level_for(n, plan.q)
        setups.append((n, c, m))
        for t in range(plan.trials):
            args.append((plan.d, n, t, derive_seed(plan.master_seed, n, t), c, m))
    records = sorted(_run_tasks(_deviation_task, args, jobs), key=lambda r: (r.n, r.trial))

    rows = []
    for n, c, m in setups:
        params = DeviationParams(d=plan.d, n=n, m=m, C=c**plan.d, q=plan.q)
        report = validate_regime(params)
        closed = deviation_bound(params, gamma_dev)
        here = [r for r in records if r.n == n]
        for scale in plan.threshold_scales:
            k_lo, k_hi = deviation_thresholds(plan.d, n, m, scale)
            low_hits = sum(1 for r in here if r.min_count <= k_lo)
            high_hits = sum(1 for r in here if r.max_count >= k_hi)
            count = len(here)
            union = float(
                deviation_union_bound(
                    params, 2.0 ** (plan.d + 5), threshold_scale=scale
                )
            )
            rows.append(
                DeviationRow(
                    n=n,
                    m=m,
                    c=c,
                    threshold_scale=scale,
                    regime_ok=report.ok,
                    exploratory=(not report.ok) or scale != 1.0,
                    trials=count,
                    freq_low=low_hits / count if count else 0.0,
                    freq_high=high_hits / count if count else 0.0,
                    union_bound=union,
                    closed_form=closed,
                )
            )
    return StudyResult("deviation", plan, tuple(records), tuple(rows))


def scaling_study(plan: ExperimentPlan, jobs: int = 1) -> StudyResult:
    """Pipeline constant per trial; summary max of Lip(g)/(log n)^q per n.

    Certificates are re-verified from scratch inside each trial.  Trials
    whose counts have an empty cell are recorded with status zero-cell and
    excluded from the ratio, not resampled.
    """
    args: list[tuple] = []
    setups = []
    for i, n in enumerate(plan.n_list):
        c = plan_c(plan, i)
        level = level_for(n, plan.q)
        setups.append((n, c, level))
        for t in range(plan.trials):
            args.append((plan.d, n, t, derive_seed(plan.master_seed, n, t), c, level))
    records = sorted(_run_tasks(_scaling_task, args, jobs), key=lambda r: (r.n, r.trial))

    rows = []
    for n, c, level in setups:
        here = [r for r in records if r.n == n]
        lips = [r.lipschitz for r in here if r.lipschitz is not None]
        max_lip = max(lips) if lips else None
        ratio = None if max_lip is None else max_lip / math.log2(n) ** plan.q
        rows.append(
            ScalingRow(
                n=n,
                c=c,
                level=level,
                trials=len(here),
                rejections=sum(1 for r in here if r.status == "zero-cell"),
                max_lipschitz=max_lip,
                max_ratio=ratio,
            )
        )
    return StudyResult("scaling", plan, tuple(records), tuple(rows))
