"""Fit and freeze the package's empirical constants.

Writes src/gridlip/_constants.json.  Everything here is deterministic: the
grids are fixed by the library, the corpora are seeded, and the fits are
bisections on monotone predicates, so rerunning the tool reproduces the
same file (up to the date stamp).

Constants:
  lambda_stirling  derived, e^2/(2 pi); recorded for provenance only.
  gamma_tail       least Gamma (x1.02 headroom) such that the closed-form
                   tail ceilings dominate the exact hypergeometric tails on
                   the full validation grid.
  gamma_dev        least Gamma such that the closed-form deviation ceiling
                   dominates the exact per-cell union bound on every
                   regime-valid small-population parameter point; if that
                   union is identically zero there (the stated thresholds
                   are extremely forgiving at small n), the tail constant is
                   reused, since the union's per-cell ingredients are the
                   same tail bounds.
  delta_stretch    least D (x1.05) with per_cell_lipschitz <= (1+D s)^l over
                   a fixed family of banded densities, values in [1-s, 1+s].
  c_hat            least K (x1.05) with Lip(g) m/(c n) <= (1+K(b-a))^l over
                   a seeded configuration corpus, [a,b] the realized
                   normalized count range.
"""

from __future__ import annotations

import json
import math
import subprocess
import sys
from dataclasses import replace
from datetime import date
from fractions import Fraction
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from gridlip.lattice import DyadicPartition, GridSpec, cell_counts, sample_configuration
from gridlip.rational import ceil_fraction, floor_fraction, floor_root
from gridlip.rng import derive_seed
from gridlip.solver import pipeline_upper_bound
from gridlip.stats import (
    LAMBDA_STIRLING,
    DeviationParams,
    bonnet_tail_bounds,
    deviation_bound,
    deviation_union_bound,
    hypergeom_tail,
    tail_validation_grid,
    validate_regime,
)
from gridlip.transport import CellDensity, build_dyadic_transport, transport_metrics

OUT = Path(__file__).resolve().parent.parent / "src" / "gridlip" / "_constants.json"


def bisect_min(ok, lo: float, hi: float, iters: int = 60) -> float:
    """Least x in [lo, hi] with ok(x), assuming ok is monotone increasing."""
    if not ok(hi):
        raise SystemExit(f"predicate fails even at {hi}")
    if ok(lo):
        return lo
    for _ in range(iters):
        mid = math.sqrt(lo * hi)  # geometric: the scale is unknown a priori
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def fit_gamma_tail() -> tuple[float, dict]:
    grid = tail_validation_grid()
    exact = []
    for p in grid:
        lo_cut = floor_fraction(p.a * p.N / p.M)
        hi_cut = ceil_fraction(p.b * p.N / p.M)
        top = min(p.N, p.sizeY)
        low = hypergeom_tail(p.sizeX, p.sizeY, p.N, 0, min(lo_cut, top))
        high = hypergeom_tail(p.sizeX, p.sizeY, p.N, hi_cut, top)
        exact.append((float(low), float(high)))

    def ok(gamma: float) -> bool:
        for p, (lo_x, hi_x) in zip(grid, exact):
            b_lo, b_hi = bonnet_tail_bounds(replace(p, Gamma=gamma))
            if b_lo < lo_x or b_hi < hi_x:
                return False
        return True

    fitted = bisect_min(ok, 1e-4, 1e3)
    frozen = fitted * 1.02
    assert ok(frozen)
    info = {
        "grid": "tail_validation_grid(size_max=4096)",
        "grid_size": len(grid),
        "fitted": fitted,
        "headroom": 1.02,
    }
    return frozen, info


def dev_validation_grid() -> list[DeviationParams]:
    """Regime-valid small-population points (exact union bound feasible).

    Per n the C window is pinched between the regime floor 1 + 2^(d+7)/log n
    and the population cap extent <= 100; only n in 4..7 leave room at d=2.
    """
    out = []
    for n in (4, 5, 6, 7):
        L = math.log2(n)
        c_min = Fraction(math.ceil((1.0 + 512.0 / L) * 4096), 4096)
        c_max = Fraction(10200, n * n)
        if c_min > c_max:
            continue
        for t in (Fraction(0), Fraction(1, 2), Fraction(1)):
            C = c_min + (c_max - c_min) * t
            for m in (2, 3, 4):
                p = DeviationParams(d=2, n=n, m=m, C=C, q=1.0)
                rep = validate_regime(p)
                if rep.ok and rep.sizeX <= 10_000:
                    out.append(p)
    return out


def fit_gamma_dev(gamma_tail: float) -> tuple[float, dict]:
    grid = dev_validation_grid()
    unions = [
        float(deviation_union_bound(p, Gamma=2.0 ** (p.d + 5), exact=True))
        for p in grid
    ]
    info: dict = {
        "grid": "dev_validation_grid(): regime-valid, sizeX <= 10^4",
        "grid_size": len(grid),
        "max_union": max(unions, default=0.0),
    }
    if not grid or max(unions) == 0.0:
        # stated thresholds vacuous at these n: any Gamma dominates; reuse
        # the tail constant rather than freezing an arbitrary number
        info["note"] = "union identically 0 on grid; reusing gamma_tail"
        return gamma_tail, info

    def ok(gamma: float) -> bool:
        return all(
            deviation_bound(p, gamma) >= u for p, u in zip(grid, unions)
        )

    fitted = bisect_min(ok, 1e-4, 1e3)
    frozen = fitted * 1.02
    assert ok(frozen)
    info.update(fitted=fitted, headroom=1.02)
    return frozen, info


def banded_densities():
    """Deterministic densities with values in [1-s, 1+s], total mass exact."""
    for d in (2, 3):
        for level in (1, 2, 3):
            if d == 3 and level == 3:
                continue  # 512 cells adds nothing the smaller cases miss
            k = 2**level
            part = DyadicPartition(d, k)
            cells = list(part.cells())
            for s in (Fraction(1, 8), Fraction(1, 4)):
                half = 1 + s
                other = 1 - s
                # checkerboard: exact zero-sum split
                values = {
                    cell: half if sum(cell) % 2 == 0 else other for cell in cells
                }
                yield CellDensity(part, values, level), s, level
                # single displaced pair, everything else flat
                values = {cell: Fraction(1) for cell in cells}
                values[cells[0]] = half
                values[cells[-1]] = other
                yield CellDensity(part, values, level), s, level


def fit_delta_stretch() -> tuple[float, dict]:
    worst = 0.0
    count = 0
    for rho, s, level in banded_densities():
        stretch = transport_metrics(build_dyadic_transport(rho)).per_cell_lipschitz
        count += 1
        if stretch > 1:
            need = (float(stretch) ** (1.0 / level) - 1.0) / float(s)
            worst = max(worst, need)
    frozen = worst * 1.05 if worst > 0 else 1.0
    return frozen, {"corpus": "banded_densities()", "corpus_size": count, "fitted": worst, "headroom": 1.05}


C_HAT_BANDS = (
    (Fraction(3, 4), Fraction(5, 4)),
    (Fraction(1, 2), Fraction(3, 2)),
    (Fraction(1, 4), Fraction(7, 4)),
)


def fit_c_hat() -> tuple[float, dict]:
    # banded statistic: a configuration counts toward band [a, b] when every
    # level-l cell count lies in [a, b] * n^d / m^d; the need for that band
    # is (ratio^(1/l) - 1) / (b - a), which stays conditioned as the band
    # cannot shrink with the data
    worst = 0.0
    count = 0
    for d in (2, 3):
        for n in (4, 8):
            for level in (1, 2):
                spec = GridSpec(d, n, Fraction(3, 2))
                for seed in range(60):
                    config = sample_configuration(
                        spec, derive_seed(90210, d, n, level, seed)
                    )
                    counts = cell_counts(config, 2**level)
                    mn, mx = counts.min_max()
                    if mn == 0:
                        continue
                    count += 1
                    result = pipeline_upper_bound(config, level)
                    m = 2**level
                    scale = Fraction(m) / (spec.c * n)
                    ratio = float(result.certificate.lipschitz_sq) ** 0.5 * float(scale)
                    if ratio <= 1.0:
                        continue
                    per_level = ratio ** (1.0 / level) - 1.0
                    cell_share = Fraction(n**d, m**d)
                    for a, b in C_HAT_BANDS:
                        if mn >= a * cell_share and mx <= b * cell_share:
                            worst = max(worst, per_level / float(b - a))
                            break  # only the tightest containing band counts
    frozen = worst * 1.10 if worst > 0 else 1.0
    return frozen, {
        "corpus": "seeded pipeline corpus d in {2,3}, n in {4,8}, l in {1,2}, 60 seeds",
        "corpus_size": count,
        "bands": [[str(a), str(b)] for a, b in C_HAT_BANDS],
        "fitted": worst,
        "headroom": 1.10,
    }


def git_commit() -> str:
    try:
        return subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True,
            text=True,
            cwd=Path(__file__).resolve().parent,
            check=True,
        ).stdout.strip()
    except Exception:
        return "unknown"


def main() -> None:
    gamma_tail, tail_info = fit_gamma_tail()
    print(f"gamma_tail = {gamma_tail:.6g}  ({tail_info})")
    gamma_dev, dev_info = fit_gamma_dev(gamma_tail)
    print(f"gamma_dev = {gamma_dev:.6g}  ({dev_info})")
    delta_stretch, stretch_info = fit_delta_stretch()
    print(f"delta_stretch = {delta_stretch:.6g}  ({stretch_info})")
    c_hat, chat_info = fit_c_hat()
    print(f"c_hat = {c_hat:.6g}  ({chat_info})")

    payload = {
        "lambda_stirling": LAMBDA_STIRLING,
        "gamma_tail": gamma_tail,
        "gamma_dev": gamma_dev,
        "delta_stretch": delta_stretch,
        "c_hat": c_hat,
        "provenance": {
            "date": date.today().isoformat(),
            "commit": git_commit(),
            "lambda_stirling": "derived: e^2/(2 pi), not fitted",
            "gamma_tail": tail_info,
            "gamma_dev": dev_info,
            "delta_stretch": stretch_info,
            "c_hat": chat_info,
        },
    }
    OUT.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
