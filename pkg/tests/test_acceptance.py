"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL verdict line (collected again in the
terminal summary), asserts its substance, and asserts its wall-clock budget,
so a green run also certifies the advertised runtimes on this machine.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import math
import random
import time
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path

from conftest import record_acceptance

import gridlip
from gridlip.constants import load_constants
from gridlip.experiments import (
    ExperimentPlan,
    deviation_study,
    deviation_thresholds,
    scaling_study,
)
from gridlip.lattice import (
    Configuration,
    DyadicPartition,
    GridSpec,
    cell_counts,
    sample_configuration,
)
from gridlip.matching import (
    BijectionCertificate,
    build_instance,
    solve_matching,
    verify_certificate,
)
from gridlip.rational import floor_root
from gridlip.rng import derive_seed
from gridlip.solver import bounds_report
from gridlip.stats import (
    DeviationParams,
    bonnet_tail_bounds,
    deviation_bound,
    gamma_exponent,
    gamma_lower_bound_high,
    gamma_lower_bound_low,
    hypergeom_tail,
    stirling_sandwich_log2,
    tail_validation_grid,
    validate_regime,
)
from gridlip.transport import (
    CellDensity,
    build_dyadic_transport,
    density_from_counts,
    verify_mass_preservation,
)

F = Fraction


@contextmanager
def criterion(num: int, name: str, limit: float):
    t0 = time.perf_counter()
    failed = False
    try:
        yield
    except BaseException:
        failed = True
        raise
    finally:
        elapsed = time.perf_counter() - t0
        verdict = "PASS" if not failed and elapsed < limit else "FAIL"
        line = f"ACCEPTANCE {num} {name}: {verdict} [{elapsed:.1f}s / {limit:.0f}s]"
        print(line)
        record_acceptance(line)
    if elapsed >= limit:
        raise AssertionError(f"exceeded the {limit:.0f}s budget: {elapsed:.1f}s")


def test_acceptance_1_binomial_sandwich():
    with criterion(1, "binomial sandwich p <= 2000", limit=30.0):
        log2 = math.log2
        row = [1]
        for p in range(1, 2001):
            prev = row
            row = [1] * (p + 1)
            for q in range(1, p):
                row[q] = prev[q - 1] + prev[q]
            for q in range(p + 1):
                lo, hi = stirling_sandwich_log2(p, q)
                exact = log2(row[q])
                # strict containment, no tolerance
                if not lo < exact < hi:
                    raise AssertionError(f"C({p},{q}) escapes ({lo}, {hi})")


def test_acceptance_2_hypergeometric_tail_domination():
    with criterion(2, "hypergeometric tail domination", limit=300.0):
        gamma = load_constants().gamma_tail
        assert gamma <= 1e3
        grid = tail_validation_grid()
        assert len(grid) >= 500
        assert all(p.sizeX <= 4096 for p in grid)
        balanced = 0
        for p in grid:
            q = dataclasses.replace(p, Gamma=gamma)
            bound_lo, bound_hi = bonnet_tail_bounds(q)
            top = min(q.N, q.sizeY)
            lo_cut = math.floor(q.a * q.N / q.M)
            hi_cut = math.ceil(q.b * q.N / q.M)
            exact_lo = hypergeom_tail(q.sizeX, q.sizeY, q.N, 0, min(lo_cut, top))
            exact_hi = (
                hypergeom_tail(q.sizeX, q.sizeY, q.N, hi_cut, top)
                if hi_cut <= top
                else F(0)
            )
            assert float(exact_lo) <= bound_lo, (q, float(exact_lo), bound_lo)
            assert float(exact_hi) <= bound_hi, (q, float(exact_hi), bound_hi)
            floor_low = gamma_lower_bound_low(q.sizeX, q.N, q.a, q.delta)
            for k in range(0, min(lo_cut, top) + 1):
                assert gamma_exponent(q.sizeX, q.sizeY, q.N, k) >= floor_low - 1e-12
            floor_high = gamma_lower_bound_high(q.sizeX, q.N, q.b, q.delta)
            for k in range(hi_cut, top + 1):
                assert gamma_exponent(q.sizeX, q.sizeY, q.N, k) >= floor_high - 1e-12
            if (q.N * q.sizeY) % q.sizeX == 0:
                k_star = q.N * q.sizeY // q.sizeX
                if k_star <= top:
                    assert abs(gamma_exponent(q.sizeX, q.sizeY, q.N, k_star)) <= 1e-12
                    balanced += 1
        assert balanced >= 400


_CORPUS_SHAPES = tuple(
    (d, n, level) for d in (2, 3) for n in (2, 4, 8) for level in (1, 2)
)
_CORPUS_CS = (F(1), F(5, 4), F(3, 2), F(2))
_CORPUS_SIZE = 1008


def _corpus_instance(t: int):
    d, n, level = _CORPUS_SHAPES[t % len(_CORPUS_SHAPES)]
    c = _CORPUS_CS[(t // len(_CORPUS_SHAPES)) % len(_CORPUS_CS)]
    config = sample_configuration(GridSpec(d, n, c), derive_seed(31, d * 1000 + n, t))
    return config, level


def _random_positive_density(rng: random.Random, d: int, level: int) -> CellDensity:
    part = DyadicPartition(d, 2**level)
    cells = list(part.cells())
    raw = [F(rng.randint(1, 60), rng.randint(1, 9)) for _ in cells]
    total = sum(raw)
    values = {cell: v * len(cells) / total for cell, v in zip(cells, raw)}
    return CellDensity(part, values, level)


def test_acceptance_3_exact_mass_transport():
    with criterion(3, "exact mass transport", limit=60.0):
        rng = random.Random(20260819)
        built = 0
        for t in range(_CORPUS_SIZE):
            config, level = _corpus_instance(t)
            counts = cell_counts(config, 1 << level)
            if counts.min_max()[0] > 0:
                rho = density_from_counts(counts, config.spec.n)
            else:
                rho = _random_positive_density(rng, config.spec.d, level)
            plan = build_dyadic_transport(rho)
            check = verify_mass_preservation(plan)
            assert check.ok is True, check
            for box in plan.boxes.values():
                assert all(isinstance(x, Fraction) for x in box.lo + box.hi)
            built += 1
        assert built >= 1000
        # a flat density moves nothing: every image box is its own cell
        for d in (2, 3):
            for level in (1, 2):
                m = 1 << level
                part = DyadicPartition(d, m)
                rho = CellDensity(part, {cell: F(1) for cell in part.cells()}, level)
                plan = build_dyadic_transport(rho)
                for cell, box in plan.boxes.items():
                    assert box.lo == tuple(F(i, m) for i in cell)
                    assert box.hi == tuple(F(i + 1, m) for i in cell)


def _recheck_certificate(cert, config, plan, radius: Fraction) -> None:
    """Bijectivity and membership, re-derived from the window definition."""
    spec = config.spec
    n, d = spec.n, spec.d
    k = plan.source.partition.k
    s = spec.scale
    assert sorted(x for x, _ in cert.pairs) == list(config.points)
    targets = [y for _, y in cert.pairs]
    assert len(set(targets)) == len(targets)
    for x, y in cert.pairs:
        cell = tuple(math.ceil(F(x_a) * k / s) - 1 for x_a in x)
        box = plan.boxes[cell]
        for axis in range(d):
            lo = max(1, math.ceil(n * (box.lo[axis] - radius)))
            hi = min(n, math.floor(n * (box.hi[axis] + radius)))
            assert lo <= y[axis] <= hi, (x, y, axis, lo, hi)


def test_acceptance_4_matching_feasible_at_radius_one_over_n():
    with criterion(4, "matching feasible at radius 1/n", limit=120.0):
        solved = 0
        for t in range(_CORPUS_SIZE):
            config, level = _corpus_instance(t)
            counts = cell_counts(config, 1 << level)
            if counts.min_max()[0] == 0:
                continue
            plan = build_dyadic_transport(density_from_counts(counts, config.spec.n))
            radius = F(1, config.spec.n)
            outcome = solve_matching(build_instance(config, plan, radius))
            assert isinstance(outcome, BijectionCertificate), (t, outcome)
            assert verify_certificate(outcome, config, plan) == []
            _recheck_certificate(outcome, config, plan, radius)
            solved += 1
        assert solved >= 500


def test_acceptance_5_bound_sandwich():
    with criterion(5, "lower/brute/upper sandwich", limit=300.0):
        spec = GridSpec(2, 2, F(3, 2))
        population = sorted(itertools.product(range(1, spec.extent + 1), repeat=2))
        total = 0
        for subset in itertools.combinations(population, 4):
            report = bounds_report(Configuration(spec, tuple(subset)), brute=True)
            assert report.brute is not None
            assert report.lower <= report.brute + 1e-12
            assert report.brute_sq <= report.upper_sq
            total += 1
        assert total == 126

        shapes = ((2, 2), (2, 3), (3, 2))  # n^d of 4, 9, 8
        cs = (F(1), F(5, 4), F(3, 2), F(7, 4), F(2))
        for t in range(100):
            d, n = shapes[t % len(shapes)]
            c = cs[t % len(cs)]
            config = sample_configuration(GridSpec(d, n, c), derive_seed(53, d * 10 + n, t))
            report = bounds_report(config, brute=True)
            assert report.brute is not None
            assert report.lower <= report.brute + 1e-12
            assert report.brute_sq <= report.upper_sq

        quadrant = Configuration(GridSpec(2, 2, F(2)), ((1, 1), (1, 3), (3, 1), (3, 3)))
        report = bounds_report(quadrant, brute=True)
        assert report.upper_sq == F(1, 4)
        assert report.brute_sq == F(1, 4)


def test_acceptance_6_deviation_frequencies():
    with criterion(6, "deviation frequencies vs union bounds", limit=600.0):
        trials = 1000
        scales = (1.0, 0.0033)
        gamma_dev = load_constants().gamma_dev
        literal = ExperimentPlan(
            d=2, n_list=(64, 128, 256), q=2.0, c_strategy="fixed",
            c_values=(F(297, 32), F(551, 64), F(2063, 256)),
            trials=trials, master_seed=2026, threshold_scales=scales,
        )
        results = [deviation_study(literal, gamma_dev=gamma_dev)]
        for c in (F(181, 128), F(2)):  # box volumes 2 and 4 per point
            plan = ExperimentPlan(
                d=2, n_list=(256,), q=2.0, c_strategy="fixed", c_values=(c,),
                trials=trials, master_seed=2026, threshold_scales=scales,
            )
            results.append(deviation_study(plan, gamma_dev=gamma_dev))

        for res in results:
            by_n: dict[int, list] = {}
            for r in res.records:
                by_n.setdefault(r.n, []).append(r)
            for row in res.rows:
                assert row.trials == trials
                k_lo, k_hi = deviation_thresholds(2, row.n, row.m, row.threshold_scale)
                hits = sum(
                    1 for r in by_n[row.n]
                    if r.min_count <= k_lo or r.max_count >= k_hi
                )
                freq = hits / trials
                stderr = math.sqrt(freq * (1.0 - freq) / trials)
                assert freq <= row.union_bound + 3.0 * stderr, (
                    row.n, row.threshold_scale, freq, row.union_bound, stderr,
                )

        # the stated parameter point: box volume 65 per point at n=256, m=4
        params = DeviationParams(d=2, n=256, m=4, C=F(65), q=2.0)
        report = validate_regime(params)
        assert report.ok, report.failures
        # its population equals the sampled one at c = 2063/256
        assert floor_root(F(65) * 256**2, 2) == 2063
        closed = deviation_bound(params, gamma_dev)
        for row in results[0].rows:
            if row.n == 256:
                assert row.freq_low + row.freq_high <= closed


def test_acceptance_7_scaling_against_frozen_baseline():
    with criterion(7, "scaling ratios vs frozen baseline", limit=600.0):
        path = Path(gridlip.__file__).parent / "_baselines.json"
        base = json.loads(path.read_text())["scaling"]
        plan = ExperimentPlan(
            d=2,
            n_list=tuple(base["n_list"]),
            q=base["q"],
            c_strategy=base["c_strategy"],
            trials=base["trials"],
            master_seed=base["master_seed"],
        )
        result = scaling_study(plan)
        assert len(result.rows) == len(base["n_list"])
        for row in result.rows:
            want = base["max_ratio"][str(row.n)]
            assert row.max_ratio is not None
            assert abs(row.max_ratio - want) <= 0.20 * want, (row.n, row.max_ratio, want)
            assert row.rejections == base["rejections"][str(row.n)]


def test_acceptance_8_byte_identical_csv(tmp_path):
    with criterion(8, "byte-identical CSV across runs and jobs", limit=120.0):
        splan = ExperimentPlan(
            d=2, n_list=(4, 8), q=2.0, c_strategy="fixed",
            c_values=(F(2), F(3, 2)), trials=15, master_seed=9,
        )
        first = scaling_study(splan).to_csv().encode()
        assert scaling_study(splan).to_csv().encode() == first
        assert scaling_study(splan, jobs=2).to_csv().encode() == first
        assert scaling_study(splan, jobs=3).to_csv().encode() == first

        dplan = ExperimentPlan(d=2, n_list=(8, 16), q=2.0, trials=20, master_seed=9)
        dfirst = deviation_study(dplan).to_csv().encode()
        assert deviation_study(dplan).to_csv().encode() == dfirst
        assert deviation_study(dplan, jobs=2).to_csv().encode() == dfirst

        # and end to end through the executable surface
        from gridlip.cli import run

        argv = ["deviation", "--d", "2", "--n", "8,16", "--trials", "20",
                "--master-seed", "9", "--format", "csv"]
        one = tmp_path / "one.csv"
        two = tmp_path / "two.csv"
        assert run(argv + ["--out", str(one)]) == 0
        assert run(argv + ["--jobs", "2", "--out", str(two)]) == 0
        assert one.read_bytes() == two.read_bytes()
