from __future__ import annotations

import random
from fractions import Fraction

import pytest

from gridlip.constants import load_constants
from gridlip.errors import ValidationError, ZeroCellError
from gridlip.lattice import DyadicPartition, GridSpec, cell_counts, sample_configuration
from gridlip.transport import (
    Box,
    CellDensity,
    build_dyadic_transport,
    density_from_counts,
    evaluate,
    plan_from_json_dict,
    plan_to_json_dict,
    transport_metrics,
    verify_mass_preservation,
)

F = Fraction


def density(d: int, level: int, values: dict) -> CellDensity:
    return CellDensity(DyadicPartition(d, 2**level), values, level)


def random_positive_density(rng: random.Random, d: int, level: int) -> CellDensity:
    part = DyadicPartition(d, 2**level)
    cells = list(part.cells())
    raw = [F(rng.randint(1, 40), rng.randint(1, 8)) for _ in cells]
    total = sum(raw)
    size = len(cells)
    values = {cell: v * size / total for cell, v in zip(cells, raw)}
    return CellDensity(part, values, level)


def test_hand_example_boxes():
    rho = density(2, 1, {(0, 0): F(2), (1, 0): F(1), (0, 1): F(1, 2), (1, 1): F(1, 2)})
    plan = build_dyadic_transport(rho)
    assert plan.boxes[(0, 0)] == Box((F(0), F(0)), (F(5, 8), F(4, 5)))
    assert plan.boxes[(1, 0)] == Box((F(5, 8), F(0)), (F(1), F(2, 3)))
    assert plan.boxes[(0, 1)] == Box((F(0), F(4, 5)), (F(5, 8), F(1)))
    assert plan.boxes[(1, 1)] == Box((F(5, 8), F(2, 3)), (F(1), F(1)))


def test_hand_example_evaluate():
    rho = density(2, 1, {(0, 0): F(2), (1, 0): F(1), (0, 1): F(1, 2), (1, 1): F(1, 2)})
    plan = build_dyadic_transport(rho)
    assert evaluate(plan, (F(1, 4), F(1, 4))) == (F(5, 16), F(2, 5))


def test_hand_example_metrics():
    rho = density(2, 1, {(0, 0): F(2), (1, 0): F(1), (0, 1): F(1, 2), (1, 1): F(1, 2)})
    plan = build_dyadic_transport(rho)
    m = transport_metrics(plan)
    assert m.per_cell_lipschitz == F(8, 5)
    assert m.max_image_diameter == F(4, 5)
    assert m.coherence == 0


def test_uniform_density_gives_identity():
    for d, level in ((2, 1), (2, 2), (3, 1)):
        part = DyadicPartition(d, 2**level)
        rho = CellDensity(part, {cell: F(1) for cell in part.cells()}, level)
        plan = build_dyadic_transport(rho)
        k = 2**level
        for cell in part.cells():
            lo = tuple(F(p, k) for p in cell)
            hi = tuple(F(p + 1, k) for p in cell)
            assert plan.boxes[cell] == Box(lo, hi)
        m = transport_metrics(plan)
        assert m.per_cell_lipschitz == 1
        assert m.coherence == 0
        x = tuple(F(1, 3) for _ in range(d))
        assert evaluate(plan, x) == x


def test_mass_preservation_random_densities():
    rng = random.Random(404)
    for _ in range(60):
        d = rng.choice((2, 3))
        level = rng.choice((1, 2))
        if d == 3 and level == 2:
            level = 1
        rho = random_positive_density(rng, d, level)
        plan = build_dyadic_transport(rho)
        check = verify_mass_preservation(plan)
        assert check.ok, check
        size = 2 ** (level * d)
        for cell, box in plan.boxes.items():
            assert box.volume == rho.values[cell] / size


def test_mass_check_flags_tampering():
    rho = density(2, 1, {(0, 0): F(2), (1, 0): F(1), (0, 1): F(1, 2), (1, 1): F(1, 2)})
    plan = build_dyadic_transport(rho)
    bad = dict(plan.boxes)
    box = bad[(0, 0)]
    bad[(0, 0)] = Box(box.lo, (box.hi[0], box.hi[1] - F(1, 100)))
    tampered = type(plan)(plan.source, bad, plan.split_order)
    check = verify_mass_preservation(tampered)
    assert not check.ok
    assert check.cell == (0, 0)


def _cell_of(x):
    # right-closed dyadic cell of x at level 1
    from gridlip.rational import ceil_fraction

    return tuple(ceil_fraction(v * 2) - 1 for v in x)


def test_evaluate_maps_cell_points_into_its_box():
    rng = random.Random(7)
    for _ in range(20):
        d = rng.choice((2, 3))
        rho = random_positive_density(rng, d, 1)
        plan = build_dyadic_transport(rho)
        for _ in range(10):
            x = tuple(F(rng.randint(1, 64), 64) for _ in range(d))
            y = evaluate(plan, x)
            box = plan.boxes[_cell_of(x)]
            assert all(lo < yi <= hi for lo, yi, hi in zip(box.lo, y, box.hi))


def test_stretch_tracks_density_band():
    # densities within [1-s, 1+s], s <= 1/4, stretch no cell beyond (1+D*s)^level
    delta = load_constants().delta_stretch
    rng = random.Random(99)
    for d, level in ((2, 1), (2, 2), (3, 1)):
        part = DyadicPartition(d, 2**level)
        cells = list(part.cells())
        for s_num in (1, 2):
            s = F(s_num, 8)
            signs = [1 if i % 2 == 0 else -1 for i in range(len(cells))]
            rng.shuffle(signs)  # cell count is even, so the sum stays zero
            values = {cell: F(1) + sign * s for cell, sign in zip(cells, signs)}
            rho = CellDensity(part, values, level)
            plan = build_dyadic_transport(rho)
            m = transport_metrics(plan)
            allowed = (1.0 + delta * float(s)) ** level
            assert float(m.per_cell_lipschitz) <= allowed + 1e-12


def test_plan_json_round_trip():
    rng = random.Random(31)
    rho = random_positive_density(rng, 2, 2)
    plan = build_dyadic_transport(rho)
    data = plan_to_json_dict(plan)
    again = plan_from_json_dict(data)
    assert again.boxes == plan.boxes
    assert again.split_order == plan.split_order
    assert again.source.values == plan.source.values


def test_plan_json_rejects_malformed():
    rng = random.Random(32)
    plan = build_dyadic_transport(random_positive_density(rng, 2, 1))
    data = plan_to_json_dict(plan)
    broken = dict(data)
    broken["boxes"] = {}
    with pytest.raises(ValidationError):
        plan_from_json_dict(broken)
    tampered = plan_to_json_dict(plan)
    key = next(iter(tampered["boxes"]))
    tampered["boxes"][key] = dict(tampered["boxes"][key])
    tampered["boxes"][key]["hi"] = ["1/3", "1/3"]
    with pytest.raises(ValidationError):
        plan_from_json_dict(tampered)


def test_density_from_counts_requires_positive_cells():
    spec = GridSpec(2, 2, Fraction(3, 2))
    cfg = sample_configuration(spec, 1)
    counts = cell_counts(cfg, 4)
    with pytest.raises(ZeroCellError):
        density_from_counts(counts, 2)


def test_density_from_counts_matches_counts():
    spec = GridSpec(2, 4, Fraction(2))
    found = None
    for seed in range(200):
        cfg = sample_configuration(spec, seed)
        counts = cell_counts(cfg, 2)
        if counts.min_max()[0] > 0:
            found = counts
            break
    assert found is not None
    rho = density_from_counts(found, 4)
    # density value = count * k^d / n^d, mass = count / n^d
    for cell, cnt in found.counts.items():
        assert rho.values[cell] == F(cnt * 4, 16)
