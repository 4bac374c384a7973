from __future__ import annotations

import itertools
import math
from fractions import Fraction

import pytest
import scipy.stats

from gridlip.errors import ValidationError
from gridlip.lattice import (
    Configuration,
    DyadicPartition,
    GridSpec,
    assign_cell,
    cell_counts,
    sample_configuration,
    well_distributed_check,
)
from gridlip.rational import ceil_fraction


def test_assign_cell_hand_case():
    spec = GridSpec(2, 2, Fraction(3, 2))
    part = DyadicPartition(2, 2)
    assert assign_cell((3, 1), spec, part) == (1, 0)
    assert assign_cell((1, 1), spec, part) == (0, 0)
    assert assign_cell((3, 3), spec, part) == (1, 1)


def test_assign_cell_right_closed_boundary():
    # x/(cn) = p/k lands in cell p-1: cells are half open on the left
    spec = GridSpec(2, 4, Fraction(2))
    part = DyadicPartition(2, 4)
    assert assign_cell((2, 2), spec, part) == (0, 0)
    assert assign_cell((3, 2), spec, part) == (1, 0)
    assert assign_cell((8, 8), spec, part) == (3, 3)


def test_assign_cell_matches_fraction_oracle():
    for c in (Fraction(1), Fraction(3, 2), Fraction(7, 5), Fraction(4)):
        for n, k in ((2, 2), (4, 2), (4, 4), (3, 2)):
            spec = GridSpec(2, n, c)
            part = DyadicPartition(2, k)
            for x in range(1, spec.extent + 1):
                for y in range(1, spec.extent + 1):
                    expect = tuple(
                        ceil_fraction(Fraction(v) * k / (c * n)) - 1 for v in (x, y)
                    )
                    assert assign_cell((x, y), spec, part) == expect


def test_grid_spec_validation():
    with pytest.raises(ValidationError):
        GridSpec(1, 2, Fraction(2))
    with pytest.raises(ValidationError):
        GridSpec(2, 2, Fraction(1, 2))
    with pytest.raises(ValidationError):
        GridSpec(2, 2, 1.5)  # floats are not accepted as scales


def test_configuration_validation():
    spec = GridSpec(2, 2, Fraction(3, 2))
    with pytest.raises(ValidationError):
        Configuration(spec, ((1, 1), (1, 1), (2, 2), (3, 3)))
    with pytest.raises(ValidationError):
        Configuration(spec, ((0, 1), (1, 2), (2, 2), (3, 3)))
    with pytest.raises(ValidationError):
        Configuration(spec, ((1, 1), (2, 2), (3, 3)))


def test_sampling_shape_and_determinism():
    spec = GridSpec(2, 4, Fraction(5, 2))
    a = sample_configuration(spec, 7)
    b = sample_configuration(spec, 7)
    assert a.points == b.points
    assert len(a.points) == 16
    assert len(set(a.points)) == 16
    assert all(1 <= v <= spec.extent for p in a.points for v in p)
    assert sample_configuration(spec, 8).points != a.points


def test_sampling_frozen_regression():
    cfg = sample_configuration(GridSpec(2, 2, Fraction(3, 2)), 123)
    assert cfg.points == ((1, 1), (2, 1), (2, 2), (3, 3))


def test_sampling_tight_capacity_returns_whole_grid():
    spec = GridSpec(2, 3, Fraction(1))
    cfg = sample_configuration(spec, 0)
    assert cfg.points == tuple(itertools.product((1, 2, 3), repeat=2))


def test_sampling_uniformity_chi_square():
    # occupancy of the level-1 cells; sampling without replacement only
    # shrinks the variance, so the multinomial chi-square cut is conservative
    spec = GridSpec(2, 32, Fraction(2))
    cfg = sample_configuration(spec, 2024)
    counts = cell_counts(cfg, 2)
    observed = [counts.counts.get(cell, 0) for cell in counts.partition.cells()]
    expected = len(cfg.points) / 4
    stat = sum((o - expected) ** 2 / expected for o in observed)
    assert stat < scipy.stats.chi2.ppf(0.9999, df=3)


def test_cell_counts_against_direct_recount():
    spec = GridSpec(2, 4, Fraction(3, 2))
    cfg = sample_configuration(spec, 5)
    for k in (1, 2, 4):
        counts = cell_counts(cfg, k)
        part = DyadicPartition(2, k)
        direct: dict[tuple[int, ...], int] = {}
        for p in cfg.points:
            cell = assign_cell(p, spec, part)
            direct[cell] = direct.get(cell, 0) + 1
        assert dict(counts.counts) == direct
        assert counts.total == 16


def test_well_distributed_thresholds():
    spec = GridSpec(2, 2, Fraction(3, 2))
    cfg = Configuration(spec, ((1, 1), (1, 2), (2, 1), (2, 2)))
    counts = cell_counts(cfg, 2)
    res = well_distributed_check(counts, 2, Fraction(1, 2), Fraction(2))
    assert res.ok
    assert res.lo_threshold == Fraction(1, 2)
    assert res.hi_threshold == Fraction(2)
    assert res.min_count == res.max_count == 1
    # tighten the band until the same counts fail
    res = well_distributed_check(counts, 2, Fraction(3, 2), Fraction(2))
    assert not res.ok


def test_json_round_trip():
    spec = GridSpec(3, 2, Fraction(7, 4))
    cfg = sample_configuration(spec, 11)
    again = Configuration.from_json(cfg.to_json())
    assert again.spec == cfg.spec
    assert again.points == cfg.points
    with pytest.raises(ValidationError):
        Configuration.from_json("{\"d\": 2}")


def test_binary_round_trip():
    spec = GridSpec(2, 4, Fraction(9, 4))
    cfg = sample_configuration(spec, 13)
    blob = cfg.to_binary()
    assert blob[:4] == b"FGCF"
    again = Configuration.from_binary(blob, spec.c)
    assert again.spec == cfg.spec
    assert again.points == cfg.points
    with pytest.raises(ValidationError):
        Configuration.from_binary(b"XXXX" + blob[4:], spec.c)
    with pytest.raises(ValidationError):
        Configuration.from_binary(blob[:10], spec.c)


def test_scaled_points_land_in_unit_cube():
    spec = GridSpec(2, 4, Fraction(3, 2))
    cfg = sample_configuration(spec, 3)
    for p in cfg.scaled_points():
        assert all(Fraction(0) < v <= 1 for v in p)
