from __future__ import annotations

from gridlip.rng import CounterRng, derive_seed, mix64, raw64

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def reference_stream(seed: int, count: int) -> list[int]:
    # textbook splitmix64, written out independently of the module under test
    out = []
    state = seed & MASK
    for _ in range(count):
        state = (state + GOLDEN) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append((z ^ (z >> 31)) & MASK)
    return out


def test_known_vector_seed_zero():
    assert raw64(0, 0) == 0xE220A8397B1DCDAF
    assert raw64(0, 1) == 0x6E789E6AA1B965F4
    assert raw64(0, 2) == 0x06C45D188009454F
    assert raw64(0, 3) == 0xF88BB8A8724C81EC


def test_counter_stream_matches_reference():
    for seed in (0, 1, 42, 2**64 - 1, 123456789):
        assert [raw64(seed, i) for i in range(40)] == reference_stream(seed, 40)


def test_raw64_is_pure():
    assert raw64(7, 5) == raw64(7, 5)
    assert raw64(7, 5) != raw64(7, 6)
    assert raw64(7, 5) != raw64(8, 5)


def test_mix64_range_and_sensitivity():
    seen = {mix64(z) for z in range(64)}
    assert len(seen) == 64
    for z in (0, 1, MASK):
        assert 0 <= mix64(z) <= MASK


def test_counter_rng_crosses_block_boundary():
    # small block forces several refills; stream must stay identical to raw64
    rng = CounterRng(99, block=8)
    got = [rng.next_raw() for _ in range(37)]
    assert got == [raw64(99, i) for i in range(37)]


def test_randbelow_bounds_and_determinism():
    a = CounterRng(5)
    b = CounterRng(5)
    va = [a.randbelow(10) for _ in range(200)]
    vb = [b.randbelow(10) for _ in range(200)]
    assert va == vb
    assert all(0 <= v < 10 for v in va)
    assert len(set(va)) == 10  # all residues reached in 200 draws


def test_randint_inclusive_range():
    rng = CounterRng(17)
    vals = [rng.randint(3, 6) for _ in range(100)]
    assert set(vals) <= {3, 4, 5, 6}
    assert {3, 6} <= set(vals)


def test_derive_seed_is_order_sensitive():
    assert derive_seed(7, 64, 0) != derive_seed(7, 0, 64)
    assert derive_seed(7, 64, 0) != derive_seed(8, 64, 0)
    assert 0 <= derive_seed(7, 64, 0) <= MASK


def test_derive_seed_frozen_values():
    # reproducibility contract: these must never move between releases
    assert derive_seed(7, 64, 0) == 6368337040181305460
    assert derive_seed(7, 0, 64) == 13861226450531219079
