import numpy as np

from critdim.rng import PRNG_NAME, PRNG_VERSION, mix64, replicate_seed, standard_normals, uniforms


def test_golden_values():
    assert PRNG_NAME == "philox4x64-10+ndtri" and PRNG_VERSION == 1
    assert mix64(0) == 0
    assert mix64(1) == 6238072747940578789
    assert replicate_seed(42, 64, 8, 0) == 11805667188492605735
    assert replicate_seed(20261015, 1024, 32, 7) == 14104746939646813034
    assert uniforms(42, 3).tolist() == [0.8201981478608877, 0.189245624086455, 0.8676608148821463]


def test_replicate_seed_properties():
    assert replicate_seed(1, 2, 3, 4) == replicate_seed(1, 2, 3, 4)
    seeds = {replicate_seed(9, 1024, 32, i) for i in range(10_000)}
    assert len(seeds) == 10_000
    assert replicate_seed(9, 1024, 32, 0) != replicate_seed(9, 1024, 34, 0)
    assert all(0 <= s < 2**64 for s in list(seeds)[:100])


def test_uniforms_open_interval_and_prefix_stable():
    u = uniforms(3, 10_000)
    assert u.min() > 0.0 and u.max() < 1.0
    assert np.array_equal(uniforms(3, 5), u[:5])
    z = standard_normals(3, 5)
    assert np.all(np.isfinite(z))
