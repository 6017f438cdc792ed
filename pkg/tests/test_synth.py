import itertools

import numpy as np
import pytest

from diffrank.synth import (
    GenConfig,
    _evenly_spaced,
    batch_stream,
    dump_csv,
    load_csv,
    make_pair,
    make_rng,
    sample_scores,
    split_seed,
)


def test_config_validation():
    with pytest.raises(ValueError):
        GenConfig(d=1)
    with pytest.raises(ValueError):
        GenConfig(distribution="cauchy")
    with pytest.raises(ValueError):
        GenConfig(mixture_weights=(0.5, 0.5, 0.5, -0.5))
    with pytest.raises(ValueError):
        GenConfig(mixture_weights=(0.3, 0.3, 0.3, 0.3))
    assert GenConfig().d == 100


@pytest.mark.parametrize("seed", range(10))
def test_uniform_support(seed):
    y = sample_scores(GenConfig(d=200, seed=seed, distribution="uniform"), make_rng(seed))
    assert y.min() >= -1.0 and y.max() <= 1.0


def test_evenly_spaced_full_range_is_permuted_linspace():
    y = np.sort(np.linspace(-1.0, 1.0, 3))
    assert y.tolist() == [-1.0, 0.0, 1.0]
    rng = make_rng(3)
    v = _evenly_spaced(rng, 7)
    gaps = np.diff(np.sort(v))
    assert np.allclose(gaps, gaps[0])
    assert -1.0 <= v.min() < v.max() <= 1.0


def test_normal_mean_law_of_large_numbers():
    rng = make_rng(12345)
    cfg = GenConfig(d=1000, distribution="normal")
    total = np.concatenate([sample_scores(cfg, rng) for _ in range(1000)])
    assert total.size == 10**6
    assert abs(total.mean()) < 0.01


def test_mixture_values_bounded_except_pure_normal():
    cfg_only_segments = GenConfig(d=30, seed=1, mixture_weights=(0, 0, 0, 1))
    rng = make_rng(1)
    for _ in range(200):
        y = sample_scores(cfg_only_segments, rng)
        assert np.all(np.abs(y) <= 1.0)


@pytest.mark.parametrize("dist", ["uniform", "normal", "evenly_spaced", "mixture"])
def test_pairs_are_permutations_and_tie_free(dist):
    rng = make_rng(0)
    cfg = GenConfig(d=25, distribution=dist)
    for _ in range(50):
        y, rv = make_pair(cfg, rng)
        assert sorted(rv.ranks.tolist()) == list(range(25))
        assert np.unique(y).size == 25


def test_make_pair_is_deterministic():
    cfg = GenConfig(d=10, seed=42)
    (y1, r1), (y2, r2) = make_pair(cfg), make_pair(cfg)
    assert np.array_equal(y1, y2) and np.array_equal(r1.ranks, r2.ranks)


def test_evenly_spaced_normalized_ranks_are_exact_grid():
    d = 9
    y, rv = make_pair(GenConfig(d=d, seed=5, distribution="evenly_spaced"))
    assert np.array_equal(np.sort(rv.normalized), np.arange(d) / (d - 1))


def test_tie_guard_redraws(monkeypatch):
    import diffrank.synth as synth

    calls = iter([np.array([0.1, 0.1, 0.3]), np.array([0.1, 0.2, 0.3])])
    monkeypatch.setattr(synth, "_draw", lambda rng, fam, d: next(calls))
    y = sample_scores(GenConfig(d=3, distribution="uniform"), make_rng(0))
    assert y.tolist() == [0.1, 0.2, 0.3]


def test_batch_stream_shapes_and_determinism():
    cfg = GenConfig(d=20, seed=7)
    a = list(itertools.islice(batch_stream(cfg, 512), 2))
    b = list(itertools.islice(batch_stream(cfg, 512), 2))
    assert a[0][0].shape == (512, 20) and a[0][1].shape == (512, 20)
    for (ya, ra), (yb, rb) in zip(a, b):
        assert np.array_equal(ya, yb) and np.array_equal(ra, rb)
    c = next(batch_stream(GenConfig(d=20, seed=8), 512))
    assert not np.array_equal(a[0][0], c[0])
    with pytest.raises(ValueError):
        next(batch_stream(cfg, 0))


def test_epoch_size_from_stream():
    # 100 000 pairs per epoch at batch 512 is 196 batches (last one partial)
    cfg = GenConfig(d=4, seed=0, distribution="uniform")
    n = 0
    for ys, _ in itertools.islice(batch_stream(cfg, 512), 196):
        n += len(ys)
    assert n >= 100_000 > n - 512


def test_split_seed_children_distinct_and_stable():
    a = split_seed(99, 4)
    assert a == split_seed(99, 4)
    assert len(set(a)) == 4


def test_csv_round_trip(tmp_path):
    rng = make_rng(0)
    cfg = GenConfig(d=6, seed=0)
    ys = np.stack([make_pair(cfg, rng)[0] for _ in range(5)])
    from diffrank.metrics import normalized_rank

    path = tmp_path / "pairs.csv"
    dump_csv(path, ys, normalized_rank(ys))
    y2, r2 = load_csv(path)
    assert np.array_equal(y2, ys)
    assert np.array_equal(r2, normalized_rank(ys))
