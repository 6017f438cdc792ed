import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffrank import tensor as T
from diffrank.losses import (
    LossConfig,
    aligned_loss,
    map_loss,
    recall_loss,
    sorter_l1_loss,
    spearman_loss,
    triplet_rank_loss,
)
from diffrank.metrics import GroupBatch, mean_average_precision, normalized_rank, recall_at_k, spearman
from diffrank.sorters import ExactSorter, HandcraftedSorter
from diffrank.tensor import ShapeError, backward, grad_check

exact = ExactSorter()
smooth = HandcraftedSorter(lam=5.0)


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(margin=-0.1)
    with pytest.raises(ValueError):
        LossConfig(aux_weight=-1)
    with pytest.raises(ValueError):
        LossConfig(aux_kind="huber")
    with pytest.raises(ValueError):
        LossConfig(aux_schedule="never")


def test_l1_examples():
    t = np.linspace(0, 1, 6)
    assert sorter_l1_loss(t, t).item() == 0.0
    assert sorter_l1_loss(t + 0.1, t).item() == pytest.approx(0.1, abs=1e-15)
    with pytest.raises(ShapeError):
        sorter_l1_loss(t, t[:-1])


def test_spearman_loss_zero_at_truth():
    gt = np.array([0.3, -1.0, 2.0, 0.5])
    # scores already equal to the normalised ranks of gt
    assert spearman_loss(normalized_rank(gt), gt, lambda s: s).item() == 0.0
    assert spearman_loss(gt * 3 + 1, gt, exact).item() == 0.0


def test_spearman_loss_shape_and_warning():
    with pytest.raises(ShapeError):
        spearman_loss(np.zeros(3), np.zeros(4), exact)
    with pytest.warns(RuntimeWarning):
        spearman_loss(np.array([0.1, 0.2, 0.3]), np.ones(3), exact)


def test_spearman_loss_batch_is_mean_of_groups():
    rng = np.random.default_rng(0)
    s, g = rng.normal(size=(4, 7)), rng.normal(size=(4, 7))
    whole = spearman_loss(s, g, smooth).item()
    parts = [spearman_loss(s[i], g[i], smooth).item() for i in range(4)]
    assert whole == pytest.approx(np.mean(parts), abs=1e-14)


def test_spearman_loss_is_affine_in_exact_correlation():
    # with exact ranks: loss = (1 - rho) * (d + 1) / (6 (d - 1))
    rng = np.random.default_rng(1)
    d = 9
    for _ in range(20):
        s, g = rng.normal(size=d), rng.normal(size=d)
        loss = spearman_loss(s, g, exact).item()
        assert loss == pytest.approx((1 - spearman(s, g)) * (d + 1) / (6 * (d - 1)), abs=1e-12)


def test_spearman_loss_reversal_is_worst_sign_flip():
    gt = np.arange(5.0)
    losses = {}
    for signs in itertools.product([1.0, -1.0], repeat=5):
        losses[signs] = spearman_loss(gt * np.array(signs), gt, exact).item()
    assert max(losses.values()) == losses[(-1.0,) * 5]
    assert losses[(1.0,) * 5] == 0.0


def test_map_loss_examples():
    assert map_loss([[0.9, 0.1, 0.8]], [[1, 0, 1]], exact).item() == 0.25
    with pytest.raises(ValueError):
        map_loss([[0.9, 0.1, 0.8]], [[0, 0, 0]], exact)
    with pytest.raises(ShapeError):
        map_loss([[0.9, 0.1]], [[0, 1, 1]], exact)


def test_map_loss_minimum_when_positives_on_top():
    labels = np.array([[1, 1, 0, 0, 0], [1, 0, 0, 0, 0]])
    scores = np.array([[5.0, 4.0, 1.0, 0.0, -1.0], [9.0, 1.0, 2.0, 3.0, 4.0]])
    # class 0: (0 + 1/4) / 2, class 1: 0
    assert map_loss(scores, labels, exact).item() == pytest.approx(0.0625, abs=1e-15)


def test_map_loss_monotone_invariance():
    rng = np.random.default_rng(2)
    s = rng.normal(size=(3, 10))
    lab = rng.integers(0, 2, size=(3, 10))
    lab[:, 0] = 1
    assert map_loss(s, lab, exact).item() == map_loss(np.exp(s) * 2 - 1, lab, exact).item()


@pytest.mark.parametrize("seed", range(10))
def test_map_loss_swaps_track_exact_map(seed):
    # swapping a positive above a negative never raises the loss and never lowers mAP
    rng = np.random.default_rng(seed)
    d = 10
    s = rng.permutation(d).astype(float)
    lab = np.zeros(d, dtype=int)
    lab[rng.choice(d, 4, replace=False)] = 1
    for _ in range(30):
        i, j = rng.choice(d, 2, replace=False)
        s2 = s.copy()
        s2[i], s2[j] = s[j], s[i]
        l1, l2 = map_loss([s], [lab], exact).item(), map_loss([s2], [lab], exact).item()
        m1, m2 = mean_average_precision([s], [lab]), mean_average_precision([s2], [lab])
        if l2 < l1:
            assert m2 >= m1
        s = s2 if rng.random() < 0.5 else s


def test_triplet_examples():
    col = np.array([3.0, 2.0, 1.0, 0.0])
    # exact normalised ranks are [0, 1/3, 2/3, 1]
    assert triplet_rank_loss(col, 0, 3, 0.2, exact).item() == 0.0
    assert triplet_rank_loss(np.array([1.0, 1.0, 0.0]), 0, 1, 0.2, lambda s: T.tensor([0.5, 0.5, 1.0])).item() == pytest.approx(0.2, abs=1e-15)
    with pytest.raises(ValueError):
        triplet_rank_loss(col, 1, 1, 0.2, exact)


def test_triplet_inactive_hinge_has_zero_gradient():
    x = T.tensor([5.0, 0.0, -5.0], requires_grad=True)
    backward(triplet_rank_loss(x, 0, 2, 0.2, smooth))
    assert np.all(x.grad == 0)


def brute_recall_loss(Y, pos, margin, ranks):
    d = len(Y)
    total = 0.0
    for i in range(d):
        r = ranks[i]
        vals = [margin + r[pos[i]] - r[c] for c in range(d) if c not in (pos[i], i)]
        total += max(0.0, max(vals))
    return total / d


@pytest.mark.parametrize("seed", range(10))
def test_recall_loss_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(8, 8))
    pos = rng.integers(0, 8, size=8)
    ranks = smooth(Y).data
    assert recall_loss(Y, pos, 0.2, smooth).item() == pytest.approx(brute_recall_loss(Y, pos, 0.2, ranks), abs=1e-12)


def test_recall_loss_examples():
    d = 5
    Y = np.eye(d) * 10
    assert recall_loss(Y, np.arange(d), 0.2, exact).item() == 0.0
    # one violating row: positive ranked last there
    Y2 = Y.copy()
    Y2[2] = np.array([4.0, 3.0, -1.0, 2.0, 1.0])
    pos = np.arange(d)
    pos_rank = 1.0
    # hardest negative is index 0 with normalised rank 0; hinge 0.2 + 1 - 0 = 1.2
    assert recall_loss(Y2, pos, 0.2, exact).item() == pytest.approx((0.2 + pos_rank) / d, abs=1e-15)
    with pytest.raises(ValueError):
        recall_loss(np.eye(2), [0, 1], 0.2, exact)
    with pytest.raises(ShapeError):
        recall_loss(np.ones((3, 4)), [0, 1, 2], 0.2, exact)


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_zero_recall_loss_implies_perfect_r1(seed):
    rng = np.random.default_rng(seed)
    d = 6
    Y = rng.normal(size=(d, d))
    pos = rng.integers(0, d, size=d)
    if recall_loss(Y, pos, 0.5 / (d - 1), exact).item() == 0.0:
        assert recall_at_k(GroupBatch(Y, pos), 1) == 1.0


def test_aligned_loss_schedule():
    main = T.tensor(1.5)
    s, t = np.array([0.0, 1.0]), np.array([1.0, 1.0])
    assert aligned_loss(main, s, t, weight=0.0).item() == 1.5
    assert aligned_loss(main, s, t, weight=2.0, epoch=0).item() == 2.5
    assert aligned_loss(main, s, t, weight=2.0, epoch=1).item() == 1.5
    assert aligned_loss(main, s, t, weight=2.0, aux="l2", schedule="always", epoch=5).item() == 2.5
    with pytest.raises(ValueError):
        aligned_loss(main, s, t, weight=-1.0)


def test_all_losses_non_negative():
    rng = np.random.default_rng(3)
    for _ in range(20):
        Y = rng.normal(size=(6, 6))
        pos = rng.integers(0, 6, size=6)
        lab = rng.integers(0, 2, size=(6, 6))
        lab[:, 0] = 1
        assert spearman_loss(Y, rng.normal(size=(6, 6)), smooth).item() >= 0
        assert map_loss(Y, lab, smooth).item() >= 0
        assert triplet_rank_loss(Y[0], 0, 1, 0.2, smooth).item() >= 0
        assert recall_loss(Y, pos, 0.2, smooth).item() >= 0


# gradients through the handcrafted sorter, away from hinge kinks


@pytest.mark.parametrize("seed", range(5))
def test_loss_gradients(seed):
    rng = np.random.default_rng(seed)
    d = 6
    gt = rng.normal(size=d)
    lab = np.array([[1, 0, 1, 0, 0, 1], [0, 1, 0, 0, 0, 0]])
    pos = rng.integers(0, d, size=d)
    assert grad_check(lambda x: spearman_loss(x, gt, smooth), rng.normal(size=d)) < 1e-4
    assert grad_check(lambda x: map_loss(x, lab, smooth), rng.normal(size=(2, d))) < 1e-4
    assert grad_check(lambda x: triplet_rank_loss(x, 0, 1, 0.9, smooth), rng.normal(size=d)) < 1e-4
    assert grad_check(lambda x: recall_loss(x, pos, 0.9, smooth), rng.normal(size=(d, d))) < 1e-4


def test_aligned_loss_gradient_is_weighted_sum():
    rng = np.random.default_rng(4)
    gt, tgt = rng.normal(size=5), rng.normal(size=5)
    x0 = rng.normal(size=5)

    def grad_of(f):
        x = T.tensor(x0, requires_grad=True)
        backward(f(x))
        return x.grad

    g_main = grad_of(lambda x: spearman_loss(x, gt, smooth))
    g_aux = grad_of(lambda x: T.mean(T.square(x - tgt)))
    g_both = grad_of(lambda x: aligned_loss(spearman_loss(x, gt, smooth), x, tgt, 0.3, aux="l2", schedule="always"))
    assert np.allclose(g_both, g_main + 0.3 * g_aux, atol=1e-14)
    assert grad_check(lambda x: aligned_loss(spearman_loss(x, gt, smooth), x, tgt, 0.3, aux="l2"), x0) < 1e-4
