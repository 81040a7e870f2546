import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from burstfd.boost import BoostConfig
from burstfd.errors import PreconditionError
from burstfd.evaluation import (FoldResult, build_report, compare, jackknife_ci, loso_cv,
                                mann_whitney_one_sided, roc_auc, roc_curve, sens_spec_at,
                                time_marginal_baseline, time_marginal_feature)

from oracles import enumerated_p, pairwise_auc


# ---------------------------------------------------------------- AUC


def test_auc_examples():
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    with pytest.raises(PreconditionError):
        roc_auc([0.1, 0.2], [1, 1])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 8), st.integers(0, 1)), min_size=2, max_size=100))
def test_auc_matches_pairwise_oracle(pairs):
    scores = [s / 8 for s, _ in pairs]
    labels = [y for _, y in pairs]
    if len(set(labels)) < 2:
        return
    assert roc_auc(scores, labels) == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)
    flipped = [1 - y for y in labels]
    assert roc_auc(scores, labels) + roc_auc(scores, flipped) == pytest.approx(1.0, abs=1e-12)
    transformed = [math.exp(3 * s) - 7 for s in scores]
    assert roc_auc(transformed, labels) == pytest.approx(roc_auc(scores, labels), abs=1e-12)


def test_roc_curve_endpoints_and_area():
    rng = np.random.default_rng(0)
    s = rng.random(50)
    y = (rng.random(50) < s).astype(int)
    fpr, tpr, _ = roc_curve(s, y)
    assert (fpr[0], tpr[0], fpr[-1], tpr[-1]) == (0, 0, 1, 1)
    assert np.trapezoid(tpr, fpr) == pytest.approx(roc_auc(s, y))


def test_sens_spec_examples():
    assert sens_spec_at([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == (1.0, 1.0)
    assert sens_spec_at([0.1, 0.2, 0.9, 0.8], [1, 1, 0, 0]) == (0.0, 0.0)
    assert sens_spec_at([0.6, 0.4, 0.7, 0.3], [1, 1, 0, 0]) == (0.5, 0.5)
    assert sens_spec_at([0.6, 0.4], [1, 1]) == (0.5, None)


# ---------------------------------------------------------------- jackknife


def test_jackknife_constant():
    assert jackknife_ci([0.7] * 9) == (0.7, 0.7, 0.7)


def test_jackknife_two_value_example():
    v = [0.0, 1.0] * 10
    lo, med, hi = jackknife_ci(v)
    # leave-one-out medians: ten 1s (drop a 0) and ten 0s (drop a 1)
    n = 20
    loo = np.array([1.0] * 10 + [0.0] * 10)
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    assert med == 0.5
    assert med - lo == pytest.approx(hi - med)
    assert hi - lo == pytest.approx(2 * norm.ppf(0.975) * se)
    assert se == pytest.approx(math.sqrt(4.75))


def test_jackknife_outlier_shrinks_ci():
    rng = np.random.default_rng(3)
    base = list(0.9 + 0.01 * rng.standard_normal(15))
    with_outlier = base + [0.2]
    w1 = np.ptp(jackknife_ci(with_outlier)[::2])
    w0 = np.ptp(jackknife_ci(base)[::2])
    assert w0 < w1


def test_jackknife_width_scales_inverse_sqrt_n():
    widths = {}
    for n in (8, 32, 128):
        v = norm.ppf((np.arange(n) + 0.5) / n)
        lo, _, hi = jackknife_ci(v)
        widths[n] = hi - lo
    for n in (32, 128):
        ratio = widths[8] / widths[n]
        assert abs(ratio / math.sqrt(n / 8) - 1) < 0.2


def test_jackknife_rejects_small():
    with pytest.raises(PreconditionError):
        jackknife_ci([1.0, 2.0])


# ---------------------------------------------------------------- Mann-Whitney


def test_mann_whitney_examples():
    assert mann_whitney_one_sided([1, 2, 3], [4, 5, 6]) == pytest.approx(1.0)
    assert mann_whitney_one_sided([4, 5, 6], [1, 2, 3]) == pytest.approx(0.05)
    assert mann_whitney_one_sided([1, 2, 3, 4], [1, 2, 3, 4]) >= 0.5


def test_mann_whitney_exact_matches_enumeration_exhaustively():
    rng = np.random.default_rng(0)
    for n_a in range(1, 10):
        for n_b in range(1, 11 - n_a):
            for _ in range(6):
                pooled = rng.permutation(n_a + n_b).astype(float)
                a, b = pooled[:n_a], pooled[n_a:]
                assert mann_whitney_one_sided(a, b) == pytest.approx(enumerated_p(a, b), abs=1e-12)


def test_mann_whitney_exact_vs_normal():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = rng.standard_normal(6), rng.standard_normal(6) + 0.5
        exact = mann_whitney_one_sided(a, b)
        # larger samples switch to the normal approximation; rebuild it here
        u = sum((x > y) + 0.5 * (x == y) for x in a for y in b)
        z = (u - 18 - 0.5) / math.sqrt(36 * 13 / 12)
        assert abs(exact - norm.sf(z)) < 0.02


def test_mann_whitney_normal_path_with_ties():
    a = [0.9, 0.9, 0.95, 1.0] * 5
    b = [0.5, 0.6, 0.9, 0.7] * 5
    p = mann_whitney_one_sided(a, b)
    assert 0 < p < 0.001


# ---------------------------------------------------------------- LOSO


def toy_corpus(n_records=4, per=40, seed=0, shift=2.0):
    rng = np.random.default_rng(seed)
    X, y, r = [], [], []
    for i in range(n_records):
        lab = rng.integers(0, 2, per)
        X.append(rng.standard_normal((per, 3)) + shift * lab[:, None])
        y.append(lab)
        r += [f"r{i}"] * per
    return np.vstack(X), np.concatenate(y), np.array(r)


def test_loso_folds_and_audit(monkeypatch):
    import burstfd.evaluation as ev

    X, y, r = toy_corpus(3)
    seen = []
    real_train = ev.train

    def audited(features, labels, weights, config, **kwargs):
        seen.append(features.copy())
        return real_train(features, labels, weights, config, **kwargs)

    monkeypatch.setattr(ev, "train", audited)
    folds = loso_cv(X, y, r, BoostConfig(n_trees=5))
    assert [f.record_id for f in folds] == ["r0", "r1", "r2"]
    for f, feats in zip(folds, seen):
        assert f.train_records == tuple(x for x in ("r0", "r1", "r2") if x != f.record_id)
        test_rows = X[r == f.record_id]
        assert feats.shape[0] == (r != f.record_id).sum()
        # no training row belongs to the held-out record
        assert not any((feats == row).all(axis=1).any() for row in test_rows)
        assert f.scores.size == f.labels.size == test_rows.shape[0]
        assert f.auc == roc_auc(f.scores, f.labels)


def test_loso_order_independent_and_oriented():
    X, y, r = toy_corpus(4, seed=1)
    perm = np.random.default_rng(0).permutation(y.size)
    a = loso_cv(X, y, r, BoostConfig(n_trees=10))
    b = loso_cv(X[perm], y[perm], r[perm], BoostConfig(n_trees=10))
    for fa, fb in zip(a, b):
        assert fa.record_id == fb.record_id
        assert fa.auc == pytest.approx(fb.auc)
    assert np.median([f.auc for f in a]) > 0.8  # scores are P(burst)


def test_loso_concurrent_matches_sequential():
    X, y, r = toy_corpus(4, seed=2)
    a = loso_cv(X, y, r, BoostConfig(n_trees=5))
    b = loso_cv(X, y, r, BoostConfig(n_trees=5), n_jobs=3)
    for fa, fb in zip(a, b):
        np.testing.assert_array_equal(fa.scores, fb.scores)


def test_loso_bias_only_fold_flagged():
    X = np.arange(12.0)[:, None]
    y = np.array([1] * 4 + [1] * 4 + [0] * 4)
    r = np.array(["a"] * 4 + ["b"] * 4 + ["c"] * 4)
    folds = loso_cv(X, y, r, BoostConfig(n_trees=2))
    assert [f.bias_only for f in folds] == [False, False, True]
    rep = build_report(folds)
    assert any("bias-only" in w for w in rep.warnings)


def test_loso_rejects_single_record():
    X, y, r = toy_corpus(1)
    with pytest.raises(PreconditionError):
        loso_cv(X, y, r)


def test_time_marginal_feature():
    assert np.all(time_marginal_feature(np.zeros((3, 64))) == 0)
    np.testing.assert_allclose(time_marginal_feature(np.ones((2, 64))), 64.0)


def fold(rid, auc):
    return FoldResult(rid, np.zeros(0), np.zeros(0), auc, 0.9, 0.9, (), False)


def test_report_and_comparison():
    proposed = [fold(f"r{i}", 0.95 + 0.005 * i) for i in range(6)]
    other = [fold(f"r{i}", 0.6 + 0.01 * i) for i in range(6)]
    rep = build_report(proposed, {"TM-TFD": other})
    assert rep.auc_ci_low <= rep.median_auc <= rep.auc_ci_high
    c = rep.comparisons[0]
    assert c.median_auc_diff == pytest.approx(np.median([0.35 - 0.005 * i for i in range(6)]))
    assert c.p_value == pytest.approx(mann_whitney_one_sided(
        [f.auc for f in proposed], [f.auc for f in other]))
    assert c.median_pct_diff > 0


def test_report_two_folds_warns():
    rep = build_report([fold("a", 0.9), fold("b", 0.8)])
    assert rep.median_auc == pytest.approx(0.85)
    assert math.isnan(rep.auc_ci_low)
    assert any(">= 3 folds" in w for w in rep.warnings)


def test_baseline_uses_energy_feature():
    X, y, r = toy_corpus(3, shift=0.0)
    X[y == 1] *= 3.0  # energy differs, mean does not
    folds = time_marginal_baseline(np.abs(X), y, r, BoostConfig(n_trees=10))
    assert len(folds) == 3
    res = compare("TM", folds, folds)
    assert res.median_auc_diff == 0.0
