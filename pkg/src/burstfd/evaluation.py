"""Leave-one-record-out evaluation and the summary statistics reported with it."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import comb
from scipy.stats import norm, rankdata

from .boost import BoostConfig, SortedColumns, predict_proba, sort_columns, train
from .errors import PreconditionError

EXACT_LIMIT = 12


@dataclass
class FoldResult:
    record_id: str
    scores: np.ndarray
    labels: np.ndarray
    auc: float | None
    sensitivity_at_half: float | None
    specificity_at_half: float | None
    train_records: tuple[str, ...] = ()
    bias_only: bool = False


@dataclass
class Comparison:
    name: str
    median_auc: float
    auc_ci: tuple[float, float]
    median_auc_diff: float
    diff_ci: tuple[float, float]
    median_pct_diff: float
    pct_diff_ci: tuple[float, float]
    p_value: float


@dataclass
class EvalReport:
    per_fold: list[FoldResult]
    median_auc: float
    auc_ci_low: float
    auc_ci_high: float
    median_sensitivity: float
    sensitivity_ci: tuple[float, float]
    median_specificity: float
    specificity_ci: tuple[float, float]
    comparisons: list[Comparison] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


# --------------------------------------------------------------------------
# statistics


def _binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.size != y.size:
        raise PreconditionError(f"{s.size} scores but {y.size} labels")
    if not np.all((y == 0) | (y == 1)):
        raise PreconditionError("labels must be 0 or 1")
    return s, y.astype(bool)


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve as the normalised Mann-Whitney U statistic.

    Equals the probability that a random positive outscores a random
    negative, with ties counted as one half.
    """
    s, y = _binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise PreconditionError("AUC is undefined unless both classes are present")
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(false-positive rate, true-positive rate, thresholds), one point per distinct score."""
    s, y = _binary(scores, labels)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    distinct = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tps = np.cumsum(y)[distinct]
    fps = (distinct + 1) - tps
    n_pos, n_neg = max(int(y.sum()), 1), max(int((~y).sum()), 1)
    return (np.r_[0.0, fps / n_neg], np.r_[0.0, tps / n_pos], np.r_[np.inf, s[distinct]])


def sens_spec_at(scores, labels, threshold: float = 0.5) -> tuple[float | None, float | None]:
    """Sensitivity and specificity with ``score >= threshold`` predicting class 1.

    A member whose denominator is empty is returned as ``None``.
    """
    s, y = _binary(scores, labels)
    pred = s >= threshold
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    sens = float((pred & y).sum() / n_pos) if n_pos else None
    spec = float((~pred & ~y).sum() / n_neg) if n_neg else None
    return sens, spec


def jackknife_ci(values, level: float = 0.95) -> tuple[float, float, float]:
    """(low, median, high) around the median via leave-one-out pseudo-values.

    The standard error is ``sqrt((n-1)/n * sum((m_i - mean(m))^2))`` over
    the leave-one-out medians ``m_i``; the interval is the full-sample median
    plus or minus the normal quantile times that error.
    """
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    if n < 3:
        raise PreconditionError(f"jackknife needs at least 3 values, got {n}")
    if not 0 < level < 1:
        raise PreconditionError(f"level must lie in (0, 1), got {level}")
    est = float(np.median(v))
    loo = np.array([np.median(np.delete(v, i)) for i in range(n)])
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    z = norm.ppf(0.5 + level / 2)
    return est - z * se, est, est + z * se


def _u_statistic(a: np.ndarray, b: np.ndarray) -> float:
    ranks = rankdata(np.concatenate([a, b]))
    return float(ranks[: a.size].sum() - a.size * (a.size + 1) / 2.0)


def _exact_upper_tail(u: float, n_a: int, n_b: int) -> float:
    # counts[k] = number of rank assignments giving U == k; built with the
    # recurrence f(n_a, n_b, k) = f(n_a - 1, n_b, k - n_b) + f(n_a, n_b - 1, k).
    table = {}

    def count(i: int, j: int) -> np.ndarray:
        if (i, j) in table:
            return table[(i, j)]
        if i == 0 or j == 0:
            res = np.zeros(i * j + 1)
            res[0] = 1.0
        else:
            res = np.zeros(i * j + 1)
            with_a = count(i - 1, j)
            res[j : j + with_a.size] += with_a
            without = count(i, j - 1)
            res[: without.size] += without
        table[(i, j)] = res
        return res

    counts = count(n_a, n_b)
    k = int(math.ceil(u - 1e-9))
    return float(counts[k:].sum() / comb(n_a + n_b, n_a, exact=True))


def mann_whitney_one_sided(sample_a, sample_b) -> float:
    """p-value for H1: ``sample_a`` is stochastically greater than ``sample_b``.

    Exact null distribution when ``n_a + n_b <= 12`` and there are no ties;
    otherwise a normal approximation with tie and continuity corrections.
    """
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise PreconditionError("both samples must be nonempty")
    n_a, n_b = a.size, b.size
    u = _u_statistic(a, b)
    pooled = np.concatenate([a, b])
    has_ties = np.unique(pooled).size < pooled.size
    if n_a + n_b <= EXACT_LIMIT and not has_ties:
        return _exact_upper_tail(u, n_a, n_b)
    n = n_a + n_b
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = np.sum(tie_counts**3 - tie_counts) / (n * (n - 1))
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return 1.0
    z = (u - n_a * n_b / 2.0 - 0.5) / math.sqrt(var)
    return float(norm.sf(z))


# --------------------------------------------------------------------------
# cross-validation


def _fold(record: str, X: np.ndarray, y: np.ndarray, groups: np.ndarray,
          weights: np.ndarray | None, config: BoostConfig, positive_is_burst: bool,
          sorted_all: SortedColumns) -> FoldResult:
    test = groups == record
    train_mask = ~test
    y_train = y[train_mask]
    bias_only = np.unique(y_train).size < 2
    target = y_train if positive_is_burst else 1 - y_train
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = train(X[train_mask], target,
                      None if weights is None else weights[train_mask], config,
                      presorted=sorted_all.subset(train_mask))
    proba = predict_proba(model, X[test])
    scores = proba if positive_is_burst else 1.0 - proba
    labels = y[test]
    auc = roc_auc(scores, labels) if np.unique(labels).size == 2 else None
    sens, spec = sens_spec_at(scores, labels, 0.5) if labels.size else (None, None)
    return FoldResult(record, scores, labels, auc, sens, spec,
                      tuple(sorted(set(groups[train_mask].tolist()))), bias_only)


def loso_cv(features, labels, record_ids, config: BoostConfig = BoostConfig(),
            weights=None, positive_is_burst: bool = False, n_jobs: int = 1
            ) -> list[FoldResult]:
    """Leave-one-record-out cross-validation.

    ``labels`` are 1 for burst and 0 for inter-burst (excluded slices must
    already be removed). With ``positive_is_burst=False`` the model is
    trained with inter-burst as its positive class, so
    ``config.positive_class_weight`` up-weights inter-burst; fold scores are
    always P(burst). Results come back sorted by record id.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, np.newaxis]
    y = np.asarray(labels).astype(int)
    groups = np.asarray(record_ids).astype(str)
    if not (X.shape[0] == y.size == groups.size):
        raise PreconditionError("features, labels and record ids differ in length")
    records = sorted(set(groups.tolist()))
    if len(records) < 2:
        raise PreconditionError("leave-one-out needs at least 2 records")
    w = None if weights is None else np.asarray(weights, dtype=float)
    sorted_all = sort_columns(X)  # every fold reuses one sort
    args = (X, y, groups, w, config, positive_is_burst, sorted_all)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            futures = [pool.submit(_fold, r, *args) for r in records]
            return [f.result() for f in futures]
    return [_fold(r, *args) for r in records]


def time_marginal_feature(features) -> np.ndarray:
    """Single energy feature per slice: the sum of its TFD values."""
    return np.asarray(features, dtype=float).sum(axis=1)


def time_marginal_baseline(features, labels, record_ids, config: BoostConfig = BoostConfig(),
                           **kwargs) -> list[FoldResult]:
    """LOSO with each slice reduced to its time-marginal feature."""
    return loso_cv(time_marginal_feature(features)[:, np.newaxis], labels, record_ids,
                   config, **kwargs)


def _fold_aucs(folds: Sequence[FoldResult]) -> dict[str, float]:
    return {f.record_id: f.auc for f in folds if f.auc is not None}


def _summary(values: Iterable[float], notes: list[str], what: str) -> tuple[float, float, float]:
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        notes.append(f"no folds with a defined {what}")
        return math.nan, math.nan, math.nan
    if v.size < 3:
        notes.append(f"{what}: confidence interval needs >= 3 folds, got {v.size}")
        m = float(np.median(v))
        return math.nan, m, math.nan
    return jackknife_ci(v)


def compare(name: str, proposed: Sequence[FoldResult], other: Sequence[FoldResult],
            notes: list[str] | None = None) -> Comparison:
    """Per-record AUC differences (proposed minus other) and a one-sided test.

    The percent difference is ``100 * (proposed - other) / other``; the
    p-value tests whether the proposed AUCs are stochastically greater.
    """
    notes = notes if notes is not None else []
    pa, oa = _fold_aucs(proposed), _fold_aucs(other)
    shared = sorted(set(pa) & set(oa))
    diffs = [pa[r] - oa[r] for r in shared]
    pct = [100.0 * (pa[r] - oa[r]) / oa[r] for r in shared if oa[r] > 0]
    lo, med, hi = _summary(oa.values(), notes, f"{name} AUC")
    dlo, dmed, dhi = _summary(diffs, notes, f"{name} AUC difference")
    plo, pmed, phi = _summary(pct, notes, f"{name} % difference")
    p = mann_whitney_one_sided(list(pa.values()), list(oa.values())) if pa and oa else math.nan
    return Comparison(name, med, (lo, hi), dmed, (dlo, dhi), pmed, (plo, phi), p)


def build_report(proposed: Sequence[FoldResult],
                 baselines: dict[str, Sequence[FoldResult]] | None = None) -> EvalReport:
    notes: list[str] = []
    lo, med, hi = _summary([f.auc for f in proposed], notes, "AUC")
    slo, smed, shi = _summary([f.sensitivity_at_half for f in proposed], notes, "sensitivity")
    clo, cmed, chi = _summary([f.specificity_at_half for f in proposed], notes, "specificity")
    for f in proposed:
        if f.bias_only:
            notes.append(f"fold {f.record_id}: training data had one class; bias-only model")
    comparisons = [compare(name, proposed, folds, notes) for name, folds in (baselines or {}).items()]
    return EvalReport(list(proposed), med, lo, hi, smed, (slo, shi), cmed, (clo, chi),
                      comparisons, notes)
