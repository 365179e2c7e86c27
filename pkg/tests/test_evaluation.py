import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import exhaustive_f1_scan, kappa_direct, pairwise_auc, random_set
from qsbd.errors import EmptyConfusion, SingleCity, SingleClassEvalSet, TooFewPerClass
from qsbd.evaluation import (aggregate_folds, auroc, cohen_kappa, evaluate, leave_one_city_out,
                             pr_best_f1_threshold, stratified_kfold)


# ---------------------------------------------------------------- AUROC

def test_auroc_examples():
    assert auroc([0.9, 0.1], [1, 0]) == 1.0
    assert auroc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5


def test_auroc_matches_pairwise_oracle():
    rng = np.random.default_rng(0)
    for i in range(200):
        s, y = random_set(rng, ties=i % 2 == 0)
        assert abs(auroc(s, y) - pairwise_auc(s.tolist(), y.tolist())) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_auroc_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    s, y = random_set(rng, ties=True)
    assert auroc(np.exp(3 * s) - 7, y) == pytest.approx(auroc(s, y), abs=1e-12)


def test_auroc_single_class():
    with pytest.raises(SingleClassEvalSet):
        auroc([0.1, 0.2], [1, 1])


# ---------------------------------------------------------------- best F1

def test_best_f1_worked_example():
    t, p, r, f1 = pr_best_f1_threshold([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0])
    assert t == 0.7
    assert p == pytest.approx(2 / 3) and r == 1.0 and f1 == pytest.approx(0.8)


def test_best_f1_separated_takes_largest_threshold():
    t, p, r, f1 = pr_best_f1_threshold([0.2, 0.3, 0.8, 0.9], [0, 0, 1, 1])
    assert (t, p, r, f1) == (0.8, 1.0, 1.0, 1.0)


def test_best_f1_matches_exhaustive_scan_exactly():
    rng = np.random.default_rng(1)
    for i in range(200):
        s, y = random_set(rng, ties=i % 3 == 0)
        got = pr_best_f1_threshold(s, y)
        want = exhaustive_f1_scan(s.tolist(), y.tolist())
        assert got == (want[0], float(want[1]), float(want[2]), float(want[3]))


def test_best_f1_dominates_every_threshold():
    rng = np.random.default_rng(2)
    s, y = random_set(rng, n=80, ties=True)
    f1 = pr_best_f1_threshold(s, y)[3]
    for t in np.unique(s):
        assert evaluate(s, y, t).f1 <= f1 + 1e-15


def test_best_f1_single_class():
    with pytest.raises(SingleClassEvalSet):
        pr_best_f1_threshold([0.1, 0.9], [0, 0])


# ---------------------------------------------------------------- kappa

def test_kappa_examples():
    assert cohen_kappa(5, 0, 0, 7) == 1.0
    assert cohen_kappa(1, 1, 1, 1) == 0.0
    assert abs(cohen_kappa(9, 1, 2, 88) - kappa_direct(9, 1, 2, 88)) <= 1e-12


def test_kappa_degenerate_marginals():
    assert cohen_kappa(10, 0, 0, 0) == 1.0   # p_e = 1, perfect agreement
    assert cohen_kappa(0, 10, 0, 0) == 0.0   # no observed and no chance agreement
    with pytest.raises(EmptyConfusion):
        cohen_kappa(0, 0, 0, 0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
def test_kappa_formula_and_symmetry(tp, fp, fn, tn):
    if tp + fp + fn + tn == 0:
        return
    k = cohen_kappa(tp, fp, fn, tn)
    assert -1.0 <= k <= 1.0
    assert cohen_kappa(tn, fn, fp, tp) == pytest.approx(k, abs=1e-12)
    n = tp + fp + fn + tn
    pe = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n)
    if pe != 1.0:
        assert abs(k - kappa_direct(tp, fp, fn, tn)) <= 1e-12


# ---------------------------------------------------------------- reports

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_report_invariants(seed):
    rng = np.random.default_rng(seed)
    s, y = random_set(rng, ties=seed % 2 == 0)
    rep = evaluate(s, y)
    assert rep.tp + rep.fp + rep.fn + rep.tn == len(y) == rep.n
    for v in (rep.precision, rep.recall, rep.f1, rep.auroc):
        assert 0.0 <= v <= 1.0
    if rep.precision + rep.recall > 0:
        assert rep.f1 == pytest.approx(2 * rep.precision * rep.recall / (rep.precision + rep.recall))


# ---------------------------------------------------------------- splits

def test_kfold_exact_counts():
    y = np.r_[np.ones(10, int), np.zeros(100, int)]
    for tr, te in stratified_kfold(y, 5, seed=3):
        assert y[te].sum() == 2 and (y[te] == 0).sum() == 20
        assert len(tr) + len(te) == 110


@settings(max_examples=60, deadline=None)
@given(st.integers(5, 60), st.integers(5, 300), st.integers(2, 5), st.integers(0, 1000))
def test_kfold_partition_and_balance(npos, nneg, k, seed):
    y = np.r_[np.ones(npos, int), np.zeros(nneg, int)]
    np.random.default_rng(seed).shuffle(y)
    if npos < k:
        return
    folds = stratified_kfold(y, k, seed)
    tests = np.concatenate([te for _, te in folds])
    assert np.array_equal(np.sort(tests), np.arange(len(y)))
    for tr, te in folds:
        assert not set(tr) & set(te)
        assert abs(y[te].sum() - npos / k) <= 1
    again = stratified_kfold(y, k, seed)
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(folds, again))


def test_kfold_too_few():
    with pytest.raises(TooFewPerClass):
        stratified_kfold([1, 1, 0, 0, 0, 0, 0], 5, 0)


def test_loco_structure():
    cities = np.array(["b", "a", "c", "a", "e", "d", "b", "c"])
    pairs = leave_one_city_out(cities)
    assert [p[0] for p in pairs] == ["a", "b", "c", "d", "e"]
    union = np.sort(np.concatenate([te for _, _, te in pairs]))
    assert np.array_equal(union, np.arange(len(cities)))
    for name, tr, te in pairs:
        assert set(cities[te]) == {name}
        assert name not in set(cities[tr])


def test_loco_single_city():
    with pytest.raises(SingleCity):
        leave_one_city_out(["x", "x"])


def test_aggregate_hand_statistics():
    reps = [{"f1": v} for v in (0.88, 0.89, 0.89, 0.88, 0.89)]
    agg = aggregate_folds(reps)["f1"]
    assert agg["mean"] == pytest.approx(0.886, abs=1e-12)
    assert agg["std"] == pytest.approx(math.sqrt(3e-5), abs=1e-12)
    assert agg["text"] == "0.886 ± 0.005"


def test_aggregate_identical_and_permutation():
    same = aggregate_folds([{"auroc": 0.9}] * 4)["auroc"]
    assert same["std"] == 0.0
    rng = np.random.default_rng(4)
    reps = [{"auroc": float(v), "f1": float(w)} for v, w in rng.random((6, 2))]
    a = aggregate_folds(reps)
    b = aggregate_folds(reps[::-1])
    assert a == b


def test_aggregate_needs_two():
    with pytest.raises(ValueError):
        aggregate_folds([{"f1": 0.5}])
