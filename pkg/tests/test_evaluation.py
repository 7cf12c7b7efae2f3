import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hg4sm.embed import SkipgramConfig
from hg4sm.evaluation import (TABLE2_ORDER, ScoredExample, ablation_run, auc, confusion_metrics,
                              ordered_subsets)
from hg4sm.model import ModelConfig
from hg4sm.pipeline import build_artifacts
from hg4sm.synth import SynthConfig, generate
from hg4sm.train import TrainConfig, make_training_set, split_by_query


def brute_force_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


# scores on a coarse grid so ties are common and transforms stay exact
labeled = st.lists(st.tuples(st.integers(0, 20).map(lambda k: k / 20), st.integers(0, 1)),
                   min_size=2, max_size=30).filter(lambda xs: len({y for _, y in xs}) == 2)


def test_auc_examples():
    assert auc([0.9, 0.1], [1, 0]) == 1.0
    assert auc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5
    assert auc([ScoredExample(0.2, 1), ScoredExample(0.8, 0)]) == 0.0


def test_auc_matches_pair_count_on_five_by_five():
    rng = np.random.default_rng(0)
    for _ in range(20):
        scores = rng.random(10).round(1)
        labels = [1] * 5 + [0] * 5
        assert auc(scores, labels) == pytest.approx(brute_force_auc(scores, labels), abs=1e-12)


def test_auc_single_class_is_undefined():
    with pytest.raises(ValueError, match="AUC undefined"):
        auc([0.1, 0.2], [1, 1])


@settings(max_examples=100)
@given(labeled)
def test_auc_property_pair_count_and_monotone_invariance(xs):
    scores, labels = zip(*xs)
    ref = brute_force_auc(scores, labels)
    assert auc(scores, labels) == pytest.approx(ref, abs=1e-12)
    transformed = [(20 * s) ** 3 - 7 for s in scores]
    assert auc(transformed, labels) == pytest.approx(ref, abs=1e-12)


def _fixture():
    # TP=2, FP=1, FN=1, TN=6
    scores = [0.9, 0.7, 0.6, 0.2, 0.1, 0.1, 0.2, 0.3, 0.4, 0.05]
    labels = [1, 1, 0, 1, 0, 0, 0, 0, 0, 0]
    return scores, labels


def test_confusion_hand_arithmetic():
    r = confusion_metrics(*_fixture())
    assert (r.tp, r.fp, r.fn, r.tn) == (2, 1, 1, 6)
    assert r.acc == pytest.approx(0.8)
    assert r.prec == pytest.approx(2 / 3)
    assert r.recall == pytest.approx(2 / 3)
    assert r.f1 == pytest.approx(2 / 3)
    assert r.fnr == pytest.approx(1 / 3)
    assert r.fpr == pytest.approx(1 / 7)
    assert r.undefined == []


def test_threshold_extremes():
    scores, labels = _fixture()
    r = confusion_metrics(scores, labels, threshold=0.0)
    assert r.recall == 1.0 and r.fnr == 0.0
    r = confusion_metrics(scores, labels, threshold=1.01)
    assert r.recall == 0.0 and r.fpr == 0.0
    assert "prec" in r.undefined and "f1" in r.undefined


@settings(max_examples=100)
@given(labeled, st.floats(0, 1), st.randoms(use_true_random=False))
def test_confusion_invariants(xs, threshold, rnd):
    scores, labels = zip(*xs)
    r = confusion_metrics(scores, labels, threshold)
    assert r.tp + r.fp + r.fn + r.tn == len(xs)
    assert r.acc == pytest.approx((r.tp + r.tn) / len(xs))
    if r.tp + r.fn:
        assert r.fnr + r.recall == pytest.approx(1.0)
    if r.prec * r.recall:
        assert r.f1 == pytest.approx(2 * r.prec * r.recall / (r.prec + r.recall))
    shuffled = list(xs)
    rnd.shuffle(shuffled)
    s2, l2 = zip(*shuffled)
    assert confusion_metrics(s2, l2, threshold).to_dict() == r.to_dict()


def test_ordered_subsets_follow_table_order():
    got = ordered_subsets([{"rep", "int", "hin"}, {"hin"}, {"rep"}])
    assert got == [frozenset({"rep"}), frozenset({"hin"}), frozenset({"rep", "int", "hin"})]
    with pytest.raises(ValueError):
        ordered_subsets([set()])
    with pytest.raises(ValueError):
        ordered_subsets([{"cnn"}])


@pytest.fixture(scope="module")
def tiny_ablation():
    data = generate(SynthConfig(n_categories=3, queries_per_category=6, items_per_category=8,
                                vocab_per_category=5, clicks_per_query=3, seed=1))
    art = build_artifacts(data.log, skipgram=SkipgramConfig(dim=4, epochs=2, seed=1))
    tr, ho = split_by_query(make_training_set(art.refined, 1, 0), 0.3, 0)
    base = ModelConfig(d=4, len_q=3, len_i=6, h1=8, h2=4)
    tc = TrainConfig(epochs=2, batch_size=16)
    args = (art.refined, tr, ho, art.vocab, art.table.matrix, base, tc)
    return args


def test_ablation_has_seven_rows_in_table_order(tiny_ablation):
    mask = np.arange(len(tiny_ablation[2])) % 2 == 0
    res = ablation_run(*tiny_ablation, seeds=(0,), slices={"even": mask})
    assert [r["model"] for r in res.rows] == ["Rep", "Int", "HIN", "Rep+Int", "Int+HIN", "Rep+HIN", "HG4SM"]
    assert [m["model"] for m in res.medians] == [r["model"] for r in res.rows]
    assert all("auc@even" in r for r in res.rows)
    tsv = res.to_tsv().splitlines()
    assert tsv[0].split("\t") == ["model", "seed", "auc", "acc", "prec", "recall", "f1", "fnr", "fpr"]
    assert len(tsv) == 1 + 7 + 7
    assert len(json.loads(res.to_json())["rows"]) == 7
    assert res.median("HG4SM") == res.rows[-1]["report"]["auc"]


def test_ablation_rerun_is_identical(tiny_ablation):
    subsets = [TABLE2_ORDER[-1]]
    a = ablation_run(*tiny_ablation, subsets=subsets, seeds=(0, 1))
    b = ablation_run(*tiny_ablation, subsets=subsets, seeds=(0, 1))
    assert a.rows == b.rows
    assert len(a.rows) == 2
