"""Classification and ranking metrics, plus the component ablation harness."""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .model import Featurizer, components_label, init_params, predict

TABLE2_ORDER: tuple[frozenset, ...] = (
    frozenset({"rep"}),
    frozenset({"int"}),
    frozenset({"hin"}),
    frozenset({"rep", "int"}),
    frozenset({"int", "hin"}),
    frozenset({"rep", "hin"}),
    frozenset({"rep", "int", "hin"}),
)

TSV_COLUMNS = ("auc", "acc", "prec", "recall", "f1", "fnr", "fpr")


@dataclass(frozen=True)
class ScoredExample:
    score: float
    label: int


def _split(scores, labels):
    if labels is None:
        items = list(scores)
        scores = [e.score for e in items]
        labels = [e.label for e in items]
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(np.int64)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return s, y


def auc(scores, labels=None) -> float:
    """Mann-Whitney AUC with ties counted as one half.

    Accepts parallel ``scores``/``labels`` arrays or a sequence of
    ``ScoredExample``.
    """
    s, y = _split(scores, labels)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: need at least one positive and one negative")
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class EvalReport:
    threshold: float
    tp: int
    fp: int
    fn: int
    tn: int
    acc: float
    prec: float
    recall: float
    f1: float
    fnr: float
    fpr: float
    auc: float | None = None
    undefined: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(num, den, name, undefined):
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def confusion_metrics(scores, labels=None, threshold: float = 0.5) -> EvalReport:
    """Predict positive iff ``score >= threshold`` and derive the rate metrics.

    Ratios with a zero denominator are reported as 0 and listed in
    ``undefined``. AUC is filled in whenever both classes are present.
    """
    s, y = _split(scores, labels)
    if s.size == 0:
        raise ValueError("no examples")
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    undefined: list[str] = []
    prec = _ratio(tp, tp + fp, "prec", undefined)
    recall = _ratio(tp, tp + fn, "recall", undefined)
    if prec + recall > 0:
        f1 = 2 * prec * recall / (prec + recall)
    else:
        f1 = 0.0
        undefined.append("f1")
    fnr = _ratio(fn, fn + tp, "fnr", undefined)
    fpr = _ratio(fp, fp + tn, "fpr", undefined)
    try:
        a = auc(s, y)
    except ValueError:
        a = None
        undefined.append("auc")
    return EvalReport(threshold, tp, fp, fn, tn, (tp + tn) / s.size, prec, recall, f1, fnr, fpr, a, undefined)


# ablation ------------------------------------------------------------------------

@dataclass
class AblationResult:
    rows: list[dict]
    medians: list[dict]

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows, "medians": self.medians}, indent=2)

    def to_tsv(self) -> str:
        lines = ["\t".join(("model", "seed") + TSV_COLUMNS)]
        for r in self.rows:
            vals = [r["report"][c] if r["report"][c] is not None else float("nan") for c in TSV_COLUMNS]
            lines.append("\t".join([r["model"], str(r["seed"])] + [f"{v:.4f}" for v in vals]))
        for m in self.medians:
            lines.append("\t".join([m["model"], "median"] + [f"{m[c]:.4f}" for c in TSV_COLUMNS]))
        return "\n".join(lines) + "\n"

    def median(self, model: str, key: str = "auc") -> float:
        for m in self.medians:
            if m["model"] == model:
                return m[key]
        raise KeyError(model)


def ordered_subsets(subsets: Iterable[Iterable[str]]) -> list[frozenset]:
    wanted = {frozenset(s) for s in subsets}
    for s in wanted:
        if not s or not s <= {"rep", "int", "hin"}:
            raise ValueError(f"invalid component subset {sorted(s)}")
    return [s for s in TABLE2_ORDER if s in wanted]


def ablation_run(graph, train_examples, holdout_examples, vocab, word_emb, base_config, train_config,
                 subsets: Iterable[Iterable[str]] = TABLE2_ORDER, seeds: Sequence[int] = (0,),
                 threshold: float = 0.5, slices: Mapping[str, np.ndarray] | None = None) -> AblationResult:
    """Train and evaluate one model per (component subset, seed).

    All subsets share the same encoded data and seeds. ``slices`` maps a name
    to a boolean mask over ``holdout_examples``; AUC on each slice is stored in
    the row as ``auc@<name>``.
    """
    from .train import train  # train imports this module

    feat = Featurizer(vocab, base_config, graph)
    train_b = feat.batch(train_examples, train_config.exclude_focus_edge)
    hold_b = feat.batch(holdout_examples, train_config.exclude_focus_edge)
    rows = []
    for subset in ordered_subsets(subsets):
        cfg = replace(base_config, components=subset)
        label = _label(subset)
        for seed in seeds:
            tc = replace(train_config, seed=seed)
            params = init_params(cfg, word_emb, seed=seed)
            params, history = train(params, cfg, train_b, graph, vocab, tc, holdout=hold_b, featurizer=feat)
            scores = predict(hold_b, params, cfg)
            rep = confusion_metrics(scores, hold_b.labels, threshold).to_dict()
            row = {"model": label, "seed": seed, "report": rep, "history": history}
            for name, mask in (slices or {}).items():
                mask = np.asarray(mask, dtype=bool)
                try:
                    row[f"auc@{name}"] = auc(scores[mask], hold_b.labels[mask])
                except ValueError:
                    row[f"auc@{name}"] = None
            rows.append(row)
    medians = []
    for subset in ordered_subsets(subsets):
        label = _label(subset)
        mine = [r for r in rows if r["model"] == label]
        m = {"model": label}
        for c in TSV_COLUMNS:
            vals = [r["report"][c] for r in mine if r["report"][c] is not None]
            m[c] = statistics.median(vals) if vals else float("nan")
        for name in slices or {}:
            vals = [r[f"auc@{name}"] for r in mine if r[f"auc@{name}"] is not None]
            m[f"auc@{name}"] = statistics.median(vals) if vals else float("nan")
        medians.append(m)
    return AblationResult(rows, medians)


def _label(subset) -> str:
    return "HG4SM" if set(subset) == {"rep", "int", "hin"} else components_label(subset)
