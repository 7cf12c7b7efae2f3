"""Training-set assembly, the Adam training loop and checkpoint helpers."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .evaluation import auc
from .graph import BipartiteGraph
from .model import (Batch, Featurizer, ModelConfig, ModelParams, load_checkpoint, loss_and_grads,
                    predict, save_checkpoint)
from .textproc import Vocab

__all__ = [
    "Source", "TrainExample", "TrainConfig", "TrainingError", "make_training_set", "split_by_query",
    "read_labeled_examples", "read_examples", "write_examples", "train", "Adam",
    "save_checkpoint", "load_checkpoint", "write_history",
]

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class Source(str, Enum):
    GRAPH_POSITIVE = "graph_positive"
    SAMPLED_NEGATIVE = "sampled_negative"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class TrainExample:
    query: str
    title: str
    label: int
    source: Source = Source.EXPLICIT
    item_id: str | None = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        if self.source is Source.GRAPH_POSITIVE and self.label != 1:
            raise ValueError("graph positives must carry label 1")
        if self.source is Source.SAMPLED_NEGATIVE and self.label != 0:
            raise ValueError("sampled negatives must carry label 0")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    neg_ratio: int = 1
    seed: int = 0
    exclude_focus_edge: bool = True
    holdout_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.neg_ratio < 0:
            raise ValueError("epochs, batch_size and neg_ratio must be non-negative (batch_size >= 1)")
        if self.lr < 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps <= 0:
            raise ValueError("invalid optimizer settings")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in [0, 1)")


def make_training_set(graph: BipartiteGraph, ratio: int = 1, seed: int = 0,
                      queries: Iterable[str] | None = None, sampling: str = "uniform",
                      explicit: Sequence[TrainExample] = ()) -> list[TrainExample]:
    """Edges become positives; each positive gets ``ratio`` sampled non-edges.

    A negative keeps the positive's query and draws an item that is not
    adjacent to it, uniformly or (``sampling="popularity"``) proportionally to
    item degree. ``queries`` restricts positives to those query texts.
    """
    if sampling not in ("uniform", "popularity"):
        raise ValueError("sampling must be 'uniform' or 'popularity'")
    allowed = None if queries is None else {graph.query_index[q] for q in queries if q in graph.query_index}
    edges = [e for (q, _), e in sorted(graph.edges.items()) if allowed is None or q in allowed]
    if not edges:
        raise ValueError("no positives")
    rng = np.random.default_rng(seed)
    n_items = graph.n_items
    probs = None
    if sampling == "popularity":
        deg = np.array([len(graph.neighbor_ids(graph.item(i))) for i in range(n_items)], dtype=float) + 1.0
        probs = deg / deg.sum()

    out: list[TrainExample] = []
    for e in edges:
        query = graph.queries[e.query]
        item_id, title = graph.items[e.item]
        out.append(TrainExample(query, title, 1, Source.GRAPH_POSITIVE, item_id))
        adj = graph.neighbor_ids(graph.query(e.query))
        if len(adj) >= n_items:
            continue
        for _ in range(ratio):
            for _attempt in range(1000):
                i = int(rng.choice(n_items, p=probs)) if probs is not None else int(rng.integers(n_items))
                if i not in adj:
                    break
            else:
                continue
            neg_id, neg_title = graph.items[i]
            out.append(TrainExample(query, neg_title, 0, Source.SAMPLED_NEGATIVE, neg_id))
    out.extend(explicit)
    return out


def split_by_query(examples: Sequence, holdout_fraction: float, seed: int):
    """Partition examples so every query lands on exactly one side."""
    queries = sorted({ex.query for ex in examples})
    rng = np.random.default_rng(seed)
    n_hold = int(math.ceil(holdout_fraction * len(queries))) if holdout_fraction > 0 else 0
    held = {queries[k] for k in rng.permutation(len(queries))[:n_hold]}
    train_part = [ex for ex in examples if ex.query not in held]
    hold_part = [ex for ex in examples if ex.query in held]
    return train_part, hold_part


def read_labeled_examples(path) -> list[TrainExample]:
    """Read ``query<TAB>title<TAB>label`` lines as explicit examples."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3 or parts[2].strip() not in ("0", "1"):
            raise ValueError(f"{path}:{lineno}: expected query<TAB>title<TAB>label(0/1)")
        out.append(TrainExample(parts[0], parts[1], int(parts[2]), Source.EXPLICIT))
    return out


_EXAMPLE_COLUMNS = ("query", "item_id", "title", "label", "source")


def write_examples(examples: Iterable[TrainExample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(_EXAMPLE_COLUMNS) + "\n")
        for ex in examples:
            fh.write(f"{ex.query}\t{ex.item_id or ''}\t{ex.title}\t{ex.label}\t{ex.source.value}\n")


def read_examples(path) -> list[TrainExample]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or tuple(lines[0].split("\t")) != _EXAMPLE_COLUMNS:
        raise ValueError(f"{path}: missing dataset header")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 columns")
        q, item_id, title, label, source = parts
        out.append(TrainExample(q, title, int(label), Source(source), item_id or None))
    return out


class Adam:
    def __init__(self, names: Sequence[str], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.names = tuple(names)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for n in self.names:
            g = grads[n]
            m = self.m.setdefault(n, np.zeros_like(g))
            v = self.v.setdefault(n, np.zeros_like(g))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p = getattr(params, n)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _as_batch(data, featurizer: Featurizer, exclude: bool) -> Batch:
    return data if isinstance(data, Batch) else featurizer.batch(data, exclude)


def train(params: ModelParams, model_config: ModelConfig, dataset, graph: BipartiteGraph | None,
          vocab: Vocab, config: TrainConfig, holdout=None, featurizer: Featurizer | None = None):
    """Fit ``params`` with Adam on mini-batches of binary cross-entropy.

    ``dataset`` and ``holdout`` may be example lists or pre-encoded batches.
    When ``holdout`` is None a by-query split of ``config.holdout_fraction``
    is carved out of ``dataset``. Held-out pairs use the same focus-edge
    exclusion as training. Returns ``(params, history)`` where history holds
    one ``{epoch, mean_loss, holdout_auc}`` dict per epoch.
    """
    params = params.copy()
    params.check(model_config)
    feat = featurizer or Featurizer(vocab, model_config, graph)
    if holdout is None and not isinstance(dataset, Batch) and config.holdout_fraction > 0:
        dataset, holdout = split_by_query(dataset, config.holdout_fraction, config.seed)
    train_b = _as_batch(dataset, feat, config.exclude_focus_edge)
    if len(train_b) == 0:
        raise ValueError("empty training set")
    hold_b = _as_batch(holdout, feat, config.exclude_focus_edge) if holdout is not None and len(holdout) else None

    rng = np.random.default_rng(config.seed)
    opt = Adam(params.trainable(model_config), config.lr, config.beta1, config.beta2, config.eps)
    history = []
    n = len(train_b)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for k, start in enumerate(range(0, n, config.batch_size)):
            sub = train_b.take(order[start:start + config.batch_size])
            loss, grads, _ = loss_and_grads(sub, params, model_config)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch {k} "
                                    f"(examples {start}..{start + len(sub) - 1} of the shuffled order)")
            total += loss * len(sub)
            opt.step(params, grads)
        rec = {"epoch": epoch, "mean_loss": total / n, "holdout_auc": None}
        if hold_b is not None:
            try:
                rec["holdout_auc"] = auc(predict(hold_b, params, model_config), hold_b.labels)
            except ValueError:
                pass
        log.info("epoch %d loss %.5f holdout_auc %s", epoch, rec["mean_loss"], rec["holdout_auc"])
        history.append(rec)
    return params, history


def write_history(history: Iterable[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(json.dumps(rec) + "\n")
