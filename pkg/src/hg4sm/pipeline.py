"""Glue for running the stages in sequence from a behavior log."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .embed import EmbeddingTable, SkipgramConfig, train_skipgram
from .graph import BipartiteGraph, LogRecord, build_behavior_graph, refine_with_teacher
from .textproc import Tokenizer, Vocab, build_vocab, tokenize
from .train import Source, TrainExample

CORPUS_CHOICES = ("both", "queries", "titles")


def text_corpus(graph: BipartiteGraph, which: str = "both") -> list[str]:
    """One sentence per distinct query and/or item title, in node-id order."""
    if which not in CORPUS_CHOICES:
        raise ValueError(f"corpus must be one of {CORPUS_CHOICES}")
    out = []
    if which in ("both", "queries"):
        out += graph.queries
    if which in ("both", "titles"):
        out += [title for _, title in graph.items]
    return out


def id_corpus(texts: Iterable[str], vocab: Vocab, tokenizer: Tokenizer | None = None) -> list[list[int]]:
    tok = tokenizer or tokenize
    return [[vocab.id(t) for t in tok(text)] for text in texts]


@dataclass
class Artifacts:
    vocab: Vocab
    table: EmbeddingTable
    graph: BipartiteGraph
    refined: BipartiteGraph


def build_artifacts(log: Iterable[LogRecord], *, min_count: int = 1, max_size: int = 50_000,
                    skipgram: SkipgramConfig = SkipgramConfig(), alpha: float = 0.35, beta: float = 0.8,
                    teacher=None, corpus: str = "both",
                    max_candidates_per_query: int | None = 50) -> Artifacts:
    graph = build_behavior_graph(log)
    texts = text_corpus(graph, corpus)
    vocab = build_vocab(texts, min_count=min_count, max_size=max_size)
    table = train_skipgram(id_corpus(texts, vocab), vocab, skipgram)
    refined = refine_with_teacher(graph, teacher, alpha, beta, max_candidates_per_query)
    return Artifacts(vocab, table, graph, refined)


def truth_examples(truth, titles: dict[str, str]) -> list[TrainExample]:
    """Labeled (query, item) pairs as explicit examples carrying item ids."""
    out = []
    for p in truth:
        q, item_id, label = (p.query, p.item_id, p.label) if hasattr(p, "query") else p
        out.append(TrainExample(q, titles[item_id], int(label), Source.EXPLICIT, item_id))
    return out
