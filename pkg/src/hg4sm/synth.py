"""Seeded synthetic search logs with known query-item relevance.

Each category owns a head token and a pool of attribute tokens (ASCII runs
and single CJK characters). Queries are the head plus one or two attributes;
ordinary titles are the head plus several attributes. A "lexical-gap" item
instead draws its title from a pool shared by every category, so its
relevance can only be inferred from the queries that interacted with it.
Relevance is exactly "same category".
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import LogRecord, write_log


@dataclass(frozen=True)
class SynthConfig:
    n_categories: int = 20
    queries_per_category: int = 50
    items_per_category: int = 50
    vocab_per_category: int = 12
    noise_rate: float = 0.0
    purchase_rate: float = 0.4
    impression_rate: float = 0.5
    gap_fraction: float = 0.0
    clicks_per_query: int = 10
    eval_positives_per_query: int = 4
    eval_negatives_per_query: int = 4
    gap_pool_size: int = 12
    seed: int = 0

    def __post_init__(self):
        for name in ("noise_rate", "purchase_rate", "impression_rate", "gap_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        for name in ("n_categories", "queries_per_category", "items_per_category",
                     "vocab_per_category", "clicks_per_query", "gap_pool_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.eval_positives_per_query < 0 or self.eval_negatives_per_query < 0:
            raise ValueError("eval pair counts must be >= 0")
        if self.clicks_per_query > self.items_per_category:
            raise ValueError("clicks_per_query exceeds items_per_category")
        if self.n_categories < 2 and self.eval_negatives_per_query > 0:
            raise ValueError("negatives need at least two categories")


@dataclass(frozen=True)
class TruthPair:
    query: str
    item_id: str
    label: int
    gap: bool = False


@dataclass
class SynthData:
    log: list[LogRecord]
    truth: list[TruthPair]
    query_category: dict[str, int] = field(default_factory=dict)
    item_category: dict[str, int] = field(default_factory=dict)
    item_titles: dict[str, str] = field(default_factory=dict)
    gap_items: frozenset = frozenset()

    def write(self, log_path, truth_path) -> None:
        write_log(self.log, log_path)
        lines = [f"{p.query}\t{p.item_id}\t{p.label}" for p in self.truth]
        Path(truth_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class _TokenFactory:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.used: set[str] = set()
        self._cjk = iter(rng.permutation(np.arange(0x4E00, 0x9FA0)))

    def ascii(self) -> str:
        letters = string.ascii_lowercase
        while True:
            n = int(self.rng.integers(2, 4))
            tok = "".join(letters[int(k)] for k in self.rng.integers(0, 26, n))
            tok += str(int(self.rng.integers(0, 100)))
            if tok not in self.used:
                self.used.add(tok)
                return tok

    def cjk(self) -> str:
        tok = chr(int(next(self._cjk)))
        self.used.add(tok)
        return tok

    def pool(self, n: int) -> list[str]:
        return [self.ascii() if k % 2 == 0 else self.cjk() for k in range(n)]


def generate(config: SynthConfig) -> SynthData:
    """Generate a log and a labeled evaluation set, deterministic per seed.

    Exactly ``floor(gap_fraction * P)`` of the ``P`` positive evaluation pairs
    use a lexical-gap item.
    """
    rng = np.random.default_rng(config.seed)
    tokens = _TokenFactory(rng)
    C, nq, ni = config.n_categories, config.queries_per_category, config.items_per_category
    n_gap_items = 0
    if config.gap_fraction > 0:
        n_gap_items = min(ni - 1, max(1, int(round(config.gap_fraction * ni))))

    heads = [tokens.ascii() for _ in range(C)]
    attrs = [tokens.pool(config.vocab_per_category) for _ in range(C)]
    gap_pool = tokens.pool(config.gap_pool_size)
    filler = [tokens.ascii() for _ in range(6)]

    queries: list[list[str]] = []
    seen_q: set[str] = set()
    for c in range(C):
        cat_q = []
        tries = 0
        while len(cat_q) < nq:
            tries += 1
            k = 1 + int(rng.integers(0, 2)) + (tries > 50 * nq)
            k = min(k, len(attrs[c]))
            words = [heads[c]] + [attrs[c][j] for j in rng.choice(len(attrs[c]), k, replace=False)]
            text = " ".join(words)
            if text not in seen_q:
                seen_q.add(text)
                cat_q.append(text)
            elif tries > 200 * nq:
                raise ValueError("vocab_per_category too small for queries_per_category unique queries")
        queries.append(cat_q)

    items: list[list[str]] = []
    titles: dict[str, str] = {}
    item_cat: dict[str, int] = {}
    gap_items: set[str] = set()
    for c in range(C):
        gap_idx = set(rng.choice(ni, n_gap_items, replace=False).tolist()) if n_gap_items else set()
        cat_items = []
        for k in range(ni):
            item_id = f"it{c:03d}{k:04d}"
            if k in gap_idx:
                words = [gap_pool[j] for j in rng.choice(len(gap_pool), min(3, len(gap_pool)), replace=False)]
                gap_items.add(item_id)
            else:
                n_attr = min(len(attrs[c]), 3 + int(rng.integers(0, 3)))
                words = [heads[c]] + [attrs[c][j] for j in rng.choice(len(attrs[c]), n_attr, replace=False)]
                if rng.random() < 0.5:
                    words.append(filler[int(rng.integers(len(filler)))])
                order = rng.permutation(len(words))
                words = [words[j] for j in order]
            titles[item_id] = " ".join(words)
            item_cat[item_id] = c
            cat_items.append(item_id)
        items.append(cat_items)

    log: list[LogRecord] = []
    query_cat: dict[str, int] = {}
    n_imp = int(round(config.impression_rate * config.clicks_per_query))
    for c in range(C):
        others = [o for o in range(C) if o != c]
        for q in queries[c]:
            query_cat[q] = c
            picked = rng.permutation(ni)
            clicked = picked[:config.clicks_per_query]
            for k in clicked:
                item_id = items[c][int(k)]
                clicks = int(rng.integers(1, 11))
                purchases = int(rng.integers(1, 3)) if rng.random() < config.purchase_rate else 0
                log.append(LogRecord(q, item_id, titles[item_id], clicks, purchases,
                                     clicks + int(rng.integers(0, 20))))
            if others:
                n_noise = int(rng.binomial(config.clicks_per_query, config.noise_rate))
                for _ in range(n_noise):
                    o = others[int(rng.integers(len(others)))]
                    item_id = items[o][int(rng.integers(ni))]
                    clicks = int(rng.integers(1, 4))
                    log.append(LogRecord(q, item_id, titles[item_id], clicks, 0, clicks + int(rng.integers(0, 5))))
            for k in picked[config.clicks_per_query:config.clicks_per_query + n_imp]:
                item_id = items[c][int(k)]
                log.append(LogRecord(q, item_id, titles[item_id], 0, 0, int(rng.integers(1, 6))))
            if others:
                for _ in range(n_imp):
                    o = others[int(rng.integers(len(others)))]
                    item_id = items[o][int(rng.integers(ni))]
                    log.append(LogRecord(q, item_id, titles[item_id], 0, 0, int(rng.integers(1, 6))))

    truth = _ground_truth(config, rng, queries, items, gap_items)
    return SynthData(log, truth, query_cat, item_cat, titles, frozenset(gap_items))


def _ground_truth(config, rng, queries, items, gap_items) -> list[TruthPair]:
    C = config.n_categories
    n_pos = config.eval_positives_per_query
    all_q = [(c, q) for c in range(C) for q in queries[c]]
    total_pos = len(all_q) * n_pos
    n_gap_pairs = int(np.floor(config.gap_fraction * total_pos))
    # a query can hold at most as many gap positives as its category has gap items
    n_gap_per_cat = [sum(it in gap_items for it in items[c]) for c in range(C)]
    slots = [row for row, (c, _) in enumerate(all_q) for _ in range(min(n_pos, n_gap_per_cat[c]))]
    if n_gap_pairs > len(slots):
        raise ValueError("gap_fraction too high for the number of gap items per category")
    gap_count = np.zeros(len(all_q), dtype=np.int64)
    for j in rng.permutation(len(slots))[:n_gap_pairs]:
        gap_count[slots[int(j)]] += 1

    truth = []
    for row, (c, q) in enumerate(all_q):
        gap_c = [it for it in items[c] if it in gap_items]
        plain_c = [it for it in items[c] if it not in gap_items]
        n_g = int(gap_count[row])
        if n_g > len(gap_c) or n_pos - n_g > len(plain_c):
            raise ValueError("not enough items per category for the requested evaluation pairs")
        for j in rng.choice(len(gap_c), n_g, replace=False) if n_g else []:
            truth.append(TruthPair(q, gap_c[int(j)], 1, True))
        for j in rng.choice(len(plain_c), n_pos - n_g, replace=False) if n_pos - n_g else []:
            truth.append(TruthPair(q, plain_c[int(j)], 1, False))
        pool = [it for o in range(C) if o != c for it in items[o]]
        for j in rng.choice(len(pool), min(len(pool), config.eval_negatives_per_query), replace=False):
            it = pool[int(j)]
            truth.append(TruthPair(q, it, 0, it in gap_items))
    return truth


def read_truth(path) -> list[tuple[str, str, int]]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected query<TAB>item_id<TAB>label")
        out.append((parts[0], parts[1], int(parts[2])))
    return out
