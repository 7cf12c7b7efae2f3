"""Query-item behavior network: construction, teacher refinement, neighbor
ranking, metapath instance extraction and proximity diagnostics."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Protocol

from .textproc import tokenize

GRAPH_FORMAT = "hg4sm-graph"
GRAPH_VERSION = 1

DEFAULT_ALPHA = 0.35
DEFAULT_BETA = 0.8


class LogFormatError(ValueError):
    pass


class NodeKind(str, Enum):
    QUERY = "query"
    ITEM = "item"


class Provenance(str, Enum):
    LOGGED = "logged"
    TEACHER_ADDED = "teacher_added"


@dataclass(frozen=True)
class NodeRef:
    kind: NodeKind
    id: int
    text: str


@dataclass(frozen=True)
class Edge:
    query: int
    item: int
    clicks: int = 0
    purchases: int = 0
    provenance: Provenance = Provenance.LOGGED
    teacher_score: float | None = None

    @property
    def rank_key(self):
        # purchase -> high click -> low click -> teacher-added
        return (-self.purchases, -self.clicks, self.provenance is Provenance.TEACHER_ADDED)


@dataclass(frozen=True)
class LogRecord:
    query: str
    item_id: str
    title: str
    clicks: int = 0
    purchases: int = 0
    impressions: int = 0


class TeacherOracle(Protocol):
    def score(self, query: str, title: str) -> float: ...


def lexical_teacher(query: str, title: str) -> float:
    """Fraction of distinct query tokens that also occur in the title."""
    q = set(tokenize(query))
    if not q:
        return 0.0
    return len(q & set(tokenize(title))) / len(q)


class LexicalTeacher:
    def score(self, query: str, title: str) -> float:
        return lexical_teacher(query, title)


class CachedTeacher:
    """Teacher backed by a precomputed ``(query, item_id) -> score`` table.

    Pairs missing from the table fall back to ``fallback`` (lexical overlap by
    default).
    """

    def __init__(self, table: Mapping[tuple[str, str], float], fallback: TeacherOracle | None = None):
        self.table = dict(table)
        self.fallback = fallback or LexicalTeacher()

    def score_pair(self, query: str, item_id: str, title: str) -> float:
        s = self.table.get((query, item_id))
        return self.fallback.score(query, title) if s is None else s

    def score(self, query: str, title: str) -> float:
        return self.fallback.score(query, title)

    @classmethod
    def load(cls, path, fallback: TeacherOracle | None = None) -> "CachedTeacher":
        table = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected query<TAB>item_id<TAB>score")
            s = float(parts[2])
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"{path}:{lineno}: score {s} outside [0, 1]")
            table[(parts[0], parts[1])] = s
        return cls(table, fallback)


class BipartiteGraph:
    """Undirected query-item graph with at most one edge per pair.

    Query nodes are keyed by their text, item nodes by their item id. Node ids
    are dense per kind in order of first appearance. Impression-only pairs are
    kept apart in ``candidates`` and never act as edges.
    """

    def __init__(self):
        self.queries: list[str] = []
        self.items: list[tuple[str, str]] = []  # (item_id, title)
        self.query_index: dict[str, int] = {}
        self.item_index: dict[str, int] = {}
        self.edges: dict[tuple[int, int], Edge] = {}
        self.candidates: dict[tuple[int, int], int] = {}
        self.refined = False
        self._ranked: dict[tuple[NodeKind, int], list[int]] = {}
        self._adj_q: list[set[int]] = []
        self._adj_i: list[set[int]] = []

    # node bookkeeping -------------------------------------------------------

    def add_query(self, text: str) -> int:
        qid = self.query_index.get(text)
        if qid is None:
            if not text:
                raise ValueError("query text must be nonempty")
            qid = len(self.queries)
            self.queries.append(text)
            self.query_index[text] = qid
            self._adj_q.append(set())
        return qid

    def add_item(self, item_id: str, title: str) -> int:
        iid = self.item_index.get(item_id)
        if iid is None:
            if not title:
                raise ValueError(f"item {item_id!r} has an empty title")
            iid = len(self.items)
            self.items.append((item_id, title))
            self.item_index[item_id] = iid
            self._adj_i.append(set())
        elif self.items[iid][1] != title:
            raise ValueError(f"item {item_id!r} has conflicting titles")
        return iid

    def set_edge(self, edge: Edge) -> None:
        self.edges[(edge.query, edge.item)] = edge
        self._adj_q[edge.query].add(edge.item)
        self._adj_i[edge.item].add(edge.query)
        self._ranked.clear()

    def remove_edge(self, q: int, i: int) -> None:
        del self.edges[(q, i)]
        self._adj_q[q].discard(i)
        self._adj_i[i].discard(q)
        self._ranked.clear()

    @property
    def n_queries(self) -> int:
        return len(self.queries)

    @property
    def n_items(self) -> int:
        return len(self.items)

    def query(self, qid: int) -> NodeRef:
        return NodeRef(NodeKind.QUERY, qid, self.queries[qid])

    def item(self, iid: int) -> NodeRef:
        return NodeRef(NodeKind.ITEM, iid, self.items[iid][1])

    def query_node(self, text: str) -> NodeRef:
        if text not in self.query_index:
            raise KeyError(f"unknown query {text!r}")
        return self.query(self.query_index[text])

    def item_node(self, item_id: str) -> NodeRef:
        if item_id not in self.item_index:
            raise KeyError(f"unknown item {item_id!r}")
        return self.item(self.item_index[item_id])

    def check(self, node: NodeRef) -> None:
        n = self.n_queries if node.kind is NodeKind.QUERY else self.n_items
        if not 0 <= node.id < n:
            raise KeyError(f"unknown {node.kind.value} node {node.id}")

    def neighbor_ids(self, node: NodeRef) -> set[int]:
        self.check(node)
        return self._adj_q[node.id] if node.kind is NodeKind.QUERY else self._adj_i[node.id]

    def edge(self, q: int, i: int) -> Edge | None:
        return self.edges.get((q, i))

    def copy(self) -> "BipartiteGraph":
        g = BipartiteGraph()
        g.queries = list(self.queries)
        g.items = list(self.items)
        g.query_index = dict(self.query_index)
        g.item_index = dict(self.item_index)
        g.edges = dict(self.edges)
        g.candidates = dict(self.candidates)
        g.refined = self.refined
        g._adj_q = [set(s) for s in self._adj_q]
        g._adj_i = [set(s) for s in self._adj_i]
        return g

    def ranked_ids(self, kind: NodeKind, nid: int) -> list[int]:
        key = (kind, nid)
        cached = self._ranked.get(key)
        if cached is None:
            if kind is NodeKind.QUERY:
                cached = sorted(self._adj_q[nid], key=lambda i: (*self.edges[(nid, i)].rank_key, i))
            else:
                cached = sorted(self._adj_i[nid], key=lambda q: (*self.edges[(q, nid)].rank_key, q))
            self._ranked[key] = cached
        return cached

    # snapshot ---------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": GRAPH_FORMAT,
            "version": GRAPH_VERSION,
            "refined": self.refined,
            "queries": self.queries,
            "items": [list(it) for it in self.items],
            "edges": [
                [e.query, e.item, e.clicks, e.purchases, e.provenance.value, e.teacher_score]
                for _, e in sorted(self.edges.items())
            ],
            "candidates": [[q, i, n] for (q, i), n in sorted(self.candidates.items())],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BipartiteGraph":
        if data.get("format") != GRAPH_FORMAT:
            raise ValueError("not a graph snapshot")
        if data.get("version") != GRAPH_VERSION:
            raise ValueError(f"unsupported graph snapshot version {data.get('version')!r}")
        g = cls()
        for text in data["queries"]:
            g.add_query(text)
        for item_id, title in data["items"]:
            g.add_item(item_id, title)
        for q, i, clicks, purchases, prov, score in data["edges"]:
            g.set_edge(Edge(q, i, clicks, purchases, Provenance(prov), score))
        g.candidates = {(q, i): n for q, i, n in data["candidates"]}
        g.refined = bool(data["refined"])
        return g

    def save(self, path) -> None:
        text = json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":"))
        Path(path).write_text(text + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "BipartiteGraph":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# log ingestion ---------------------------------------------------------------

_INT_FIELDS = ("clicks", "purchases", "impressions")


def parse_log_record(obj, lineno: int | None = None) -> LogRecord:
    where = f"line {lineno}: " if lineno is not None else ""
    if not isinstance(obj, dict):
        raise LogFormatError(f"{where}record must be a JSON object")
    for key in ("query", "item_id", "title"):
        if not isinstance(obj.get(key), str) or not obj[key]:
            raise LogFormatError(f"{where}field {key!r} must be a nonempty string")
    counts = {}
    for key in _INT_FIELDS:
        v = obj.get(key, 0)
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise LogFormatError(f"{where}field {key!r} must be a non-negative integer")
        counts[key] = v
    return LogRecord(obj["query"], obj["item_id"], obj["title"], **counts)


def read_log(path) -> list[LogRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            records.append(parse_log_record(obj, lineno))
    return records


def write_log(records: Iterable[LogRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"query": r.query, "item_id": r.item_id, "title": r.title,
                                 "clicks": r.clicks, "purchases": r.purchases,
                                 "impressions": r.impressions}, ensure_ascii=False) + "\n")


def build_behavior_graph(log: Iterable[LogRecord | dict]) -> BipartiteGraph:
    """Aggregate log records into one edge per (query, item) pair.

    Records without clicks or purchases only register the pair as a
    refinement candidate.
    """
    g = BipartiteGraph()
    totals: dict[tuple[int, int], list[int]] = {}
    for n, rec in enumerate(log, start=1):
        if not isinstance(rec, LogRecord):
            rec = parse_log_record(rec, n)
        q = g.add_query(rec.query)
        try:
            i = g.add_item(rec.item_id, rec.title)
        except ValueError as exc:
            raise LogFormatError(f"line {n}: {exc}") from None
        t = totals.setdefault((q, i), [0, 0, 0])
        t[0] += rec.clicks
        t[1] += rec.purchases
        t[2] += rec.impressions
    for (q, i), (clicks, purchases, impressions) in totals.items():
        if clicks + purchases > 0:
            g.set_edge(Edge(q, i, clicks, purchases))
        else:
            g.candidates[(q, i)] = impressions
    return g


def _teacher_score(teacher, graph: BipartiteGraph, q: int, i: int) -> float:
    query = graph.queries[q]
    item_id, title = graph.items[i]
    if isinstance(teacher, CachedTeacher):
        s = teacher.score_pair(query, item_id, title)
    elif callable(teacher) and not hasattr(teacher, "score"):
        s = teacher(query, title)
    else:
        s = teacher.score(query, title)
    s = float(s)
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"teacher score {s} outside [0, 1]")
    return s


def refine_with_teacher(graph: BipartiteGraph, teacher=None, alpha: float = DEFAULT_ALPHA,
                        beta: float = DEFAULT_BETA,
                        max_candidates_per_query: int | None = None) -> BipartiteGraph:
    """Return a refined copy of ``graph``.

    Purchase edges always stay. Click-only edges stay iff the teacher scores
    them at least ``alpha``. Impression-only candidates become teacher-added
    edges iff scored strictly above ``beta``, so ``beta=1`` never adds an
    edge and ``(alpha, beta) = (0, 1)`` leaves the edge set unchanged. Per
    query at most
    ``max_candidates_per_query`` candidates are scored (most impressions first).
    """
    if not (0.0 <= alpha <= 1.0 and 0.0 <= beta <= 1.0):
        raise ValueError("alpha and beta must lie in [0, 1]")
    if graph.refined:
        raise ValueError("graph is already refined")
    teacher = teacher if teacher is not None else LexicalTeacher()
    g = graph.copy()

    for (q, i), e in sorted(graph.edges.items()):
        s = _teacher_score(teacher, g, q, i)
        if e.purchases >= 1 or s >= alpha:
            g.set_edge(replace(e, teacher_score=s))
        else:
            g.remove_edge(q, i)

    by_query: dict[int, list[tuple[int, int]]] = {}
    for (q, i), n in graph.candidates.items():
        by_query.setdefault(q, []).append((-n, i))
    for q in sorted(by_query):
        pool = sorted(by_query[q])
        if max_candidates_per_query is not None:
            pool = pool[:max_candidates_per_query]
        for _, i in pool:
            s = _teacher_score(teacher, g, q, i)
            if s > beta:
                g.set_edge(Edge(q, i, 0, 0, Provenance.TEACHER_ADDED, s))
    g.refined = True
    return g


# neighbor ranking and metapaths ------------------------------------------------

def _node_of(graph: BipartiteGraph, kind: NodeKind, nid: int) -> NodeRef:
    return graph.query(nid) if kind is NodeKind.QUERY else graph.item(nid)


def _other(kind: NodeKind) -> NodeKind:
    return NodeKind.ITEM if kind is NodeKind.QUERY else NodeKind.QUERY


def rank_neighbors(graph: BipartiteGraph, node: NodeRef) -> list[NodeRef]:
    """Neighbors ordered purchases desc, clicks desc, teacher-added last, id asc."""
    graph.check(node)
    other = _other(node.kind)
    return [_node_of(graph, other, n) for n in graph.ranked_ids(node.kind, node.id)]


def sample_top_neighbors(graph: BipartiteGraph, node: NodeRef, k: int = 2) -> list[NodeRef]:
    if k < 1:
        raise ValueError("k must be >= 1")
    return rank_neighbors(graph, node)[:k]


@dataclass(frozen=True)
class MetapathInstance:
    middle: NodeRef | None
    terminal: NodeRef | None

    @property
    def padded(self) -> bool:
        return self.terminal is None


@dataclass(frozen=True)
class MetapathContext:
    """Up to two instances per metapath for one focus (query, item) pair.

    ``qiq`` holds (I_top1, Q_top1) and (I_top1, Q_top2) anchored at the query;
    ``iqi`` holds (Q_top1, I_top1) and (Q_top1, I_top2) anchored at the item.
    """

    qiq: tuple[MetapathInstance, MetapathInstance]
    iqi: tuple[MetapathInstance, MetapathInstance]

    @classmethod
    def empty(cls) -> "MetapathContext":
        pad = MetapathInstance(None, None)
        return cls((pad, pad), (pad, pad))


def _top(ranked: list[int], skip: int | None, k: int) -> list[int]:
    out = []
    for n in ranked:
        if n != skip:
            out.append(n)
            if len(out) == k:
                break
    return out


def _instances(graph: BipartiteGraph, kind: NodeKind, anchor: int, other_focus: int,
               exclude: bool) -> tuple[MetapathInstance, MetapathInstance]:
    other = _other(kind)
    mids = _top(graph.ranked_ids(kind, anchor), other_focus if exclude else None, 1)
    if not mids:
        pad = MetapathInstance(None, None)
        return pad, pad
    mid = mids[0]
    terms = _top(graph.ranked_ids(other, mid), anchor if exclude else None, 2)
    mid_ref = _node_of(graph, other, mid)
    insts = [MetapathInstance(mid_ref, _node_of(graph, kind, t)) for t in terms]
    while len(insts) < 2:
        insts.append(MetapathInstance(mid_ref, None))
    return insts[0], insts[1]


def extract_metapath_context(graph: BipartiteGraph, q: NodeRef, i: NodeRef,
                             exclude_focus_edge: bool = True) -> MetapathContext:
    """Collect Q-I-Q and I-Q-I instances around the focus pair ``(q, i)``.

    With ``exclude_focus_edge`` the focus item is skipped as the query's middle
    node, the focus query as the item's middle node, and each anchor is
    skipped among its middle node's neighbors.
    """
    if q.kind is not NodeKind.QUERY or i.kind is not NodeKind.ITEM:
        raise ValueError("focus pair must be (query, item)")
    graph.check(q)
    graph.check(i)
    return MetapathContext(
        qiq=_instances(graph, NodeKind.QUERY, q.id, i.id, exclude_focus_edge),
        iqi=_instances(graph, NodeKind.ITEM, i.id, q.id, exclude_focus_edge),
    )


# proximity -------------------------------------------------------------------

def first_order_proximity(graph: BipartiteGraph, u: NodeRef, v: NodeRef) -> int:
    graph.check(u)
    graph.check(v)
    if u.kind is v.kind:
        return 0
    q, i = (u, v) if u.kind is NodeKind.QUERY else (v, u)
    return int((q.id, i.id) in graph.edges)


def second_order_proximity(graph: BipartiteGraph, u: NodeRef, v: NodeRef) -> float:
    """Jaccard overlap of the neighbor sets of two same-kind nodes."""
    if u.kind is not v.kind:
        raise ValueError("second-order proximity needs two nodes of the same kind")
    a, b = graph.neighbor_ids(u), graph.neighbor_ids(v)
    union = len(a | b)
    return len(a & b) / union if union else 0.0
