"""HG4SM scoring network with hand-written forward and backward passes.

The fusion input is built from up to three blocks, always in this order:

* ``rep``  mean-pooled query and title vectors ``[E_seq^Q, E_seq^I]`` (2d)
* ``int``  flattened word-by-word interaction matrix of position-augmented
  word vectors (L_Q * L_I)
* ``hin``  attention-weighted Q-I-Q and I-Q-I metapath embeddings (2d)

followed by dense -> ReLU -> dense -> ReLU -> dense -> sigmoid. Everything is
batched over a leading axis; a single example is a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graph import BipartiteGraph, MetapathContext, extract_metapath_context
from .textproc import PAD, Tokenizer, Vocab, encode

COMPONENTS = ("rep", "int", "hin")
ACTIVATIONS = ("tanh", "relu", "identity")
SCORE_EPS = 1e-7
CKPT_HEADER = "#hg4sm-ckpt v1"


def parse_components(names: str | Iterable[str]) -> frozenset[str]:
    if isinstance(names, str):
        names = [s for s in names.replace("+", ",").split(",") if s.strip()]
    comps = frozenset(s.strip().lower() for s in names)
    unknown = comps - set(COMPONENTS)
    if unknown:
        raise ValueError(f"unknown components {sorted(unknown)}; choose from {COMPONENTS}")
    if not comps:
        raise ValueError("component set must be nonempty")
    return comps


def components_label(comps: Iterable[str]) -> str:
    return "+".join(c.capitalize() if c != "hin" else "HIN" for c in COMPONENTS if c in comps)


@dataclass(frozen=True)
class ModelConfig:
    d: int = 32
    len_q: int = 8
    len_i: int = 20
    h1: int = 256
    h2: int = 64
    components: frozenset = frozenset(COMPONENTS)
    activation: str = "tanh"
    finetune_embeddings: bool = False

    def __post_init__(self):
        object.__setattr__(self, "components", parse_components(self.components))
        for name in ("d", "len_q", "len_i", "h1", "h2"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def n_in(self) -> int:
        widths = {"rep": 2 * self.d, "int": self.len_q * self.len_i, "hin": 2 * self.d}
        return sum(widths[c] for c in COMPONENTS if c in self.components)

    def slices(self) -> dict[str, slice]:
        widths = {"rep": 2 * self.d, "int": self.len_q * self.len_i, "hin": 2 * self.d}
        out, start = {}, 0
        for c in COMPONENTS:
            if c in self.components:
                out[c] = slice(start, start + widths[c])
                start += widths[c]
        return out


@dataclass
class ModelParams:
    pos_q: np.ndarray
    pos_i: np.ndarray
    w_att: np.ndarray
    b_att: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    word_emb: np.ndarray

    @classmethod
    def names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def trainable(self, config: ModelConfig) -> tuple[str, ...]:
        names = self.names()
        return names if config.finetune_embeddings else names[:-1]

    def copy(self) -> "ModelParams":
        return ModelParams(**{n: getattr(self, n).copy() for n in self.names()})

    def check(self, config: ModelConfig) -> None:
        d = config.d
        expect = {
            "pos_q": (config.len_q, d), "pos_i": (config.len_i, d),
            "w_att": (2 * d,), "b_att": (1,),
            "w1": (config.h1, config.n_in), "b1": (config.h1,),
            "w2": (config.h2, config.h1), "b2": (config.h2,),
            "w3": (1, config.h2), "b3": (1,),
        }
        for name, shape in expect.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(f"parameter {name} has shape {got}, config expects {shape}")
        if self.word_emb.ndim != 2 or self.word_emb.shape[1] != d:
            raise ValueError(f"word embeddings have shape {self.word_emb.shape}, config expects (*, {d})")


def init_params(config: ModelConfig, word_emb: np.ndarray, seed: int = 0) -> ModelParams:
    """Random initialization; the word table is copied as float64."""
    rng = np.random.default_rng(seed)
    d = config.d

    def dense(n_out, n_in):
        lim = np.sqrt(6.0 / (n_in + n_out))
        return rng.uniform(-lim, lim, size=(n_out, n_in))

    word_emb = np.array(word_emb, dtype=np.float64)
    p = ModelParams(
        pos_q=rng.normal(0.0, 0.01, size=(config.len_q, d)),
        pos_i=rng.normal(0.0, 0.01, size=(config.len_i, d)),
        w_att=rng.normal(0.0, 1.0 / np.sqrt(2 * d), size=2 * d),
        b_att=np.zeros(1),
        w1=dense(config.h1, config.n_in), b1=np.zeros(config.h1),
        w2=dense(config.h2, config.h1), b2=np.zeros(config.h2),
        w3=dense(1, config.h2), b3=np.zeros(1),
        word_emb=word_emb,
    )
    p.check(config)
    return p


def zero_params(config: ModelConfig, word_emb: np.ndarray) -> ModelParams:
    p = init_params(config, word_emb)
    for name in p.names()[:-1]:
        getattr(p, name)[...] = 0.0
    return p


# inputs ------------------------------------------------------------------------

@dataclass
class Batch:
    """Encoded examples. Instance terminals are ``(B, 2, L)`` id arrays."""

    q: np.ndarray
    i: np.ndarray
    qiq_mid: np.ndarray
    qiq_term: np.ndarray
    qiq_pad: np.ndarray
    iqi_mid: np.ndarray
    iqi_term: np.ndarray
    iqi_pad: np.ndarray
    labels: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.q)

    def take(self, idx) -> "Batch":
        return Batch(**{f.name: (None if getattr(self, f.name) is None else getattr(self, f.name)[idx])
                        for f in fields(self)})

    @classmethod
    def concat(cls, batches: Sequence["Batch"]) -> "Batch":
        out = {}
        for f in fields(cls):
            vals = [getattr(b, f.name) for b in batches]
            out[f.name] = None if any(v is None for v in vals) else np.concatenate(vals)
        return cls(**out)


class Featurizer:
    """Turns (query, title[, item_id]) examples into ``Batch`` arrays.

    Node texts are encoded once and cached. Pairs whose query or item is not
    in the graph get an all-padded metapath context.
    """

    def __init__(self, vocab: Vocab, config: ModelConfig, graph: BipartiteGraph | None = None,
                 tokenizer: Tokenizer | None = None):
        self.vocab = vocab
        self.config = config
        self.graph = graph
        self.tokenizer = tokenizer
        self._q_cache: dict[str, np.ndarray] = {}
        self._i_cache: dict[str, np.ndarray] = {}
        self._title_index: dict[str, int] = {}
        if graph is not None:
            seen: dict[str, list[int]] = {}
            for iid, (_, title) in enumerate(graph.items):
                seen.setdefault(title, []).append(iid)
            self._title_index = {t: ids[0] for t, ids in seen.items() if len(ids) == 1}

    def query_ids(self, text: str) -> np.ndarray:
        ids = self._q_cache.get(text)
        if ids is None:
            ids = np.array(encode(self.vocab, text, self.config.len_q, self.tokenizer)[0], dtype=np.int64)
            self._q_cache[text] = ids
        return ids

    def title_ids(self, text: str) -> np.ndarray:
        ids = self._i_cache.get(text)
        if ids is None:
            ids = np.array(encode(self.vocab, text, self.config.len_i, self.tokenizer)[0], dtype=np.int64)
            self._i_cache[text] = ids
        return ids

    def context(self, query: str, title: str, item_id: str | None,
                exclude_focus_edge: bool) -> MetapathContext:
        g = self.graph
        if g is None or query not in g.query_index:
            return MetapathContext.empty()
        if item_id is not None and item_id in g.item_index:
            iid = g.item_index[item_id]
        elif item_id is None and title in self._title_index:
            iid = self._title_index[title]
        else:
            return MetapathContext.empty()
        return extract_metapath_context(g, g.query(g.query_index[query]), g.item(iid), exclude_focus_edge)

    def encode(self, query: str, title: str, ctx: MetapathContext, label: float | None = None) -> Batch:
        lq, li = self.config.len_q, self.config.len_i

        def side(insts, mid_len, term_len, mid_fn, term_fn):
            mid = np.zeros(mid_len, dtype=np.int64)
            term = np.zeros((2, term_len), dtype=np.int64)
            pad = np.ones(2, dtype=bool)
            for k, inst in enumerate(insts):
                if inst.middle is not None:
                    mid = mid_fn(inst.middle.text)
                if not inst.padded:
                    term[k] = term_fn(inst.terminal.text)
                    pad[k] = False
            return mid, term, pad

        qm, qt, qp = side(ctx.qiq, li, lq, self.title_ids, self.query_ids)
        im, it, ip = side(ctx.iqi, lq, li, self.query_ids, self.title_ids)
        return Batch(
            q=self.query_ids(query)[None], i=self.title_ids(title)[None],
            qiq_mid=qm[None], qiq_term=qt[None], qiq_pad=qp[None],
            iqi_mid=im[None], iqi_term=it[None], iqi_pad=ip[None],
            labels=None if label is None else np.array([float(label)]),
        )

    def batch(self, examples: Iterable, exclude_focus_edge: bool = True) -> Batch:
        """Encode objects exposing ``query``, ``title``, optional ``item_id`` and ``label``."""
        parts = []
        for ex in examples:
            item_id = getattr(ex, "item_id", None)
            ctx = self.context(ex.query, ex.title, item_id, exclude_focus_edge)
            parts.append(self.encode(ex.query, ex.title, ctx, getattr(ex, "label", None)))
        if not parts:
            raise ValueError("no examples to encode")
        return Batch.concat(parts)


# numerics ----------------------------------------------------------------------

def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def _act(name, x):
    if name == "tanh":
        return np.tanh(x)
    if name == "relu":
        return np.maximum(x, 0.0)
    return x


def _act_grad(name, x, y):
    if name == "tanh":
        return 1.0 - y * y
    if name == "relu":
        return (x > 0).astype(np.float64)
    return np.ones_like(x)


def sequence_embedding(vectors: np.ndarray, length: int) -> tuple[np.ndarray, bool]:
    """Mean of the first ``length`` word vectors; ``(zeros, True)`` when empty."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if length <= 0:
        return np.zeros(vectors.shape[-1]), True
    return vectors[:length].mean(axis=0), False


def interaction_matrix(q_vecs: np.ndarray, i_vecs: np.ndarray, pos_q: np.ndarray, pos_i: np.ndarray,
                       q_mask: np.ndarray | None = None, i_mask: np.ndarray | None = None) -> np.ndarray:
    """Dot products of position-augmented word vectors; PAD rows/columns zero."""
    a = np.asarray(q_vecs, dtype=np.float64) + pos_q
    b = np.asarray(i_vecs, dtype=np.float64) + pos_i
    if q_mask is not None:
        a = a * np.asarray(q_mask, dtype=np.float64)[:, None]
    if i_mask is not None:
        b = b * np.asarray(i_mask, dtype=np.float64)[:, None]
    return a @ b.T


def interaction_embedding(m: np.ndarray) -> np.ndarray:
    return np.asarray(m).reshape(-1)


def instance_embedding(central, middle, terminal, padded: bool) -> np.ndarray:
    central = np.asarray(central, dtype=np.float64)
    if padded:
        return np.zeros_like(central)
    return (central + np.asarray(middle, dtype=np.float64) + np.asarray(terminal, dtype=np.float64)) / 3.0


def _softmax_masked(logits, pad):
    z = np.where(pad, -np.inf, logits)
    top = np.max(z, axis=-1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.where(pad, 0.0, np.exp(z - top))
    tot = e.sum(axis=-1, keepdims=True)
    return np.divide(e, tot, out=np.zeros_like(e), where=tot > 0)


def attention_weights(central, instances, padded, w_att, b_att, activation: str = "tanh"):
    """Softmax over unpadded instances of ``act(w_att . [central, e_k] + b)``.

    Works on a single example (``central`` of shape (d,)) or a batch.
    Returns ``(weights, pre_activation, logits)``.
    """
    central = np.asarray(central, dtype=np.float64)
    instances = np.asarray(instances, dtype=np.float64)
    padded = np.asarray(padded, dtype=bool)
    d = central.shape[-1]
    u = (central @ w_att[:d])[..., None] + instances @ w_att[d:] + np.asarray(b_att).reshape(-1)[0]
    logits = _act(activation, u)
    return _softmax_masked(logits, padded), u, logits


def metapath_embedding(instances, weights, padded, activation: str = "tanh") -> tuple[np.ndarray, np.ndarray]:
    """``act(sum_k a_k e_k)``; zero when every instance is padded. Returns (out, pre)."""
    instances = np.asarray(instances, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    active = ~np.all(np.asarray(padded, dtype=bool), axis=-1)
    h = np.einsum("...k,...kd->...d", weights, instances)
    out = _act(activation, h) * active[..., None]
    return out, h


@dataclass
class ForwardTrace:
    """Intermediate activations from ``forward`` needed by ``backward``."""

    batch: Batch
    masks: dict = field(default_factory=dict)
    seq: dict = field(default_factory=dict)
    a_q: np.ndarray | None = None
    a_i: np.ndarray | None = None
    m_int: np.ndarray | None = None
    paths: dict = field(default_factory=dict)
    x: np.ndarray | None = None
    z1: np.ndarray | None = None
    r1: np.ndarray | None = None
    z2: np.ndarray | None = None
    r2: np.ndarray | None = None
    z3: np.ndarray | None = None
    raw_score: np.ndarray | None = None
    score: np.ndarray | None = None


def _masked_mean(emb, ids):
    mask = ids != PAD
    n = mask.sum(axis=-1)
    tot = (emb[ids] * mask[..., None]).sum(axis=-2)
    return tot / np.maximum(n, 1)[..., None], mask, n


def forward(batch: Batch, params: ModelParams, config: ModelConfig) -> tuple[np.ndarray, ForwardTrace]:
    """Score every example in ``batch``; scores are clamped to [1e-7, 1 - 1e-7]."""
    params.check(config)
    emb = params.word_emb
    if batch.q.shape[1] != config.len_q or batch.i.shape[1] != config.len_i:
        raise ValueError("batch lengths do not match the model config")
    tr = ForwardTrace(batch=batch)
    comps = config.components
    blocks = []

    sq, mq, nq = _masked_mean(emb, batch.q)
    si, mi, ni = _masked_mean(emb, batch.i)
    tr.seq.update(q=sq, i=si)
    tr.masks.update(q=mq, i=mi, nq=nq, ni=ni)

    if "rep" in comps:
        blocks.append(np.concatenate([sq, si], axis=1))

    if "int" in comps:
        a_q = (emb[batch.q] + params.pos_q[None]) * mq[..., None]
        a_i = (emb[batch.i] + params.pos_i[None]) * mi[..., None]
        m_int = np.matmul(a_q, a_i.transpose(0, 2, 1))
        tr.a_q, tr.a_i, tr.m_int = a_q, a_i, m_int
        blocks.append(m_int.reshape(len(batch), -1))

    if "hin" in comps:
        outs = []
        for name, central, mid_ids, term_ids, pad in (
            ("qiq", sq, batch.qiq_mid, batch.qiq_term, batch.qiq_pad),
            ("iqi", si, batch.iqi_mid, batch.iqi_term, batch.iqi_pad),
        ):
            mid, _, _ = _masked_mean(emb, mid_ids)
            term, _, _ = _masked_mean(emb, term_ids)
            live = ~pad
            e = (central[:, None] + mid[:, None] + term) / 3.0 * live[..., None]
            att, u, logits = attention_weights(central, e, pad, params.w_att, params.b_att, config.activation)
            active = live.any(axis=1)
            sums = att.sum(axis=1)
            if not np.allclose(sums[active], 1.0, atol=1e-9) or np.any(sums[~active] != 0):
                raise AssertionError("attention weights do not form a distribution over unpadded instances")
            out, h = metapath_embedding(e, att, pad, config.activation)
            tr.paths[name] = dict(central=central, mid=mid, term=term, pad=pad, e=e, u=u,
                                  logits=logits, att=att, h=h, out=out, active=active)
            outs.append(out)
        blocks.append(np.concatenate(outs, axis=1))

    x = np.concatenate(blocks, axis=1)
    z1 = x @ params.w1.T + params.b1
    r1 = np.maximum(z1, 0.0)
    z2 = r1 @ params.w2.T + params.b2
    r2 = np.maximum(z2, 0.0)
    z3 = (r2 @ params.w3.T + params.b3)[:, 0]
    raw = sigmoid(z3)
    tr.x, tr.z1, tr.r1, tr.z2, tr.r2, tr.z3 = x, z1, r1, z2, r2, z3
    tr.raw_score = raw
    tr.score = np.clip(raw, SCORE_EPS, 1.0 - SCORE_EPS)
    return tr.score, tr


def bce_loss(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy with scores clamped to [1e-7, 1 - 1e-7]."""
    s = np.clip(np.asarray(scores, dtype=np.float64), SCORE_EPS, 1.0 - SCORE_EPS)
    y = np.asarray(labels, dtype=np.float64)
    return float(-np.mean(y * np.log(s) + (1.0 - y) * np.log(1.0 - s)))


def _scatter_seq_grad(grad_word, ids, g, n):
    """Route the gradient of a masked mean back onto word rows."""
    mask = ids != PAD
    per_tok = (g / np.maximum(n, 1)[..., None])[..., None, :] * mask[..., None]
    np.add.at(grad_word, ids[mask], per_tok[mask])


def backward(trace: ForwardTrace, labels, params: ModelParams, config: ModelConfig) -> dict[str, np.ndarray]:
    """Gradients of the mean BCE loss with respect to every parameter.

    ``word_emb`` gets a gradient only when ``config.finetune_embeddings``;
    otherwise its entry is all zeros.
    """
    b = trace.batch
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    bsz = len(y)
    grads = {n: np.zeros_like(getattr(params, n)) for n in params.names()}
    fine = config.finetune_embeddings

    dz3 = (trace.raw_score - y) / bsz
    grads["w3"] = dz3[None, :] @ trace.r2
    grads["b3"] = np.array([dz3.sum()])
    dz2 = (dz3[:, None] * params.w3) * (trace.z2 > 0)
    grads["w2"] = dz2.T @ trace.r1
    grads["b2"] = dz2.sum(axis=0)
    dz1 = (dz2 @ params.w2) * (trace.z1 > 0)
    grads["w1"] = dz1.T @ trace.x
    grads["b1"] = dz1.sum(axis=0)
    dx = dz1 @ params.w1

    d = config.d
    sl = config.slices()
    d_sq = np.zeros((bsz, d))
    d_si = np.zeros((bsz, d))
    gw = grads["word_emb"]

    if "rep" in sl:
        dr = dx[:, sl["rep"]]
        d_sq += dr[:, :d]
        d_si += dr[:, d:]

    if "int" in sl:
        dm = dx[:, sl["int"]].reshape(bsz, config.len_q, config.len_i)
        da_q = np.matmul(dm, trace.a_i) * trace.masks["q"][..., None]
        da_i = np.matmul(dm.transpose(0, 2, 1), trace.a_q) * trace.masks["i"][..., None]
        grads["pos_q"] = da_q.sum(axis=0)
        grads["pos_i"] = da_i.sum(axis=0)
        if fine:
            np.add.at(gw, b.q.ravel(), da_q.reshape(-1, d))
            np.add.at(gw, b.i.ravel(), da_i.reshape(-1, d))

    if "hin" in sl:
        dh_all = dx[:, sl["hin"]]
        for k, (name, d_central) in enumerate((("qiq", d_sq), ("iqi", d_si))):
            p = trace.paths[name]
            d_out = dh_all[:, k * d:(k + 1) * d]
            dh = d_out * _act_grad(config.activation, p["h"], _act(config.activation, p["h"]))
            dh = dh * p["active"][:, None]
            att, e = p["att"], p["e"]
            d_att = np.einsum("bd,bkd->bk", dh, e)
            d_e = att[..., None] * dh[:, None, :]
            d_logit = att * (d_att - np.sum(att * d_att, axis=1, keepdims=True))
            du = d_logit * _act_grad(config.activation, p["u"], p["logits"])
            du = du * (~p["pad"])
            grads["w_att"][:d] += np.einsum("bk,bd->d", du, p["central"])
            grads["w_att"][d:] += np.einsum("bk,bkd->d", du, e)
            grads["b_att"] += du.sum()
            d_central += du.sum(axis=1)[:, None] * params.w_att[:d]
            d_e += du[..., None] * params.w_att[d:]
            d_e *= (~p["pad"])[..., None]
            d_central += d_e.sum(axis=1) / 3.0
            if fine:
                mid_ids = b.qiq_mid if name == "qiq" else b.iqi_mid
                term_ids = b.qiq_term if name == "qiq" else b.iqi_term
                _scatter_seq_grad(gw, mid_ids, d_e.sum(axis=1) / 3.0, (mid_ids != PAD).sum(-1))
                _scatter_seq_grad(gw, term_ids, d_e / 3.0, (term_ids != PAD).sum(-1))

    if fine:
        _scatter_seq_grad(gw, b.q, d_sq, trace.masks["nq"])
        _scatter_seq_grad(gw, b.i, d_si, trace.masks["ni"])
        gw[PAD] = 0.0
    return grads


def loss_and_grads(batch: Batch, params: ModelParams, config: ModelConfig):
    scores, trace = forward(batch, params, config)
    return bce_loss(scores, batch.labels), backward(trace, batch.labels, params, config), scores


def predict(batch: Batch, params: ModelParams, config: ModelConfig, chunk: int = 1024) -> np.ndarray:
    out = [forward(batch.take(slice(s, s + chunk)), params, config)[0] for s in range(0, len(batch), chunk)]
    return np.concatenate(out) if out else np.zeros(0)


# checkpoints -------------------------------------------------------------------

def save_checkpoint(params: ModelParams, config: ModelConfig, path) -> None:
    lines = [CKPT_HEADER]
    cfg = {
        "d": config.d, "len_q": config.len_q, "len_i": config.len_i,
        "h1": config.h1, "h2": config.h2,
        "components": ",".join(c for c in COMPONENTS if c in config.components),
        "activation": config.activation,
        "finetune_embeddings": int(config.finetune_embeddings),
        "vocab_size": params.word_emb.shape[0],
    }
    lines += [f"config {k} {v}" for k, v in cfg.items()]
    for name in params.names():
        arr = np.asarray(getattr(params, name), dtype=np.float64)
        lines.append(f"tensor {name} {','.join(map(str, arr.shape))}")
        lines.append(" ".join("%.9g" % v for v in arr.ravel()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path, vocab_size: int | None = None) -> tuple[ModelParams, ModelConfig]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#hg4sm-ckpt"):
        raise ValueError("bad checkpoint header")
    if lines[0].strip() != CKPT_HEADER:
        raise ValueError(f"unsupported checkpoint version: {lines[0].strip()!r}")
    cfg: dict[str, str] = {}
    tensors: dict[str, np.ndarray] = {}
    k = 1
    while k < len(lines):
        line = lines[k]
        if line.startswith("config "):
            _, key, val = line.split(" ", 2)
            cfg[key] = val
            k += 1
        elif line.startswith("tensor "):
            _, name, shape = line.split(" ")
            dims = tuple(int(s) for s in shape.split(",") if s)
            vals = np.array(lines[k + 1].split(), dtype=np.float64) if k + 1 < len(lines) else np.zeros(0)
            if vals.size != int(np.prod(dims)):
                raise ValueError(f"checkpoint tensor {name}: expected {int(np.prod(dims))} values")
            tensors[name] = vals.reshape(dims)
            k += 2
        elif not line.strip():
            k += 1
        else:
            raise ValueError(f"checkpoint line {k + 1}: unrecognised entry")
    try:
        config = ModelConfig(
            d=int(cfg["d"]), len_q=int(cfg["len_q"]), len_i=int(cfg["len_i"]),
            h1=int(cfg["h1"]), h2=int(cfg["h2"]), components=cfg["components"],
            activation=cfg["activation"], finetune_embeddings=bool(int(cfg["finetune_embeddings"])),
        )
        saved_vocab = int(cfg["vocab_size"])
    except KeyError as exc:
        raise ValueError(f"checkpoint is missing config key {exc}") from None
    if vocab_size is not None and vocab_size != saved_vocab:
        raise ValueError(f"checkpoint vocab size {saved_vocab} does not match vocab ({vocab_size})")
    missing = set(ModelParams.names()) - set(tensors)
    if missing:
        raise ValueError(f"checkpoint is missing tensors {sorted(missing)}")
    params = ModelParams(**{n: tensors[n] for n in ModelParams.names()})
    if params.word_emb.shape[0] != saved_vocab:
        raise ValueError("checkpoint word table disagrees with its vocab size")
    params.check(config)
    return params, config
