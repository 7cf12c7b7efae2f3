"""Independent reference computations used by the model and acceptance tests.

Nothing in here calls into ``hg4sm.model`` numerics: the straight-line
forward pass uses plain Python floats and explicit loops, and gradients are
checked against central finite differences of the loss.
"""

import math

import numpy as np

from hg4sm.model import Batch, ModelConfig, ModelParams, bce_loss, forward, init_params


def random_ids(rng, shape, length, vocab_size, min_len=0):
    ids = rng.integers(2, vocab_size, size=tuple(shape) + (length,))
    lens = rng.integers(min_len, length + 1, size=shape)
    for idx in np.ndindex(*shape):
        ids[idx][lens[idx]:] = 0
    return ids


def random_batch(rng, cfg: ModelConfig, vocab_size: int, size: int, pad_prob=0.3) -> Batch:
    return Batch(
        q=random_ids(rng, (size,), cfg.len_q, vocab_size, min_len=1),
        i=random_ids(rng, (size,), cfg.len_i, vocab_size, min_len=1),
        qiq_mid=random_ids(rng, (size,), cfg.len_i, vocab_size, 1),
        qiq_term=random_ids(rng, (size, 2), cfg.len_q, vocab_size, 1),
        qiq_pad=rng.random((size, 2)) < pad_prob,
        iqi_mid=random_ids(rng, (size,), cfg.len_q, vocab_size, 1),
        iqi_term=random_ids(rng, (size, 2), cfg.len_i, vocab_size, 1),
        iqi_pad=rng.random((size, 2)) < pad_prob,
        labels=rng.integers(0, 2, size).astype(float),
    )


def random_model(rng, cfg: ModelConfig, vocab_size: int, scale=0.5):
    emb = rng.normal(size=(vocab_size, cfg.d))
    emb[0] = 0.0
    params = init_params(cfg, emb, seed=int(rng.integers(1 << 30)))
    for name in params.names()[:-1]:
        arr = getattr(params, name)
        arr[...] = rng.normal(scale=scale, size=arr.shape)
    return params


def finite_difference_grads(batch, params, cfg, names, h=1e-4):
    out = {}
    for name in names:
        arr = getattr(params, name)
        num = np.zeros_like(arr)
        for idx in np.ndindex(*arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            lp = bce_loss(forward(batch, params, cfg)[0], batch.labels)
            arr[idx] = old - h
            lm = bce_loss(forward(batch, params, cfg)[0], batch.labels)
            arr[idx] = old
            num[idx] = (lp - lm) / (2 * h)
        out[name] = num
    return out


def relative_error(analytic, numeric):
    """Tensor-level relative error ||a - n|| / max(||a||, ||n||)."""
    a, n = np.ravel(analytic), np.ravel(numeric)
    den = max(np.linalg.norm(a), np.linalg.norm(n))
    return 0.0 if den == 0 else float(np.linalg.norm(a - n) / den)


def elementwise_ok(analytic, numeric, rtol=1e-4, atol=1e-9):
    return bool(np.all(np.abs(analytic - numeric) <= rtol * np.maximum(np.abs(analytic), np.abs(numeric)) + atol))


# straight-line forward pass -----------------------------------------------------------

def _vec_mean(vectors):
    if not vectors:
        return [0.0, 0.0]
    return [sum(v[k] for v in vectors) / len(vectors) for k in range(2)]


def hand_forward(words, q, i, pos_q, pos_i, qiq, iqi, w_att, b_att, w1, b1, w2, b2, w3, b3):
    """Score one example of the d=2, L_Q=L_I=2 model using only Python floats.

    ``words`` maps id -> [x, y]; id 0 is PAD. ``qiq``/``iqi`` are
    ``(mid_ids, [term_ids_1, term_ids_2], [pad_1, pad_2])``.
    """
    def seq(ids):
        return _vec_mean([words[t] for t in ids if t != 0])

    e_q, e_i = seq(q), seq(i)
    rep = e_q + e_i

    inter = []
    for a in range(2):
        for b in range(2):
            if q[a] == 0 or i[b] == 0:
                inter.append(0.0)
                continue
            u = [words[q[a]][k] + pos_q[a][k] for k in range(2)]
            v = [words[i[b]][k] + pos_i[b][k] for k in range(2)]
            inter.append(u[0] * v[0] + u[1] * v[1])

    def metapath(central, path):
        mid_ids, terms, pads = path
        mid = seq(mid_ids)
        inst = []
        for k in range(2):
            if pads[k]:
                inst.append(None)
            else:
                t = seq(terms[k])
                inst.append([(central[j] + mid[j] + t[j]) / 3.0 for j in range(2)])
        logits = []
        for e in inst:
            if e is None:
                logits.append(None)
            else:
                z = (w_att[0] * central[0] + w_att[1] * central[1] + w_att[2] * e[0] + w_att[3] * e[1] + b_att)
                logits.append(math.tanh(z))
        live = [x for x in logits if x is not None]
        if not live:
            return [0.0, 0.0]
        top = max(live)
        ex = [0.0 if x is None else math.exp(x - top) for x in logits]
        tot = sum(ex)
        att = [x / tot for x in ex]
        h = [sum(att[k] * inst[k][j] for k in range(2) if inst[k] is not None) for j in range(2)]
        return [math.tanh(h[0]), math.tanh(h[1])]

    hin = metapath(e_q, qiq) + metapath(e_i, iqi)
    x = rep + inter + hin

    def dense(w, b, v, relu):
        out = []
        for r in range(len(w)):
            z = b[r] + sum(w[r][c] * v[c] for c in range(len(v)))
            out.append(max(z, 0.0) if relu else z)
        return out

    r1 = dense(w1, b1, x, True)
    r2 = dense(w2, b2, r1, True)
    z3 = dense(w3, b3, r2, False)[0]
    return 1.0 / (1.0 + math.exp(-z3))


def hand_case():
    words = {0: [0.0, 0.0], 1: [0.1, -0.1], 2: [0.5, -0.25], 3: [-0.4, 0.8],
             4: [0.3, 0.3], 5: [-0.6, -0.2], 6: [0.9, 0.1]}
    pos_q = [[0.05, -0.02], [0.01, 0.03]]
    pos_i = [[-0.04, 0.02], [0.06, 0.0]]
    w_att, b_att = [0.7, -0.3, 0.5, 0.9], 0.1
    w1 = [[0.2, -0.1, 0.3, 0.05, 0.1, -0.2, 0.4, 0.3, -0.5, 0.2, 0.1, 0.6],
          [-0.3, 0.4, 0.1, -0.2, 0.5, 0.1, -0.1, 0.2, 0.3, -0.4, 0.2, 0.1],
          [0.1, 0.1, -0.4, 0.3, -0.2, 0.3, 0.2, -0.3, 0.1, 0.1, -0.6, 0.2]]
    b1 = [0.05, -0.02, 0.1]
    w2 = [[0.6, -0.4, 0.3], [0.2, 0.5, -0.1]]
    b2 = [0.01, 0.03]
    w3 = [[1.2, -0.7]]
    b3 = [0.15]
    q, i = [2, 3], [4, 0]
    qiq = ([5, 6], [[3, 0], [2, 4]], [False, False])
    iqi = ([6, 0], [[5, 4], [0, 0]], [False, True])
    return words, q, i, pos_q, pos_i, qiq, iqi, w_att, b_att, w1, b1, w2, b2, w3, b3


def hand_case_model():
    """The hand-sized case as (batch, params, config, straight-line score)."""
    words, q, i, pos_q, pos_i, qiq, iqi, w_att, b_att, w1, b1, w2, b2, w3, b3 = case = hand_case()
    cfg = ModelConfig(d=2, len_q=2, len_i=2, h1=3, h2=2)
    params = ModelParams(
        pos_q=np.array(pos_q), pos_i=np.array(pos_i), w_att=np.array(w_att), b_att=np.array([b_att]),
        w1=np.array(w1), b1=np.array(b1), w2=np.array(w2), b2=np.array(b2),
        w3=np.array(w3), b3=np.array(b3),
        word_emb=np.array([words[k] for k in range(len(words))]),
    )
    batch = Batch(
        q=np.array([q]), i=np.array([i]),
        qiq_mid=np.array([qiq[0]]), qiq_term=np.array([qiq[1]]), qiq_pad=np.array([qiq[2]]),
        iqi_mid=np.array([iqi[0]]), iqi_term=np.array([iqi[1]]), iqi_pad=np.array([iqi[2]]),
    )
    return batch, params, cfg, hand_forward(*case)
