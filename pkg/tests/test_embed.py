import numpy as np
import pytest

from hg4sm.embed import (EmbeddingTable, SkipgramConfig, init_embeddings, load_embeddings, lookup,
                         save_embeddings, sgns_loss_and_grads, train_skipgram)
from hg4sm.textproc import PAD, UNK, build_vocab, tokenize


def _ids(vocab, texts):
    return [[vocab.id(t) for t in tokenize(s)] for s in texts]


@pytest.fixture(scope="module")
def toy():
    texts = ["红 裙 红 裙 红 裙", "手 机 手 机 手 机"]
    vocab = build_vocab(texts)
    cfg = SkipgramConfig(dim=16, epochs=50, negatives=2, window=2, seed=7, batch_size=8)
    table, losses = train_skipgram(_ids(vocab, texts), vocab, cfg, return_losses=True)
    return vocab, table, losses, texts, cfg


def _cos(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def test_cooccurring_words_end_up_closer(toy):
    vocab, table, *_ = toy
    red, skirt, phone = (table.matrix[vocab.id(t)] for t in ("红", "裙", "手"))
    assert _cos(red, skirt) > _cos(red, phone)


def test_loss_decreases(toy):
    losses = toy[2]
    assert len(losses) == 50
    assert losses[-1] < losses[0]


def test_zero_epochs_returns_initialization(toy):
    vocab, _, _, texts, cfg = toy
    cfg0 = SkipgramConfig(dim=16, epochs=0, seed=7)
    table = train_skipgram(_ids(vocab, texts), vocab, cfg0)
    np.testing.assert_array_equal(table.matrix, init_embeddings(len(vocab), 16, 7))


def test_seeded_determinism_and_pad_row(toy):
    vocab, table, _, texts, cfg = toy
    again = train_skipgram(_ids(vocab, texts), vocab, cfg)
    np.testing.assert_array_equal(table.matrix, again.matrix)
    assert np.all(table.matrix[PAD] == 0)


def test_init_range():
    m = init_embeddings(50, 8, 0)
    assert m.dtype == np.float32
    assert np.all(np.abs(m) <= 0.5 / 8)
    assert np.all(m[PAD] == 0)


def test_empty_corpus_is_an_error():
    vocab = build_vocab(["a"])
    with pytest.raises(ValueError, match="empty training corpus"):
        train_skipgram([], vocab, SkipgramConfig())
    with pytest.raises(ValueError, match="empty training corpus"):
        train_skipgram([[PAD, PAD]], vocab, SkipgramConfig())


def test_out_of_range_ids_rejected():
    vocab = build_vocab(["a b"])
    with pytest.raises(ValueError):
        train_skipgram([[2, 99]], vocab, SkipgramConfig())


@pytest.mark.parametrize("kwargs", [dict(window=0), dict(negatives=0), dict(lr=0.0), dict(dim=0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SkipgramConfig(**kwargs)


def test_sgns_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    d, k = 6, 4
    center, context = rng.normal(size=d), rng.normal(size=d)
    negs = rng.normal(size=(k, d))
    _, g_c, g_o, g_n = sgns_loss_and_grads(center, context, negs)
    h = 1e-4

    def numeric(arr, which):
        out = np.zeros_like(arr)
        for idx in np.ndindex(*arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            lp = sgns_loss_and_grads(center, context, negs)[0]
            arr[idx] = old - h
            lm = sgns_loss_and_grads(center, context, negs)[0]
            arr[idx] = old
            out[idx] = (lp - lm) / (2 * h)
        return out

    for analytic, arr in ((g_c, center), (g_o, context), (g_n, negs)):
        num = numeric(arr, None)
        rel = np.abs(analytic - num) / np.maximum(np.maximum(np.abs(analytic), np.abs(num)), 1e-8)
        assert rel.max() < 1e-4


def test_lookup(toy):
    vocab, table, *_ = toy
    assert np.all(lookup(table, [PAD]) == 0)
    rid = vocab.id("红")
    np.testing.assert_array_equal(table.lookup([rid])[0], table.matrix[rid])
    unk = lookup(table, [UNK])[0]
    assert unk.shape == (16,) and np.all(np.isfinite(unk))
    with pytest.raises(IndexError):
        lookup(table, [len(vocab)])
    with pytest.raises(IndexError):
        lookup(table, [-1])


def test_save_load_round_trip_is_bitwise(toy, tmp_path):
    vocab, table, *_ = toy
    path = tmp_path / "emb.txt"
    save_embeddings(table, path)
    assert path.read_text(encoding="utf-8").startswith(f"#hg4sm-emb v1 {len(vocab)} 16\n")
    back = load_embeddings(path, vocab)
    assert back.matrix.tobytes() == table.matrix.tobytes()
    assert load_embeddings(path).vocab.itos == vocab.itos


def test_load_reports_short_row(tmp_path):
    path = tmp_path / "bad.txt"
    rows = ["<pad> " + " ".join(["0"] * 8), "<unk> " + " ".join(["0.5"] * 7)]
    path.write_text("#hg4sm-emb v1 2 8\n" + "\n".join(rows) + "\n", encoding="utf-8")
    with pytest.raises(ValueError, match=":3:"):
        load_embeddings(path)


def test_load_empty_file(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("", encoding="utf-8")
    with pytest.raises(ValueError, match="missing header"):
        load_embeddings(path)


def test_load_vocab_size_mismatch(toy, tmp_path):
    vocab, table, *_ = toy
    path = tmp_path / "emb.txt"
    save_embeddings(table, path)
    with pytest.raises(ValueError, match="vocab size"):
        load_embeddings(path, build_vocab(["x y z w v u t s r q"]))


def test_table_rejects_nonzero_pad():
    vocab = build_vocab(["a"])
    m = np.ones((len(vocab), 2), dtype=np.float32)
    with pytest.raises(ValueError, match="PAD"):
        EmbeddingTable(vocab, m)
