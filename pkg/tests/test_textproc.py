import json
import re
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hg4sm.textproc import PAD, UNK, Tokenizer, Vocab, build_vocab, encode, tokenize

FIXTURES = Path(__file__).parent / "fixtures"

TOKEN_RE = re.compile(r"[a-z0-9]+|[㐀-䶿一-鿿\U00020000-\U0002a6df\U0002a700-\U0002ebef\U00030000-\U0003134f]")

mixed_text = st.text(
    alphabet=st.one_of(
        st.characters(codec="utf-8"),
        st.sampled_from(list("abcXYZ0189 手机壳红裙ＡＢ１２　!-")),
    ),
    max_size=40,
)


def _vocab(**ids):
    itos = ["<pad>", "<unk>"] + [None] * (max(ids.values()) - 1)
    for tok, i in ids.items():
        itos[i] = tok
    return Vocab(tuple(itos), (0,) * len(itos))


@pytest.mark.parametrize("text, expected", [
    ("iphone11 手机壳", ["iphone11", "手", "机", "壳"]),
    ("", []),
    ("Mac Pro!!", ["mac", "pro"]),
    ("256GB内存", ["256gb", "内", "存"]),
])
def test_tokenize_examples(text, expected):
    assert tokenize(text) == expected


def test_fullwidth_ascii_is_normalized():
    assert tokenize("ｉＰｈｏｎｅ１１　手机") == ["iphone11", "手", "机"]


def test_non_ascii_letters_are_separators():
    # KELVIN SIGN lowercases to ASCII "k" under str.lower(); it must stay a separator.
    assert tokenize("aKb") == ["a", "b"]
    assert tokenize("café") == ["caf"]


def test_custom_cjk_ranges():
    hiragana = Tokenizer([(0x3040, 0x309F)])
    assert hiragana("あい手") == ["あ", "い"]
    with pytest.raises(ValueError):
        Tokenizer([(0x30, 0x39)])


def test_generated_fixture():
    cases = [json.loads(line) for line in (FIXTURES / "tokenize_cases.jsonl").read_text(encoding="utf-8").splitlines()]
    assert len(cases) == 100
    for case in cases:
        assert tokenize(case["text"]) == case["tokens"], case["text"]


@given(mixed_text)
def test_separator_rule_is_idempotent(text):
    toks = tokenize(text)
    assert tokenize(" ".join(toks)) == toks


@given(mixed_text)
def test_every_token_is_one_class(text):
    for tok in tokenize(text):
        assert tok and TOKEN_RE.fullmatch(tok)
        if not tok.isascii():
            assert len(tok) == 1


def test_build_vocab_examples():
    assert build_vocab(["a b", "a"], min_count=2).tokens == ("a",)
    assert build_vocab(["a b", "a b", "c"], min_count=1, max_size=2).tokens == ("a", "b")
    empty = build_vocab([], min_count=1, max_size=5)
    assert empty.tokens == () and len(empty) == 2


def test_build_vocab_tie_break_is_lexicographic():
    assert build_vocab(["z y x", "w"], max_size=2).tokens == ("w", "x")


def test_build_vocab_rejects_bad_params():
    with pytest.raises(ValueError):
        build_vocab(["a"], min_count=0)
    with pytest.raises(ValueError):
        build_vocab(["a"], max_size=0)


@settings(max_examples=50)
@given(st.lists(st.text(alphabet="abcd 手机", max_size=8), max_size=12), st.randoms(use_true_random=False),
       st.integers(1, 3), st.integers(1, 4))
def test_build_vocab_order_insensitive(corpus, rnd, min_count, max_size):
    shuffled = list(corpus)
    rnd.shuffle(shuffled)
    a = build_vocab(corpus, min_count, max_size)
    b = build_vocab(shuffled, min_count, max_size)
    assert a == b
    assert len(a) <= max_size + 2
    assert all(c >= min_count for c in a.counts[2:])


def test_encode_examples():
    v = _vocab(a=2, b=3)
    assert encode(v, "a b", 4) == ([2, 3, 0, 0], 2)
    assert encode(_vocab(a=2), "a z a", 2) == ([2, 1], 2)
    assert encode(v, "", 3) == ([PAD] * 3, 0)
    assert encode(v, "zz", 1) == ([UNK], 1)
    with pytest.raises(ValueError):
        encode(v, "a", 0)


@given(mixed_text, st.integers(1, 10))
def test_encode_length(text, max_len):
    v = build_vocab([text])
    ids, n = encode(v, text, max_len)
    assert len(ids) == max_len and 0 <= n <= max_len


def test_vocab_file_round_trip(tmp_path):
    v = build_vocab(["iphone11 手机壳", "mac pro 手机"])
    path = tmp_path / "vocab.tsv"
    v.save(path)
    text = path.read_text(encoding="utf-8").splitlines()
    assert text[0] == "#hg4sm-vocab v1"
    assert text[1] == "<pad>\t0\t0"
    assert Vocab.load(path) == v


def test_vocab_load_rejects_missing_header(tmp_path):
    path = tmp_path / "v.tsv"
    path.write_text("<pad>\t0\t0\n", encoding="utf-8")
    with pytest.raises(ValueError, match="header"):
        Vocab.load(path)
