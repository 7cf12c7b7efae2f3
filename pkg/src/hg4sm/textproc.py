"""Tokenization, vocabulary construction and fixed-length encoding.

Tokens are either a single CJK ideograph or a maximal run of ASCII letters
and digits (lowercased), so product names such as ``iphone11`` or ``256gb``
survive as whole words. Everything else is a separator.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PAD = 0
UNK = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

VOCAB_HEADER = "#hg4sm-vocab v1"

# CJK Unified Ideographs plus extensions A-G.
DEFAULT_CJK_RANGES: tuple[tuple[int, int], ...] = (
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0x20000, 0x2A6DF),
    (0x2A700, 0x2EBEF),
    (0x30000, 0x3134F),
)


def _fullwidth_to_halfwidth(text: str) -> str:
    # U+FF01..U+FF5E mirror U+0021..U+007E; U+3000 is the ideographic space.
    out = []
    for ch in text:
        cp = ord(ch)
        if 0xFF01 <= cp <= 0xFF5E:
            out.append(chr(cp - 0xFEE0))
        elif cp == 0x3000:
            out.append(" ")
        else:
            out.append(ch)
    return "".join(out)


class Tokenizer:
    """Callable tokenizer with a configurable set of CJK codepoint ranges."""

    def __init__(self, cjk_ranges: Sequence[tuple[int, int]] = DEFAULT_CJK_RANGES):
        for lo, hi in cjk_ranges:
            if lo > hi or lo < 0x80:
                raise ValueError(f"invalid CJK range {lo:#x}-{hi:#x}")
        self.cjk_ranges = tuple((int(lo), int(hi)) for lo, hi in cjk_ranges)
        cls = "".join(f"{chr(lo)}-{chr(hi)}" for lo, hi in self.cjk_ranges)
        self._pattern = re.compile(f"[A-Za-z0-9]+|[{cls}]" if cls else "[A-Za-z0-9]+")

    def is_cjk(self, ch: str) -> bool:
        cp = ord(ch)
        return any(lo <= cp <= hi for lo, hi in self.cjk_ranges)

    def __call__(self, text: str) -> list[str]:
        text = _fullwidth_to_halfwidth(text)
        # str.lower() is avoided on purpose: it maps some non-ASCII letters
        # (e.g. KELVIN SIGN) onto ASCII, which would turn separators into tokens.
        return [m.group(0).lower() if m.group(0).isascii() else m.group(0)
                for m in self._pattern.finditer(text)]


_default_tokenizer = Tokenizer()


def tokenize(text: str) -> list[str]:
    """Split ``text`` into tokens using the default CJK ranges.

    >>> tokenize("iphone11 手机壳")
    ['iphone11', '手', '机', '壳']
    """
    return _default_tokenizer(text)


@dataclass(frozen=True)
class Vocab:
    """Immutable token inventory. Ids 0 and 1 are reserved for PAD and UNK."""

    itos: tuple[str, ...]
    counts: tuple[int, ...]
    min_count: int = field(default=1, compare=False)
    max_size: int = field(default=50_000, compare=False)
    stoi: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.itos) < 2 or self.itos[PAD] != PAD_TOKEN or self.itos[UNK] != UNK_TOKEN:
            raise ValueError("vocab must start with the PAD and UNK entries")
        if len(self.counts) != len(self.itos):
            raise ValueError("counts and tokens differ in length")
        stoi = {tok: i for i, tok in enumerate(self.itos)}
        if len(stoi) != len(self.itos):
            raise ValueError("duplicate token in vocab")
        object.__setattr__(self, "stoi", stoi)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi and self.stoi[token] > UNK

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    @property
    def tokens(self) -> tuple[str, ...]:
        """Non-reserved tokens in id order."""
        return self.itos[2:]

    def save(self, path) -> None:
        lines = [VOCAB_HEADER]
        lines += [f"{tok}\t{i}\t{c}" for i, (tok, c) in enumerate(zip(self.itos, self.counts))]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0].strip() != VOCAB_HEADER:
            raise ValueError(f"{path}: missing header {VOCAB_HEADER!r}")
        itos, counts = [], []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected token<TAB>id<TAB>count")
            tok, idx, cnt = parts
            if int(idx) != len(itos):
                raise ValueError(f"{path}:{lineno}: ids must be dense and ordered")
            itos.append(tok)
            counts.append(int(cnt))
        return cls(tuple(itos), tuple(counts))


def build_vocab(corpus: Iterable[str], min_count: int = 1, max_size: int = 50_000,
                tokenizer: Tokenizer | None = None) -> Vocab:
    """Count tokens over ``corpus`` and keep the frequent ones.

    Tokens with fewer than ``min_count`` occurrences are dropped; if more than
    ``max_size`` survive, the most frequent are kept with ties broken by
    lexicographic token order, so the result does not depend on corpus order.
    """
    if min_count < 1 or max_size < 1:
        raise ValueError("min_count and max_size must be >= 1")
    tok = tokenizer or _default_tokenizer
    freq: Counter[str] = Counter()
    for text in corpus:
        freq.update(tok(text))
    kept = sorted((t for t, c in freq.items() if c >= min_count), key=lambda t: (-freq[t], t))
    kept = kept[:max_size]
    return Vocab(
        itos=(PAD_TOKEN, UNK_TOKEN, *kept),
        counts=(0, 0, *(freq[t] for t in kept)),
        min_count=min_count,
        max_size=max_size,
    )


def encode(vocab: Vocab, text: str, max_len: int,
           tokenizer: Tokenizer | None = None) -> tuple[list[int], int]:
    """Map ``text`` to exactly ``max_len`` ids (head-truncated, right-padded)."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    tok = tokenizer or _default_tokenizer
    ids = [vocab.id(t) for t in tok(text)][:max_len]
    n = len(ids)
    return ids + [PAD] * (max_len - n), n
