"""Byte tokens, bit-plane streams, token importance classes and the repeat-program codec."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ProgramCorrupted
from .semantic_model import SemanticSegment

N_PLANES = 8
COUNT_BITS = 32
MAX_PATTERN = 64


class TliClass(enum.IntEnum):
    HIGHLY_CRITICAL = 0
    MODERATELY_ROBUST = 1
    HIGHLY_ROBUST = 2


# ---------------------------------------------------------------------------
# image byte tokens and bit planes


@dataclass(frozen=True)
class Token:
    value: int
    index: int
    segment_id: int


@dataclass(frozen=True)
class TokenStream:
    segment_id: int
    values: np.ndarray  # uint8

    def __len__(self) -> int:
        return int(self.values.size)

    def __getitem__(self, i: int) -> Token:
        return Token(int(self.values[i]), i, self.segment_id)

    def tokens(self) -> list[Token]:
        return [Token(int(v), i, self.segment_id) for i, v in enumerate(self.values.tolist())]


@dataclass(frozen=True)
class BitPlaneStream:
    segment_id: int
    plane: int  # 7 = most significant
    bits: np.ndarray  # uint8, one bit per token


def tokenize_segment(segment: SemanticSegment) -> TokenStream:
    if segment.length == 0:
        raise ValueError("cannot tokenize an empty segment")
    return TokenStream(segment.id, segment.samples.astype(np.uint8).copy())


def detokenize(stream: TokenStream, segment: SemanticSegment) -> SemanticSegment:
    return segment.with_samples(stream.values)


def split_bitplanes(stream: TokenStream) -> list[BitPlaneStream]:
    """Return the eight planes indexed by bit position (``result[b].plane == b``)."""
    if len(stream) == 0:
        raise ValueError("empty token stream")
    v = stream.values.astype(np.uint8)
    return [BitPlaneStream(stream.segment_id, b, ((v >> b) & 1).astype(np.uint8)) for b in range(N_PLANES)]


def merge_bitplanes(planes: Sequence[BitPlaneStream]) -> TokenStream:
    if len(planes) != N_PLANES or sorted(p.plane for p in planes) != list(range(N_PLANES)):
        raise ValueError("need exactly one stream for each of the planes 0..7")
    if len({p.segment_id for p in planes}) != 1:
        raise ValueError("planes come from different segments")
    if len({p.bits.size for p in planes}) != 1:
        raise ValueError("plane lengths differ")
    acc = np.zeros(planes[0].bits.size, dtype=np.uint16)
    for p in planes:
        acc |= (p.bits.astype(np.uint16) & 1) << p.plane
    return TokenStream(planes[0].segment_id, acc.astype(np.uint8))


def bli_weights(exponent_base: float = 4.0) -> np.ndarray:
    """Per-plane weights (index = plane), normalised to sum to one."""
    w = float(exponent_base) ** np.arange(N_PLANES)
    return w / w.sum()


# ---------------------------------------------------------------------------
# token programs: "repeat <pattern> <count> times"


@dataclass(frozen=True)
class Keyword:
    text: str


@dataclass(frozen=True)
class Pattern:
    bits: str


@dataclass(frozen=True)
class Count:
    value: int


ProgramToken = Keyword | Pattern | Count


@dataclass(frozen=True)
class TokenProgram:
    tokens: tuple[ProgramToken, ...]

    @classmethod
    def canonical(cls, pattern: str, count: int) -> TokenProgram:
        return cls((Keyword("repeat"), Pattern(pattern), Count(count), Keyword("times")))

    def to_text(self) -> str:
        parts = []
        for t in self.tokens:
            parts.append(t.text if isinstance(t, Keyword) else t.bits if isinstance(t, Pattern) else str(t.value))
        return " ".join(parts)

    @classmethod
    def from_text(cls, line: str) -> TokenProgram:
        words = line.split()
        if len(words) != 4:
            raise ProgramCorrupted(f"expected 4 tokens, got {len(words)}")
        return cls((Keyword(words[0]), Pattern(words[1]), Count(int(words[2])), Keyword(words[3])))

    def replace(self, index: int, token: ProgramToken) -> TokenProgram:
        toks = list(self.tokens)
        toks[index] = token
        return TokenProgram(tuple(toks))


@dataclass(frozen=True)
class DecodeResult:
    output: str
    status: str  # "ok" | "corrected"
    corrections: tuple[str, ...] = ()


def token_bits(token) -> np.ndarray:
    """Wire bits of one token (image byte, keyword text, pattern or count)."""
    if isinstance(token, Token):
        return np.unpackbits(np.array([token.value], dtype=np.uint8))
    if isinstance(token, Keyword):
        return np.unpackbits(np.frombuffer(token.text.encode("utf-8"), dtype=np.uint8))
    if isinstance(token, Pattern):
        return np.array([int(c) for c in token.bits], dtype=np.uint8)
    if isinstance(token, Count):
        return np.array([(token.value >> (COUNT_BITS - 1 - i)) & 1 for i in range(COUNT_BITS)], dtype=np.uint8)
    raise TypeError(f"not a token: {token!r}")


def classify_tli(token, program: TokenProgram | None = None) -> TliClass:
    """Importance class of a token.

    Patterns are short, referenced by the decoder and carry no redundancy, so
    any error silently changes the output. Count errors can be caught by a
    validity check. Keywords are redundant enough to repair a single typo.
    Plain image bytes are treated as moderately robust; their importance is
    differentiated per bit plane instead.
    """
    if program is not None and token not in program.tokens:
        raise ValueError(f"{token!r} is not part of the program")
    if isinstance(token, Pattern):
        return TliClass.HIGHLY_CRITICAL
    if isinstance(token, Keyword):
        return TliClass.HIGHLY_ROBUST
    if isinstance(token, (Count, Token)):
        return TliClass.MODERATELY_ROBUST
    raise TypeError(f"not a token: {token!r}")


@dataclass(frozen=True)
class CodingBlock:
    tli_class: TliClass
    bits: np.ndarray


def group_tokens(tokens: Sequence, classes: Sequence[TliClass]) -> list[CodingBlock]:
    """Concatenate the bits of same-class tokens, keeping their relative order."""
    if len(tokens) != len(classes):
        raise ValueError("classes must align with tokens")
    per_class: dict[TliClass, list[np.ndarray]] = {}
    for tok, cls in zip(tokens, classes):
        per_class.setdefault(TliClass(cls), []).append(token_bits(tok))
    return [CodingBlock(c, np.concatenate(per_class[c]).astype(np.uint8)) for c in sorted(per_class)]


def kolmo_encode(s: str) -> TokenProgram:
    """Shortest ``pattern * count`` description of ``s`` (pattern length <= 64)."""
    if not s or set(s) - {"0", "1"}:
        raise ValueError("input must be a non-empty binary string")
    n = len(s)
    for plen in range(1, min(MAX_PATTERN, n // 2) + 1):
        if n % plen == 0 and s[:plen] * (n // plen) == s:
            return TokenProgram.canonical(s[:plen], n // plen)
    return TokenProgram.canonical(s, 1)


def _edit_distance(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def kolmo_decode(program: TokenProgram, max_output: int = 1 << 28) -> DecodeResult:
    """Execute a repeat program.

    Keywords within edit distance 1 of ``repeat``/``times`` are repaired; any
    structural or validity failure raises :class:`ProgramCorrupted`, which the
    caller treats as a retransmission request. Pattern corruption is not
    detectable and decodes silently to the wrong string.
    """
    toks = program.tokens
    kinds = (Keyword, Pattern, Count, Keyword)
    if len(toks) != 4 or not all(isinstance(t, k) for t, k in zip(toks, kinds)):
        raise ProgramCorrupted("program does not have the form: repeat <pattern> <count> times")
    corrections = []
    for tok, want in ((toks[0], "repeat"), (toks[3], "times")):
        dist = _edit_distance(tok.text, want)
        if dist == 1:
            corrections.append(f"{tok.text!r}->{want!r}")
        elif dist > 1:
            raise ProgramCorrupted(f"unrecognised keyword {tok.text!r}")
    pattern, count = toks[1].bits, toks[2].value
    if not pattern or set(pattern) - {"0", "1"}:
        raise ProgramCorrupted(f"invalid pattern {pattern!r}")
    if count < 1 or len(pattern) * count > max_output:
        raise ProgramCorrupted(f"implausible count {count}")
    return DecodeResult(pattern * count, "corrected" if corrections else "ok", tuple(corrections))


def flip_count_bit(program: TokenProgram, bit: int) -> TokenProgram:
    """Copy of ``program`` with bit ``bit`` (0 = LSB) of its Count token flipped."""
    for i, t in enumerate(program.tokens):
        if isinstance(t, Count):
            return program.replace(i, Count(t.value ^ (1 << bit)))
    raise ValueError("program has no Count token")
