import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from iascc.errors import ProgramCorrupted
from iascc.semantic_model import SemanticSegment, default_scene_spec, generate_scene
from iascc.tokenizer import (
    BitPlaneStream, Count, Keyword, Pattern, TliClass, Token, TokenProgram, TokenStream,
    bli_weights, classify_tli, detokenize, flip_count_bit, group_tokens, kolmo_decode, kolmo_encode,
    merge_bitplanes, split_bitplanes, token_bits, tokenize_segment,
)


def _segment(values):
    values = np.asarray(values, dtype=np.uint8)
    coords = np.stack([np.zeros(values.size, int), np.arange(values.size)], axis=1)
    return SemanticSegment(0, coords, values)


def test_tokenize_identity():
    ts = tokenize_segment(_segment([0, 255, 128]))
    assert ts.values.tolist() == [0, 255, 128]
    assert ts[1] == Token(255, 1, 0)
    assert [t.value for t in ts.tokens()] == [0, 255, 128]


def test_tokenize_empty_raises():
    with pytest.raises(ValueError):
        tokenize_segment(_segment([]))


@given(arrays(np.uint8, st.integers(1, 200)))
def test_detokenize_roundtrip(vals):
    seg = _segment(vals)
    assert np.array_equal(detokenize(tokenize_segment(seg), seg).samples, seg.samples)


def test_default_scene_token_counts():
    _, _, segs = generate_scene(default_scene_spec())
    streams = [tokenize_segment(s) for s in segs]
    assert len(streams) == 3 and sum(len(s) for s in streams) == 65536
    assert sum(len(split_bitplanes(s)) for s in streams) == 24


def test_split_single_token():
    planes = split_bitplanes(TokenStream(0, np.array([0b10110001], np.uint8)))
    assert [int(planes[b].bits[0]) for b in range(7, -1, -1)] == [1, 0, 1, 1, 0, 0, 0, 1]
    assert all(planes[b].plane == b for b in range(8))


def test_merge_special_cases():
    zeros = [BitPlaneStream(0, b, np.zeros(5, np.uint8)) for b in range(8)]
    assert merge_bitplanes(zeros).values.tolist() == [0] * 5
    msb = [BitPlaneStream(0, b, np.full(5, int(b == 7), np.uint8)) for b in range(8)]
    assert merge_bitplanes(msb).values.tolist() == [128] * 5


def test_merge_errors():
    good = [BitPlaneStream(0, b, np.zeros(4, np.uint8)) for b in range(8)]
    with pytest.raises(ValueError):
        merge_bitplanes(good[:7])
    with pytest.raises(ValueError):
        merge_bitplanes(good[:7] + [BitPlaneStream(0, 6, np.zeros(4, np.uint8))])
    with pytest.raises(ValueError):
        merge_bitplanes(good[:7] + [BitPlaneStream(0, 7, np.zeros(3, np.uint8))])
    with pytest.raises(ValueError):
        merge_bitplanes(good[:7] + [BitPlaneStream(1, 7, np.zeros(4, np.uint8))])


def test_split_merge_identity_random(rng):
    vals = rng.integers(0, 256, 10_000, dtype=np.uint8)
    ts = TokenStream(3, vals)
    assert np.array_equal(merge_bitplanes(split_bitplanes(ts)).values, vals)
    # plane order is irrelevant to merging
    planes = split_bitplanes(ts)[::-1]
    assert np.array_equal(merge_bitplanes(planes).values, vals)


def test_bli_weights():
    w = bli_weights()
    assert w.sum() == pytest.approx(1.0)
    assert np.allclose(w[1:] / w[:-1], 4.0)


def test_classify_worked_examples():
    prog = TokenProgram.canonical("10", 1_000_000)
    assert classify_tli(Pattern("10"), prog) is TliClass.HIGHLY_CRITICAL
    assert classify_tli(Count(1_000_000), prog) is TliClass.MODERATELY_ROBUST
    assert classify_tli(Keyword("times"), prog) is TliClass.HIGHLY_ROBUST
    assert classify_tli(Token(17, 0, 0)) is TliClass.MODERATELY_ROBUST


def test_classify_rejects_foreign_token():
    with pytest.raises(ValueError):
        classify_tli(Pattern("11"), TokenProgram.canonical("10", 3))


def test_classify_is_pure():
    prog = TokenProgram.canonical("10", 7)
    assert [classify_tli(t, prog) for t in prog.tokens] == [classify_tli(t, prog) for t in prog.tokens]


def test_group_single_class():
    toks = [Token(v, i, 0) for i, v in enumerate([1, 2, 3])]
    blocks = group_tokens(toks, [TliClass.HIGHLY_CRITICAL] * 3)
    assert len(blocks) == 1
    assert np.array_equal(blocks[0].bits, np.unpackbits(np.array([1, 2, 3], np.uint8)))


def test_group_alternating_is_stable():
    toks = [Token(v, i, 0) for i, v in enumerate([10, 20, 30, 40])]
    A, B = TliClass.HIGHLY_CRITICAL, TliClass.HIGHLY_ROBUST
    blocks = group_tokens(toks, [A, B, A, B])
    assert [b.tli_class for b in blocks] == [A, B]
    assert np.array_equal(blocks[0].bits, np.unpackbits(np.array([10, 30], np.uint8)))
    assert np.array_equal(blocks[1].bits, np.unpackbits(np.array([20, 40], np.uint8)))


def test_group_program_block_sizes():
    prog = TokenProgram.canonical("10", 1_000_000)
    classes = [classify_tli(t, prog) for t in prog.tokens]
    blocks = group_tokens(prog.tokens, classes)
    sizes = {}
    for tok, c in zip(prog.tokens, classes):
        sizes[c] = sizes.get(c, 0) + len(token_bits(tok))
    assert len(blocks) == 3
    assert {b.tli_class: b.bits.size for b in blocks} == sizes
    assert sizes == {TliClass.HIGHLY_CRITICAL: 2, TliClass.MODERATELY_ROBUST: 32,
                     TliClass.HIGHLY_ROBUST: 8 * (len("repeat") + len("times"))}


def test_group_length_mismatch():
    with pytest.raises(ValueError):
        group_tokens([Token(1, 0, 0)], [])


def test_token_bits_count_is_msb_first():
    assert token_bits(Count(1)).tolist() == [0] * 31 + [1]
    with pytest.raises(TypeError):
        token_bits("nope")


def _brute_force_program(s):
    best = (s, 1)
    for plen in range(1, len(s) + 1):
        if len(s) % plen == 0 and s[:plen] * (len(s) // plen) == s:
            cand = (s[:plen], len(s) // plen)
            if cand[1] >= 2 and len(cand[0]) < len(best[0]):
                best = cand
    return best


def test_kolmo_encode_examples():
    assert kolmo_encode("1") == TokenProgram.canonical("1", 1)
    assert kolmo_encode("101101") == TokenProgram.canonical("101", 2)
    assert _brute_force_program("101101") == ("101", 2)


@given(st.text(alphabet="01", min_size=1, max_size=30), st.integers(1, 5))
def test_kolmo_encode_matches_brute_force(unit, reps):
    s = unit * reps
    p = kolmo_encode(s)
    assert (p.tokens[1].bits, p.tokens[2].value) == _brute_force_program(s)
    assert kolmo_decode(p).output == s


def test_kolmo_encode_alphabet():
    with pytest.raises(ValueError):
        kolmo_encode("10a")
    with pytest.raises(ValueError):
        kolmo_encode("")


def test_kolmo_two_million_digits_roundtrip():
    s = "10" * 1_000_000
    prog = kolmo_encode(s)
    assert prog == TokenProgram.canonical("10", 1_000_000)
    assert prog.to_text() == "repeat 10 1000000 times"
    out = kolmo_decode(TokenProgram.from_text(prog.to_text()))
    assert out.output == s and out.status == "ok"


def test_kolmo_decode_examples():
    assert kolmo_decode(TokenProgram.canonical("10", 3)).output == "101010"
    fixed = kolmo_decode(TokenProgram.canonical("10", 3).replace(3, Keyword("timex")))
    assert fixed.output == "101010" and fixed.status == "corrected"
    silent = kolmo_decode(TokenProgram.canonical("11", 3))
    assert silent.output == "111111" and silent.status == "ok"


@pytest.mark.parametrize("prog", [
    TokenProgram.canonical("10", 0),
    TokenProgram.canonical("1a", 3),
    TokenProgram.canonical("10", 3).replace(0, Keyword("xxxxxx")),
    TokenProgram((Keyword("repeat"), Pattern("10"))),
    TokenProgram.canonical("10", 1 << 30),
])
def test_kolmo_decode_detects_corruption(prog):
    with pytest.raises(ProgramCorrupted):
        kolmo_decode(prog)


def test_from_text_wrong_arity():
    with pytest.raises(ProgramCorrupted):
        TokenProgram.from_text("repeat 10 times")


def test_count_flip_severity_msb_vs_lsb():
    prog = TokenProgram.canonical("10", 1_000_000)
    n = len(kolmo_decode(prog).output)
    msb = (1_000_000).bit_length() - 1
    lsb_len = len(kolmo_decode(flip_count_bit(prog, 0)).output)
    msb_len = len(kolmo_decode(flip_count_bit(prog, msb)).output)
    assert abs(msb_len - n) > abs(lsb_len - n)
    assert abs(lsb_len - n) == 2


@given(st.integers(2, 10**6))
def test_count_flip_severity_property(count):
    prog = TokenProgram.canonical("10", count)
    n = 2 * count
    top = count.bit_length() - 1
    lsb = kolmo_decode(flip_count_bit(prog, 0)).output if count != 1 else ""
    try:
        msb_len = len(kolmo_decode(flip_count_bit(prog, top)).output)
    except ProgramCorrupted:
        msb_len = 0  # flipping the only set bit leaves count 0: rejected outright
    assert abs(msb_len - n) > abs(len(lsb) - n) or top == 0


def test_flip_count_bit_needs_count():
    with pytest.raises(ValueError):
        flip_count_bit(TokenProgram((Keyword("a"),)), 0)
