"""Tests for the unified vocabulary, image grammar and token-stream files"""

import random
from fractions import Fraction

import numpy as np
import pytest

from tokgen_module.core.errors import DomainError, ParseError, ParseErrorKind
from tokgen_module.seqcodec import (
    GrammarState,
    ImageTokenBlock,
    Marker,
    TokenKind,
    decode_token_stream,
    encode_token_stream,
    find_image_block,
    layout_build,
    next_legal_mask,
    parse,
    read_token_stream,
    serialize,
    write_token_stream,
)
from tokgen_module.telemetry import InMemoryMonitor


def block_of(sem_h, sem_w, ratio=2, seed=0):
    rng = np.random.default_rng(seed)
    return ImageTokenBlock(
        rng.integers(0, 5, size=(sem_h, sem_w)),
        rng.integers(0, 6, size=(sem_h * ratio, sem_w * ratio)),
    )


class TestVocabLayout:
    """Test id ranges of the unified vocabulary."""

    def test_vocab_size(self):
        layout = layout_build(1000, 1024, 4096, 64, 64)
        assert layout.vocab_size == 6255

    def test_vision_only_markers_start_at_zero(self):
        layout = layout_build(0, 4, 4, 2, 2)
        assert layout.soi == 0
        assert layout.from_global(0).value is Marker.SOI

    def test_pixel_offset_identity(self, small_layout):
        assert small_layout.from_global(small_layout.pix_offset) == (TokenKind.PIXEL, 0)

    def test_ranges_are_contiguous(self, small_layout):
        end = 0
        for kind in TokenKind:
            lo, hi = small_layout.range_of(kind)
            assert lo == end
            end = hi
        assert end == small_layout.vocab_size

    def test_global_local_inverse(self, small_layout):
        for token in range(small_layout.vocab_size):
            local = small_layout.from_global(token)
            assert small_layout.to_global(local.kind, local.value) == token

    def test_id_width_overflow(self):
        with pytest.raises(DomainError):
            layout_build(1000, 1024, 4096, 64, 64, id_bits=12)

    def test_out_of_range_id(self, small_layout):
        with pytest.raises(DomainError):
            small_layout.from_global(small_layout.vocab_size)

    def test_hash_depends_on_layout(self, small_layout):
        assert small_layout.layout_hash() == layout_build(10, 5, 6, 4, 4).layout_hash()
        assert small_layout.layout_hash() != layout_build(10, 5, 7, 4, 4).layout_hash()


class TestSerialize:
    """Test block serialization."""

    def test_lengths(self, small_layout):
        assert len(serialize(block_of(4, 4), small_layout)) == 100
        assert len(serialize(block_of(1, 1), small_layout)) == 16
        assert small_layout.sequence_length(4, 4) == 100

    def test_round_trip(self, small_layout):
        for h, w in ((1, 1), (2, 3), (4, 4)):
            block = block_of(h, w, seed=h * 10 + w)
            assert parse(serialize(block, small_layout), small_layout) == block

    def test_structure(self, small_layout):
        tokens = serialize(block_of(1, 1), small_layout)
        assert tokens[0] == small_layout.soi
        assert tokens[1] == small_layout.height_id(1)
        assert tokens[2] == small_layout.width_id(1)
        assert tokens[3] == small_layout.sos
        assert tokens[-1] == small_layout.eoi
        assert tokens[-2] == small_layout.eop

    def test_code_out_of_range(self, small_layout):
        block = ImageTokenBlock(np.full((1, 1), 5), np.zeros((2, 2)))
        with pytest.raises(DomainError):
            serialize(block, small_layout)

    def test_pixel_grid_must_follow_ratio(self, small_layout):
        with pytest.raises(DomainError):
            serialize(ImageTokenBlock(np.zeros((2, 2)), np.zeros((3, 4))), small_layout)


class TestParse:
    """Test strict parsing."""

    def test_missing_eol_gives_row_length_mismatch(self, small_layout):
        tokens = serialize(block_of(4, 4), small_layout)
        first_eol = tokens.index(small_layout.eol)
        del tokens[first_eol]
        with pytest.raises(ParseError, match="row length mismatch at row 0") as info:
            parse(tokens, small_layout)
        assert info.value.kind is ParseErrorKind.ROW_LENGTH_MISMATCH

    def test_unterminated_last_row(self, small_layout):
        tokens = serialize(block_of(2, 2), small_layout)
        eos_at = tokens.index(small_layout.eos)
        del tokens[eos_at - 1]
        with pytest.raises(ParseError) as info:
            parse(tokens, small_layout)
        assert info.value.kind is ParseErrorKind.MISSING_EOL

    def test_short_pixel_grid(self, small_layout):
        tokens = serialize(block_of(4, 4), small_layout)
        eop_at = tokens.index(small_layout.eop)
        # drop the last pixel row (8 codes + <eol>)
        del tokens[eop_at - 9:eop_at]
        with pytest.raises(ParseError, match="pixel grid inconsistent") as info:
            parse(tokens, small_layout)
        assert info.value.kind is ParseErrorKind.PIXEL_GRID_INCONSISTENT

    def test_truncated(self, small_layout):
        tokens = serialize(block_of(2, 2), small_layout)[:-3]
        with pytest.raises(ParseError) as info:
            parse(tokens, small_layout)
        assert info.value.kind is ParseErrorKind.TRUNCATED

    def test_trailing_tokens(self, small_layout):
        tokens = serialize(block_of(1, 1), small_layout) + [0]
        with pytest.raises(ParseError) as info:
            parse(tokens, small_layout)
        assert info.value.kind is ParseErrorKind.TRAILING_TOKENS

    def test_wrong_code_kind(self, small_layout):
        tokens = serialize(block_of(1, 1), small_layout)
        tokens[4] = small_layout.pix_offset
        with pytest.raises(ParseError) as info:
            parse(tokens, small_layout)
        assert info.value.kind is ParseErrorKind.OUT_OF_RANGE
        assert info.value.position == 4

    def test_find_image_block(self, small_layout):
        block = serialize(block_of(1, 1), small_layout)
        tokens = [1, 2, 3] + block + [4]
        start, end = find_image_block(tokens, small_layout)
        assert tokens[start:end] == block
        with pytest.raises(ParseError):
            find_image_block([1, 2, 3], small_layout)

    def test_random_blocks_and_mutations(self):
        layout = layout_build(10, 5, 6, 16, 16)
        rng = random.Random(0)
        rejected = 0
        for i in range(1000):
            block = block_of(rng.randint(1, 16), rng.randint(1, 16), seed=i)
            tokens = serialize(block, layout)
            assert parse(tokens, layout) == block

            mutated = list(tokens)
            pos = rng.randrange(len(mutated))
            mutated[pos] = rng.choice([t for t in range(layout.vocab_size) if t != tokens[pos]])
            try:
                other = parse(mutated, layout)
            except ParseError as exc:
                assert 0 <= exc.position <= len(mutated)
                rejected += 1
            else:
                assert other != block
                assert serialize(other, layout) == mutated
        assert rejected > 0

    @pytest.mark.parametrize("edit", ["delete", "insert"])
    def test_random_blocks_with_length_changes(self, edit):
        layout = layout_build(10, 5, 6, 16, 16)
        rng = random.Random(1)
        rejected = 0
        for i in range(1000):
            block = block_of(rng.randint(1, 16), rng.randint(1, 16), seed=i)
            mutated = serialize(block, layout)
            if edit == "delete":
                del mutated[rng.randrange(len(mutated))]
            else:
                mutated.insert(rng.randrange(len(mutated) + 1), rng.randrange(layout.vocab_size))
            try:
                other = parse(mutated, layout)
            except ParseError as exc:
                assert 0 <= exc.position <= len(mutated)
                rejected += 1
            else:
                assert other != block
                assert serialize(other, layout) == mutated
        assert rejected > 0

    def test_rejections_are_counted_by_kind(self, small_layout):
        monitor = InMemoryMonitor()
        tokens = serialize(block_of(2, 2), small_layout)
        parse(tokens, small_layout, monitor=monitor)
        for bad in (tokens[:-3], tokens + [0], tokens[:-1]):
            with pytest.raises(ParseError):
                parse(bad, small_layout, monitor=monitor)
        with pytest.raises(ParseError):
            find_image_block([1, 2, 3], small_layout, monitor=monitor)
        assert monitor.get_counter("parse_rejections", {"kind": "truncated"}) == 3
        assert monitor.get_counter("parse_rejections", {"kind": "trailing_tokens"}) == 1


class TestNextLegalMask:
    """Test grammar-constrained legality masks."""

    def test_empty_prefix(self, small_layout):
        mask = next_legal_mask([], small_layout)
        assert mask.sum() == 1 and mask[small_layout.soi]

    def test_last_cell_of_a_row(self, small_layout):
        prefix = [small_layout.soi, small_layout.height_id(2), small_layout.width_id(2), small_layout.sos,
                  small_layout.sem_offset]
        mask = next_legal_mask(prefix, small_layout)
        lo, hi = small_layout.range_of(TokenKind.SEMANTIC)
        assert mask[lo:hi].all()
        assert mask.sum() == hi - lo

    def test_completed_row_forces_eol(self, small_layout):
        prefix = [small_layout.soi, small_layout.height_id(2), small_layout.width_id(2), small_layout.sos,
                  small_layout.sem_offset, small_layout.sem_offset + 1]
        mask = next_legal_mask(prefix, small_layout)
        assert mask.sum() == 1 and mask[small_layout.eol]

    def test_complete_block_has_empty_mask(self, small_layout):
        assert not next_legal_mask(serialize(block_of(1, 1), small_layout), small_layout).any()

    def test_dead_prefix(self, small_layout):
        with pytest.raises(DomainError):
            next_legal_mask([small_layout.eol], small_layout)

    def test_target_pins_indicators(self, small_layout):
        mask = next_legal_mask([small_layout.soi], small_layout, target=(3, 2))
        assert mask.sum() == 1 and mask[small_layout.height_id(3)]

    def test_half_ratio_skips_odd_sides(self):
        layout = layout_build(0, 2, 2, 4, 4, pixel_ratio=Fraction(1, 2))
        mask = next_legal_mask([layout.soi], layout)
        allowed = [layout.from_global(t).value for t in np.flatnonzero(mask)]
        assert allowed == [2, 4]

    def test_random_walks_always_parse(self):
        layout = layout_build(0, 2, 2, 2, 2)
        rng = random.Random(0)
        for _ in range(200):
            state = GrammarState(layout)
            tokens = []
            while not state.is_complete:
                choices = np.flatnonzero(state.mask()).tolist()
                assert choices
                token = rng.choice(choices)
                state.advance(token)
                tokens.append(token)
            parse(tokens, layout)

    def test_every_legal_token_is_completable(self):
        layout = layout_build(0, 2, 2, 2, 2)
        rng = random.Random(1)
        for _ in range(20):
            prefix = []
            state = GrammarState(layout)
            while not state.is_complete:
                for token in np.flatnonzero(state.mask()).tolist():
                    branch = GrammarState(layout).feed(prefix + [token])
                    tail = []
                    while not branch.is_complete:
                        nxt = int(np.flatnonzero(branch.mask())[0])
                        branch.advance(nxt)
                        tail.append(nxt)
                    parse(prefix + [token] + tail, layout)
                token = rng.choice(np.flatnonzero(state.mask()).tolist())
                state.advance(token)
                prefix.append(token)


class TestTokenStream:
    """Test token-stream files."""

    def test_file_round_trip(self, tmp_path, small_layout):
        tokens = serialize(block_of(2, 2), small_layout)
        path = write_token_stream(tmp_path / "a.tok", tokens, small_layout)
        layout_hash, back = read_token_stream(path, small_layout)
        assert back == tokens
        assert layout_hash == small_layout.layout_hash()

    def test_header_layout(self, small_layout):
        data = encode_token_stream([1, 2], small_layout)
        assert data[:4] == b"UTG1"
        assert len(data) == 12 + 8

    def test_layout_mismatch(self, small_layout):
        data = encode_token_stream([1, 2], small_layout)
        with pytest.raises(ParseError) as info:
            decode_token_stream(data, layout_build(10, 5, 7, 4, 4))
        assert info.value.kind is ParseErrorKind.BAD_STREAM_HEADER

    def test_bad_magic(self, small_layout):
        data = b"XXXX" + encode_token_stream([1], small_layout)[4:]
        with pytest.raises(ParseError):
            decode_token_stream(data)

    def test_truncated_body(self, small_layout):
        data = encode_token_stream([1, 2, 3], small_layout)[:-2]
        with pytest.raises(ParseError) as info:
            decode_token_stream(data, small_layout)
        assert info.value.kind is ParseErrorKind.TRUNCATED

    def test_rejects_foreign_ids(self, small_layout):
        with pytest.raises(DomainError):
            encode_token_stream([small_layout.vocab_size], small_layout)
