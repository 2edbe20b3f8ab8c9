import random

from fuzzssd.codec import (
    RECORD_SIZE,
    corpus_filename,
    decode,
    encode,
    load_corpus,
    mutate,
    reorder_suppress,
    save_corpus,
)
from fuzzssd.device import FLUSH, IoCommand, Opcode, preset

W, R, C, F, WZ, WU = Opcode
DESK = preset("desk-scale")
SIX = tuple(Opcode)


def test_zero_record_is_a_single_write():
    assert decode(bytes(8), (W, R), DESK) == [IoCommand(W, 0, 1, 0)]


def test_opcode_byte_selects_from_enabled_list():
    genome = bytearray(16)
    genome[0] = 1
    genome[8] = 3
    assert decode(bytes(genome), SIX, DESK) == [IoCommand(R, 0, 1, 0), FLUSH]


def test_field_layout_little_endian():
    record = bytes([2]) + (770).to_bytes(4, "little") + (17).to_bytes(2, "little") + bytes([0xAB])
    # lba 770 mod 768 = 2; nlb 17 mod 16 + 1 = 2
    assert decode(record, SIX, DESK) == [IoCommand(C, 2, 2, 0xAB)]


def test_nlb_clamped_at_address_space_end():
    record = bytes([0]) + (767).to_bytes(4, "little") + (15).to_bytes(2, "little") + bytes([1])
    assert decode(record, (W,), DESK) == [IoCommand(W, 767, 1, 1)]


def test_seq_limit_and_partial_record():
    assert len(decode(bytes(1200), (W, R), DESK, seq_limit=100)) == 100
    assert len(decode(bytes(1200), (W, R), DESK, seq_limit=500)) == 150
    assert decode(bytes(7), (W, R), DESK) == []
    assert len(decode(bytes(20), (W, R), DESK)) == 2


def test_encode_round_trip():
    rng = random.Random(0)
    for _ in range(200):
        genome = rng.randbytes(RECORD_SIZE * rng.randint(0, 30))
        cmds = decode(genome, SIX, DESK)
        assert decode(encode(cmds, SIX), SIX, DESK) == cmds


def test_decoder_is_total_and_clamps():
    rng = random.Random(1)
    for _ in range(2000):
        genome = rng.randbytes(rng.randint(0, 900))
        cmds = decode(genome, SIX, DESK)
        assert len(cmds) <= 100
        for c in cmds:
            assert c.lba + c.nlb <= DESK.logical_pages
            if c.opcode is F:
                assert (c.lba, c.nlb, c.payload_seed) == (0, 0, 0)
            else:
                assert 1 <= c.nlb <= DESK.max_nlb


def test_mutate_empty_genome_appends():
    rng = random.Random(5)
    for _ in range(20):
        assert len(mutate(b"", rng)) >= RECORD_SIZE


def test_mutate_deterministic():
    genome = bytes(range(64))
    a = [mutate(genome, random.Random(9), donors=[bytes(16)]) for _ in range(3)]
    assert a[0] == a[1] == a[2]


def test_mutation_closure():
    rng = random.Random(2)
    genome = b""
    for _ in range(5000):
        genome = mutate(genome, rng, seq_limit=10, donors=[bytes(80), bytes(range(40))])
        assert len(genome) <= 10 * RECORD_SIZE + 7
        assert len(decode(genome, SIX, DESK, seq_limit=10)) <= 10


def test_reorder_suppress_never_grows():
    rng = random.Random(3)
    single_read = [IoCommand(R, 1, 1, 0)]
    single_write = [IoCommand(W, 1, 1, 0)]
    for _ in range(50):
        assert reorder_suppress(single_read, rng) in ([], single_read)
        assert reorder_suppress(single_write, rng) == single_write


def test_reorder_suppress_removes_idle_commands():
    seq = [IoCommand(W, i, 1, 0) for i in range(6)] + [IoCommand(R, i, 1, 0) for i in range(4)]
    rng = random.Random(4)
    removals = 0
    for _ in range(1000):
        out = reorder_suppress(seq, rng)
        assert len(out) in (9, 10)
        if len(out) == 9:
            removals += 1
            assert sum(c.opcode is R for c in out) == 3
        else:
            assert sorted(out, key=lambda c: (c.opcode, c.lba)) == seq
    assert removals / 1000 >= 0.3


def test_reorder_suppress_deterministic():
    seq = [IoCommand(W, i, 1, 0) for i in range(5)] + [IoCommand(C, 3, 1, 0)]
    assert reorder_suppress(seq, random.Random(8)) == reorder_suppress(seq, random.Random(8))


def test_corpus_round_trip(tmp_path):
    rng = random.Random(6)
    genomes = [rng.randbytes(rng.randint(0, 50)) for _ in range(12)] + [bytes(8)]
    save_corpus(tmp_path / "corpus", genomes)
    assert load_corpus(tmp_path / "corpus") == genomes
    assert corpus_filename(3, b"x").startswith("000003-")
