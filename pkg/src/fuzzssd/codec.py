"""Byte genomes <-> command sequences, plus the mutation operators.

A genome is read as consecutive 8-byte records::

    byte 0      opcode index into the enabled opcode list
    bytes 1-4   lba   (little-endian, mod logical_pages)
    bytes 5-6   nlb-1 (little-endian, mod max_nlb)
    byte 7      payload seed

A trailing partial record is ignored, so every byte string decodes.
"""

from __future__ import annotations

import hashlib
import random
import struct
from pathlib import Path
from typing import Sequence

from .device import DeviceConfig, FLUSH, IoCommand, Opcode

RECORD_SIZE = 8
DEFAULT_SEQ_LIMIT = 100
_RECORD = struct.Struct("<BIHB")
INTERESTING_BYTES = (0x00, 0x01, 0x07, 0x08, 0x0F, 0x10, 0x7F, 0x80, 0xFF)

# opcodes that move FTL state; the rest are suppression candidates
FTL_TOUCHING = frozenset(
    {Opcode.WRITE, Opcode.FLUSH, Opcode.WRITE_ZEROES, Opcode.WRITE_UNCORRECTABLE}
)


def decode(
    genome: bytes,
    enabled_opcodes: Sequence[Opcode],
    config: DeviceConfig,
    seq_limit: int = DEFAULT_SEQ_LIMIT,
) -> list[IoCommand]:
    if not enabled_opcodes:
        raise ValueError("enabled opcode list must not be empty")
    n_ops = len(enabled_opcodes)
    logical = config.logical_pages
    max_nlb = config.max_nlb
    count = min(len(genome) // RECORD_SIZE, seq_limit)
    out = []
    for op_byte, lba, nlb, seed in _RECORD.iter_unpack(genome[: count * RECORD_SIZE]):
        op = enabled_opcodes[op_byte % n_ops]
        if op is Opcode.FLUSH:
            out.append(FLUSH)
            continue
        lba %= logical
        nlb = min(nlb % max_nlb + 1, logical - lba)
        out.append(IoCommand(op, lba, nlb, seed))
    return out


def encode(commands: Sequence[IoCommand], enabled_opcodes: Sequence[Opcode]) -> bytes:
    """Inverse of :func:`decode` for already-clamped commands."""
    index = {op: i for i, op in enumerate(enabled_opcodes)}
    return b"".join(
        _RECORD.pack(index[c.opcode], c.lba, max(c.nlb - 1, 0), c.payload_seed) for c in commands
    )


def random_genome(rng: random.Random, seq_limit: int = DEFAULT_SEQ_LIMIT) -> bytes:
    return rng.randbytes(RECORD_SIZE * rng.randint(1, seq_limit))


# --- mutation ----------------------------------------------------------------------


def _records(genome: bytes) -> tuple[list[bytes], bytes]:
    n = len(genome) // RECORD_SIZE
    recs = [genome[i * RECORD_SIZE : (i + 1) * RECORD_SIZE] for i in range(n)]
    return recs, genome[n * RECORD_SIZE :]


def _bit_flip(g, rng, donors):
    buf = bytearray(g)
    bit = rng.randrange(len(buf) * 8)
    buf[bit >> 3] ^= 1 << (bit & 7)
    return bytes(buf)


def _byte_set(g, rng, donors):
    buf = bytearray(g)
    value = rng.choice(INTERESTING_BYTES) if rng.random() < 0.5 else rng.randrange(256)
    buf[rng.randrange(len(buf))] = value
    return bytes(buf)


def _duplicate_record(g, rng, donors):
    recs, tail = _records(g)
    recs.insert(rng.randint(0, len(recs)), rng.choice(recs))
    return b"".join(recs) + tail


def _delete_record(g, rng, donors):
    recs, tail = _records(g)
    del recs[rng.randrange(len(recs))]
    return b"".join(recs) + tail


def _shuffle_records(g, rng, donors):
    recs, tail = _records(g)
    rng.shuffle(recs)
    return b"".join(recs) + tail


def _append_records(g, rng, donors):
    recs, _ = _records(g)
    return b"".join(recs) + rng.randbytes(RECORD_SIZE * rng.randint(1, 8))


def _splice(g, rng, donors):
    donor = rng.choice(donors)
    recs, _ = _records(g)
    other, _ = _records(donor)
    cut = rng.randint(0, len(recs))
    other_cut = rng.randint(0, len(other))
    return b"".join(recs[:cut] + other[other_cut:])


def mutate(
    genome: bytes,
    rng: random.Random,
    seq_limit: int = DEFAULT_SEQ_LIMIT,
    donors: Sequence[bytes] = (),
) -> bytes:
    """Apply one randomly chosen operator applicable to ``genome``."""
    n_records = len(genome) // RECORD_SIZE
    ops = [_append_records]
    if genome:
        ops += [_bit_flip, _byte_set]
    if n_records >= 1:
        ops += [_duplicate_record, _delete_record]
        donors = [d for d in donors if len(d) >= RECORD_SIZE]
        if donors:
            ops.append(_splice)
    if n_records >= 2:
        ops.append(_shuffle_records)
    out = rng.choice(ops)(genome, rng, donors)
    return out[: seq_limit * RECORD_SIZE + RECORD_SIZE - 1]


def reorder_suppress(commands: Sequence[IoCommand], rng: random.Random) -> list[IoCommand]:
    """Swap two commands, or drop one that does not touch the FTL."""
    seq = list(commands)
    idle = [i for i, c in enumerate(seq) if c.opcode not in FTL_TOUCHING]
    if idle and (len(seq) < 2 or rng.random() < 0.5):
        del seq[rng.choice(idle)]
    elif len(seq) >= 2:
        i, j = rng.sample(range(len(seq)), 2)
        seq[i], seq[j] = seq[j], seq[i]
    return seq


# --- corpus persistence -----------------------------------------------------------


def corpus_filename(ordinal: int, genome: bytes) -> str:
    return f"{ordinal:06d}-{hashlib.sha1(genome).hexdigest()[:16]}.bin"


def save_corpus(directory: Path, genomes: Sequence[bytes]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, genome in enumerate(genomes):
        (directory / corpus_filename(i, genome)).write_bytes(genome)


def load_corpus(directory: Path) -> list[bytes]:
    return [p.read_bytes() for p in sorted(Path(directory).glob("*.bin"))]
