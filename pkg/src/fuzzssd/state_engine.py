"""State feedback: change detection, variable weights and the sequence pool.

The pool follows a case-based reasoning lifecycle.  Sequences that moved a
monitored variable are retained with a weight; on each iteration the record
whose stored precondition best matches the device's current I/O profile is
retrieved and replayed; replays that stop reproducing a change are demoted,
trimmed and eventually discarded.
"""

from __future__ import annotations

import math
import operator
import random
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterator, Mapping, Sequence

from .codec import decode, encode, reorder_suppress
from .device import CommandResult, DeviceConfig, IoCommand, Opcode, StateSnapshot

MONITORED = ("victim_line_count", "free_line_count", "total_invalid_pages", "max_erase_count")
NUM_BINS = 10


def default_thresholds(config: DeviceConfig) -> dict[str, int]:
    return {
        "victim_line_count": 1,
        "free_line_count": 1,
        "total_invalid_pages": config.pages_per_block,
        "max_erase_count": 1,
    }


@dataclass(frozen=True)
class EngineParams:
    thresholds: Mapping[str, int] | None = None  # None -> default_thresholds(device)
    epsilon: float = 0.01
    alpha: float = 1.0
    beta: float = 0.5
    w_min: float = 0.1
    p_reuse: float = 0.5
    pool_capacity: int = 256
    light_mutate_prob: float = 0.1


# --- change detection and weights ----------------------------------------------


@dataclass(frozen=True)
class VariableChange:
    before: int
    after: int
    significant: bool


@dataclass(frozen=True)
class StateDelta:
    changes: Mapping[str, VariableChange]

    @property
    def significant(self) -> bool:
        return any(c.significant for c in self.changes.values())

    @property
    def significant_variables(self) -> list[str]:
        return [v for v, c in self.changes.items() if c.significant]


def detect_significant_change(
    before: StateSnapshot, after: StateSnapshot, thresholds: Mapping[str, int]
) -> StateDelta:
    changes = {}
    for var in MONITORED:
        b, a = getattr(before, var), getattr(after, var)
        changes[var] = VariableChange(b, a, abs(a - b) >= thresholds[var])
    return StateDelta(changes)


@dataclass
class VariableWeightTable:
    epsilon: float = 0.01
    change_counts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(MONITORED, 0))
    sequences_observed: int = 0

    def frequency(self, var: str) -> float:
        return self.change_counts[var] / max(self.sequences_observed, 1)

    def weight(self, var: str) -> float:
        return 1.0 / (self.frequency(var) + self.epsilon)

    def weights(self) -> dict[str, float]:
        return {v: self.weight(v) for v in MONITORED}

    def update(self, delta: StateDelta) -> "VariableWeightTable":
        self.sequences_observed += 1
        for var in delta.significant_variables:
            self.change_counts[var] += 1
        return self

    def increment_for(self, delta: StateDelta, alpha: float = 1.0) -> float:
        """Weight a sequence earns for producing ``delta``."""
        return alpha * sum(self.weight(v) for v in delta.significant_variables)


def update_variable_weights(table: VariableWeightTable, delta: StateDelta) -> VariableWeightTable:
    return table.update(delta)


# --- preconditions ------------------------------------------------------------------


class Category(IntEnum):
    COLD = 0
    WARM = 1
    HOT = 2

    @property
    def label(self) -> str:
        return self.name.title()


PreconditionVector = tuple[Category, ...]


def _category_for_bin(b: int) -> Category:
    if b <= 5:
        return Category.COLD
    if b <= 9:
        return Category.WARM
    return Category.HOT


def encode_precondition(snapshot: StateSnapshot | Sequence[int]) -> PreconditionVector:
    counts = snapshot.per_segment_io if isinstance(snapshot, StateSnapshot) else tuple(snapshot)
    if len(counts) != NUM_BINS:
        raise ValueError(f"expected {NUM_BINS} segment counts, got {len(counts)}")
    peak = max(counts)
    if peak == 0:
        return (Category.COLD,) * NUM_BINS
    # ceil(10 c / peak) in exact integer arithmetic
    return tuple(
        _category_for_bin(min(max(-(-NUM_BINS * c // peak), 1), NUM_BINS)) for c in counts
    )


def manhattan_distance(a: Sequence[int], b: Sequence[int]) -> int:
    if len(a) != NUM_BINS or len(b) != NUM_BINS:
        raise ValueError("precondition vectors must have 10 entries")
    return sum(map(abs, map(operator.sub, a, b)))


def segment_of(lba: int, logical_pages: int) -> int:
    return lba * NUM_BINS // logical_pages


# --- the pool -------------------------------------------------------------------


@dataclass
class SequenceRecord:
    id: int
    name: str
    precondition: PreconditionVector
    input_summary: dict[Category, int]
    operation_histogram: dict[Opcode, int]
    expectation: tuple[int, int]  # (success, fail)
    weight: float
    genome: bytes
    replay_attempts: int = 0

    @property
    def length(self) -> int:
        return sum(self.operation_histogram.values())


def summarize_sequence(
    record_id: int,
    commands: Sequence[IoCommand],
    results: Sequence[CommandResult],
    precondition: PreconditionVector,
    logical_pages: int,
    weight: float,
    genome: bytes,
) -> SequenceRecord:
    inputs = dict.fromkeys((Category.HOT, Category.WARM, Category.COLD), 0)
    ops: dict[Opcode, int] = {}
    for cmd in commands:
        inputs[precondition[segment_of(cmd.lba, logical_pages)]] += 1
        ops[cmd.opcode] = ops.get(cmd.opcode, 0) + 1
    success = sum(1 for r in results if r.ok)
    return SequenceRecord(
        id=record_id,
        name=f"Successful Test Sequence {record_id}",
        precondition=tuple(precondition),
        input_summary=inputs,
        operation_histogram=dict(sorted(ops.items())),
        expectation=(success, len(results) - success),
        weight=weight,
        genome=genome,
    )


class SuccessPool:
    """Bounded store of Successful Test Sequences, keyed by id."""

    def __init__(self, capacity: int = 256, alpha: float = 1.0, beta: float = 0.5, w_min: float = 0.1):
        if capacity < 1:
            raise ValueError("pool capacity must be >= 1")
        self.capacity = capacity
        self.alpha = alpha
        self.beta = beta
        self.w_min = w_min
        self.records: dict[int, SequenceRecord] = {}
        self._by_genome: dict[bytes, int] = {}
        self.next_id = 1
        self.evicted = 0
        self.discarded = 0

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[SequenceRecord]:
        return iter(self.records.values())

    def __contains__(self, record_id: int) -> bool:
        return record_id in self.records

    def get(self, record_id: int) -> SequenceRecord:
        try:
            return self.records[record_id]
        except KeyError:
            raise KeyError(f"no record with id {record_id} in pool") from None

    def _remove(self, record_id: int) -> None:
        rec = self.records.pop(record_id)
        if self._by_genome.get(rec.genome) == record_id:
            del self._by_genome[rec.genome]

    def insert(self, record: SequenceRecord) -> None:
        """Add a fully built record (used when loading an ontology file)."""
        if record.id in self.records:
            raise ValueError(f"duplicate record id {record.id}")
        self.records[record.id] = record
        self._by_genome[record.genome] = record.id
        self.next_id = max(self.next_id, record.id + 1)

    def admit_or_refresh(
        self,
        commands: Sequence[IoCommand],
        genome: bytes,
        delta: StateDelta,
        weights: VariableWeightTable,
        snapshot_before: StateSnapshot,
        results: Sequence[CommandResult],
        logical_pages: int,
    ) -> SequenceRecord:
        if not delta.significant:
            raise ValueError("only sequences with a significant state change may be admitted")
        gain = weights.increment_for(delta, self.alpha)
        existing = self._by_genome.get(genome)
        if existing is not None:
            rec = self.records[existing]
            rec.weight += gain
            return rec
        rec = summarize_sequence(
            self.next_id,
            commands,
            results,
            encode_precondition(snapshot_before),
            logical_pages,
            gain,
            genome,
        )
        self.next_id += 1
        self.records[rec.id] = rec
        self._by_genome[genome] = rec.id
        if len(self.records) > self.capacity:
            victim = min(
                (r for r in self.records.values() if r.id != rec.id),
                key=lambda r: (r.weight, r.id),
            )
            self._remove(victim.id)
            self.evicted += 1
        return rec

    def revise_or_retain(
        self,
        record_id: int,
        replay_delta: StateDelta,
        weights: VariableWeightTable,
        rng: random.Random,
        enabled_opcodes: Sequence[Opcode],
        config: DeviceConfig,
        seq_limit: int,
    ) -> SequenceRecord | None:
        """Returns the record, or None when it was discarded."""
        rec = self.get(record_id)
        rec.replay_attempts += 1
        if replay_delta.significant:
            rec.weight += weights.increment_for(replay_delta, self.alpha)
            return rec
        rec.weight *= self.beta
        trimmed = encode(
            reorder_suppress(decode(rec.genome, enabled_opcodes, config, seq_limit), rng),
            enabled_opcodes,
        )
        if trimmed != rec.genome:
            if self._by_genome.get(rec.genome) == rec.id:
                del self._by_genome[rec.genome]
            rec.genome = trimmed
            self._by_genome.setdefault(trimmed, rec.id)
        if rec.weight < self.w_min and rec.replay_attempts >= 3:
            self._remove(rec.id)
            self.discarded += 1
            return None
        return rec


def retrieve_best(pool: SuccessPool, current: Sequence[int]) -> SequenceRecord | None:
    best = None
    best_score = -math.inf
    # many records share a precondition; compute each distance once
    distances: dict[tuple, int] = {}
    for rec in pool:
        d = distances.get(rec.precondition)
        if d is None:
            d = distances[rec.precondition] = manhattan_distance(current, rec.precondition)
        score = rec.weight / (1 + d)
        if score > best_score or (score == best_score and rec.id < best.id):
            best, best_score = rec, score
    return best


def choose_action(
    pool: SuccessPool, current: Sequence[int], rng: random.Random, p_reuse: float
) -> SequenceRecord | None:
    """A record to replay, or None to fall back to mutation."""
    if not 0.0 <= p_reuse <= 1.0:
        raise ValueError("p_reuse must lie in [0, 1]")
    if not len(pool) or p_reuse == 0.0:
        return None
    if p_reuse < 1.0 and rng.random() >= p_reuse:
        return None
    return retrieve_best(pool, current)


# --- ontology file --------------------------------------------------------------


def _fmt_counts(pairs) -> str:
    return ", ".join(f"{k}={v}" for k, v in pairs)


def format_record(rec: SequenceRecord) -> str:
    return "\n".join(
        [
            f"ID: ({rec.id})",
            f"Name: ({rec.name})",
            "Precondition: (" + ", ".join(c.label for c in rec.precondition) + ")",
            "Input: (" + _fmt_counts((c.label, n) for c, n in rec.input_summary.items()) + ")",
            "Operation: (" + _fmt_counts((op.label, n) for op, n in rec.operation_histogram.items()) + ")",
            f"Expectation: (Success={rec.expectation[0]}, Fail={rec.expectation[1]})",
            f"Weight: ({rec.weight!r})",
            f"Replays: ({rec.replay_attempts})",
            f"Genome: ({rec.genome.hex()})",
        ]
    )


def dump_ontology(pool: SuccessPool) -> str:
    return "".join(format_record(rec) + "\n\n" for rec in pool)


def _pairs(body: str) -> list[tuple[str, str]]:
    if not body:
        return []
    return [tuple(part.strip().split("=", 1)) for part in body.split(",")]


def parse_ontology(text: str) -> list[SequenceRecord]:
    records = []
    for chunk in text.split("\n\n"):
        if not chunk.strip():
            continue
        slots = {}
        for line in chunk.strip().splitlines():
            key, _, value = line.partition(":")
            value = value.strip()
            if not (value.startswith("(") and value.endswith(")")):
                raise ValueError(f"malformed ontology line: {line!r}")
            slots[key.strip()] = value[1:-1]
        try:
            categories = {c.label: c for c in Category}
            opcodes = {op.label: op for op in Opcode}
            success, fail = (int(v) for _, v in _pairs(slots["Expectation"]))
            records.append(
                SequenceRecord(
                    id=int(slots["ID"]),
                    name=slots["Name"],
                    precondition=tuple(categories[p.strip()] for p in slots["Precondition"].split(",")),
                    input_summary={categories[k]: int(v) for k, v in _pairs(slots["Input"])},
                    operation_histogram={opcodes[k]: int(v) for k, v in _pairs(slots["Operation"])},
                    expectation=(success, fail),
                    weight=float(slots["Weight"]),
                    replay_attempts=int(slots.get("Replays", "0")),
                    genome=bytes.fromhex(slots.get("Genome", "")),
                )
            )
        except (KeyError, ValueError) as exc:
            raise ValueError(f"malformed ontology record: {chunk[:60]!r}") from exc
    return records


def load_pool(text: str, capacity: int = 256, **params) -> SuccessPool:
    pool = SuccessPool(capacity, **params)
    for rec in parse_ontology(text):
        pool.insert(rec)
    return pool
