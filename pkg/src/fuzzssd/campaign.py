"""Fuzzing campaigns: the Random, CoverageOnly and StateAware strategies."""

from __future__ import annotations

import json
import random
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Sequence

from .codec import DEFAULT_SEQ_LIMIT, decode, mutate, random_genome
from .coverage import CoverageMap
from .device import (
    GC_TRIGGER,
    CommandResult,
    DeviceConfig,
    ConfigError,
    FaultEvent,
    FaultKind,
    FaultSpec,
    IoCommand,
    Opcode,
    instrumented_block_universe,
    reset_device,
)
from .state_engine import (
    EngineParams,
    SuccessPool,
    VariableWeightTable,
    choose_action,
    default_thresholds,
    detect_significant_change,
    encode_precondition,
)

# eight zero bytes decode to Write(lba=0, nlb=1) whenever Write is enabled
SEED_GENOME = bytes(8)
DEFAULT_OPCODES = (Opcode.WRITE, Opcode.READ)


class Strategy(str, Enum):
    RANDOM = "random"
    COVERAGE = "coverage"
    STATE_AWARE = "state-aware"


@dataclass(frozen=True)
class CampaignConfig:
    strategy: Strategy = Strategy.STATE_AWARE
    device: DeviceConfig = field(default_factory=DeviceConfig)
    enabled_opcodes: tuple[Opcode, ...] = DEFAULT_OPCODES
    seq_limit: int = DEFAULT_SEQ_LIMIT
    rng_seed: int = 0
    budget_commands: int = 10_000_000
    budget_seconds: float = 3600.0
    faults: tuple[FaultSpec, ...] = ()
    engine: EngineParams = field(default_factory=EngineParams)
    stop_on_full_coverage: bool = True
    sample_every: int = 1000

    def validate(self) -> None:
        self.device.validate()
        if not self.enabled_opcodes:
            raise ConfigError("enabled opcode set must not be empty")
        if list(self.enabled_opcodes) != sorted(set(self.enabled_opcodes)):
            raise ConfigError("enabled opcodes must be unique and in canonical order")
        if not 1 <= self.seq_limit <= 10_000:
            raise ConfigError(f"seq_limit must lie in 1..10000, got {self.seq_limit}")
        if self.budget_commands <= 0 or self.budget_seconds <= 0:
            raise ConfigError("budgets must be positive")
        if self.sample_every < 1:
            raise ConfigError("sample_every must be >= 1")
        ids = [f.fault_id for f in self.faults]
        if len(ids) != len(set(ids)):
            raise ConfigError("fault ids must be unique")
        e = self.engine
        if not 0.0 <= e.p_reuse <= 1.0 or not 0.0 <= e.light_mutate_prob <= 1.0:
            raise ConfigError("probabilities must lie in [0, 1]")
        if e.epsilon <= 0 or e.pool_capacity < 1:
            raise ConfigError("epsilon must be positive and pool capacity >= 1")

    @property
    def thresholds(self) -> dict[str, int]:
        if self.engine.thresholds is not None:
            return dict(self.engine.thresholds)
        return default_thresholds(self.device)


@dataclass
class CrashRecord:
    fault_id: int
    kind: FaultKind
    first_cmd_ordinal: int
    occurrence_count: int = 1


EVENT_COLUMNS = (
    "cmd_index",
    "coverage_blocks",
    "coverage_ratio",
    "victim_line_count",
    "free_line_count",
    "total_invalid_pages",
    "max_erase_count",
    "gc_invocations",
)


@dataclass(frozen=True)
class SeriesRow:
    cmd_index: int
    coverage_blocks: int
    coverage_ratio: float
    victim_line_count: int
    free_line_count: int
    total_invalid_pages: int
    max_erase_count: int
    gc_invocations: int


@dataclass(frozen=True)
class Admission:
    cmd_index: int
    record_id: int
    histogram: dict[str, int]


@dataclass
class CampaignStats:
    strategy: str
    seed: int
    commands_executed: int = 0
    sequences_executed: int = 0
    replays: int = 0
    wall_time: float = 0.0
    final_coverage_ratio: float = 0.0
    commands_to_full_coverage: int | None = None
    first_gc_trigger: int | None = None
    crash_records: dict[int, CrashRecord] = field(default_factory=dict)
    hang_records: dict[int, CrashRecord] = field(default_factory=dict)
    series: list[SeriesRow] = field(default_factory=list)
    admissions: list[Admission] = field(default_factory=list)
    first_hit_index: dict[str, int] = field(default_factory=dict)
    # carried for output only; not part of the serialized statistics
    corpus: list[bytes] = field(default_factory=list, repr=False)
    pool: SuccessPool | None = field(default=None, repr=False)

    @property
    def crashes(self) -> int:
        return len(self.crash_records)

    @property
    def hangs(self) -> int:
        return len(self.hang_records)

    @property
    def reached_full_coverage(self) -> bool:
        return self.commands_to_full_coverage is not None

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "strategy": self.strategy,
            "seed": self.seed,
            "commands_executed": self.commands_executed,
            "sequences_executed": self.sequences_executed,
            "replays": self.replays,
            "final_coverage_ratio": self.final_coverage_ratio,
            "commands_to_full_coverage": self.commands_to_full_coverage,
            "first_gc_trigger": self.first_gc_trigger,
            "crash_records": [_record_dict(r) for r in self.crash_records.values()],
            "hang_records": [_record_dict(r) for r in self.hang_records.values()],
            "series": [asdict(r) for r in self.series],
            "admissions": [asdict(a) for a in self.admissions],
            "first_hit_index": dict(sorted(self.first_hit_index.items())),
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True)


def _record_dict(r: CrashRecord) -> dict:
    return {
        "fault_id": r.fault_id,
        "kind": r.kind.value,
        "first_cmd_ordinal": r.first_cmd_ordinal,
        "occurrence_count": r.occurrence_count,
    }


def record_fault(stats: CampaignStats, event: FaultEvent, cmd_ordinal: int) -> CampaignStats:
    records = stats.crash_records if event.kind is FaultKind.CRASH else stats.hang_records
    rec = records.get(event.fault_id)
    if rec is None:
        records[event.fault_id] = CrashRecord(event.fault_id, event.kind, cmd_ordinal)
    else:
        rec.occurrence_count += 1
    return stats


def stop_condition(stats: CampaignStats, config: CampaignConfig) -> bool:
    return (
        (config.stop_on_full_coverage and stats.final_coverage_ratio == 1.0)
        or stats.commands_executed >= config.budget_commands
        or stats.wall_time >= config.budget_seconds
    )


class Campaign:
    """One fuzzing run against a freshly reset device."""

    def __init__(self, config: CampaignConfig):
        config.validate()
        self.config = config
        self.strategy = Strategy(config.strategy)
        self.device = reset_device(config.device)
        self.coverage = CoverageMap(instrumented_block_universe(config.enabled_opcodes))
        self.rng = random.Random(config.rng_seed)
        # separate stream so state decisions never perturb the mutation schedule
        self.engine_rng = random.Random(f"engine-{config.rng_seed}")
        self.faults = sorted(config.faults, key=lambda f: f.fault_id)
        self.thresholds = config.thresholds
        self.corpus: list[bytes] = [SEED_GENOME]
        self.weights = VariableWeightTable(config.engine.epsilon)
        e = config.engine
        self.pool = (
            SuccessPool(e.pool_capacity, e.alpha, e.beta, e.w_min)
            if self.strategy is Strategy.STATE_AWARE
            else None
        )
        self.stats = CampaignStats(self.strategy.value, config.rng_seed)
        self._start = 0.0
        self._done = False

    # -- genome selection --

    def _next_genome(self, first: bool, precondition) -> tuple[bytes, int | None]:
        cfg = self.config
        if first:
            return SEED_GENOME, None
        if self.strategy is Strategy.RANDOM:
            return random_genome(self.rng, cfg.seq_limit), None
        if self.pool is not None:
            record = choose_action(self.pool, precondition, self.engine_rng, cfg.engine.p_reuse)
            if record is not None:
                genome = record.genome
                if self.engine_rng.random() < cfg.engine.light_mutate_prob:
                    genome = mutate(genome, self.engine_rng, cfg.seq_limit, self.corpus)
                return genome, record.id
        parent = self.rng.choice(self.corpus)
        return mutate(parent, self.rng, cfg.seq_limit, self.corpus), None

    # -- execution --

    def _sample(self, ordinal: int) -> None:
        d = self.device
        self.stats.series.append(
            SeriesRow(
                ordinal,
                len(self.coverage.hit),
                round(self.coverage.ratio, 6),
                d.victim_count,
                d.free_line_count,
                d.invalid_pages,
                d.max_erase,
                d.gc_invocations,
            )
        )

    def _execute(self, commands: Sequence[IoCommand]) -> tuple[list[CommandResult], int]:
        cfg = self.config
        stats = self.stats
        device = self.device
        cov = self.coverage
        new_blocks = 0
        results = []
        for cmd in commands:
            result = device.apply(cmd, self.faults)
            results.append(result)
            stats.commands_executed += 1
            ordinal = stats.commands_executed
            if result.fault_event is not None:
                record_fault(stats, result.fault_event, ordinal)
            new_blocks += cov.record_trace(result.fired_blocks, ordinal)
            if stats.first_gc_trigger is None and GC_TRIGGER in result.fired_blocks:
                stats.first_gc_trigger = ordinal
                self._sample_trigger(ordinal)
            if ordinal % cfg.sample_every == 0:
                self._sample(ordinal)
            stats.final_coverage_ratio = cov.ratio
            if stats.commands_to_full_coverage is None and cov.complete:
                stats.commands_to_full_coverage = ordinal
            stats.wall_time = time.monotonic() - self._start
            if stop_condition(stats, cfg):
                self._done = True
                break
        return results, new_blocks

    def _sample_trigger(self, ordinal: int) -> None:
        # the victim count that tripped the threshold, before GC reclaimed a line
        self._sample(ordinal)
        row = self.stats.series[-1]
        self.stats.series[-1] = SeriesRow(
            row.cmd_index,
            row.coverage_blocks,
            row.coverage_ratio,
            self.device.last_trigger_victims,
            row.free_line_count,
            row.total_invalid_pages,
            row.max_erase_count,
            row.gc_invocations,
        )

    def _feedback(self, record_id, genome, commands, results, before) -> None:
        after = self.device.snapshot()
        delta = detect_significant_change(before, after, self.thresholds)
        self.weights.update(delta)
        cfg = self.config
        if record_id is not None:
            self.stats.replays += 1
            if record_id in self.pool:
                self.pool.revise_or_retain(
                    record_id, delta, self.weights, self.engine_rng,
                    cfg.enabled_opcodes, cfg.device, cfg.seq_limit,
                )
        elif delta.significant:
            next_id = self.pool.next_id
            rec = self.pool.admit_or_refresh(
                commands[: len(results)], genome, delta, self.weights, before, results,
                cfg.device.logical_pages,
            )
            if rec.id == next_id:
                hist = {op.label: n for op, n in rec.operation_histogram.items()}
                self.stats.admissions.append(Admission(self.stats.commands_executed, rec.id, hist))

    def run(self) -> CampaignStats:
        cfg = self.config
        stats = self.stats
        self._start = time.monotonic()
        first = True
        state_aware = self.pool is not None
        while not self._done:
            before = self.device.snapshot() if state_aware else None
            precondition = encode_precondition(before) if state_aware and len(self.pool) else None
            genome, record_id = self._next_genome(first, precondition)
            first = False
            commands = decode(genome, cfg.enabled_opcodes, cfg.device, cfg.seq_limit)
            results, new_blocks = self._execute(commands)
            stats.sequences_executed += 1
            if new_blocks and self.strategy is not Strategy.RANDOM:
                self.corpus.append(genome)
            if state_aware:
                self._feedback(record_id, genome, commands, results, before)
            if not self._done:
                stats.wall_time = time.monotonic() - self._start
                self._done = stop_condition(stats, cfg)
        if not stats.series or stats.series[-1].cmd_index != stats.commands_executed:
            self._sample(stats.commands_executed)
        stats.first_hit_index = dict(self.coverage.first_hit_index)
        stats.corpus = list(self.corpus) if self.strategy is not Strategy.RANDOM else []
        stats.pool = self.pool
        return stats


def run_campaign(config: CampaignConfig) -> CampaignStats:
    return Campaign(config).run()
