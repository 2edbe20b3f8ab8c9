"""Instrumented SSD firmware simulator.

A page-mapped FTL with a coalescing write buffer, greedy garbage collection
triggered by the victim line count, wear-leveling, uncorrectable-sector marks
and seeded fault injection.  Every routine reports the instrumented blocks it
traverses so a fuzzer can measure coverage.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, fields, replace
from enum import Enum, IntEnum
from typing import Iterable, Sequence


class Opcode(IntEnum):
    # canonical order; the sequence decoder relies on it
    WRITE = 0
    READ = 1
    COMPARE = 2
    FLUSH = 3
    WRITE_ZEROES = 4
    WRITE_UNCORRECTABLE = 5

    @property
    def cli_name(self) -> str:
        return self.name.lower().replace("_", "-")

    @property
    def label(self) -> str:
        return self.name.title().replace("_", "")

    @classmethod
    def parse(cls, text: str) -> "Opcode":
        key = text.strip().lower().replace("_", "-")
        for op in cls:
            if key in (op.cli_name, op.label.lower()):
                return op
        raise ValueError(f"unknown opcode {text!r}")


ALL_OPCODES: tuple[Opcode, ...] = tuple(Opcode)


def parse_opcodes(text: str) -> tuple[Opcode, ...]:
    """Parse a comma list such as ``write,read`` into canonical order."""
    ops = {Opcode.parse(part) for part in text.split(",") if part.strip()}
    if not ops:
        raise ValueError("opcode list is empty")
    return tuple(sorted(ops))


class Status(Enum):
    SUCCESS = "Success"
    FAIL = "Fail"


class FaultKind(Enum):
    CRASH = "Crash"
    HANG = "Hang"


# --- instrumented blocks -----------------------------------------------------

WRITE_ENTRY = "WRITE_ENTRY"
WRITE_BUFFERED = "WRITE_BUFFERED"
WRITE_COALESCE = "WRITE_COALESCE"
WRITE_BUFFER_FULL = "WRITE_BUFFER_FULL"
READ_ENTRY = "READ_ENTRY"
READ_BUFFER_HIT = "READ_BUFFER_HIT"
READ_FLASH = "READ_FLASH"
READ_UNMAPPED = "READ_UNMAPPED"
READ_UNCORRECTABLE = "READ_UNCORRECTABLE"
COMPARE_ENTRY = "COMPARE_ENTRY"
COMPARE_MATCH = "COMPARE_MATCH"
COMPARE_MISMATCH = "COMPARE_MISMATCH"
COMPARE_UNMAPPED = "COMPARE_UNMAPPED"
COMPARE_UNCORRECTABLE = "COMPARE_UNCORRECTABLE"
FLUSH_ENTRY = "FLUSH_ENTRY"
FLUSH_EMPTY = "FLUSH_EMPTY"
FLUSH_COMMIT = "FLUSH_COMMIT"
WZ_ENTRY = "WZ_ENTRY"
WZ_CLEAR_UNC = "WZ_CLEAR_UNC"
WU_ENTRY = "WU_ENTRY"
WU_MARK = "WU_MARK"
WU_INVALIDATE = "WU_INVALIDATE"
WU_CLEAR_BY_WRITE = "WU_CLEAR_BY_WRITE"
FTL_PROGRAM = "FTL_PROGRAM"
FTL_INVALIDATE_OLD = "FTL_INVALIDATE_OLD"
FTL_LINE_FULL = "FTL_LINE_FULL"
GC_TRIGGER = "GC_TRIGGER"
GC_SELECT_VICTIM = "GC_SELECT_VICTIM"
GC_RELOCATE = "GC_RELOCATE"
GC_VICTIM_CLEAN = "GC_VICTIM_CLEAN"
GC_ERASE = "GC_ERASE"
WL_TRIGGER = "WL_TRIGGER"
WL_SWAP = "WL_SWAP"

_W, _R, _C, _F, _WZ, _WU = ALL_OPCODES
_COMMITTING = (frozenset({_W}), frozenset({_WZ}))


def _needs(*alternatives: Iterable[Opcode]) -> tuple[frozenset[Opcode], ...]:
    return tuple(frozenset(alt) for alt in alternatives)


def _with_commit(*ops: Opcode) -> tuple[frozenset[Opcode], ...]:
    return tuple(frozenset(ops) | alt for alt in _COMMITTING)


# block -> alternative opcode sets, any one of which makes the block reachable
BLOCK_REQUIREMENTS: dict[str, tuple[frozenset[Opcode], ...]] = {
    WRITE_ENTRY: _needs({_W}),
    WRITE_BUFFERED: _needs({_W}),
    WRITE_COALESCE: _needs({_W}),
    WRITE_BUFFER_FULL: _needs({_W}),
    READ_ENTRY: _needs({_R}),
    READ_BUFFER_HIT: _needs({_R, _W}),
    READ_FLASH: _with_commit(_R),
    READ_UNMAPPED: _needs({_R}),
    READ_UNCORRECTABLE: _needs({_R, _WU}),
    COMPARE_ENTRY: _needs({_C}),
    COMPARE_MATCH: _with_commit(_C),
    COMPARE_MISMATCH: _with_commit(_C),
    COMPARE_UNMAPPED: _needs({_C}),
    COMPARE_UNCORRECTABLE: _needs({_C, _WU}),
    FLUSH_ENTRY: _needs({_F}),
    FLUSH_EMPTY: _needs({_F}),
    FLUSH_COMMIT: _needs({_F, _W}),
    WZ_ENTRY: _needs({_WZ}),
    WZ_CLEAR_UNC: _needs({_WZ, _WU}),
    WU_ENTRY: _needs({_WU}),
    WU_MARK: _needs({_WU}),
    WU_INVALIDATE: _with_commit(_WU),
    WU_CLEAR_BY_WRITE: _needs({_W, _WU}),
    FTL_PROGRAM: _COMMITTING,
    FTL_INVALIDATE_OLD: _COMMITTING,
    FTL_LINE_FULL: _COMMITTING,
    GC_TRIGGER: _COMMITTING,
    GC_SELECT_VICTIM: _COMMITTING,
    GC_RELOCATE: _COMMITTING,
    GC_VICTIM_CLEAN: _COMMITTING,
    GC_ERASE: _COMMITTING,
    WL_TRIGGER: _COMMITTING,
    WL_SWAP: _COMMITTING,
}

ALL_BLOCKS: tuple[str, ...] = tuple(BLOCK_REQUIREMENTS)


def instrumented_block_universe(enabled_opcodes: Iterable[Opcode]) -> frozenset[str]:
    """Blocks reachable when only ``enabled_opcodes`` may be issued."""
    enabled = frozenset(Opcode(op) for op in enabled_opcodes)
    if not enabled:
        raise ValueError("enabled opcode set must not be empty")
    return frozenset(
        block
        for block, alternatives in BLOCK_REQUIREMENTS.items()
        if any(alt <= enabled for alt in alternatives)
    )


# --- configuration -------------------------------------------------------------


class ConfigError(ValueError):
    """Raised for a device or campaign configuration that violates an invariant."""


@dataclass(frozen=True)
class DeviceConfig:
    num_lines: int = 32
    blocks_per_line: int = 2
    pages_per_block: int = 16
    logical_pages: int = 768
    gc_victim_threshold: int = 12
    wl_erase_gap_threshold: int = 8
    write_buffer_pages: int = 8
    max_nlb: int = 16
    noise_enabled: bool = False
    noise_seed: int = 0

    @property
    def line_pages(self) -> int:
        return self.blocks_per_line * self.pages_per_block

    @property
    def total_pages(self) -> int:
        return self.num_lines * self.line_pages

    @property
    def reserve_lines(self) -> int:
        # free lines kept back so one command plus one relocation always fits
        worst_commit = self.write_buffer_pages + self.max_nlb
        return math.ceil(worst_commit / self.line_pages) + 1

    def validate(self) -> None:
        for f in fields(self):
            if f.type == "int" and f.name != "noise_seed" and getattr(self, f.name) < 1:
                raise ConfigError(f"{f.name} must be >= 1, got {getattr(self, f.name)}")
        if self.logical_pages > 0.9 * self.total_pages:
            raise ConfigError(
                f"logical_pages ({self.logical_pages}) must be <= 0.9 x physical pages "
                f"({self.total_pages})"
            )
        if not 1 <= self.gc_victim_threshold < self.num_lines:
            raise ConfigError(
                f"gc_victim_threshold ({self.gc_victim_threshold}) must be >= 1 and "
                f"< num_lines ({self.num_lines})"
            )
        usable = (self.num_lines - self.reserve_lines - 1) * self.line_pages
        if self.logical_pages >= usable:
            raise ConfigError(
                f"logical_pages ({self.logical_pages}) leaves no over-provisioning once "
                f"{self.reserve_lines} reserve lines and the open line are set aside"
            )
        if not 0 <= self.noise_seed < 2**64:
            raise ConfigError("noise_seed must be a 64-bit unsigned integer")


PRESETS: dict[str, DeviceConfig] = {
    "desk-scale": DeviceConfig(),
    "paper-scale": DeviceConfig(
        num_lines=256,
        blocks_per_line=2,
        pages_per_block=16,
        logical_pages=6144,
        gc_victim_threshold=190,
        wl_erase_gap_threshold=8,
        write_buffer_pages=8,
        max_nlb=16,
    ),
}


def preset(name: str, **overrides) -> DeviceConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(base, **overrides)


# --- commands, results, faults -------------------------------------------------


@dataclass(frozen=True, slots=True)
class IoCommand:
    opcode: Opcode
    lba: int = 0
    nlb: int = 1
    payload_seed: int = 0

    def __str__(self) -> str:
        if self.opcode is Opcode.FLUSH:
            return "Flush"
        return f"{self.opcode.label}({self.lba},{self.nlb},{self.payload_seed})"


FLUSH = IoCommand(Opcode.FLUSH, 0, 0, 0)

SNAPSHOT_FIELDS = (
    "victim_line_count",
    "free_line_count",
    "total_invalid_pages",
    "max_erase_count",
    "total_erase_count",
    "gc_invocations",
)
COMMAND_FIELDS = ("lba", "nlb", "payload_seed")


@dataclass(frozen=True)
class StateSnapshot:
    victim_line_count: int = 0
    free_line_count: int = 0
    total_invalid_pages: int = 0
    max_erase_count: int = 0
    total_erase_count: int = 0
    gc_invocations: int = 0
    per_segment_io: tuple[int, ...] = (0,) * 10


_COMPARATORS = {
    ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    "<": lambda a, b: a < b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


@dataclass(frozen=True)
class Condition:
    field: str
    op: str
    value: int

    def __post_init__(self):
        if self.field not in SNAPSHOT_FIELDS + COMMAND_FIELDS:
            raise ValueError(f"unknown predicate field {self.field!r}")
        if self.op not in _COMPARATORS:
            raise ValueError(f"unknown comparison {self.op!r}")

    def __str__(self) -> str:
        return f"{self.field} {self.op} {self.value}"


@dataclass(frozen=True)
class FaultSpec:
    """A latent firmware defect: fires when the opcode and every condition match."""

    fault_id: int
    kind: FaultKind
    trigger_opcode: Opcode | None  # None means any opcode
    conditions: tuple[Condition, ...] = ()

    def matches(self, values: dict[str, int], cmd: IoCommand) -> bool:
        if self.trigger_opcode is not None and cmd.opcode is not self.trigger_opcode:
            return False
        return all(_COMPARATORS[c.op](values[c.field], c.value) for c in self.conditions)

    def uses_snapshot(self) -> bool:
        return any(c.field in SNAPSHOT_FIELDS for c in self.conditions)


@dataclass(frozen=True)
class FaultEvent:
    fault_id: int
    kind: FaultKind


@dataclass
class CommandResult:
    status: Status
    fired_blocks: list[str]
    fault_event: FaultEvent | None = None

    @property
    def ok(self) -> bool:
        return self.status is Status.SUCCESS


# --- the device ----------------------------------------------------------------

FREE, VALID, INVALID = 0, 1, 2
NUM_SEGMENTS = 10


@dataclass
class _PendingGc:
    line: int
    offset: int = 0
    relocated: int = 0


class SsdDevice:
    """Mutable device state.  Confined to one campaign; not thread-safe."""

    def __init__(self, config: DeviceConfig):
        config.validate()
        self.config = config
        self.line_pages = config.line_pages
        self.total_pages = config.total_pages
        self.status = bytearray(self.total_pages)
        self.page_data = bytearray(self.total_pages)
        self.p2l = [-1] * self.total_pages
        self.l2p = [-1] * config.logical_pages
        self.erase_counts = [0] * (config.num_lines * config.blocks_per_line)
        self.line_written = [0] * config.num_lines
        self.line_invalid = [0] * config.num_lines
        self.free_lines = set(range(config.num_lines))
        self.open_line: int | None = None
        self.cursor = 0
        self.buffer: dict[int, int] = {}
        self.uncorrectable: set[int] = set()
        self.victim_count = 0
        self.valid_pages = 0
        self.invalid_pages = 0
        self.max_erase = 0
        self.total_erases = 0
        self.gc_invocations = 0
        self.segment_io = [0] * NUM_SEGMENTS
        self.pending_gc: _PendingGc | None = None
        self.last_trigger_victims = 0
        self._noise = random.Random(config.noise_seed) if config.noise_enabled else None

    # -- observation --

    @property
    def free_line_count(self) -> int:
        return len(self.free_lines)

    def snapshot(self) -> StateSnapshot:
        return StateSnapshot(
            victim_line_count=self.victim_count,
            free_line_count=len(self.free_lines),
            total_invalid_pages=self.invalid_pages,
            max_erase_count=self.max_erase,
            total_erase_count=self.total_erases,
            gc_invocations=self.gc_invocations,
            per_segment_io=tuple(self.segment_io),
        )

    def _field_values(self, cmd: IoCommand) -> dict[str, int]:
        return {
            "victim_line_count": self.victim_count,
            "free_line_count": len(self.free_lines),
            "total_invalid_pages": self.invalid_pages,
            "max_erase_count": self.max_erase,
            "total_erase_count": self.total_erases,
            "gc_invocations": self.gc_invocations,
            "lba": cmd.lba,
            "nlb": cmd.nlb,
            "payload_seed": cmd.payload_seed,
        }

    def line_erase_count(self, line: int) -> int:
        return self.erase_counts[line * self.config.blocks_per_line]

    def is_full(self, line: int) -> bool:
        return self.line_written[line] == self.line_pages

    # -- command execution --

    def apply(self, cmd: IoCommand, faults: Sequence[FaultSpec] = ()) -> CommandResult:
        fired: dict[str, None] = {}
        op = cmd.opcode
        fired[_ENTRY_BLOCK[op]] = None

        hit = None
        values = None
        for fault in faults:
            if fault.trigger_opcode is not None and op is not fault.trigger_opcode:
                continue
            if hit is not None and fault.fault_id > hit.fault_id:
                continue
            if values is None:
                values = self._field_values(cmd)
            if fault.matches(values, cmd):
                hit = fault
        if hit is not None:
            # the firmware dies mid-command; state stays as it was
            return CommandResult(Status.FAIL, list(fired), FaultEvent(hit.fault_id, hit.kind))

        if op is Opcode.WRITE:
            ok = self._write(cmd, fired)
        elif op is Opcode.READ:
            ok = self._read(cmd, fired, compare=False)
        elif op is Opcode.COMPARE:
            ok = self._read(cmd, fired, compare=True)
        elif op is Opcode.FLUSH:
            ok = self._flush(fired)
        elif op is Opcode.WRITE_ZEROES:
            ok = self._write_zeroes(cmd, fired)
        else:
            ok = self._write_uncorrectable(cmd, fired)

        self._maintenance(fired)
        return CommandResult(Status.SUCCESS if ok else Status.FAIL, list(fired))

    def _touch(self, lba: int, nlb: int) -> None:
        logical = self.config.logical_pages
        seg = self.segment_io
        for page in range(lba, lba + nlb):
            seg[page * NUM_SEGMENTS // logical] += 1

    def _write(self, cmd: IoCommand, fired: dict) -> bool:
        self._touch(cmd.lba, cmd.nlb)
        capacity = self.config.write_buffer_pages
        committed = False
        for lba in range(cmd.lba, cmd.lba + cmd.nlb):
            if lba in self.uncorrectable:
                self.uncorrectable.discard(lba)
                fired[WU_CLEAR_BY_WRITE] = None
            buffer = self.buffer
            if lba in buffer:
                fired[WRITE_COALESCE] = None
            buffer[lba] = cmd.payload_seed
            if len(buffer) > capacity:
                fired[WRITE_BUFFER_FULL] = None
                self._drain_buffer(fired)
                committed = True
        if not committed:
            fired[WRITE_BUFFERED] = None
        return True

    def _drain_buffer(self, fired: dict) -> None:
        pending = self.buffer
        self.buffer = {}
        for lba, data in pending.items():
            self._program(lba, data, fired)

    def _read(self, cmd: IoCommand, fired: dict, compare: bool) -> bool:
        self._touch(cmd.lba, cmd.nlb)
        if compare:
            b_hit, b_flash, b_unmapped, b_unc = COMPARE_MATCH, COMPARE_MATCH, COMPARE_UNMAPPED, COMPARE_UNCORRECTABLE
        else:
            b_hit, b_flash, b_unmapped, b_unc = READ_BUFFER_HIT, READ_FLASH, READ_UNMAPPED, READ_UNCORRECTABLE
        ok = True
        mismatch = False
        for lba in range(cmd.lba, cmd.lba + cmd.nlb):
            data = self.buffer.get(lba)
            if data is not None:
                fired[b_hit] = None
            elif lba in self.uncorrectable:
                fired[b_unc] = None
                ok = False
                continue
            else:
                ppn = self.l2p[lba]
                if ppn < 0:
                    fired[b_unmapped] = None
                    ok = False
                    continue
                data = self.page_data[ppn]
                fired[b_flash] = None
            if compare and data != cmd.payload_seed:
                mismatch = True
        if compare and mismatch:
            fired.pop(COMPARE_MATCH, None)
            fired[COMPARE_MISMATCH] = None
            ok = False
        return ok

    def _flush(self, fired: dict) -> bool:
        if not self.buffer:
            fired[FLUSH_EMPTY] = None
            return True
        fired[FLUSH_COMMIT] = None
        self._drain_buffer(fired)
        return True

    def _write_zeroes(self, cmd: IoCommand, fired: dict) -> bool:
        self._touch(cmd.lba, cmd.nlb)
        for lba in range(cmd.lba, cmd.lba + cmd.nlb):
            self.buffer.pop(lba, None)
            if lba in self.uncorrectable:
                self.uncorrectable.discard(lba)
                fired[WZ_CLEAR_UNC] = None
            self._program(lba, 0, fired)
        return True

    def _write_uncorrectable(self, cmd: IoCommand, fired: dict) -> bool:
        self._touch(cmd.lba, cmd.nlb)
        fired[WU_MARK] = None
        for lba in range(cmd.lba, cmd.lba + cmd.nlb):
            self.buffer.pop(lba, None)
            self.uncorrectable.add(lba)
            if self.l2p[lba] >= 0:
                fired[WU_INVALIDATE] = None
                self._invalidate(self.l2p[lba])
                self.l2p[lba] = -1
        return True

    # -- FTL primitives --

    def _allocate_line(self) -> None:
        if not self.free_lines:
            raise RuntimeError("no free line left; over-provisioning invariant broken")
        bpl = self.config.blocks_per_line
        line = min(self.free_lines, key=lambda l: (self.erase_counts[l * bpl], l))
        self.free_lines.remove(line)
        self.open_line = line
        self.cursor = 0

    def _program(self, lba: int, data: int, fired: dict | None) -> None:
        if self.open_line is None:
            self._allocate_line()
        line = self.open_line
        ppn = line * self.line_pages + self.cursor
        old = self.l2p[lba]
        if old >= 0:
            self._invalidate(old)
            if fired is not None:
                fired[FTL_INVALIDATE_OLD] = None
        self.status[ppn] = VALID
        self.page_data[ppn] = data
        self.p2l[ppn] = lba
        self.l2p[lba] = ppn
        self.valid_pages += 1
        self.line_written[line] += 1
        self.cursor += 1
        if fired is not None:
            fired[FTL_PROGRAM] = None
        if self.cursor == self.line_pages:
            if self.line_invalid[line]:
                self.victim_count += 1
            self.open_line = None
            if fired is not None:
                fired[FTL_LINE_FULL] = None

    def _invalidate(self, ppn: int) -> None:
        self.status[ppn] = INVALID
        self.p2l[ppn] = -1
        self.valid_pages -= 1
        self.invalid_pages += 1
        line = ppn // self.line_pages
        self.line_invalid[line] += 1
        if self.line_invalid[line] == 1 and self.line_written[line] == self.line_pages:
            self.victim_count += 1

    def _relocate_page(self, ppn: int) -> None:
        lba = self.p2l[ppn]
        self._program(lba, self.page_data[ppn], None)

    def _erase(self, line: int) -> None:
        if self.is_full(line) and self.line_invalid[line]:
            self.victim_count -= 1
        base = line * self.line_pages
        for ppn in range(base, base + self.line_pages):
            if self.status[ppn] == VALID:
                raise RuntimeError(f"erasing line {line} with valid page {ppn}")
            self.status[ppn] = FREE
        self.invalid_pages -= self.line_invalid[line]
        self.line_invalid[line] = 0
        self.line_written[line] = 0
        bpl = self.config.blocks_per_line
        for block in range(line * bpl, (line + 1) * bpl):
            self.erase_counts[block] += 1
            if self.erase_counts[block] > self.max_erase:
                self.max_erase = self.erase_counts[block]
        self.total_erases += bpl
        self.free_lines.add(line)

    # -- maintenance --

    def select_victim(self) -> int | None:
        """Greedy: most invalid pages, then fewer erases, then lower index."""
        best = None
        best_key = None
        pending = self.pending_gc.line if self.pending_gc else -1
        for line in range(self.config.num_lines):
            invalid = self.line_invalid[line]
            if not invalid or line == pending or not self.is_full(line):
                continue
            key = (-invalid, self.line_erase_count(line), line)
            if best_key is None or key < best_key:
                best, best_key = line, key
        return best

    def _collect(self, victim: int, fired: dict) -> None:
        fired[GC_SELECT_VICTIM] = None
        base = victim * self.line_pages
        moved = False
        for ppn in range(base, base + self.line_pages):
            if self.status[ppn] == VALID:
                self._relocate_page(ppn)
                moved = True
        fired[GC_RELOCATE if moved else GC_VICTIM_CLEAN] = None
        self._erase(victim)
        fired[GC_ERASE] = None

    def _run_gc(self, fired: dict) -> None:
        start_victims = self.victim_count
        start_free = len(self.free_lines)
        while True:
            victim = self.select_victim()
            if victim is None:
                break
            self._collect(victim, fired)
            if self.victim_count < start_victims or len(self.free_lines) > start_free:
                break
        self._wear_level(fired)

    def _wear_level(self, fired: dict) -> None:
        gap = self.max_erase - min(self.erase_counts)
        if gap <= self.config.wl_erase_gap_threshold:
            return
        pending = self.pending_gc.line if self.pending_gc else -1
        cold = None
        cold_key = None
        for line in range(self.config.num_lines):
            if line == pending or not self.is_full(line):
                continue
            key = (self.line_erase_count(line), line)
            if cold_key is None or key < cold_key:
                cold, cold_key = line, key
        if cold is None or cold_key[0] >= self.max_erase:
            return
        fired[WL_TRIGGER] = None
        base = cold * self.line_pages
        for ppn in range(base, base + self.line_pages):
            if self.status[ppn] == VALID:
                self._relocate_page(ppn)
        self._erase(cold)
        fired[WL_SWAP] = None

    def _step_pending_gc(self, fired: dict) -> None:
        gc = self.pending_gc
        budget = self._noise.randint(1, self.config.pages_per_block)
        base = gc.line * self.line_pages
        while budget and gc.offset < self.line_pages:
            ppn = base + gc.offset
            gc.offset += 1
            if self.status[ppn] == VALID:
                self._relocate_page(ppn)
                gc.relocated += 1
                budget -= 1
                fired[GC_RELOCATE] = None
        if gc.offset == self.line_pages:
            if not gc.relocated:
                fired[GC_VICTIM_CLEAN] = None
            self._erase(gc.line)
            fired[GC_ERASE] = None
            self.pending_gc = None
            self._wear_level(fired)

    def _finish_pending_gc(self, fired: dict) -> None:
        while self.pending_gc is not None:
            self._step_pending_gc(fired)

    def _maintenance(self, fired: dict) -> None:
        if self.pending_gc is not None:
            self._step_pending_gc(fired)
        elif self.victim_count >= self.config.gc_victim_threshold:
            self.gc_invocations += 1
            self.last_trigger_victims = self.victim_count
            fired[GC_TRIGGER] = None
            if self._noise is None:
                self._run_gc(fired)
            else:
                victim = self.select_victim()
                fired[GC_SELECT_VICTIM] = None
                self.pending_gc = _PendingGc(victim)
        # safeguard outside the threshold policy: never let free lines run dry
        reserve = self.config.reserve_lines
        if len(self.free_lines) < reserve:
            self._finish_pending_gc(fired)
            while len(self.free_lines) < reserve:
                victim = self.select_victim()
                if victim is None:
                    raise RuntimeError("free lines exhausted with no reclaimable victim")
                self.gc_invocations += 1
                self._collect(victim, fired)

    # -- invariant checks, used by tests --

    def check_invariants(self) -> None:
        counts = [0, 0, 0]
        for s in self.status:
            counts[s] += 1
        assert sum(counts) == self.total_pages
        assert counts[VALID] == self.valid_pages
        assert counts[INVALID] == self.invalid_pages
        mapped = 0
        for lba, ppn in enumerate(self.l2p):
            if ppn >= 0:
                mapped += 1
                assert self.status[ppn] == VALID and self.p2l[ppn] == lba
        assert mapped == counts[VALID]
        victims = sum(
            1 for l in range(self.config.num_lines) if self.is_full(l) and self.line_invalid[l]
        )
        assert victims == self.victim_count
        assert self.max_erase == max(self.erase_counts)


_ENTRY_BLOCK = {
    Opcode.WRITE: WRITE_ENTRY,
    Opcode.READ: READ_ENTRY,
    Opcode.COMPARE: COMPARE_ENTRY,
    Opcode.FLUSH: FLUSH_ENTRY,
    Opcode.WRITE_ZEROES: WZ_ENTRY,
    Opcode.WRITE_UNCORRECTABLE: WU_ENTRY,
}


def reset_device(config: DeviceConfig) -> SsdDevice:
    return SsdDevice(config)


def apply_command(device: SsdDevice, cmd: IoCommand, faults: Sequence[FaultSpec] = ()) -> CommandResult:
    return device.apply(cmd, faults)


def snapshot_state(device: SsdDevice) -> StateSnapshot:
    return device.snapshot()
