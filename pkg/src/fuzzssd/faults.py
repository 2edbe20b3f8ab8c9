"""Fault set files.

One fault per line: ``fault_id, kind, trigger_opcode, predicate`` where the
predicate is ``field op value`` terms joined by ``and`` (or ``true``).
Lines starting with ``#`` are comments.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .device import Condition, FaultKind, FaultSpec, Opcode

FAULT_PRESETS = ("default", "none")


def parse_condition(text: str) -> Condition:
    parts = text.split()
    if len(parts) != 3:
        raise ValueError(f"predicate term must be 'field op value', got {text!r}")
    name, op, value = parts
    return Condition(name, op, int(value))


def parse_faults(text: str) -> list[FaultSpec]:
    faults = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",", 3)]
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected 4 comma-separated fields")
        fid, kind, opcode, predicate = parts
        try:
            fault_id = int(fid)
            trigger = None if opcode.lower() == "any" else Opcode.parse(opcode)
            terms = () if predicate.lower() == "true" else tuple(
                parse_condition(t) for t in predicate.split(" and ")
            )
            spec = FaultSpec(fault_id, FaultKind(kind.title()), trigger, terms)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if fault_id in seen:
            raise ValueError(f"line {lineno}: duplicate fault_id {fault_id}")
        seen.add(fault_id)
        faults.append(spec)
    return sorted(faults, key=lambda f: f.fault_id)


def format_faults(faults) -> str:
    lines = []
    for f in faults:
        trigger = "Any" if f.trigger_opcode is None else f.trigger_opcode.label
        predicate = " and ".join(str(c) for c in f.conditions) or "true"
        lines.append(f"{f.fault_id}, {f.kind.value}, {trigger}, {predicate}")
    return "\n".join(lines) + "\n"


def default_faults() -> list[FaultSpec]:
    text = resources.files("fuzzssd").joinpath("data/default.faults").read_text()
    return parse_faults(text)


def load_faults(name_or_path: str) -> list[FaultSpec]:
    """A preset name (``default``, ``none``) or a path to a fault file."""
    if name_or_path == "default":
        return default_faults()
    if name_or_path == "none":
        return []
    return parse_faults(Path(name_or_path).read_text())
