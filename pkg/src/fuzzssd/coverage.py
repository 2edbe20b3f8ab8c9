"""Campaign-wide block coverage."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable


@dataclass
class CoverageMap:
    universe: frozenset[str]
    hit: set[str] = field(default_factory=set)
    first_hit_index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.universe:
            raise ValueError("coverage universe must not be empty")

    def record_trace(self, fired: Iterable[str], cmd_ordinal: int) -> int:
        """Add the fired blocks; returns how many were new.

        Blocks outside the universe are ignored.
        """
        new = 0
        for block in fired:
            if block in self.hit or block not in self.universe:
                continue
            self.hit.add(block)
            self.first_hit_index[block] = cmd_ordinal
            new += 1
        return new

    @property
    def ratio(self) -> float:
        return len(self.hit) / len(self.universe)

    @property
    def complete(self) -> bool:
        return len(self.hit) == len(self.universe)

    def missing(self) -> list[str]:
        return sorted(self.universe - self.hit)


def record_trace(cov: CoverageMap, fired: Iterable[str], cmd_ordinal: int) -> int:
    return cov.record_trace(fired, cmd_ordinal)


def coverage_ratio(cov: CoverageMap) -> float:
    return cov.ratio
