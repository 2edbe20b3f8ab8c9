"""CSV emission for runs, cross-run comparison tables and figure data."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .campaign import EVENT_COLUMNS, CampaignConfig, CampaignStats, Strategy
from .codec import save_corpus
from .config import dump_config, read_config_file
from .device import Opcode
from .state_engine import SuccessPool, dump_ontology

SUMMARY_COLUMNS = (
    "strategy",
    "seed",
    "commands_executed",
    "commands_to_full_coverage",
    "crashes",
    "hangs",
    "final_coverage_ratio",
)
TIMING_COLUMNS = ("strategy", "seed", "commands_executed", "wall_seconds")
CRASH_COLUMNS = ("fault_id", "kind", "first_cmd_ordinal", "occurrence_count")
ADMISSION_COLUMNS = ("cmd_index", "record_id") + tuple(op.label for op in Opcode)
COMPARE_COLUMNS = (
    "row",
    "strategy",
    "seed",
    "cmd",
    "time_s",
    "crash_hang",
    "coverage",
)
FIG2_COLUMNS = ("cmd_index", "victim_line_count", "threshold")
FIG3_COLUMNS = ("quartile", "sequences") + tuple(op.label for op in Opcode) + ("write_flush_share",)
STRATEGY_ORDER = tuple(s.value for s in Strategy)


class ReportError(Exception):
    """A run directory is missing a file or holds a malformed one."""


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    # lineterminator fixed so files are byte-identical across platforms
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def summary_row(stats: CampaignStats) -> list[str]:
    return [
        stats.strategy,
        str(stats.seed),
        str(stats.commands_executed),
        _fmt(stats.commands_to_full_coverage),
        str(stats.crashes),
        str(stats.hangs),
        _fmt(stats.final_coverage_ratio),
    ]


def write_run(
    out_dir: str | Path,
    stats: CampaignStats,
    config: CampaignConfig,
    preset_name: str = "desk-scale",
    faults_name: str = "default",
) -> Path:
    """Write every artifact of one campaign into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "events.csv",
        EVENT_COLUMNS,
        ([_fmt(getattr(row, c)) for c in EVENT_COLUMNS] for row in stats.series),
    )
    records = sorted(
        list(stats.crash_records.values()) + list(stats.hang_records.values()),
        key=lambda r: r.fault_id,
    )
    _write_csv(
        out / "crashes.csv",
        CRASH_COLUMNS,
        ([r.fault_id, r.kind.value, r.first_cmd_ordinal, r.occurrence_count] for r in records),
    )
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, [summary_row(stats)])
    _write_csv(
        out / "timing.csv",
        TIMING_COLUMNS,
        [[stats.strategy, stats.seed, stats.commands_executed, f"{stats.wall_time:.3f}"]],
    )
    _write_csv(
        out / "admissions.csv",
        ADMISSION_COLUMNS,
        (
            [a.cmd_index, a.record_id] + [a.histogram.get(op.label, 0) for op in Opcode]
            for a in stats.admissions
        ),
    )
    pool = stats.pool if stats.pool is not None else SuccessPool()
    (out / "pool.ontology").write_text(dump_ontology(pool))
    save_corpus(out / "corpus", stats.corpus)
    (out / "config.cfg").write_text(dump_config(config, preset_name, faults_name))
    return out


# --- reading back -----------------------------------------------------------------


def _read_csv(path: Path, header: Sequence[str]) -> list[dict[str, str]]:
    if not path.is_file():
        raise ReportError(f"missing {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh, strict=True)
        try:
            got = next(reader)
        except (StopIteration, csv.Error):
            raise ReportError(f"{path}: empty or unreadable") from None
        missing = [c for c in header if c not in got]
        if missing:
            raise ReportError(f"{path}: missing columns {', '.join(missing)}")
        rows = []
        try:
            for row in reader:
                if len(row) != len(got):
                    raise ReportError(f"{path}: row {reader.line_num} has {len(row)} fields")
                rows.append(dict(zip(got, row)))
        except csv.Error as exc:
            raise ReportError(f"{path}: {exc}") from None
    return rows


@dataclass
class RunSummary:
    directory: Path
    strategy: str
    seed: int
    commands_executed: int
    commands_to_full_coverage: int | None
    crashes: int
    hangs: int
    final_coverage_ratio: float
    wall_seconds: float | None

    @property
    def crash_hang(self) -> int:
        return self.crashes + self.hangs


def read_summary(run_dir: str | Path) -> RunSummary:
    run_dir = Path(run_dir)
    path = run_dir / "summary.csv"
    rows = _read_csv(path, SUMMARY_COLUMNS)
    if len(rows) != 1:
        raise ReportError(f"{path}: expected exactly one row, found {len(rows)}")
    row = rows[0]
    wall = None
    timing = run_dir / "timing.csv"
    if timing.is_file():
        trows = _read_csv(timing, TIMING_COLUMNS)
        if trows:
            wall = _parse(float, trows[0]["wall_seconds"], timing)
    try:
        return RunSummary(
            directory=run_dir,
            strategy=row["strategy"],
            seed=int(row["seed"]),
            commands_executed=int(row["commands_executed"]),
            commands_to_full_coverage=int(row["commands_to_full_coverage"])
            if row["commands_to_full_coverage"]
            else None,
            crashes=int(row["crashes"]),
            hangs=int(row["hangs"]),
            final_coverage_ratio=float(row["final_coverage_ratio"]),
            wall_seconds=wall,
        )
    except ValueError as exc:
        raise ReportError(f"{path}: {exc}") from None


def _parse(kind, text, path):
    try:
        return kind(text)
    except ValueError:
        raise ReportError(f"{path}: cannot parse {text!r}") from None


# --- comparison table ---------------------------------------------------------------


def reduction(baseline_avg: float, candidate_avg: float) -> float:
    """Fractional reduction of ``candidate`` relative to ``baseline``."""
    if baseline_avg <= 0:
        raise ValueError("baseline average must be positive")
    return 1.0 - candidate_avg / baseline_avg


def _strategy_key(name: str) -> tuple[int, str]:
    return (STRATEGY_ORDER.index(name) if name in STRATEGY_ORDER else len(STRATEGY_ORDER), name)


def compare_runs(summaries: Sequence[RunSummary]) -> list[list[str]]:
    """Per-run rows, then one average row per strategy, then pairwise reductions.

    ``cmd`` is the number of commands executed until the run stopped, which for
    runs reaching full coverage is the full-coverage count.
    """
    if len(summaries) < 2:
        raise ReportError("compare needs at least two run directories")
    rows = []
    by_strategy: dict[str, list[RunSummary]] = {}
    for s in sorted(summaries, key=lambda s: (_strategy_key(s.strategy), s.seed)):
        by_strategy.setdefault(s.strategy, []).append(s)
        rows.append(
            ["run", s.strategy, str(s.seed), str(s.commands_executed),
             _fmt(s.wall_seconds), str(s.crash_hang), _fmt(s.final_coverage_ratio)]
        )
    averages = {}
    for name, runs in by_strategy.items():
        cmd = statistics.fmean(r.commands_executed for r in runs)
        times = [r.wall_seconds for r in runs if r.wall_seconds is not None]
        wall = statistics.fmean(times) if len(times) == len(runs) else None
        crash = statistics.fmean(r.crash_hang for r in runs)
        cov = statistics.fmean(r.final_coverage_ratio for r in runs)
        averages[name] = (cmd, wall)
        rows.append(["average", name, "", f"{cmd:.1f}", _fmt(wall), f"{crash:.2f}", _fmt(cov)])
    names = list(by_strategy)
    for i, base in enumerate(names):
        for cand in names[i + 1 :]:
            (bc, bw), (cc, cw) = averages[base], averages[cand]
            time_red = f"{100 * reduction(bw, cw):.1f}" if bw and cw is not None else ""
            rows.append(
                ["reduction", f"{cand} vs {base}", "", f"{100 * reduction(bc, cc):.1f}", time_red, "", ""]
            )
    return rows


def compare_csv(summaries: Sequence[RunSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARE_COLUMNS)
    w.writerows(compare_runs(summaries))
    return buf.getvalue()


# --- figure data --------------------------------------------------------------------


def _threshold_from_config(run_dir: Path) -> int:
    cfg = run_dir / "config.cfg"
    if not cfg.is_file():
        raise ReportError(f"missing {cfg}")
    values = read_config_file(cfg)
    try:
        return int(values["device.gc_victim_threshold"])
    except (KeyError, ValueError):
        raise ReportError(f"{cfg}: no usable device.gc_victim_threshold") from None


def fig2_rows(run_dir: str | Path) -> list[list[str]]:
    run_dir = Path(run_dir)
    events = _read_csv(run_dir / "events.csv", EVENT_COLUMNS)
    threshold = _threshold_from_config(run_dir)
    return [[e["cmd_index"], e["victim_line_count"], str(threshold)] for e in events]


def quartile_split(n: int) -> tuple[range, range]:
    """Index ranges of the first and last quartile of ``n`` ordered items."""
    if n == 0:
        return range(0), range(0)
    k = max(1, math.ceil(n / 4))
    return range(0, k), range(n - k, n)


def fig3_rows(run_dir: str | Path) -> list[list[str]]:
    run_dir = Path(run_dir)
    admissions = _read_csv(run_dir / "admissions.csv", ADMISSION_COLUMNS[:2])
    admissions.sort(key=lambda a: (int(a["cmd_index"]), int(a["record_id"])))
    early, late = quartile_split(len(admissions))
    rows = []
    for label, span in (("early", early), ("late", late)):
        if not span:
            continue
        counts = {op.label: sum(int(admissions[i].get(op.label) or 0) for i in span) for op in Opcode}
        total = sum(counts.values())
        share = (counts["Write"] + counts["Flush"]) / total if total else 0.0
        rows.append([label, str(len(span))] + [str(counts[op.label]) for op in Opcode] + [f"{share:.6f}"])
    return rows


def write_plot_data(run_dir: str | Path, out_dir: str | Path | None = None) -> tuple[Path, Path]:
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir
    out.mkdir(parents=True, exist_ok=True)
    fig2 = fig2_rows(run_dir)
    fig3 = fig3_rows(run_dir)
    _write_csv(out / "fig2.csv", FIG2_COLUMNS, fig2)
    _write_csv(out / "fig3.csv", FIG3_COLUMNS, fig3)
    return out / "fig2.csv", out / "fig3.csv"


def write_flush_shares(fig3: Sequence[Sequence[str]]) -> dict[str, float]:
    return {row[0]: float(row[-1]) for row in fig3}
