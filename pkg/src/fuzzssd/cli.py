"""Command-line front end: ``run``, ``compare`` and ``plot-data``."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .campaign import Strategy, run_campaign
from .config import build_campaign_config, read_config_file
from .device import PRESETS, ConfigError
from .report import (
    ReportError,
    compare_csv,
    read_summary,
    write_plot_data,
    write_run,
)

EXIT_OK = 0
EXIT_ERROR = 2


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    # defaults stay None so only flags the user typed override the config file
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--ops", help="comma list, e.g. write,read")
    p.add_argument("--seq-limit", type=int)
    p.add_argument("--budget-cmds", type=int)
    p.add_argument("--budget-secs", type=float)
    p.add_argument("--noise", choices=("on", "off"))
    p.add_argument("--noise-seed", type=int)
    p.add_argument("--faults", help="fault preset (default, none) or a fault file")
    p.add_argument("--sample-every", type=int)
    p.add_argument("--config", help="key = value file with device./engine./campaign. keys")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fuzzssd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one campaign")
    run.add_argument("--strategy", choices=[s.value for s in Strategy])
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="run directory (default: $FUZZSSD_OUT/<strategy>-s<seed>)")
    _add_run_flags(run)

    cmp_ = sub.add_parser("compare", help="tabulate several runs")
    cmp_.add_argument("runs", nargs="*", help="run directories")
    cmp_.add_argument("--out", help="write the table here instead of stdout")
    cmp_.add_argument("--run-matrix", action="store_true", help="run strategies x seeds first")
    cmp_.add_argument("--strategies", default="coverage,state-aware")
    cmp_.add_argument("--seeds", default="1-5", help="range like 1-5 or list like 1,3,7")
    cmp_.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    cmp_.add_argument("--out-root", help="parent directory for matrix runs")
    _add_run_flags(cmp_)

    plot = sub.add_parser("plot-data", help="emit fig2.csv and fig3.csv for a run")
    plot.add_argument("run", help="run directory")
    plot.add_argument("--out", help="output directory (default: the run directory)")
    return parser


def _flag_values(args: argparse.Namespace) -> dict[str, str]:
    mapping = {
        "strategy": "campaign.strategy",
        "seed": "campaign.seed",
        "preset": "campaign.preset",
        "ops": "campaign.ops",
        "seq_limit": "campaign.seq_limit",
        "budget_cmds": "campaign.budget_cmds",
        "budget_secs": "campaign.budget_secs",
        "faults": "campaign.faults",
        "sample_every": "campaign.sample_every",
        "noise_seed": "device.noise_seed",
    }
    values = {}
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            values[key] = str(value)
    if getattr(args, "noise", None) is not None:
        values["device.noise_enabled"] = "true" if args.noise == "on" else "false"
    return values


def merged_values(args: argparse.Namespace) -> dict[str, str]:
    values = read_config_file(args.config) if args.config else {}
    values.update(_flag_values(args))
    return values


def default_out_root() -> Path:
    return Path(os.environ.get("FUZZSSD_OUT", "runs"))


def _ensure_writable(directory: Path) -> None:
    try:
        directory.mkdir(parents=True, exist_ok=True)
        probe = directory / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {directory} is not writable: {exc.strerror}") from None


def execute_run(values: dict[str, str], out_dir: Path) -> Path:
    config = build_campaign_config(values)
    _ensure_writable(out_dir)
    stats = run_campaign(config)
    return write_run(
        out_dir,
        stats,
        config,
        preset_name=values.get("campaign.preset", "desk-scale"),
        faults_name=values.get("campaign.faults", "default"),
    )


def _run_matrix_job(job: tuple[dict[str, str], str]) -> str:
    values, out_dir = job
    return str(execute_run(values, Path(out_dir)))


def parse_seeds(text: str) -> list[int]:
    try:
        if "-" in text and "," not in text:
            lo, hi = (int(x) for x in text.split("-", 1))
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}; use 1-5 or 1,2,3") from None


def cmd_run(args: argparse.Namespace) -> int:
    values = merged_values(args)
    config = build_campaign_config(values)  # fail fast before touching the filesystem
    out = Path(args.out) if args.out else default_out_root() / f"{Strategy(config.strategy).value}-s{config.rng_seed}"
    out = execute_run(values, out)
    row = read_summary(out)
    cov = row.commands_to_full_coverage if row.commands_to_full_coverage is not None else "-"
    print(
        f"{row.strategy} seed={row.seed} commands={row.commands_executed} "
        f"full_coverage_at={cov} coverage={row.final_coverage_ratio:.3f} "
        f"crashes={row.crashes} hangs={row.hangs} -> {out}"
    )
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    dirs = [Path(d) for d in args.runs]
    if args.run_matrix:
        base = merged_values(args)
        root = Path(args.out_root) if args.out_root else default_out_root()
        try:
            strategies = [Strategy(s.strip()).value for s in args.strategies.split(",") if s.strip()]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        jobs = []
        for strategy in strategies:
            for seed in parse_seeds(args.seeds):
                values = {**base, "campaign.strategy": strategy, "campaign.seed": str(seed)}
                build_campaign_config(values)
                jobs.append((values, str(root / f"{strategy}-s{seed}")))
        if args.jobs <= 1:
            done = [_run_matrix_job(j) for j in jobs]
        else:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                done = list(pool.map(_run_matrix_job, jobs))
        dirs += [Path(d) for d in done]
    summaries = [read_summary(d) for d in dirs]
    text = compare_csv(summaries)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_plot_data(args: argparse.Namespace) -> int:
    fig2, fig3 = write_plot_data(args.run, args.out)
    print(f"wrote {fig2} and {fig3}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "plot-data": cmd_plot_data}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ReportError) as exc:
        print(f"fuzzssd: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"fuzzssd: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
