import csv

import pytest

from fuzzssd.cli import main, parse_seeds
from fuzzssd.config import build_campaign_config, dump_config, parse_config_text
from fuzzssd.device import ConfigError, preset
from fuzzssd.report import (
    RunSummary,
    ReportError,
    compare_runs,
    fig3_rows,
    quartile_split,
    read_summary,
    reduction,
)

SMALL = ["--budget-cmds", "1500"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    out = {}
    for strategy in ("coverage", "state-aware"):
        d = root / strategy
        assert main(["run", "--strategy", strategy, "--seed", "1", "--out", str(d)] + SMALL) == 0
        out[strategy] = d
    return out


def test_run_writes_artifacts(two_runs):
    d = two_runs["state-aware"]
    for name in ("events.csv", "crashes.csv", "summary.csv", "timing.csv", "admissions.csv",
                 "pool.ontology", "config.cfg"):
        assert (d / name).is_file(), name
    assert (d / "corpus").is_dir()
    summary = rows(d / "summary.csv")
    assert len(summary) == 1
    assert summary[0]["strategy"] == "state-aware"
    assert int(summary[0]["commands_executed"]) <= 1500


def test_run_is_reproducible(tmp_path, two_runs):
    d = tmp_path / "again"
    assert main(["run", "--strategy", "state-aware", "--seed", "1", "--out", str(d)] + SMALL) == 0
    for name in ("summary.csv", "events.csv", "crashes.csv", "admissions.csv", "config.cfg"):
        assert (d / name).read_bytes() == (two_runs["state-aware"] / name).read_bytes(), name


def test_bad_strategy_exits_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--strategy", "bogus", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_bad_config_key_exits_2(tmp_path):
    cfg = tmp_path / "x.cfg"
    cfg.write_text("device.not_a_field = 3\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_unwritable_out_exits_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--out", str(blocker / "sub")] + SMALL) == 2


def test_missing_fault_file_exits_2(tmp_path):
    assert main(["run", "--faults", str(tmp_path / "nope.faults"), "--out", str(tmp_path / "o")]) == 2


def test_fuzzssd_out_default(tmp_path, monkeypatch):
    monkeypatch.setenv("FUZZSSD_OUT", str(tmp_path))
    assert main(["run", "--strategy", "random", "--seed", "3", "--budget-cmds", "200"]) == 0
    assert (tmp_path / "random-s3" / "summary.csv").is_file()


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("campaign.seq_limit = 40\ncampaign.budget_cmds = 300\ndevice.gc_victim_threshold = 10\n")
    d = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--budget-cmds", "200", "--out", str(d)]) == 0
    values = parse_config_text((d / "config.cfg").read_text())
    assert values["campaign.seq_limit"] == "40"
    assert values["campaign.budget_cmds"] == "200"
    assert values["device.gc_victim_threshold"] == "10"


def test_compare_two_dirs(two_runs, tmp_path):
    out = tmp_path / "cmp.csv"
    assert main(["compare", str(two_runs["coverage"]), str(two_runs["state-aware"]), "--out", str(out)]) == 0
    table = rows(out)
    assert [r["row"] for r in table] == ["run", "run", "average", "average", "reduction"]
    assert table[-1]["strategy"] == "state-aware vs coverage"


def test_compare_single_dir_exits_2(two_runs):
    assert main(["compare", str(two_runs["coverage"])]) == 2


def test_compare_missing_summary_exits_2(two_runs, tmp_path):
    assert main(["compare", str(two_runs["coverage"]), str(tmp_path)]) == 2


def test_compare_run_matrix(tmp_path):
    out = tmp_path / "cmp.csv"
    args = ["compare", "--run-matrix", "--strategies", "random,coverage", "--seeds", "1-2",
            "--jobs", "1", "--out-root", str(tmp_path / "m"), "--budget-cmds", "300", "--out", str(out)]
    assert main(args) == 0
    table = rows(out)
    assert sum(r["row"] == "run" for r in table) == 4
    assert sum(r["row"] == "average" for r in table) == 2
    assert (tmp_path / "m" / "coverage-s2" / "summary.csv").is_file()


def test_plot_data(two_runs, tmp_path):
    assert main(["plot-data", str(two_runs["state-aware"]), "--out", str(tmp_path)]) == 0
    fig2 = rows(tmp_path / "fig2.csv")
    assert fig2 and all(r["threshold"] == "12" for r in fig2)
    assert any(int(r["victim_line_count"]) >= 12 for r in fig2)
    fig3 = rows(tmp_path / "fig3.csv")
    assert [r["quartile"] for r in fig3] == ["early", "late"]


def test_plot_data_empty_pool_is_header_only(two_runs, tmp_path):
    assert main(["plot-data", str(two_runs["coverage"]), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "fig3.csv").read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("quartile,")


def test_plot_data_missing_events_exits_2(two_runs, tmp_path):
    d = tmp_path / "broken"
    d.mkdir()
    for name in ("admissions.csv", "config.cfg"):
        (d / name).write_bytes((two_runs["state-aware"] / name).read_bytes())
    assert main(["plot-data", str(d)]) == 2


def summary(strategy, seed, cmd, crash=6):
    return RunSummary(None, strategy, seed, cmd, cmd, crash, 0, 1.0, 1.0)


def test_compare_row_counts():
    runs = [summary("coverage", s, 1000 + s) for s in range(1, 6)]
    runs += [summary("state-aware", s, 500 + s) for s in range(1, 6)]
    table = compare_runs(runs)
    kinds = [r[0] for r in table]
    assert kinds.count("run") == 10 and kinds.count("average") == 2 and kinds.count("reduction") == 1


def test_reduction_example():
    assert round(100 * reduction(23440462, 7663816), 1) == 67.3
    with pytest.raises(ValueError):
        reduction(0, 1)


def test_quartile_split():
    assert quartile_split(0) == (range(0), range(0))
    assert quartile_split(3) == (range(0, 1), range(2, 3))
    assert quartile_split(8) == (range(0, 2), range(6, 8))
    assert quartile_split(9) == (range(0, 3), range(6, 9))


def test_read_summary_rejects_two_rows(tmp_path, two_runs):
    text = (two_runs["coverage"] / "summary.csv").read_text()
    (tmp_path / "summary.csv").write_text(text + text.splitlines()[1] + "\n")
    with pytest.raises(ReportError):
        read_summary(tmp_path)


def test_fig3_header_only_without_admissions(tmp_path, two_runs):
    (tmp_path / "admissions.csv").write_text((two_runs["coverage"] / "admissions.csv").read_text())
    assert fig3_rows(tmp_path) == []


def test_parse_seeds():
    assert parse_seeds("1-5") == [1, 2, 3, 4, 5]
    assert parse_seeds("1,3,7") == [1, 3, 7]
    with pytest.raises(ConfigError):
        parse_seeds("5-1")


def test_config_round_trip():
    six = "write,read,compare,flush,write-zeroes,write-uncorrectable"
    values = {"campaign.strategy": "coverage", "campaign.seed": "9", "campaign.ops": six,
              "device.gc_victim_threshold": "10", "engine.p_reuse": "0.25",
              "engine.delta.total_invalid_pages": "32"}
    cfg = build_campaign_config(values)
    again = build_campaign_config(parse_config_text(dump_config(cfg)))
    assert again == cfg
    assert cfg.device.gc_victim_threshold == 10
    assert cfg.thresholds["total_invalid_pages"] == 32


def test_config_errors():
    for bad in ({"campaign.strategy": "fast"}, {"engine.nope": "1"}, {"engine.delta.nope": "1"},
                {"campaign.seq_limit": "ten"}, {"campaign.wat": "1"}):
        with pytest.raises(ConfigError):
            build_campaign_config(bad)
    with pytest.raises(ConfigError):
        parse_config_text("no_prefix = 1\n")
    with pytest.raises(ConfigError):
        parse_config_text("device.x 1\n")


def test_preset_selects_geometry():
    cfg = build_campaign_config({"campaign.preset": "paper-scale"})
    assert cfg.device == preset("paper-scale")
