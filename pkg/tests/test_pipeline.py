import csv
import io
import json
from pathlib import Path

import pytest

from conftest import GOLDEN
from longtail.analysis import TopicProfile
from longtail.invest import TopicInvestmentRow, TopicInvestmentTable
from longtail.ingest import GrantRecord, LinkTable
from longtail.pipeline import (
    ConfigError,
    RunConfig,
    StageError,
    emit_plot_data,
    emit_topic_table,
    parse_k_grid,
    round_half_up,
    run_pipeline,
)


def table(ti, ranks, segments=None):
    segments = segments or ["tail"] * len(ti)
    rows = [TopicInvestmentRow(i, t, r, 0.0, s) for i, (t, r, s) in enumerate(zip(ti, ranks, segments))]
    return TopicInvestmentTable(rows, sum(ti))


def profile(i, label="", pubs=0, comp=None):
    return TopicProfile(i, label, [], pubs, 0.0, comp or {})


def test_topic_table_row_format():
    profiles = [profile(0, "Stellar astrophysics", 12, {"R": 100}), profile(1, "Planetary science", 7, {"R": 100}),
                profile(2, "Observatory management", 3, {"F": 100})]
    ti = table([59_085_683.0, 1_200_000.0, 238_285_666.4], [2, 3, 1])
    lines = emit_topic_table(profiles, ti, "csv").splitlines()
    assert lines[0] == "topic_number,label,pub_count_top,ti_dollars,ti_rank,composition"
    assert lines[3] == "3,Observatory management,3,238285666,1,100%F"
    assert len(lines) == 4


def test_topic_table_rounds_half_up():
    assert round_half_up(238285666.4) == 238285666
    assert round_half_up(238285666.5) == 238285667
    assert round_half_up(0.5) == 1


def test_topic_table_empty_composition_and_json():
    text = emit_topic_table([profile(0, "x", 1)], table([10.0], [1]), "json")
    (row,) = json.loads(text)
    assert row == {"topic_number": 1, "label": "x", "pub_count_top": 1, "ti_dollars": 10, "ti_rank": 1,
                   "composition": ""}
    csv_row = emit_topic_table([profile(0, "x", 1)], table([10.0], [1]), "csv").splitlines()[1]
    assert csv_row == "1,x,1,10,1,"


def test_topic_table_mismatch():
    with pytest.raises(ValueError, match="different topics"):
        emit_topic_table([profile(0)], table([1.0, 2.0], [2, 1]))


def grant(key, dollars):
    return GrantRecord(key, [key], key, key, dollars, set(), 2016)


def test_plot_data_single_topic_single_grant():
    files = emit_plot_data([profile(0, "x", 0)], table([100.0], [1]), [grant("1000001", 100)],
                           LinkTable({"1000001": set()}, set()))
    assert files["fig1.csv"] == "topic_number,ti_dollars,pub_count_top\n1,100,0\n"
    assert files["fig2.csv"] == "grant_key,dollars_awarded,linked_pub_count\n1000001,100,0\n"


def test_plot_data_sorted_by_dollars():
    grants = [grant("1000001", 5), grant("1000002", 50), grant("1000003", 20)]
    lt = LinkTable({"1000001": {"a"}, "1000002": set(), "1000003": {"a", "b"}}, set())
    files = emit_plot_data([profile(0), profile(1)], table([1.0, 74.0], [2, 1]), grants, lt)
    fig2 = list(csv.reader(io.StringIO(files["fig2.csv"])))[1:]
    assert fig2 == [["1000002", "50", "0"], ["1000003", "20", "2"], ["1000001", "5", "1"]]
    fig1 = list(csv.reader(io.StringIO(files["fig1.csv"])))[1:]
    assert [r[0] for r in fig1] == ["2", "1"]


def test_parse_k_grid():
    assert parse_k_grid("2..10") == list(range(2, 11))
    assert parse_k_grid("3,5,8") == [3, 5, 8]
    with pytest.raises(ConfigError):
        parse_k_grid("two..ten")


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown config key"):
        RunConfig.from_dict({"grants": "x", "topics": 3})


def test_config_paths_resolve_against_config_file(e2e_dir):
    cfg = RunConfig.from_file(e2e_dir / "config.json")
    assert Path(cfg.grants) == e2e_dir / "grants.jsonl"
    assert Path(cfg.out) == e2e_dir / "out"


@pytest.mark.parametrize("change,match", [
    (dict(grants=None), "'grants' is required"),
    (dict(grants="nope.jsonl"), "grants file not found"),
    (dict(k=None), "either 'k' or 'k_grid'"),
    (dict(k_grid=[2, 3]), "mutually exclusive"),
    (dict(k=None, k_grid=[3, 2]), "ascending"),
    (dict(partition_mode="median"), "partition_mode"),
    (dict(head_fraction=1.5), "head_fraction"),
    (dict(formats=["xml"]), "formats"),
    (dict(burn_in=500), "burn_in"),
])
def test_validation_errors(e2e_dir, change, match):
    cfg = RunConfig.from_file(e2e_dir / "config.json")
    for k, v in change.items():
        setattr(cfg, k, str(e2e_dir / v) if k == "grants" and v else v)
    with pytest.raises(ConfigError, match=match):
        run_pipeline(cfg)
    assert not (e2e_dir / "out").exists()


def test_run_matches_golden_bundle(e2e_dir):
    cfg = RunConfig.from_file(e2e_dir / "config.json")
    run_pipeline(cfg)
    produced = sorted(p.name for p in (e2e_dir / "out").iterdir())
    assert produced == sorted(p.name for p in GOLDEN.iterdir())
    for name in produced:
        assert (e2e_dir / "out" / name).read_bytes() == (GOLDEN / name).read_bytes(), name


def test_rerun_gives_identical_manifest(e2e_dir, tmp_path):
    cfg = RunConfig.from_file(e2e_dir / "config.json")
    first = run_pipeline(cfg)
    cfg.out = str(tmp_path / "second")
    second = run_pipeline(cfg)
    assert first == second
    assert set(first["outputs"]) == {p.name for p in GOLDEN.iterdir()} - {"manifest.json"}
    assert first["inputs"]["grants"]["file"] == "grants.jsonl"


def test_manifest_is_machine_independent(e2e_dir):
    run_pipeline(RunConfig.from_file(e2e_dir / "config.json"))
    text = (e2e_dir / "out" / "manifest.json").read_text()
    assert str(e2e_dir) not in text


def test_topic_table_sums_to_total_dollars():
    grants = [json.loads(line) for line in (GOLDEN / "grants.merged.jsonl").read_text().splitlines()]
    aps = sum(g["amount"] for g in grants)
    rows = list(csv.DictReader(io.StringIO((GOLDEN / "topic_table.csv").read_text())))
    assert abs(sum(int(r["ti_dollars"]) for r in rows) - aps) <= len(rows) / 2


def test_failed_stage_leaves_no_outputs(e2e_dir):
    (e2e_dir / "annotations.csv").write_text("grant_key,code\n", "utf-8")
    cfg = RunConfig.from_file(e2e_dir / "config.json")
    with pytest.raises(StageError) as info:
        run_pipeline(cfg)
    assert info.value.stage == "analyze"
    assert "no objective annotation" in str(info.value)
    out = e2e_dir / "out"
    assert not out.exists() or not any(out.iterdir())


def test_failed_run_keeps_previous_bundle(e2e_dir):
    cfg = RunConfig.from_file(e2e_dir / "config.json")
    run_pipeline(cfg)
    before = {p.name: p.read_bytes() for p in (e2e_dir / "out").iterdir()}
    with open(e2e_dir / "pubs.jsonl", "a") as f:
        f.write("{not json\n")
    with pytest.raises(StageError, match="ingest"):
        run_pipeline(cfg)
    assert {p.name: p.read_bytes() for p in (e2e_dir / "out").iterdir()} == before
