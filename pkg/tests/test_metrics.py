import math

import pandas as pd
import pytest

from lib.metrics import (
    METRIC_COLUMNS,
    MetricRecord,
    MetricWriter,
    compare_summary,
    format_value,
    mean_epoch_seconds,
    read_metrics,
    records_to_frame,
    summarize_runs,
    summary_table,
)


def record(run_id="seed0", seed=0, epoch=0, val_acc=0.5, seconds=1.0):
    return MetricRecord(run_id, seed, epoch, 0.693147181, 0.5, 0.7, val_acc, 0.01, 1.0, seconds)


def test_format_value():
    assert format_value(3) == "3"
    assert format_value(0.693147181) == "0.693147"
    assert format_value(1.0) == "1"
    assert format_value(1e-9) == "1e-09"
    assert format_value(math.nan) == "nan"
    assert format_value("seed0") == "seed0"


def test_writer_header_and_rows(tmp_path):
    path = str(tmp_path / "out" / "metrics.csv")
    with MetricWriter(path) as writer:
        writer.write_all([record(epoch=0), record(epoch=1)])
    lines = open(path).read().splitlines()
    assert lines[0] == ",".join(METRIC_COLUMNS)
    assert lines[1] == "seed0,0,0,0.693147,0.5,0.7,0.5,0.01,1,1"
    frame = read_metrics(path)
    assert len(frame) == 2 and list(frame.columns) == METRIC_COLUMNS


def test_mean_epoch_seconds_uses_first_epochs():
    assert mean_epoch_seconds([1.0, 3.0, 100.0], limit=2) == pytest.approx(2.0)
    assert mean_epoch_seconds([2.0]) == pytest.approx(2.0)
    assert math.isnan(mean_epoch_seconds([]))


def test_summarize_runs():
    frame = records_to_frame([
        record("seed0", 0, 0, 0.6), record("seed0", 0, 1, 0.8), record("seed0", 0, 2, 0.7),
        record("seed1", 1, 0, 0.9, seconds=3.0),
    ])
    runs = summarize_runs(frame)
    assert runs["run_id"].tolist() == ["seed0", "seed1"]
    assert runs["best_val_acc"].tolist() == pytest.approx([0.8, 0.9])
    assert runs["best_epoch"].tolist() == [1, 0]
    assert runs["epoch_seconds"].tolist() == pytest.approx([1.0, 3.0])


def test_compare_summary_and_table():
    frames = {
        "aon:2": records_to_frame([record("aon:2-seed0", 0, 0, 0.8), record("aon:2-seed1", 1, 0, 0.9)]),
        "sn": records_to_frame([record("sn-seed0", 0, 0, 0.7)]),
    }
    summary = compare_summary(frames, {"aon:2": 2, "sn": 0})
    assert summary["mode"].tolist() == ["aon:2", "sn"]
    assert summary["runs"].tolist() == [2, 1]
    assert summary["best_val_acc_mean"].tolist() == pytest.approx([0.85, 0.7])
    assert summary["best_val_acc_std"].tolist() == pytest.approx([0.05, 0.0])

    table = summary_table(summary)
    assert list(table.columns) == ["aon:2", "sn"]
    assert table.loc["val accuracy (%)", "aon:2"] == "85.00 ± 5.00"
    assert isinstance(table, pd.DataFrame)
