"""
Experiment metrics module for aonkit.
The per-epoch MetricRecord, a CSV writer safe to share between repetition
threads, and the pandas summaries behind the compare and ortho-sweep tables.
"""
import csv
import logging
import math
import os
import threading
from dataclasses import asdict, dataclass, fields
from typing import Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.6g"
TIME_AVERAGE_EPOCHS = 30


@dataclass(frozen=True)
class MetricRecord:
    """One row of experiment output: a single epoch of a single run."""

    run_id: str
    seed: int
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    mean_orth_dev: float
    mean_sigma: float
    epoch_wall_seconds: float

    def as_row(self) -> List[str]:
        return [format_value(getattr(self, f.name)) for f in fields(self)]


METRIC_COLUMNS = [f.name for f in fields(MetricRecord)]
TIMING_COLUMNS = ["epoch_wall_seconds"]


def format_value(value) -> str:
    """Integers and strings as is, reals with 6 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % float(value)
    return str(value)


class MetricWriter:
    """
    Appends MetricRecords to a CSV file, header first.

    Writes from several threads are serialized through one lock.
    """

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        self._handle = open(path, "w", newline="")
        self._writer = csv.writer(self._handle)
        self._writer.writerow(METRIC_COLUMNS)
        self.rows_written = 0

    def write(self, record: MetricRecord) -> None:
        with self._lock:
            self._writer.writerow(record.as_row())
            self._handle.flush()
            self.rows_written += 1

    def write_all(self, records: Iterable[MetricRecord]) -> None:
        for record in records:
            self.write(record)

    def close(self) -> None:
        with self._lock:
            if not self._handle.closed:
                self._handle.close()
                logger.info(f"Wrote {self.rows_written} metric rows to {self.path}")

    def __enter__(self) -> "MetricWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def records_to_frame(records: Iterable[MetricRecord]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in records], columns=METRIC_COLUMNS)


def read_metrics(path: str) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"run_id": str})


def mean_epoch_seconds(times: Iterable[float], limit: int = TIME_AVERAGE_EPOCHS) -> float:
    """Mean wall time over the first `limit` epochs (all of them if fewer)."""
    values = list(times)[:limit]
    return float(np.mean(values)) if values else math.nan


def summarize_runs(frame: pd.DataFrame) -> pd.DataFrame:
    """
    One row per run: best validation accuracy, the epoch reaching it and mean epoch time.
    """
    rows = []
    for run_id, group in frame.groupby("run_id", sort=False):
        group = group.sort_values("epoch")
        best = group["val_acc"].idxmax()
        rows.append({
            "run_id": run_id,
            "seed": int(group["seed"].iloc[0]),
            "best_val_acc": float(group.loc[best, "val_acc"]),
            "best_epoch": int(group.loc[best, "epoch"]),
            "epoch_seconds": mean_epoch_seconds(group["epoch_wall_seconds"]),
        })
    return pd.DataFrame(rows, columns=["run_id", "seed", "best_val_acc", "best_epoch", "epoch_seconds"])


def compare_summary(run_frames: Dict[str, pd.DataFrame], q_values: Optional[Dict[str, int]] = None) -> pd.DataFrame:
    """
    Mean ± std of per-seed best validation accuracy and mean epoch time per mode.

    Standard deviations are population (ddof=0) so a single seed gives 0.

    Args:
        run_frames: mode label → per-epoch metric rows of every seed of that mode
        q_values: mode label → Taylor order, reported alongside

    Returns:
        pd.DataFrame: one row per mode in insertion order
    """
    rows = []
    for label, frame in run_frames.items():
        runs = summarize_runs(frame)
        rows.append({
            "mode": label,
            "q": (q_values or {}).get(label, ""),
            "runs": int(len(runs)),
            "best_val_acc_mean": float(runs["best_val_acc"].mean()),
            "best_val_acc_std": float(runs["best_val_acc"].std(ddof=0)),
            "epoch_seconds_mean": float(runs["epoch_seconds"].mean()),
        })
    return pd.DataFrame(rows)


def summary_table(summary: pd.DataFrame) -> pd.DataFrame:
    """Modes as columns with an accuracy row and a time row."""
    accuracy = [
        f"{m * 100:.2f} ± {s * 100:.2f}"
        for m, s in zip(summary["best_val_acc_mean"], summary["best_val_acc_std"])
    ]
    timing = [f"{t:.4g}" for t in summary["epoch_seconds_mean"]]
    return pd.DataFrame(
        [accuracy, timing],
        index=["val accuracy (%)", "time per epoch (s)"],
        columns=list(summary["mode"]),
    )


def write_frame(frame: pd.DataFrame, path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {len(frame)} rows to {path}")
