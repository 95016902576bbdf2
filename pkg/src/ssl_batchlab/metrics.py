"""Per-epoch training-dynamics records and their CSV persistence."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError

COLUMNS = (
    "epoch",
    "samples_seen",
    "lr",
    "train_err_labeled",
    "val_acc",
    "test_err",
    "sup_loss",
    "unsup_loss",
    "mean_confidence_unlabeled",
    "pseudo_label_ratio",
    "unlabeled_pred_acc",
    "pseudo_label_acc",
)

BATCH_LOG_COLUMNS = ("step", "samples_seen", "task", "sample_id", "pseudo_label", "confidence", "kept", "hidden_label")


@dataclass
class MetricsRow:
    epoch: float
    samples_seen: int
    lr: float
    train_err_labeled: float | None = None
    val_acc: float | None = None
    test_err: float | None = None
    sup_loss: float | None = None
    unsup_loss: float | None = None
    mean_confidence_unlabeled: float | None = None
    pseudo_label_ratio: float | None = None
    unlabeled_pred_acc: float | None = None
    pseudo_label_acc: float | None = None


def _ratio(num, den):
    return num / den if den else None


def privileged_accuracy(predictions, keep_mask, hidden_true_labels):
    """Accuracy over all unlabeled rows and over the kept subset.

    Either value is ``None`` when its denominator is empty.
    """
    predictions = np.asarray(predictions)
    keep_mask = np.asarray(keep_mask, dtype=bool)
    correct = predictions == np.asarray(hidden_true_labels)
    return (
        _ratio(int(correct.sum()), len(correct)),
        _ratio(int(correct[keep_mask].sum()), int(keep_mask.sum())),
    )


class EpochAccumulator:
    """Sums batch statistics over one evaluation window."""

    def __init__(self):
        self.reset()

    def reset(self):
        self.batches = 0
        self.n_labeled = 0
        self.sup_ce = 0.0
        self.u_count = 0
        self.unsup_ce = 0.0
        self.kept = 0
        self.conf_sum = 0.0
        self.correct_all = 0
        self.correct_kept = 0
        self.has_privileged = True

    def add(self, stats):
        self.batches += 1
        for t in stats.tasks:
            # back to sums so the window mean is weighted by row counts
            self.n_labeled += t.n_labeled
            self.sup_ce += t.sup_loss * t.n_labeled
            self.u_count += t.u_count
            self.unsup_ce += t.unsup_loss * t.u_count
            self.kept += t.kept
            self.conf_sum += float(t.confidences.sum())
            if t.hidden_labels is None:
                self.has_privileged = False
            else:
                hit = t.pseudo_labels == t.hidden_labels
                self.correct_all += int(hit.sum())
                self.correct_kept += int(hit[t.keep_mask].sum())

    def summary(self):
        priv = self.has_privileged
        return {
            "sup_loss": _ratio(self.sup_ce, self.n_labeled),
            "unsup_loss": _ratio(self.unsup_ce, self.u_count),
            "mean_confidence_unlabeled": _ratio(self.conf_sum, self.u_count),
            "pseudo_label_ratio": _ratio(self.kept, self.u_count),
            "unlabeled_pred_acc": _ratio(self.correct_all, self.u_count) if priv else None,
            "pseudo_label_acc": _ratio(self.correct_kept, self.kept) if priv else None,
        }


def accumulate(batch_stats_list):
    """Window aggregate of a sequence of batch statistics."""
    acc = EpochAccumulator()
    for s in batch_stats_list:
        acc.add(s)
    return acc.summary()


def _fmt(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(rows, path):
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for row in rows:
                d = asdict(row)
                w.writerow([_fmt(d[c]) for c in COLUMNS])
    except OSError as exc:
        raise OSError(f"{path}: {exc}") from exc


def append_csv_row(row, path):
    path = Path(path)
    new = not path.exists()
    with path.open("a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(COLUMNS)
        d = asdict(row)
        w.writerow([_fmt(d[c]) for c in COLUMNS])


def read_csv(path):
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            records = list(reader)
    except OSError as exc:
        raise OSError(f"{path}: {exc}") from exc
    if header is None:
        raise SchemaError(f"{path}: empty metrics file")
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    pos = {c: header.index(c) for c in COLUMNS}
    rows = []
    for rec in records:
        kw = {}
        for c in COLUMNS:
            raw = rec[pos[c]]
            if raw == "":
                kw[c] = None
            elif c == "samples_seen":
                kw[c] = int(raw)
            else:
                kw[c] = float(raw)
        rows.append(MetricsRow(**kw))
    return rows


class BatchLog:
    """Raw per-row pseudo-label log, one CSV line per unlabeled row per task."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = self.path.open("w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(BATCH_LOG_COLUMNS)

    def write(self, step, samples_seen, stats):
        for t, ts in enumerate(stats.tasks):
            hidden = ts.hidden_labels if ts.hidden_labels is not None else [None] * len(ts.sample_ids)
            for sid, pl, conf, kept, h in zip(ts.sample_ids, ts.pseudo_labels, ts.confidences,
                                              ts.keep_mask, hidden):
                self._w.writerow([step, samples_seen, t, int(sid), int(pl), _fmt(conf), int(bool(kept)),
                                  "" if h is None else int(h)])

    def close(self):
        self._fh.close()


def read_batch_log(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
