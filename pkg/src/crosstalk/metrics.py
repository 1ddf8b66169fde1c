"""Framewise average precision, AUC, and challenging-scenario breakdowns.

Records are (scene, frame, entity) rows with a detection score (a logit:
positive means predicted active) and the ground-truth label. AP uses the
untruncated precision-weighted sum over positives without interpolation;
ranking ties are broken by the lexicographic (scene_id, frame_index,
entity_id) key so results never depend on ingestion order. AUC is the
Mann-Whitney statistic with ties counting 1/2.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError

FACE_SMALL_MAX = 64     # exclusive upper bound for "small" face width
FACE_MEDIUM_MAX = 128   # inclusive upper bound for "medium"
FACE_COUNT_CAP = 3      # "3" bucket holds 3 or more visible faces

CSV_HEADER = ["scene_id", "frame_index", "entity_id", "score", "label",
              "face_width", "faces_visible"]


@dataclass(frozen=True)
class PredictionRecord:
    """One scored (scene, frame, entity) row."""

    scene_id: str
    frame_index: int
    entity_id: str
    score: float
    label: int

    def key(self) -> tuple[str, int, str]:
        return (self.scene_id, self.frame_index, self.entity_id)


@dataclass(frozen=True)
class RecordMeta:
    """Per-record context used for bucketing."""

    face_width: float
    faces_visible: int


@dataclass
class EvalReport:
    """Overall metrics plus per-bucket breakdowns (absent buckets omitted)."""

    map: float
    auc: float
    map_by_face_size: dict[str, float] = field(default_factory=dict)
    map_by_face_count: dict[str, float] = field(default_factory=dict)
    support_by_face_size: dict[str, int] = field(default_factory=dict)
    support_by_face_count: dict[str, int] = field(default_factory=dict)
    positives: int = 0
    records: int = 0

    def as_dict(self) -> dict:
        return {
            "mAP": self.map,
            "AUC": self.auc,
            "mAP_by_face_size": self.map_by_face_size,
            "mAP_by_face_count": self.map_by_face_count,
            "support_by_face_size": self.support_by_face_size,
            "support_by_face_count": self.support_by_face_count,
            "positives": self.positives,
            "records": self.records,
        }


def _validate(records: Sequence[PredictionRecord]) -> None:
    for r in records:
        if not np.isfinite(r.score):
            raise DataError(f"non-finite score for {r.key()}")
        if r.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {r.label!r} for {r.key()}")


def _ranked(records: Sequence[PredictionRecord]) -> list[PredictionRecord]:
    return sorted(records, key=lambda r: (-r.score, r.scene_id, r.frame_index, r.entity_id))


def average_precision(records: Sequence[PredictionRecord]) -> float:
    """AP = sum over positives of precision-at-that-rank / n_positives."""
    _validate(records)
    n_pos = sum(r.label for r in records)
    if n_pos == 0:
        raise DataError("average precision is undefined without positive records")
    ap = 0.0
    seen_pos = 0
    for rank, rec in enumerate(_ranked(records), start=1):
        if rec.label == 1:
            seen_pos += 1
            ap += seen_pos / rank
    return ap / n_pos


def auc(records: Sequence[PredictionRecord]) -> float:
    """Mann-Whitney AUC; tied scores contribute 1/2."""
    _validate(records)
    labels = np.array([r.label for r in records])
    scores = np.array([r.score for r in records])
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs at least one positive and one negative record")
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(labels.size, dtype=np.float64)
    i = 0
    while i < labels.size:
        j = i
        while j + 1 < labels.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum_pos = ranks[labels == 1].sum()
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def face_size_bucket(width: float) -> str:
    if width < FACE_SMALL_MAX:
        return "small"
    if width <= FACE_MEDIUM_MAX:
        return "medium"
    return "large"


def face_count_bucket(count: int) -> str:
    return str(min(count, FACE_COUNT_CAP))


def bucketed_map(records: Sequence[PredictionRecord],
                 meta: Mapping[tuple[str, int, str], RecordMeta]) -> EvalReport:
    """Overall mAP/AUC plus per-bucket AP; buckets without positives are
    reported absent rather than zero."""
    _validate(records)
    report = EvalReport(
        map=average_precision(records),
        auc=auc(records),
        positives=sum(r.label for r in records),
        records=len(records),
    )
    by_size: dict[str, list[PredictionRecord]] = {}
    by_count: dict[str, list[PredictionRecord]] = {}
    for r in records:
        m = meta[r.key()]
        by_size.setdefault(face_size_bucket(m.face_width), []).append(r)
        by_count.setdefault(face_count_bucket(m.faces_visible), []).append(r)
    for bucket, rows in sorted(by_size.items()):
        report.support_by_face_size[bucket] = len(rows)
        if any(r.label for r in rows):
            report.map_by_face_size[bucket] = average_precision(rows)
    for bucket, rows in sorted(by_count.items()):
        report.support_by_face_count[bucket] = len(rows)
        if any(r.label for r in rows):
            report.map_by_face_count[bucket] = average_precision(rows)
    return report


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------


def write_records_csv(path: str | Path,
                      records: Sequence[PredictionRecord],
                      meta: Mapping[tuple[str, int, str], RecordMeta]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in records:
            m = meta[r.key()]
            writer.writerow([r.scene_id, r.frame_index, r.entity_id,
                             repr(r.score), r.label, repr(m.face_width), m.faces_visible])


def read_records_csv(path: str | Path) -> tuple[list[PredictionRecord],
                                                dict[tuple[str, int, str], RecordMeta]]:
    records: list[PredictionRecord] = []
    meta: dict[tuple[str, int, str], RecordMeta] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise DataError(f"{path}: unexpected CSV header {header}")
        for row in reader:
            rec = PredictionRecord(row[0], int(row[1]), row[2], float(row[3]), int(row[4]))
            records.append(rec)
            meta[rec.key()] = RecordMeta(float(row[5]), int(row[6]))
    return records, meta
