"""Interaction and attribute records, CSV ingest/export, rating mapping.

An interaction log is a list of ``(user, video, kind, timestamp)`` events
where the kind is one of ``like``, ``finish``, ``noninteraction`` or
``produce``; likes and finishes are the positive signals. Attributes
attach typed side information (tags, titles, audio, anything else) to
videos. :class:`Dataset` holds both plus the per-user views the graph and
evaluation layers need: deduplicated positive histories and full
chronological record lists.
"""
from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

KIND_LIKE = "like"
KIND_FINISH = "finish"
KIND_NONINTERACTION = "noninteraction"
KIND_PRODUCE = "produce"

KINDS = (KIND_LIKE, KIND_FINISH, KIND_NONINTERACTION, KIND_PRODUCE)
POSITIVE_KINDS = (KIND_LIKE, KIND_FINISH)

INTERACTIONS_HEADER = ["user_id", "video_id", "kind", "timestamp"]
ATTRIBUTES_HEADER = ["video_id", "attr_type", "attr_id"]


class DataError(ValueError):
    """Malformed input data or an unsatisfiable data request."""


@dataclass(frozen=True)
class InteractionRecord:
    user_id: str
    video_id: str
    kind: str
    timestamp: int


@dataclass(frozen=True)
class AttributeRecord:
    video_id: str
    attr_type: str
    attr_id: str


@dataclass(frozen=True)
class HistoryEvent:
    """One deduplicated positive interaction in a user's history."""

    timestamp: int
    video_id: str
    kind: str


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_kept: int = 0
    duplicates_dropped: int = 0
    errors: int = 0

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_kept": self.rows_kept,
            "duplicates_dropped": self.duplicates_dropped,
            "errors": self.errors,
        }


class Dataset:
    """Validated records plus the derived per-user views.

    ``history[u]`` is u's positive interactions, one event per video (the
    latest one wins), in ascending ``(timestamp, video_id)`` order.
    ``records[u]`` is every record of u, any kind, in the same order; the
    evaluation protocol slices it chronologically.
    """

    def __init__(
        self,
        interactions: Sequence[InteractionRecord],
        attributes: Sequence[AttributeRecord] = (),
    ) -> None:
        if not interactions:
            raise DataError("a dataset needs at least one interaction record")
        for r in interactions:
            if r.kind not in KINDS:
                raise DataError(f"unknown interaction kind {r.kind!r}")
            if not r.user_id or not r.video_id:
                raise DataError("interaction records need non-empty user and video ids")
        for a in attributes:
            if not a.video_id or not a.attr_type or not a.attr_id:
                raise DataError("attribute records need non-empty video, type and id")

        self.interactions = sorted(
            interactions, key=lambda r: (r.user_id, r.video_id, r.kind, r.timestamp)
        )
        self.attributes = sorted(
            attributes, key=lambda a: (a.video_id, a.attr_type, a.attr_id)
        )
        self.users = sorted({r.user_id for r in self.interactions})
        self.videos = sorted(
            {r.video_id for r in self.interactions}
            | {a.video_id for a in self.attributes}
        )

        by_user: dict[str, list[InteractionRecord]] = {u: [] for u in self.users}
        for r in self.interactions:
            by_user[r.user_id].append(r)
        self.records: dict[str, list[InteractionRecord]] = {
            u: sorted(rs, key=lambda r: (r.timestamp, r.video_id, r.kind))
            for u, rs in by_user.items()
        }

        self.history: dict[str, list[HistoryEvent]] = {
            u: dedup_history(r for r in rs if r.kind in POSITIVE_KINDS)
            for u, rs in self.records.items()
        }
        self.positive_videos: dict[str, set[str]] = {
            u: {e.video_id for e in evs} for u, evs in self.history.items()
        }
        seen: dict[str, set[str]] = {
            u: {r.video_id for r in rs} for u, rs in self.records.items()
        }
        self.explicit_negatives: dict[str, list[str]] = {
            u: sorted(
                {r.video_id for r in rs if r.kind == KIND_NONINTERACTION}
                - self.positive_videos[u]
            )
            for u, rs in self.records.items()
        }
        self.seen_videos = seen

        self.attrs_by_video: dict[str, list[AttributeRecord]] = {}
        for a in self.attributes:
            self.attrs_by_video.setdefault(a.video_id, []).append(a)

        self.attr_types = sorted({a.attr_type for a in self.attributes})
        self.positive_count = Counter(
            r.video_id for r in self.interactions if r.kind in POSITIVE_KINDS
        )


def dedup_history(records: Iterable[InteractionRecord]) -> list[HistoryEvent]:
    """One event per video, keeping the latest occurrence, oldest first."""
    latest: dict[str, tuple[int, str]] = {}
    for r in records:
        cur = latest.get(r.video_id)
        # ties on timestamp resolved by kind so reruns agree
        if cur is None or (r.timestamp, r.kind) > cur:
            latest[r.video_id] = (r.timestamp, r.kind)
    events = [HistoryEvent(ts, vid, kind) for vid, (ts, kind) in latest.items()]
    events.sort(key=lambda e: (e.timestamp, e.video_id))
    return events


# -------------------------------------------------------------------- ingest


def _read_rows(path: str, header: list[str]) -> Iterable[tuple[int, list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected header {','.join(header)}") from None
        if first != header:
            raise DataError(
                f"{path}: bad header {','.join(first)!r}, expected {','.join(header)!r}"
            )
        for lineno, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(cells)}"
                )
            yield lineno, cells


def read_interactions(path: str, report: IngestReport | None = None) -> list[InteractionRecord]:
    """Parse an interaction CSV, dropping exact duplicate rows."""
    report = report if report is not None else IngestReport()
    seen: set[tuple] = set()
    out: list[InteractionRecord] = []
    for lineno, (user, video, kind, ts) in _read_rows(path, INTERACTIONS_HEADER):
        report.rows_read += 1
        if not user or not video:
            raise DataError(f"{path}:{lineno}: empty user or video id")
        if kind not in KINDS:
            raise DataError(
                f"{path}:{lineno}: unknown kind {kind!r}, expected one of {', '.join(KINDS)}"
            )
        try:
            stamp = int(ts)
        except ValueError:
            raise DataError(f"{path}:{lineno}: timestamp {ts!r} is not an integer") from None
        key = (user, video, kind, stamp)
        if key in seen:
            report.duplicates_dropped += 1
            continue
        seen.add(key)
        out.append(InteractionRecord(user, video, kind, stamp))
        report.rows_kept += 1
    return out


def read_attributes(path: str, report: IngestReport | None = None) -> list[AttributeRecord]:
    report = report if report is not None else IngestReport()
    seen: set[tuple] = set()
    out: list[AttributeRecord] = []
    for lineno, (video, attr_type, attr_id) in _read_rows(path, ATTRIBUTES_HEADER):
        report.rows_read += 1
        if not video or not attr_type or not attr_id:
            raise DataError(f"{path}:{lineno}: empty field in attribute row")
        key = (video, attr_type, attr_id)
        if key in seen:
            report.duplicates_dropped += 1
            continue
        seen.add(key)
        out.append(AttributeRecord(video, attr_type, attr_id))
        report.rows_kept += 1
    return out


def ingest(interactions_path: str, attributes_path: str | None = None) -> tuple[Dataset, IngestReport]:
    """Load a dataset from CSV files, reporting row accounting."""
    report = IngestReport()
    interactions = read_interactions(interactions_path, report)
    attributes = read_attributes(attributes_path, report) if attributes_path else []
    return Dataset(interactions, attributes), report


# -------------------------------------------------------------------- export


def export_interactions(dataset: Dataset, path: str) -> None:
    """Write interactions in canonical order; ingesting the result is lossless."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(INTERACTIONS_HEADER)
        for r in dataset.interactions:
            writer.writerow([r.user_id, r.video_id, r.kind, r.timestamp])


def export_attributes(dataset: Dataset, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ATTRIBUTES_HEADER)
        for a in dataset.attributes:
            writer.writerow([a.video_id, a.attr_type, a.attr_id])


# ------------------------------------------------------------ rating mapping


def map_ratings(
    ratings: Iterable[tuple[str, str, int, int]], threshold: int = 4
) -> list[InteractionRecord]:
    """Turn 0..5 star ratings into interaction records.

    Ratings above the threshold become likes, ratings at the threshold are
    dropped as ambiguous, everything below becomes an explicit
    noninteraction.
    """
    if not 1 <= threshold <= 5:
        raise DataError(f"rating threshold must be in 1..5, got {threshold}")
    out: list[InteractionRecord] = []
    for user, video, stars, ts in ratings:
        if not isinstance(stars, int) or not 0 <= stars <= 5:
            raise DataError(f"rating {stars!r} for ({user}, {video}) outside 0..5")
        if stars > threshold:
            out.append(InteractionRecord(user, video, KIND_LIKE, ts))
        elif stars < threshold:
            out.append(InteractionRecord(user, video, KIND_NONINTERACTION, ts))
    return out


def convert_ratings_csv(src: str, dst: str, threshold: int = 4) -> int:
    """Convert a ``user_id,video_id,rating,timestamp`` file to interactions."""
    rows: list[tuple[str, str, int, int]] = []
    for lineno, (user, video, stars, ts) in _read_rows(
        src, ["user_id", "video_id", "rating", "timestamp"]
    ):
        try:
            rows.append((user, video, int(stars), int(ts)))
        except ValueError:
            raise DataError(f"{src}:{lineno}: rating and timestamp must be integers") from None
    records = map_ratings(rows, threshold)
    if not records:
        raise DataError(f"{src}: no usable records after rating mapping")
    export_interactions(Dataset(records), dst)
    return len(records)


def convert_engagement_csv(src: str, dst: str) -> int:
    """Convert a ``user_id,video_id,like,finish,timestamp`` flag file.

    Each set flag emits its own record; a row with neither flag becomes an
    explicit noninteraction.
    """
    records: list[InteractionRecord] = []
    for lineno, (user, video, like, finish, ts) in _read_rows(
        src, ["user_id", "video_id", "like", "finish", "timestamp"]
    ):
        if like not in ("0", "1") or finish not in ("0", "1"):
            raise DataError(f"{src}:{lineno}: like and finish must be 0 or 1")
        try:
            stamp = int(ts)
        except ValueError:
            raise DataError(f"{src}:{lineno}: timestamp {ts!r} is not an integer") from None
        if like == "1":
            records.append(InteractionRecord(user, video, KIND_LIKE, stamp))
        if finish == "1":
            records.append(InteractionRecord(user, video, KIND_FINISH, stamp))
        if like == "0" and finish == "0":
            records.append(InteractionRecord(user, video, KIND_NONINTERACTION, stamp))
    if not records:
        raise DataError(f"{src}: no records found")
    export_interactions(Dataset(records), dst)
    return len(records)


# ----------------------------------------------------------------- utilities


def density_from_counts(interactions: int, users: int, videos: int) -> float:
    """Interaction count over the user-video grid size."""
    if users <= 0 or videos <= 0:
        raise DataError("density is undefined for an empty dataset")
    return interactions / (users * videos)


def density(dataset: Dataset) -> float:
    return density_from_counts(
        len(dataset.interactions), len(dataset.users), len(dataset.videos)
    )


def split_users(
    dataset: Dataset, train_rate: float, rng: np.random.Generator
) -> tuple[list[str], list[str]]:
    """Randomly split users into train and test lists, both sorted."""
    if not 0.0 < train_rate < 1.0:
        raise DataError(f"train_rate must be strictly between 0 and 1, got {train_rate}")
    users = dataset.users
    k = int(np.floor(train_rate * len(users) + 0.5))
    if k == 0 or k == len(users):
        raise DataError(
            f"train_rate={train_rate} leaves an empty split for {len(users)} users"
        )
    order = rng.permutation(len(users))
    train = sorted(users[i] for i in order[:k])
    test = sorted(users[i] for i in order[k:])
    return train, test


def write_report(report: dict, path: str) -> None:
    """Write a report dict as stable, human-diffable JSON."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
