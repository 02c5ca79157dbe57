"""Dataset ingestion, preprocessing filters, and results export.

The canonical event log is line-delimited JSON, one event per line with
fields {story_id, user_id, time_s, kind, reshare, flag, label}, sorted
by (story_id, time_s). A generic cascade CSV adapter (story_id,
user_id, time, is_reshare[, label]) converts published post/reshare
datasets into the canonical form.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from .kernel import EXPOSURE, POST, EventRecord

if TYPE_CHECKING:
    from .simulate import StoryConfig

LABELS = ("fake", "genuine")


class DataFormatError(ValueError):
    """A file failed to parse or violated a dataset invariant."""


@dataclass
class Provenance:
    source: str
    log: list[str] = field(default_factory=list)


@dataclass
class StoryRecord:
    """Label, event stream and per-event user ids for one story."""

    label: str
    events: list[EventRecord]
    user_ids: list[str]
    config: Optional["StoryConfig"] = field(default=None, compare=False)

    def __post_init__(self):
        if self.label not in LABELS:
            raise DataFormatError(f"unknown label {self.label!r}")
        if len(self.user_ids) != len(self.events):
            raise DataFormatError("user_ids and events must have equal length")

    def n_exposures(self) -> int:
        return sum(1 for ev in self.events if ev.kind == EXPOSURE)

    def skeleton_size(self) -> int:
        """Posts plus reshared exposures (the observed spreading events)."""
        return sum(
            1
            for ev in self.events
            if ev.kind == POST or (ev.kind == EXPOSURE and ev.reshare)
        )


@dataclass
class CascadeDataset:
    """Per-story labeled event streams plus a provenance log."""

    stories: dict[str, StoryRecord]
    provenance: Provenance = field(
        default_factory=lambda: Provenance(source="unknown"), compare=False
    )

    def n_stories(self) -> int:
        return len(self.stories)

    def fake_fraction(self) -> float:
        if not self.stories:
            return 0.0
        fakes = sum(1 for r in self.stories.values() if r.label == "fake")
        return fakes / len(self.stories)

    def total_exposures(self) -> int:
        return sum(r.n_exposures() for r in self.stories.values())


def _validate_story(story_id: str, record: StoryRecord) -> None:
    prev = -math.inf
    for ev in record.events:
        if ev.time < prev:
            raise DataFormatError(f"story {story_id!r}: events not sorted at t={ev.time}")
        prev = ev.time


def ingest(path: str, format: str = "canonical_jsonl") -> CascadeDataset:
    """Read and validate a dataset file.

    Rejects records that violate invariants (flags on posts, unknown
    labels or kinds, unsorted story streams) with the offending line
    number in the message.
    """
    if format == "canonical_jsonl":
        dataset = _ingest_jsonl(path)
    elif format == "cascade_csv":
        dataset = _ingest_csv(path)
    else:
        raise DataFormatError(f"unknown format {format!r}")
    for sid, record in dataset.stories.items():
        _validate_story(sid, record)
    return dataset


def _ingest_jsonl(path: str) -> CascadeDataset:
    events: dict[str, list[EventRecord]] = {}
    users: dict[str, list[str]] = {}
    labels: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"line {lineno}: invalid JSON ({exc})") from exc
            try:
                sid = str(rec["story_id"])
                uid = str(rec["user_id"])
                ev = EventRecord(
                    time=float(rec["time_s"]),
                    kind=str(rec["kind"]),
                    reshare=bool(rec.get("reshare", False)),
                    flag=bool(rec.get("flag", False)),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"line {lineno}: {exc}") from exc
            label = rec.get("label")
            if label is not None:
                if label not in LABELS:
                    raise DataFormatError(f"line {lineno}: unknown label {label!r}")
                if labels.setdefault(sid, label) != label:
                    raise DataFormatError(
                        f"line {lineno}: conflicting labels for story {sid!r}"
                    )
            events.setdefault(sid, []).append(ev)
            users.setdefault(sid, []).append(uid)

    stories = {}
    for sid in events:
        if sid not in labels:
            raise DataFormatError(f"story {sid!r} has no label record")
        stories[sid] = StoryRecord(
            label=labels[sid], events=events[sid], user_ids=users[sid]
        )
    return CascadeDataset(stories=stories, provenance=Provenance(source=path))


def _ingest_csv(path: str) -> CascadeDataset:
    events: dict[str, list[EventRecord]] = {}
    users: dict[str, list[str]] = {}
    labels: dict[str, str] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return CascadeDataset(stories={}, provenance=Provenance(source=path))
        required = {"story_id", "user_id", "time", "is_reshare"}
        missing = required - set(reader.fieldnames)
        if missing:
            raise DataFormatError(f"cascade CSV missing columns: {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                sid = row["story_id"]
                uid = row["user_id"]
                t = float(row["time"])
                is_reshare = row["is_reshare"].strip().lower() in ("1", "true", "yes")
            except (KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"line {lineno}: {exc}") from exc
            # a reshare is an exposure that respread the story; a plain row is a post
            if is_reshare:
                ev = EventRecord(time=t, kind=EXPOSURE, reshare=True)
            else:
                ev = EventRecord(time=t, kind=POST)
            label = row.get("label")
            if label:
                if label not in LABELS:
                    raise DataFormatError(f"line {lineno}: unknown label {label!r}")
                if labels.setdefault(sid, label) != label:
                    raise DataFormatError(
                        f"line {lineno}: conflicting labels for story {sid!r}"
                    )
            events.setdefault(sid, []).append(ev)
            users.setdefault(sid, []).append(uid)

    stories = {}
    for sid in events:
        if sid not in labels:
            raise DataFormatError(
                f"story {sid!r} has no label (add a 'label' column value)"
            )
        events[sid].sort(key=lambda ev: ev.time)
        stories[sid] = StoryRecord(
            label=labels[sid], events=events[sid], user_ids=users[sid]
        )
    return CascadeDataset(stories=stories, provenance=Provenance(source=path))


def export_dataset(dataset: CascadeDataset, path: str) -> None:
    """Write a dataset in the canonical JSONL form, sorted by (story_id, time)."""
    with open(path, "w", encoding="utf-8") as fh:
        for sid in sorted(dataset.stories):
            record = dataset.stories[sid]
            for ev, uid in zip(record.events, record.user_ids):
                fh.write(
                    json.dumps(
                        {
                            "story_id": sid,
                            "user_id": uid,
                            "time_s": ev.time,
                            "kind": ev.kind,
                            "reshare": ev.reshare,
                            "flag": ev.flag,
                            "label": record.label,
                        },
                        separators=(",", ":"),
                    )
                    + "\n"
                )


def preprocess(
    dataset: CascadeDataset,
    rng: np.random.Generator,
    max_events: int = 3000,
    tail_decile_cap: float = 0.01,
    fake_cap: float = 0.15,
) -> CascadeDataset:
    """Apply the three dataset filters, logging every removal.

    1. drop stories posted/reshared more than max_events times;
    2. drop stories with more than tail_decile_cap of their
       posts/reshares in the last decile of their own observation
       period (first to last event) -- such cascades are still active;
    3. drop fake stories at random until their fraction is below
       fake_cap.
    """
    log: list[str] = []
    kept: dict[str, StoryRecord] = {}

    for sid, record in dataset.stories.items():
        skeleton = record.skeleton_size()
        if skeleton > max_events:
            log.append(f"max_events: removed {sid} ({skeleton} > {max_events})")
            continue
        kept[sid] = record

    survivors: dict[str, StoryRecord] = {}
    for sid, record in kept.items():
        skeleton_times = [
            ev.time
            for ev in record.events
            if ev.kind == POST or (ev.kind == EXPOSURE and ev.reshare)
        ]
        if record.events and skeleton_times:
            first = record.events[0].time
            last = record.events[-1].time
            cutoff = first + 0.9 * (last - first)
            tail = sum(1 for t in skeleton_times if t > cutoff)
            frac = tail / len(skeleton_times)
            if frac > tail_decile_cap:
                log.append(
                    f"tail_decile: removed {sid} "
                    f"({tail}/{len(skeleton_times)} = {frac:.4f} > {tail_decile_cap})"
                )
                continue
        survivors[sid] = record

    fake_ids = sorted(sid for sid, r in survivors.items() if r.label == "fake")
    total = len(survivors)
    while fake_ids and total > 0 and len(fake_ids) / total >= fake_cap:
        victim = fake_ids.pop(int(rng.integers(len(fake_ids))))
        del survivors[victim]
        total -= 1
        log.append(f"fake_cap: removed {victim} (fake fraction >= {fake_cap})")

    provenance = Provenance(
        source=dataset.provenance.source, log=dataset.provenance.log + log
    )
    return CascadeDataset(stories=survivors, provenance=provenance)


RESULT_COLUMNS = (
    "policy",
    "q",
    "threshold",
    "seed",
    "n_fact_checks",
    "precision",
    "misinfo_reduction",
    "misinfo_reduction_macro",
    "runtime_s",
)


@dataclass(frozen=True, slots=True)
class ResultRow:
    """One evaluated (policy, tunable, seed) point."""

    policy: str
    q: Optional[float]
    threshold: Optional[int]
    seed: int
    n_fact_checks: int
    precision: Optional[float]
    misinfo_reduction: Optional[float]
    misinfo_reduction_macro: Optional[float]
    runtime_s: float


@dataclass
class ResultsTable:
    rows: list[ResultRow] = field(default_factory=list)
    failures: list[str] = field(default_factory=list, compare=False)


def _validate_row(row: ResultRow) -> None:
    for name in ("precision", "misinfo_reduction", "misinfo_reduction_macro"):
        value = getattr(row, name)
        if value is None:
            continue
        if not math.isfinite(value):
            raise ValueError(f"non-finite {name} in results row: {value}")
        if not (0.0 <= value <= 1.0):
            raise ValueError(f"{name} out of [0, 1]: {value}")
    if row.q is not None and not math.isfinite(row.q):
        raise ValueError(f"non-finite q in results row: {row.q}")
    if not math.isfinite(row.runtime_s):
        raise ValueError(f"non-finite runtime in results row: {row.runtime_s}")
    if row.n_fact_checks < 0:
        raise ValueError(f"negative n_fact_checks: {row.n_fact_checks}")


def _row_to_strings(row: ResultRow) -> list[str]:
    out = []
    for col in RESULT_COLUMNS:
        value = getattr(row, col)
        out.append("" if value is None else str(value))
    return out


def export_results(table: ResultsTable, path: str, format: str = "csv") -> None:
    """Write a results table with a stable column order; rereading round-trips."""
    for row in table.rows:
        _validate_row(row)
    if format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RESULT_COLUMNS)
            for row in table.rows:
                writer.writerow(_row_to_strings(row))
    elif format == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for row in table.rows:
                rec = {col: getattr(row, col) for col in RESULT_COLUMNS}
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
    else:
        raise ValueError(f"unknown results format {format!r}")


def read_results(path: str, format: str = "csv") -> ResultsTable:
    """Read back a results table written by export_results."""

    def from_record(rec: dict) -> ResultRow:
        def opt(v, cast):
            return None if v in ("", None) else cast(v)

        return ResultRow(
            policy=str(rec["policy"]),
            q=opt(rec["q"], float),
            threshold=opt(rec["threshold"], int),
            seed=int(rec["seed"]),
            n_fact_checks=int(rec["n_fact_checks"]),
            precision=opt(rec["precision"], float),
            misinfo_reduction=opt(rec["misinfo_reduction"], float),
            misinfo_reduction_macro=opt(rec["misinfo_reduction_macro"], float),
            runtime_s=float(rec["runtime_s"]),
        )

    rows = []
    if format == "csv":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append(from_record(rec))
    elif format == "jsonl":
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rows.append(from_record(json.loads(line)))
    else:
        raise ValueError(f"unknown results format {format!r}")
    return ResultsTable(rows=rows)
