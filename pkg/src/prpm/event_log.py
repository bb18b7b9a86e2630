"""Event log ingestion, cleaning, prefix extraction and aggregate encoding."""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from prpm.errors import ConfigError

log = logging.getLogger(__name__)

POSITIVE = "positive"
NEGATIVE = "negative"

AGGREGATES = ("min", "max", "mean", "sum", "last")
CONTROL_FEATURES = ("event_number", "elapsed_time_seconds", "offer_count")
OTHER = "__other__"


@dataclass(frozen=True)
class Event:
    case_id: str
    activity: str
    timestamp: datetime
    attributes: dict = field(default_factory=dict)


@dataclass
class Trace:
    case_id: str
    events: list[Event]
    outcome: str | None
    treated: bool

    def __len__(self) -> int:
        return len(self.events)

    @property
    def start(self) -> datetime:
        return self.events[0].timestamp


@dataclass
class PrefixInstance:
    case_id: str
    prefix_len: int
    features: np.ndarray
    label: str
    treated: bool
    as_of: datetime


@dataclass(frozen=True)
class LogMapping:
    """Column names and the rules turning raw rows into labelled traces.

    Defaults follow the BPIC2017 loan log: ``A_Pending`` ends a case
    positively, ``A_Cancelled``/``A_Denied`` negatively, and a case counts as
    treated when it received exactly ``treated_offer_count`` offers.
    """

    case_col: str = "case_id"
    activity_col: str = "activity"
    timestamp_col: str = "timestamp"
    timestamp_format: str | None = None
    positive_activities: tuple[str, ...] = ("A_Pending",)
    negative_activities: tuple[str, ...] = ("A_Cancelled", "A_Denied")
    offer_activity: str = "O_Create Offer"
    treated_offer_count: int = 2

    def outcome_of(self, events: Sequence[Event]) -> str | None:
        for ev in events:
            if ev.activity in self.positive_activities:
                return POSITIVE
            if ev.activity in self.negative_activities:
                return NEGATIVE
        return None

    def is_outcome_event(self, ev: Event) -> bool:
        return ev.activity in self.positive_activities or ev.activity in self.negative_activities

    def treated_of(self, events: Sequence[Event]) -> bool:
        n = sum(1 for ev in events if ev.activity == self.offer_activity)
        return n == self.treated_offer_count


@dataclass(frozen=True)
class RecordError:
    line: int
    message: str


@dataclass
class ParsedLog:
    traces: list[Trace]
    errors: list[RecordError]


def parse_timestamp(text: str, fmt: str | None = None) -> datetime:
    """Parse to an aware UTC datetime truncated to milliseconds."""
    text = text.strip()
    if fmt:
        ts = datetime.strptime(text, fmt)
    else:
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    ts = ts.astimezone(timezone.utc)
    return ts.replace(microsecond=ts.microsecond // 1000 * 1000)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


def _cat_key(value) -> str:
    return repr(value) if isinstance(value, float) else value


def _coerce(value: str):
    try:
        num = float(value)
    except ValueError:
        return value
    return num if math.isfinite(num) else value


def parse_log(path, mapping: LogMapping = LogMapping()) -> ParsedLog:
    """Read a CSV event log and group rows into time-ordered traces.

    Rows with an unparseable timestamp or empty case id are skipped and
    reported as :class:`RecordError` with their 1-based file line number.
    Missing mandatory columns raise :class:`ConfigError`.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"event log not found: {path}")
    errors: list[RecordError] = []
    by_case: "OrderedDict[str, list[tuple[int, Event]]]" = OrderedDict()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        required = [mapping.case_col, mapping.activity_col, mapping.timestamp_col]
        missing = [c for c in required if c not in header]
        if missing:
            raise ConfigError(f"{path}: missing mandatory column(s) {missing}")
        attr_cols = [c for c in header if c not in required]
        for order, row in enumerate(reader):
            line = reader.line_num
            case_id = (row[mapping.case_col] or "").strip()
            if not case_id:
                errors.append(RecordError(line, "empty case id"))
                continue
            try:
                ts = parse_timestamp(row[mapping.timestamp_col] or "", mapping.timestamp_format)
            except ValueError:
                errors.append(RecordError(line, f"unparseable timestamp {row[mapping.timestamp_col]!r}"))
                continue
            attrs = {c: _coerce(row[c]) for c in attr_cols if row[c] not in (None, "")}
            ev = Event(case_id, row[mapping.activity_col], ts, attrs)
            by_case.setdefault(case_id, []).append((order, ev))
    for err in errors:
        log.warning("%s:%d: %s", path, err.line, err.message)

    traces = []
    for case_id, rows in by_case.items():
        events = [ev for _, ev in sorted(rows, key=lambda r: (r[1].timestamp, r[0]))]
        traces.append(Trace(case_id, events, mapping.outcome_of(events), mapping.treated_of(events)))
    return ParsedLog(traces, errors)


def write_log(traces: Iterable[Trace], path, mapping: LogMapping = LogMapping()) -> None:
    """Write traces back to the CSV layout :func:`parse_log` reads."""
    traces = list(traces)
    attr_names = sorted({k for t in traces for ev in t.events for k in ev.attributes})
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([mapping.case_col, mapping.activity_col, mapping.timestamp_col, *attr_names])
        for t in traces:
            for ev in t.events:
                vals = [ev.attributes.get(a, "") for a in attr_names]
                w.writerow([t.case_id, ev.activity, format_timestamp(ev.timestamp),
                            *(repr(v) if isinstance(v, float) else v for v in vals)])


def clean(traces: Sequence[Trace]) -> tuple[list[Trace], int]:
    """Drop traces without an outcome-defining event; return (kept, removed count)."""
    kept = [t for t in traces if t.outcome is not None]
    removed = len(traces) - len(kept)
    if removed:
        log.info("dropped %d incomplete trace(s)", removed)
    return kept, removed


def strip_outcome_events(traces: Sequence[Trace], mapping: LogMapping = LogMapping()) -> list[Trace]:
    """Cut each trace just before its first outcome-defining event.

    The label stays on the trace; only the leaking events are removed.
    Traces left empty are dropped.
    """
    out = []
    for t in traces:
        events = []
        for ev in t.events:
            if mapping.is_outcome_event(ev):
                break
            events.append(ev)
        if events:
            out.append(Trace(t.case_id, events, t.outcome, t.treated))
    return out


def nearest_rank(values: Sequence[float], fraction: float):
    """Nearest-rank quantile: the ceil(fraction * n)-th smallest value."""
    if not values:
        raise ValueError("nearest_rank of empty sequence")
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    ordered = sorted(values)
    rank = max(1, math.ceil(fraction * len(ordered) - 1e-12))
    return ordered[rank - 1]


@dataclass
class FeatureSchema:
    """Fixed layout of the aggregate encoding.

    Order is control features, activity counts (plus an ``other`` slot),
    categorical attribute counts (plus one ``other`` slot per attribute) and
    finally numeric aggregates.
    """

    numeric_aggregates: list[tuple[str, str]]
    activity_counts: list[str]
    categorical_counts: list[tuple[str, str]] = field(default_factory=list)
    control_features: list[str] = field(default_factory=lambda: list(CONTROL_FEATURES))
    offer_activity: str = "O_Create Offer"

    def __post_init__(self):
        self._build_index()

    def _build_index(self):
        self._act_pos = {a: i for i, a in enumerate(self.activity_counts)}
        self._cat_attrs = sorted({a for a, _ in self.categorical_counts})
        self._cat_pos = {(a, v): i for i, (a, v) in enumerate(self.categorical_counts)}
        self._num_attrs = sorted({a for a, _ in self.numeric_aggregates})

    @property
    def names(self) -> list[str]:
        names = list(self.control_features)
        names += [f"act:{a}" for a in self.activity_counts] + [f"act:{OTHER}"]
        names += [f"cat:{a}={v}" for a, v in self.categorical_counts]
        names += [f"cat:{a}={OTHER}" for a in self._cat_attrs]
        names += [f"num:{a}:{agg}" for a, agg in self.numeric_aggregates]
        return names

    def __len__(self) -> int:
        return len(self.names)

    @classmethod
    def fit(cls, traces: Sequence[Trace], offer_activity: str = "O_Create Offer") -> "FeatureSchema":
        activities = sorted({ev.activity for t in traces for ev in t.events})
        values: dict[str, set] = {}
        for t in traces:
            for ev in t.events:
                for k, v in ev.attributes.items():
                    values.setdefault(k, set()).add(v)
        # an attribute is numeric only if every observed value is
        numeric = {k for k, vs in values.items() if all(isinstance(v, float) for v in vs)}
        cat_counts = sorted((k, _cat_key(v)) for k, vs in values.items() if k not in numeric for v in vs)
        return cls(
            numeric_aggregates=[(a, agg) for a in sorted(numeric) for agg in AGGREGATES],
            activity_counts=activities,
            categorical_counts=cat_counts,
            offer_activity=offer_activity,
        )

    def to_dict(self) -> dict:
        return {
            "numeric_aggregates": [list(p) for p in self.numeric_aggregates],
            "activity_counts": list(self.activity_counts),
            "categorical_counts": [list(p) for p in self.categorical_counts],
            "control_features": list(self.control_features),
            "offer_activity": self.offer_activity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(
            numeric_aggregates=[tuple(p) for p in d["numeric_aggregates"]],
            activity_counts=list(d["activity_counts"]),
            categorical_counts=[tuple(p) for p in d["categorical_counts"]],
            control_features=list(d["control_features"]),
            offer_activity=d["offer_activity"],
        )


def encode(events: Sequence[Event], schema: FeatureSchema) -> np.ndarray:
    """Aggregate-encode a prefix into a vector laid out as ``schema.names``."""
    n_act = len(schema.activity_counts) + 1
    n_cat = len(schema.categorical_counts) + len(schema._cat_attrs)
    vec = np.zeros(len(schema.control_features) + n_act + n_cat + len(schema.numeric_aggregates))

    controls = {
        "event_number": float(len(events)),
        "elapsed_time_seconds": (events[-1].timestamp - events[0].timestamp).total_seconds() if events else 0.0,
        "offer_count": float(sum(1 for ev in events if ev.activity == schema.offer_activity)),
    }
    for i, name in enumerate(schema.control_features):
        vec[i] = controls[name]
    off = len(schema.control_features)

    acts = Counter(ev.activity for ev in events)
    for act, n in acts.items():
        vec[off + schema._act_pos.get(act, n_act - 1)] += n
    off += n_act

    n_known = len(schema.categorical_counts)
    numeric_vals: dict[str, list[float]] = {a: [] for a in schema._num_attrs}
    for ev in events:
        for k, v in ev.attributes.items():
            if k in numeric_vals and isinstance(v, float):
                numeric_vals[k].append(v)
                continue
            key = (k, _cat_key(v))
            if key in schema._cat_pos:
                vec[off + schema._cat_pos[key]] += 1
            elif k in schema._cat_attrs:
                vec[off + n_known + schema._cat_attrs.index(k)] += 1
    off += n_cat

    for i, (attr, agg) in enumerate(schema.numeric_aggregates):
        vals = numeric_vals[attr]
        if not vals:
            continue
        if agg == "min":
            vec[off + i] = min(vals)
        elif agg == "max":
            vec[off + i] = max(vals)
        elif agg == "mean":
            vec[off + i] = math.fsum(vals) / len(vals)
        elif agg == "sum":
            vec[off + i] = math.fsum(vals)
        elif agg == "last":
            vec[off + i] = vals[-1]
    return vec


def prefix_cap(traces: Sequence[Trace], max_percentile: float) -> int:
    return int(nearest_rank([len(t) for t in traces], max_percentile))


def extract_prefixes(
    traces: Sequence[Trace],
    max_percentile: float,
    schema: FeatureSchema,
    cap: int | None = None,
) -> dict[int, list[PrefixInstance]]:
    """Encode prefixes of length 1..min(len, cap), grouped by length.

    ``cap`` defaults to the nearest-rank ``max_percentile`` quantile of the
    trace lengths; pass the training cap explicitly when encoding held-out
    data.
    """
    if not 0 < max_percentile <= 1:
        raise ValueError(f"max_percentile must be in (0, 1], got {max_percentile}")
    groups: dict[int, list[PrefixInstance]] = {}
    if not traces:
        return groups
    if cap is None:
        cap = prefix_cap(traces, max_percentile)
    for t in traces:
        for k in range(1, min(len(t), cap) + 1):
            ev = t.events[:k]
            groups.setdefault(k, []).append(
                PrefixInstance(t.case_id, k, encode(ev, schema), t.outcome, t.treated, ev[-1].timestamp)
            )
    return dict(sorted(groups.items()))


def flatten(groups: dict[int, list[PrefixInstance]]) -> list[PrefixInstance]:
    return [p for k in sorted(groups) for p in groups[k]]


def to_arrays(prefixes: Sequence[PrefixInstance]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack prefixes into (X, y, treated) with y = 1 for a negative outcome."""
    if not prefixes:
        return np.zeros((0, 0)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool)
    X = np.vstack([p.features for p in prefixes])
    y = np.array([p.label == NEGATIVE for p in prefixes], dtype=np.int64)
    t = np.array([p.treated for p in prefixes], dtype=bool)
    return X, y, t


def temporal_split(
    traces: Sequence[Trace], fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
) -> tuple[list[Trace], list[Trace], list[Trace]]:
    """Order traces by start time (ties by case id) and cut at cumulative fractions."""
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or not math.isclose(sum(fractions), 1.0):
        raise ValueError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    if len(traces) < 3:
        raise ValueError(f"temporal_split needs at least 3 traces, got {len(traces)}")
    ordered = sorted(traces, key=lambda t: (t.start, t.case_id))
    n = len(ordered)
    a = round(fractions[0] * n)
    b = round((fractions[0] + fractions[1]) * n)
    a = min(max(a, 1), n - 2)
    b = min(max(b, a + 1), n - 1)
    return ordered[:a], ordered[a:b], ordered[b:]


def write_prefix_log(groups: dict[int, list[PrefixInstance]], schema: FeatureSchema, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case_id", "prefix_len", "label", "treated", "as_of", *schema.names])
        for p in flatten(groups):
            w.writerow([p.case_id, p.prefix_len, p.label, int(p.treated), format_timestamp(p.as_of),
                        *(repr(float(x)) for x in p.features)])


def read_prefix_log(path) -> tuple[list[str], list[PrefixInstance]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        names = header[5:]
        out = [
            PrefixInstance(row[0], int(row[1]), np.array([float(x) for x in row[5:]]), row[2],
                           row[3] == "1", parse_timestamp(row[4]))
            for row in r
        ]
    return names, out
