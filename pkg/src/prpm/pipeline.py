"""Training-phase wiring: log -> prefixes -> ensemble, uplift model and history index."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from prpm import ensemble as ens
from prpm.causal import CausalDataset, UpliftModel, fit_uplift
from prpm.config import Settings
from prpm.errors import SchemaMismatch
from prpm.event_log import (
    FeatureSchema,
    Trace,
    clean,
    encode,
    extract_prefixes,
    flatten,
    parse_log,
    prefix_cap,
    strip_outcome_events,
    temporal_split,
    to_arrays,
)
from prpm.future_state import HistoryIndex, build_index, future_scores_batch, score_matrix

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class Splits:
    train: list[Trace]
    valid: list[Trace]
    test: list[Trace]


def prepare(traces: Sequence[Trace], settings: Settings) -> Splits:
    """Clean, cut outcome events and split temporally."""
    kept, _ = clean(traces)
    kept = strip_outcome_events(kept, settings.mapping)
    return Splits(*temporal_split(kept, tuple(settings.split)))


def load_splits(path, settings: Settings) -> Splits:
    parsed = parse_log(path, settings.mapping)
    return prepare(parsed.traces, settings)


@dataclass
class Bundle:
    schema: FeatureSchema
    cap: int
    ensemble: ens.Ensemble
    uplift: UpliftModel
    index: HistoryIndex | None = None
    source_sha256: str | None = None

    def check_schema(self, width: int) -> None:
        if width != len(self.schema):
            raise SchemaMismatch(f"log encodes to {width} features, models expect {len(self.schema)}")

    def to_dict(self, with_index: bool = False) -> dict:
        d = {
            "format_version": FORMAT_VERSION,
            "schema": self.schema.to_dict(),
            "cap": self.cap,
            "ensemble": self.ensemble.to_dict(),
            "uplift": self.uplift.to_dict(),
            "source_sha256": self.source_sha256,
        }
        if with_index and self.index is not None:
            d["index"] = self.index.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Bundle":
        return cls(
            FeatureSchema.from_dict(d["schema"]),
            d["cap"],
            ens.Ensemble.from_dict(d["ensemble"]),
            UpliftModel.from_dict(d["uplift"]),
            HistoryIndex.from_dict(d["index"]) if "index" in d else None,
            d.get("source_sha256"),
        )


def fit_models(train: Sequence[Trace], settings: Settings) -> tuple[Bundle, list]:
    """Train the outcome ensemble and the uplift model; return the bundle and training prefixes."""
    schema = FeatureSchema.fit(train, settings.offer_activity)
    cap = prefix_cap(train, settings.max_percentile)
    prefixes = flatten(extract_prefixes(train, settings.max_percentile, schema, cap))
    X, y, t = to_arrays(prefixes)
    log.info("training on %d prefixes from %d traces (cap %d, %d features)", len(y), len(train), cap, X.shape[1])
    params = settings.tree_params
    outcome = ens.train(X, y, settings.ensemble_size, params, settings.seed)
    uplift = fit_uplift(CausalDataset(X, y, t, list(range(X.shape[1]))), settings.ensemble_size, params,
                        settings.seed + 1)
    return Bundle(schema, cap, outcome, uplift), prefixes


def attach_index(bundle: Bundle, prefixes) -> Bundle:
    bundle.index = build_index(prefixes, bundle.ensemble, bundle.uplift)
    return bundle


@dataclass
class CaseScores:
    """Current and projected scores for every prefix of one serving trace."""

    case_id: str
    times: np.ndarray  # epoch seconds of each event
    current: np.ndarray  # (len, 3)
    future: np.ndarray  # (len, 3)
    negative: bool


def score_traces(traces: Sequence[Trace], bundle: Bundle, knn_k: int) -> list[CaseScores]:
    """Score every prefix of every trace (no length cap) in one batch."""
    rows, owners, ks = [], [], []
    for i, tr in enumerate(traces):
        for k in range(1, len(tr) + 1):
            rows.append(encode(tr.events[:k], bundle.schema))
            owners.append(i)
            ks.append(k)
    if not rows:
        return []
    X = np.vstack(rows)
    bundle.check_schema(X.shape[1])
    cur = score_matrix(X, bundle.ensemble, bundle.uplift)
    fut = future_scores_batch(bundle.index, X, ks, cur, knn_k) if bundle.index is not None else cur.copy()
    owners = np.asarray(owners)
    out = []
    for i, tr in enumerate(traces):
        sel = owners == i
        out.append(CaseScores(
            tr.case_id,
            np.array([ev.timestamp.timestamp() for ev in tr.events]),
            cur[sel],
            fut[sel],
            tr.outcome == "negative",
        ))
    return out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, separators=(",", ":")), encoding="utf-8")


def load_json(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"file not found: {path}")
    return json.loads(path.read_text(encoding="utf-8"))
