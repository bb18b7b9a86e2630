from __future__ import annotations

import numpy as np
import pytest

from prpm import pipeline as pl
from prpm.errors import SchemaMismatch
from prpm.event_log import Event


def test_prepare_splits_and_strips(small_traces, small_settings):
    splits = pl.prepare(small_traces, small_settings)
    assert (len(splits.train), len(splits.valid), len(splits.test)) == (240, 80, 80)
    m = small_settings.mapping
    assert not any(m.is_outcome_event(e) for t in splits.test for e in t.events)
    assert max(t.start for t in splits.train) <= min(t.start for t in splits.test)


def test_bundle_round_trip(small_run, tmp_path):
    splits, bundle, cases = small_run
    pl.save_json(bundle.to_dict(with_index=True), tmp_path / "m.json")
    back = pl.Bundle.from_dict(pl.load_json(tmp_path / "m.json"))
    again = pl.score_traces(splits.test, back, 10)
    for a, b in zip(cases, again):
        np.testing.assert_array_equal(a.current, b.current)
        np.testing.assert_array_equal(a.future, b.future)


def test_scores_cover_every_prefix(small_run):
    splits, _, cases = small_run
    assert [c.case_id for c in cases] == [t.case_id for t in splits.test]
    for c, t in zip(cases, splits.test):
        assert c.current.shape == c.future.shape == (len(t), 3)
        assert np.all((c.current[:, 0] > 0) & (c.current[:, 0] < 1))
        assert np.all((c.current[:, 1] >= 0) & (c.current[:, 1] <= 1))


def test_schema_mismatch_is_fatal(small_run):
    _, bundle, _ = small_run
    with pytest.raises(SchemaMismatch):
        bundle.check_schema(len(bundle.schema) + 1)


def test_load_json_missing(tmp_path):
    with pytest.raises(FileNotFoundError, match="gone.json"):
        pl.load_json(tmp_path / "gone.json")
