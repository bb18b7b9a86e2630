from __future__ import annotations

import pytest

from prpm import pipeline as pl
from prpm.config import Settings
from prpm.synth import SynthSpec, generate_synthetic_log


@pytest.fixture(scope="session")
def small_settings() -> Settings:
    return Settings().updated({"ensemble_size": 4, "min_leaf_count": 10})


@pytest.fixture(scope="session")
def small_traces():
    return generate_synthetic_log(SynthSpec(n_cases=400, uplift_slope=0.5, length_effect=2.0), seed=3)


@pytest.fixture(scope="session")
def small_run(small_traces, small_settings):
    """Splits, fitted bundle with index, and scored test cases for a 400-case log."""
    splits = pl.prepare(small_traces, small_settings)
    bundle, prefixes = pl.fit_models(splits.train, small_settings)
    pl.attach_index(bundle, prefixes)
    cases = pl.score_traces(splits.test, bundle, small_settings.knn_k)
    return splits, bundle, cases


_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def verdict(request):
    """Record one pass/fail line for an acceptance criterion; printed in the terminal summary."""

    def record(criterion: str, passed: bool, detail: str) -> None:
        _ACCEPTANCE[criterion] = (bool(passed), detail)
        assert passed, f"{criterion}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip("ab"))):
        passed, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
