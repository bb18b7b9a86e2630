from __future__ import annotations

import pytest

from prpm.config import Settings, _parse_range, load_settings, read_config
from prpm.errors import ConfigError


def test_defaults():
    s = Settings()
    assert (s.c_uout, s.c_t1, s.proba_threshold, s.cate_threshold, s.uncer_threshold) == (20.0, 1.0, 0.5, 0.0, 0.75)
    assert s.resources == tuple(range(1, 11)) and s.duration.value == 60.0
    assert s.split == (0.6, 0.2, 0.2) and len(s.policies) == 4


def test_precedence_cli_over_file_over_default(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nc_uout = 30\nresources = 2-4\nseed = 5\n")
    s = load_settings(p, {"seed": "9"})
    assert s.c_uout == 30.0 and s.resources == (2, 3, 4) and s.seed == 9
    assert load_settings(p).seed == 5


def test_round_trips(tmp_path):
    s = Settings().updated({"policies": "avgProba_CATE", "wait_gate": "yes", "timestamp_format": "%Y"})
    p = tmp_path / "c.txt"
    p.write_text(s.to_text())
    assert load_settings(p) == s
    assert Settings.from_dict(s.to_dict()) == s


@pytest.mark.parametrize("values", [{"nope": "1"}, {"seed": "x"}, {"c_t1": "25"}, {"policies": "made_up"},
                                    {"split": "0.5,0.5"}, {"ensemble_size": "1"}, {"duration_kind": "lognormal"},
                                    {"wait_gate": "maybe"}])
def test_bad_values_rejected(values):
    with pytest.raises(ConfigError):
        Settings().updated(values)


def test_read_config_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="missing.cfg"):
        read_config(tmp_path / "missing.cfg")
    p = tmp_path / "bad.cfg"
    p.write_text("just words\n")
    with pytest.raises(ConfigError, match="bad.cfg:1"):
        read_config(p)


def test_parse_range():
    assert _parse_range("1-3,7, 9-10") == [1, 2, 3, 7, 9, 10]
