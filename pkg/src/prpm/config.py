"""Flat ``key = value`` run configuration.

Precedence is CLI flag, then config file, then the defaults below.
Unknown keys in a file are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from prpm.allocator import DurationDist
from prpm.ensemble import TreeParams
from prpm.errors import ConfigError
from prpm.event_log import LogMapping
from prpm.policy import POLICIES, CostParams, PolicyConfig, named_policy


@dataclass(frozen=True)
class Settings:
    # log mapping
    case_col: str = "case_id"
    activity_col: str = "activity"
    timestamp_col: str = "timestamp"
    timestamp_format: str | None = None
    positive_activities: tuple[str, ...] = ("A_Pending",)
    negative_activities: tuple[str, ...] = ("A_Cancelled", "A_Denied")
    offer_activity: str = "O_Create Offer"
    treated_offer_count: int = 2
    # preparation
    split: tuple[float, ...] = (0.6, 0.2, 0.2)
    max_percentile: float = 0.9
    # models
    ensemble_size: int = 10
    max_depth: int = 6
    min_leaf_count: int = 20
    feature_subsample: float = 0.7
    row_subsample: float = 0.82
    seed: int = 0
    knn_k: int = 10
    # policy
    c_uout: float = 20.0
    c_t1: float = 1.0
    proba_threshold: float = 0.5
    cate_threshold: float = 0.0
    uncer_threshold: float = 0.75
    delta_uncer_threshold: float = 0.0
    delta_orientation: str = "future_minus_current"
    wait_gate: bool = False
    policies: tuple[str, ...] = tuple(POLICIES)
    # resources
    resources: tuple[int, ...] = tuple(range(1, 11))
    duration_kind: str = "fixed"
    duration_value: float = 60.0
    duration_mean: float = 30.0
    duration_std: float = 10.0
    duration_low: float = 1.0
    duration_high: float = 60.0

    @property
    def mapping(self) -> LogMapping:
        return LogMapping(self.case_col, self.activity_col, self.timestamp_col, self.timestamp_format,
                          self.positive_activities, self.negative_activities, self.offer_activity,
                          self.treated_offer_count)

    @property
    def tree_params(self) -> TreeParams:
        return TreeParams(self.max_depth, self.min_leaf_count, self.feature_subsample, self.row_subsample)

    @property
    def costs(self) -> CostParams:
        return CostParams(self.c_uout, self.c_t1)

    @property
    def duration(self) -> DurationDist:
        return DurationDist(self.duration_kind, self.duration_value, self.duration_mean, self.duration_std,
                            self.duration_low, self.duration_high)

    def policy(self, name: str) -> PolicyConfig:
        return named_policy(
            name,
            proba_threshold=self.proba_threshold,
            cate_threshold=self.cate_threshold,
            uncer_threshold=self.uncer_threshold,
            delta_uncer_threshold=self.delta_uncer_threshold,
            delta_orientation=self.delta_orientation,
            wait_gate=self.wait_gate,
        )

    def updated(self, values: dict) -> "Settings":
        known = {f.name: f for f in fields(self)}
        parsed = {}
        for key, raw in values.items():
            if raw is None:
                continue
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            parsed[key] = _convert(key, raw, getattr(self, key), known[key].type)
        out = replace(self, **parsed)
        out.check()
        return out

    def check(self) -> None:
        self.costs, self.duration, self.tree_params
        for name in self.policies:
            self.policy(name)
        if len(self.split) != 3:
            raise ConfigError(f"split needs three fractions, got {self.split}")
        if self.ensemble_size < 2:
            raise ConfigError("ensemble_size must be >= 2")
        if self.knn_k < 1:
            raise ConfigError("knn_k must be >= 1")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif v is None:
                v = ""
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "Settings":
        return cls().updated({k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


def _convert(key: str, raw, current, type_name):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if "None" in str(type_name) and raw == "":
        return None
    try:
        if key == "resources":
            return tuple(_parse_range(raw))
        if isinstance(current, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            return tuple(float(x) for x in items) if key == "split" else tuple(items)
        if isinstance(current, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def _parse_range(text: str) -> list[int]:
    """``"1-10"`` or ``"1,2,5"`` (or a mix) to a list of ints."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def read_config(path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    values = {}
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_settings(path=None, overrides: dict | None = None) -> Settings:
    s = Settings()
    if path is not None:
        s = s.updated(read_config(path))
    return s.updated(overrides or {})
