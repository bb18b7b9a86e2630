"""Cost, gain and opportunity-cost arithmetic plus candidate filtering and ranking.

The arithmetic helpers avoid float coercion so they also work on
``fractions.Fraction`` inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from prpm.errors import ConfigError
from prpm.future_state import ScoreTriple

TREAT, WAIT, NEUTRAL = "Treat", "Wait", "Neutral"
CURRENT_ONLY, ADJUSTED_GAIN = "current_only", "adjusted_gain"
FUTURE_MINUS_CURRENT, CURRENT_MINUS_FUTURE = "future_minus_current", "current_minus_future"


@dataclass(frozen=True)
class CostParams:
    c_uout: float = 20.0
    c_t1: float = 1.0

    def __post_init__(self):
        if not self.c_uout > 0:
            raise ConfigError(f"c_uout must be positive, got {self.c_uout}")
        if not 0 <= self.c_t1 < self.c_uout:
            raise ConfigError(f"c_t1 must satisfy 0 <= c_t1 < c_uout, got {self.c_t1}")


@dataclass(frozen=True)
class PolicyConfig:
    """Candidate filter thresholds and the selection mode.

    In ``adjusted_gain`` mode candidates are ranked by adjusted gain and,
    with ``wait_gate`` on, a candidate whose opportunity cost is positive is
    held back for now. ``current_only`` ranks by current gain.
    """

    proba_threshold: float = 0.5
    cate_threshold: float = 0.0
    uncer_threshold: float | None = None
    delta_uncer_threshold: float | None = None
    mode: str = CURRENT_ONLY
    use_delta_uncer: bool = False
    delta_orientation: str = FUTURE_MINUS_CURRENT
    wait_gate: bool = False

    def __post_init__(self):
        if self.mode not in (CURRENT_ONLY, ADJUSTED_GAIN):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.delta_orientation not in (FUTURE_MINUS_CURRENT, CURRENT_MINUS_FUTURE):
            raise ConfigError(f"unknown delta orientation {self.delta_orientation!r}")
        if not 0 <= self.proba_threshold <= 1:
            raise ConfigError(f"proba_threshold outside [0, 1]: {self.proba_threshold}")
        if not -1 <= self.cate_threshold <= 1:
            raise ConfigError(f"cate_threshold outside [-1, 1]: {self.cate_threshold}")
        if self.uncer_threshold is not None and not 0 <= self.uncer_threshold <= 1:
            raise ConfigError(f"uncer_threshold outside [0, 1]: {self.uncer_threshold}")
        if self.use_delta_uncer and self.delta_uncer_threshold is None:
            raise ConfigError("use_delta_uncer needs delta_uncer_threshold")


POLICIES: dict[str, PolicyConfig] = {
    "avgProba_CATE": PolicyConfig(),
    "avgProba_CATE_tUncer": PolicyConfig(uncer_threshold=0.75),
    "avgProba_CATE_oppCost": PolicyConfig(mode=ADJUSTED_GAIN),
    "avgProba_CATE_oppCost_dUncer": PolicyConfig(mode=ADJUSTED_GAIN, use_delta_uncer=True, delta_uncer_threshold=0.0),
}


def named_policy(name: str, **overrides) -> PolicyConfig:
    try:
        base = POLICIES[name]
    except KeyError:
        raise ConfigError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}") from None
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "uncer_threshold" in overrides and base.uncer_threshold is None:
        del overrides["uncer_threshold"]
    if "delta_uncer_threshold" in overrides and not base.use_delta_uncer:
        del overrides["delta_uncer_threshold"]
    return replace(base, **overrides)


def cost_untreated(avg_pred, params: CostParams):
    return avg_pred * params.c_uout


def cost_treated(avg_pred, cate, params: CostParams):
    return (avg_pred - cate) * params.c_uout + params.c_t1


def gain(avg_pred, cate, params: CostParams):
    return cost_untreated(avg_pred, params) - cost_treated(avg_pred, cate, params)


def decision(opp_cost) -> str:
    if opp_cost < 0:
        return TREAT
    if opp_cost > 0:
        return WAIT
    return NEUTRAL


@dataclass(frozen=True)
class GainBreakdown:
    cost_untreated: float
    cost_treated: float
    c_gain: float
    f_gain: float
    opp_cost: float
    adj_gain: float
    decision: str


def breakdown_from_gains(c_gain, f_gain, cost_untreated_=None, cost_treated_=None) -> GainBreakdown:
    opp = f_gain - c_gain
    return GainBreakdown(cost_untreated_, cost_treated_, c_gain, f_gain, opp, c_gain - opp, decision(opp))


def breakdown(current: ScoreTriple, future: ScoreTriple, params: CostParams = CostParams()) -> GainBreakdown:
    c_gain = gain(current.avg_pred, current.cate, params)
    f_gain = gain(future.avg_pred, future.cate, params)
    return breakdown_from_gains(
        c_gain, f_gain,
        cost_untreated(current.avg_pred, params),
        cost_treated(current.avg_pred, current.cate, params),
    )


@dataclass
class Candidate:
    case_id: str
    arrival: float
    current: ScoreTriple
    future: ScoreTriple
    gains: GainBreakdown | None = field(default=None, compare=False)

    def with_gains(self, params: CostParams) -> "Candidate":
        self.gains = breakdown(self.current, self.future, params)
        return self


def delta_uncer(c: Candidate, orientation: str = FUTURE_MINUS_CURRENT) -> float:
    d = c.future.total_uncer - c.current.total_uncer
    return d if orientation == FUTURE_MINUS_CURRENT else -d


def admits(c: Candidate, config: PolicyConfig) -> bool:
    cur = c.current
    if not cur.avg_pred > config.proba_threshold:
        return False
    if not cur.cate > config.cate_threshold:
        return False
    if config.uncer_threshold is not None and not cur.total_uncer < config.uncer_threshold:
        return False
    if config.use_delta_uncer and not delta_uncer(c, config.delta_orientation) < config.delta_uncer_threshold:
        return False
    return True


def filter_candidates(candidates, config: PolicyConfig) -> list[Candidate]:
    return [c for c in candidates if admits(c, config)]


def rank(candidates, mode: str = ADJUSTED_GAIN) -> list[Candidate]:
    """Sort by descending adjusted gain (or current gain), then arrival, then case id."""
    key = "adj_gain" if mode == ADJUSTED_GAIN else "c_gain"
    return sorted(candidates, key=lambda c: (-getattr(c.gains, key), c.arrival, c.case_id))


def eligible_now(c: Candidate, config: PolicyConfig) -> bool:
    return not (config.mode == ADJUSTED_GAIN and config.wait_gate and c.gains.decision == WAIT)
