"""Synthetic loan-style event logs with a planted outcome signal and known uplift.

Each case has a latent risk ``z``. Its probability of a negative outcome
without intervention is ``p0 = floor + (ceil - floor) * sigmoid(a + b*z)``,
with ``a`` solved so the population mean equals ``base_neg_rate``. Outcomes
use one shared uniform draw ``u`` per case: negative iff
``u < p0 - uplift_i * treated``. A treated case therefore flips from
negative to positive with probability exactly ``uplift_i``. With
``uplift_slope = 0`` that is the constant ``uplift`` for every case,
whatever its features.

Every event carries a ``risk_signal`` attribute whose mean ramps from 0 to
``z`` over the first ``ramp_events`` events, so predictions sharpen as a
prefix grows. For a ``noise`` fraction of cases the readings are
``noise_scale`` times noisier, which pushes them outside the range the
models saw for clean cases and makes ensemble members disagree.

``length_effect`` tilts risk by case length in a channel-dependent
direction, so a case's estimated gain drifts as it runs. ``uplift_slope``
makes the uplift grow with baseline risk while keeping its mean at
``uplift``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from prpm.event_log import Event, LogMapping, Trace, parse_timestamp

WORK_ACTIVITIES = (
    "W_Validate application",
    "W_Call after offers",
    "W_Complete application",
    "A_Incomplete",
    "O_Sent (online only)",
    "O_Returned",
)
# per-activity sensitivity to latent risk; positive = more frequent for risky cases
ACTIVITY_RISK_WEIGHT = (-1.0, 1.0, -0.4, 0.8, 0.0, -0.7)
CHANNELS = ("Online only", "Mail and Online", "Phone")
# direction in which a longer-running case shifts risk, per channel
CHANNEL_LENGTH_SIGN = (-1.0, 0.0, 1.0)


@dataclass(frozen=True)
class SynthSpec:
    n_cases: int = 2000
    base_neg_rate: float = 0.6
    uplift: float = 0.3
    uplift_slope: float = 0.0
    noise: float = 0.2
    propensity: float = 0.5
    min_len: int = 4
    max_len: int = 14
    signal_std: float = 1.5
    ramp_events: int = 6
    noise_scale: float = 4.0
    length_effect: float = 0.0
    risk_scale: float = 2.0
    arrival_mean_s: float = 6.0
    event_gap_mean_s: float = 300.0
    start: str = "2017-01-01T00:00:00Z"
    activities: tuple[str, ...] = field(default=WORK_ACTIVITIES)
    p_ceil: float = 0.97

    def floor(self) -> float:
        """Smallest p0 that keeps every case's uplift additive (p0 >= uplift_i)."""
        s = self.uplift_slope
        need = (self.uplift - s * self.base_neg_rate) / (1.0 - s) if s < 1 else self.uplift
        return min(max(need, 0.0) + 0.02, self.base_neg_rate - 0.05)


# the log shipped for the end-to-end acceptance run
BUNDLED_SPEC = SynthSpec(uplift_slope=0.5, length_effect=2.0)
BUNDLED_SEED = 0


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _solve_shift(spec: SynthSpec, lo: float) -> float:
    """Intercept making E[p0] = base_neg_rate under z ~ N(0, 1)."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(64)
    weights = weights / weights.sum()

    def mean_p(a):
        return lo + (spec.p_ceil - lo) * float(weights @ _sigmoid(a + spec.risk_scale * nodes))

    left, right = -30.0, 30.0
    for _ in range(200):
        mid = 0.5 * (left + right)
        if mean_p(mid) < spec.base_neg_rate:
            left = mid
        else:
            right = mid
    return 0.5 * (left + right)


def risk_probability(spec: SynthSpec, z, lengths, channel) -> np.ndarray:
    lo = spec.floor()
    mid, half = 0.5 * (spec.min_len + spec.max_len), max(0.5 * (spec.max_len - spec.min_len), 1.0)
    tilt = spec.length_effect * np.asarray(CHANNEL_LENGTH_SIGN)[channel] * (lengths - mid) / half
    return lo + (spec.p_ceil - lo) * _sigmoid(_solve_shift(spec, lo) + spec.risk_scale * z + tilt)


def case_uplift(spec: SynthSpec, p0: np.ndarray) -> np.ndarray:
    return np.clip(spec.uplift + spec.uplift_slope * (p0 - spec.base_neg_rate), 0.0, p0)


def generate_synthetic_log(spec: SynthSpec = SynthSpec(), seed: int = 0,
                           mapping: LogMapping = LogMapping()) -> list[Trace]:
    """Draw ``spec.n_cases`` labelled traces, reproducibly for a given seed."""
    if spec.n_cases == 0:
        return []
    if spec.min_len < 4:
        raise ValueError("min_len must be >= 4 to leave room for a second offer")
    if not 0 < spec.base_neg_rate < spec.p_ceil:
        raise ValueError(f"base_neg_rate must lie in (0, {spec.p_ceil})")
    rng = np.random.default_rng(seed)
    n = spec.n_cases
    z = rng.standard_normal(n)
    treated = rng.random(n) < spec.propensity
    u = rng.random(n)
    noisy = rng.random(n) < spec.noise
    lengths = rng.integers(spec.min_len, spec.max_len + 1, size=n)
    channel = np.argmax(rng.random((n, 3)) + np.outer(z, [0.0, 0.3, -0.3]), axis=1)
    second_offer = np.floor(3 + rng.random(n) * (lengths - 3)).astype(int)
    p0 = risk_probability(spec, z, lengths, channel)
    tau = case_uplift(spec, p0)
    negative = u < p0 - tau * treated
    t0 = parse_timestamp(spec.start)
    arrivals = np.cumsum(rng.exponential(spec.arrival_mean_s, size=n))

    risk_w = np.asarray(ACTIVITY_RISK_WEIGHT[: len(spec.activities)], dtype=float)
    if len(risk_w) < len(spec.activities):
        risk_w = np.concatenate([risk_w, np.zeros(len(spec.activities) - len(risk_w))])
    offer = mapping.offer_activity
    pos_act = mapping.positive_activities[0]

    traces = []
    for i in range(n):
        L = int(lengths[i])
        case_id = f"case_{i:06d}"
        amount = float(np.round(np.exp(9.5 + 0.3 * z[i] + 0.2 * rng.standard_normal()), 2))
        acts = ["A_Create Application", offer]
        logits = risk_w * z[i]
        probs = np.exp(logits) / np.exp(logits).sum()
        acts += [spec.activities[j] for j in rng.choice(len(spec.activities), size=L - 2, p=probs)]
        if treated[i]:
            acts[second_offer[i]] = offer
        gaps = np.concatenate([[0.0], rng.exponential(spec.event_gap_mean_s, size=L)])
        times = arrivals[i] + np.cumsum(gaps)
        ramp = np.minimum(1.0, np.arange(1, L + 1) / max(spec.ramp_events, 1))
        sd = spec.signal_std * (spec.noise_scale if noisy[i] else 1.0)
        signals = z[i] * ramp + sd * rng.standard_normal(L)
        events = []
        for j, act in enumerate(acts):
            attrs = {"risk_signal": float(np.round(signals[j], 6))}
            if j == 0:
                attrs.update(amount=amount, channel=CHANNELS[channel[i]])
            events.append(Event(case_id, act, _at(t0, times[j]), attrs))
        if negative[i]:
            end = mapping.negative_activities[int(rng.random() < 0.3) % len(mapping.negative_activities)]
        else:
            end = pos_act
        events.append(Event(case_id, end, _at(t0, times[L]), {}))
        outcome = "negative" if negative[i] else "positive"
        traces.append(Trace(case_id, events, outcome, mapping.treated_of(events)))
    return traces


def _at(t0: datetime, seconds: float) -> datetime:
    return (t0 + timedelta(milliseconds=int(round(seconds * 1000)))).astimezone(timezone.utc)


def true_uplift(spec: SynthSpec, seed: int = 0) -> np.ndarray:
    """Per-case planted uplift for the cases ``generate_synthetic_log`` draws."""
    rng = np.random.default_rng(seed)
    n = spec.n_cases
    z = rng.standard_normal(n)
    rng.random(n), rng.random(n), rng.random(n)
    lengths = rng.integers(spec.min_len, spec.max_len + 1, size=n)
    channel = np.argmax(rng.random((n, 3)) + np.outer(z, [0.0, 0.3, -0.3]), axis=1)
    return case_uplift(spec, risk_probability(spec, z, lengths, channel))
