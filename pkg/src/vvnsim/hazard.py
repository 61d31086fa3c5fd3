"""Departure hazards and link availability: traces, samplers, estimators.

A hazard trace stores the piecewise-constant EMERGENCY departure intensity
lambda_e(t) in events/s. Scheduled departures ride on top of it: each
departure is scheduled with probability scheduled_fraction, so the total
departure intensity is lambda_e(t) / (1 - scheduled_fraction).
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sstats

from .core import NOTICE_FLOOR_S, DepartureEvent


class TraceHorizonError(ValueError):
    """Raised when a lookup falls outside a trace's domain."""


class GeneratorInfeasibleError(ValueError):
    """Raised when requested (corr, CV) targets cannot be constructed."""


def _check_segments(breakpoints, values, horizon_s):
    if len(breakpoints) != len(values) or not breakpoints:
        raise ValueError("breakpoints and values must be equal-length, non-empty")
    for i in range(1, len(breakpoints)):
        if breakpoints[i] <= breakpoints[i - 1]:
            raise ValueError("breakpoints must be strictly increasing")
    if horizon_s <= breakpoints[-1] and len(breakpoints) > 1:
        raise ValueError("horizon must extend past the last breakpoint")


def _segment_value(breakpoints, values, t):
    i = bisect.bisect_right(breakpoints, t) - 1
    return values[max(i, 0)]


def _segment_integral(breakpoints, values, horizon_s, t0, t1, extend):
    """Integral of the step function on [t0, t1]; past-horizon extends last value."""
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    if t0 < breakpoints[0]:
        raise TraceHorizonError(f"t={t0} precedes trace start {breakpoints[0]}")
    extrapolated = t1 > horizon_s
    if extrapolated and not extend:
        raise TraceHorizonError(f"t={t1} past trace horizon {horizon_s}")
    total = 0.0
    edges = list(breakpoints) + [max(horizon_s, t1)]
    for i, v in enumerate(values):
        lo, hi = edges[i], edges[i + 1]
        if i == len(values) - 1:
            hi = max(hi, t1)
        a, b = max(t0, lo), min(t1, hi)
        if b > a:
            total += v * (b - a)
    return total, extrapolated


@dataclass(frozen=True)
class HazardTrace:
    """Piecewise-constant emergency departure intensity for one profile."""

    profile_id: str
    breakpoints_s: tuple
    rates_per_s: tuple
    horizon_s: float
    scheduled_fraction: float = 0.58
    notice_median_s: float = 180.0
    notice_sigma: float = 0.6

    def validate(self) -> None:
        _check_segments(self.breakpoints_s, self.rates_per_s, self.horizon_s)
        if any(r < 0 for r in self.rates_per_s):
            raise ValueError("hazard rates must be >= 0")
        if not 0.0 <= self.scheduled_fraction < 1.0:
            raise ValueError("scheduled_fraction must be in [0, 1)")
        if self.notice_median_s < NOTICE_FLOOR_S:
            raise ValueError("notice_median_s below the notice floor")

    def rate_at(self, t: float) -> float:
        """Emergency intensity lambda_e(t); extends past horizon."""
        if t < self.breakpoints_s[0]:
            raise TraceHorizonError(f"t={t} precedes trace start")
        return _segment_value(self.breakpoints_s, self.rates_per_s, t)

    def total_rate_at(self, t: float) -> float:
        """All-departure intensity, scheduled events included."""
        return self.rate_at(t) / (1.0 - self.scheduled_fraction)

    def cumulative(self, t0: float, t1: float, extend: bool = True):
        """(integral of lambda_e over [t0,t1], extrapolated?)."""
        return _segment_integral(self.breakpoints_s, self.rates_per_s,
                                 self.horizon_s, t0, t1, extend)

    def cumulative_total(self, t0: float, t1: float, extend: bool = True):
        base, flag = self.cumulative(t0, t1, extend)
        return base / (1.0 - self.scheduled_fraction), flag

    def scaled(self, factor: float, profile_id: str | None = None) -> "HazardTrace":
        if factor < 0:
            raise ValueError("scale factor must be >= 0")
        return HazardTrace(
            profile_id=profile_id or self.profile_id,
            breakpoints_s=self.breakpoints_s,
            rates_per_s=tuple(r * factor for r in self.rates_per_s),
            horizon_s=self.horizon_s,
            scheduled_fraction=self.scheduled_fraction,
            notice_median_s=self.notice_median_s,
            notice_sigma=self.notice_sigma,
        )

    def with_drift(self, t_shift_s: float, multiplier: float) -> "HazardTrace":
        """Multiply rates by `multiplier` from t_shift_s onward."""
        if multiplier <= 0:
            raise ValueError("drift multiplier must be positive")
        bps, rates = [], []
        inserted = False
        for i, bp in enumerate(self.breakpoints_s):
            r = self.rates_per_s[i]
            if bp < t_shift_s:
                bps.append(bp)
                rates.append(r)
            else:
                if not inserted and bp != t_shift_s:
                    bps.append(t_shift_s)
                    rates.append(self.rates_per_s[max(i - 1, 0)] * multiplier)
                inserted = True
                bps.append(bp)
                rates.append(r * multiplier)
        if not inserted and t_shift_s < self.horizon_s:
            bps.append(t_shift_s)
            rates.append(self.rates_per_s[-1] * multiplier)
        return HazardTrace(self.profile_id, tuple(bps), tuple(rates),
                           self.horizon_s, self.scheduled_fraction,
                           self.notice_median_s, self.notice_sigma)


@dataclass(frozen=True)
class BandwidthTrace:
    """Piecewise-constant available bandwidth for one link, bytes/s."""

    link_id: str
    breakpoints_s: tuple
    avail_bytes_per_s: tuple
    horizon_s: float

    def validate(self) -> None:
        _check_segments(self.breakpoints_s, self.avail_bytes_per_s, self.horizon_s)
        if any(v < 0 for v in self.avail_bytes_per_s):
            raise ValueError("available bandwidth must be >= 0")

    def avail_at(self, t: float) -> float:
        if t < self.breakpoints_s[0] or t > self.horizon_s:
            raise TraceHorizonError(
                f"t={t} outside trace domain [{self.breakpoints_s[0]}, {self.horizon_s}]"
            )
        return _segment_value(self.breakpoints_s, self.avail_bytes_per_s, t)

    def window_min(self, t0: float, t1: float) -> float:
        """Minimum availability over [t0, t1]; conservative planning bound."""
        t1 = min(t1, self.horizon_s)
        if t1 < t0:
            t1 = t0
        i0 = bisect.bisect_right(self.breakpoints_s, t0) - 1
        i1 = bisect.bisect_right(self.breakpoints_s, t1) - 1
        lo = max(i0, 0)
        return min(self.avail_bytes_per_s[lo:max(i1, lo) + 1])

    def window_mean(self, t0: float, t1: float) -> float:
        """Time-averaged availability over [t0, t1]."""
        t1 = min(t1, self.horizon_s)
        if t1 <= t0:
            return self.avail_at(min(t0, self.horizon_s))
        i0 = max(bisect.bisect_right(self.breakpoints_s, t0) - 1, 0)
        i1 = max(bisect.bisect_right(self.breakpoints_s, t1) - 1, i0)
        total = 0.0
        for i in range(i0, i1 + 1):
            seg_lo = self.breakpoints_s[i] if i > i0 else t0
            seg_hi = (self.breakpoints_s[i + 1]
                      if i + 1 < len(self.breakpoints_s) else self.horizon_s)
            total += self.avail_bytes_per_s[i] * (min(seg_hi, t1) - seg_lo)
        return total / (t1 - t0)


class BandwidthTraceSet:
    """Lookup table of per-link availability traces."""

    def __init__(self, traces: dict[str, BandwidthTrace]):
        self.traces = dict(traces)

    def avail(self, link_id: str, t: float) -> float:
        return self.traces[link_id].avail_at(t)

    def window_min(self, link_id: str, t0: float, t1: float) -> float:
        return self.traces[link_id].window_min(t0, t1)

    def window_mean(self, link_id: str, t0: float, t1: float) -> float:
        return self.traces[link_id].window_mean(t0, t1)


def sample_departures(trace: HazardTrace, node_id: str, horizon_s: float,
                      rng: np.random.Generator) -> list[DepartureEvent]:
    """Draw departures on [start, horizon) by thinning the total intensity.

    Candidates arrive at the max total rate; each survives with probability
    rate(t)/max_rate, is labeled scheduled with probability
    scheduled_fraction, and scheduled events draw a clipped lognormal notice.
    """
    trace.validate()
    sf = trace.scheduled_fraction
    max_rate = max(trace.rates_per_s) / (1.0 - sf)
    events: list[DepartureEvent] = []
    if max_rate <= 0:
        return events
    t = trace.breakpoints_s[0]
    mu = math.log(trace.notice_median_s)
    while True:
        t += rng.exponential(1.0 / max_rate)
        if t >= horizon_s:
            break
        if rng.random() > trace.total_rate_at(t) / max_rate:
            continue
        scheduled = rng.random() < sf
        if scheduled:
            notice = float(np.exp(mu + trace.notice_sigma * rng.standard_normal()))
            notice = max(notice, NOTICE_FLOOR_S)
            notice = min(notice, t - trace.breakpoints_s[0])
            if notice < NOTICE_FLOOR_S:
                scheduled = False  # too close to start for a legal notice
        if scheduled:
            events.append(DepartureEvent(node_id, t, "scheduled", notice))
        else:
            events.append(DepartureEvent(node_id, t, "emergency", 0.0))
    return events


@dataclass(frozen=True)
class HazardEstimate:
    lambda_hat: float
    lambda_upper: float
    n_events: int
    window_s: float
    confidence: float

    def validate(self) -> None:
        if self.lambda_hat < 0 or self.lambda_upper < self.lambda_hat:
            raise ValueError("need 0 <= lambda_hat <= lambda_upper")


def estimate_hazard(events, now: float, window_s: float,
                    confidence: float = 0.95) -> HazardEstimate:
    """Sliding-window MLE with an exact Poisson upper confidence bound.

    Only emergency events inside (now - window_s, now] are counted. With
    zero events the bound reduces to the rule-of-three floor ~3/window_s.
    """
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    if not 0 < confidence < 1:
        raise ValueError("confidence must be in (0, 1)")
    n = sum(
        1 for e in events
        if e.kind == "emergency" and now - window_s < e.t_depart_s <= now
    )
    lam_hat = n / window_s
    lam_up = sstats.chi2.ppf(confidence, 2 * n + 2) / (2.0 * window_s)
    return HazardEstimate(lam_hat, float(lam_up), n, window_s, confidence)


@dataclass(frozen=True)
class BandwidthEstimate:
    b_hat: float
    b_lower: float
    n_samples: int

    def validate(self) -> None:
        if not 0 < self.b_lower <= self.b_hat:
            raise ValueError("need 0 < b_lower <= b_hat")


def estimate_bandwidth(samples, percentile: float = 10.0) -> BandwidthEstimate:
    """Mean point estimate with an empirical lower-percentile bound."""
    arr = np.asarray(list(samples), dtype=float)
    if arr.size == 0:
        raise ValueError("no bandwidth samples")
    if np.any(arr <= 0):
        raise ValueError("bandwidth samples must be positive")
    b_hat = float(arr.mean())
    b_lower = min(float(np.percentile(arr, percentile)), b_hat)
    return BandwidthEstimate(b_hat, b_lower, int(arr.size))


@dataclass(frozen=True)
class TraceGenParams:
    """Targets and shape knobs for the correlated (hazard, bandwidth) generator.

    mean_lambda_per_s is the mean EMERGENCY intensity of the generated
    hazard; mean_bw_bytes_per_s is the mean availability. The hazard
    marginal is a two-regime lognormal mixture (peak/off-peak), the
    bandwidth marginal is lognormal, and a Gaussian copula couples them.
    """

    mean_lambda_per_s: float
    mean_bw_bytes_per_s: float
    target_corr: float = -0.43
    cv_lambda: float = 0.62
    cv_inv_bw: float = 0.31
    peak_weight: float = 0.7
    peak_ratio: float = 6.0
    scheduled_fraction: float = 0.58
    notice_median_s: float = 180.0
    notice_sigma: float = 0.6
    # lag-1 autocorrelation of the latent load; 0 keeps buckets independent,
    # values near 1 make regimes dwell for ~bucket_s/(1-persistence)
    persistence: float = 0.0

    def validate(self) -> None:
        if self.mean_lambda_per_s <= 0 or self.mean_bw_bytes_per_s <= 0:
            raise ValueError("trace means must be positive")
        if self.cv_lambda < 0 or self.cv_inv_bw < 0:
            raise ValueError("CV targets must be >= 0")
        if not -1.0 < self.target_corr < 1.0:
            raise ValueError("target_corr must be in (-1, 1)")
        if not 0.0 < self.peak_weight < 1.0:
            raise ValueError("peak_weight must be in (0, 1)")
        if self.peak_ratio < 1.0:
            raise ValueError("peak_ratio must be >= 1")
        if not 0.0 <= self.persistence < 1.0:
            raise ValueError("persistence must be in [0, 1)")


@dataclass(frozen=True)
class TracePair:
    hazard: HazardTrace
    bandwidth: BandwidthTrace
    flag: str  # "ok" | "constant" | "degenerate-marginal"
    sample_corr: float | None
    sample_cv_lambda: float
    sample_cv_inv_bw: float


class _MixtureQuantile:
    """Inverse CDF of a two-regime lognormal mixture with unit off-peak median."""

    def __init__(self, p_peak, ratio, sigma_w):
        self.p = p_peak
        self.r = ratio
        self.sw = sigma_w
        if sigma_w > 0:
            lo = math.log(1e-5)
            hi = math.log(ratio) + math.log(1e5)
            xs = np.exp(np.linspace(lo, hi, 30001))
            z0 = np.log(xs) / sigma_w
            z1 = (np.log(xs) - math.log(ratio)) / sigma_w
            self._grid = xs
            self._cdf = (1 - p_peak) * sstats.norm.cdf(z0) + p_peak * sstats.norm.cdf(z1)

    def __call__(self, u):
        u = np.asarray(u)
        if self.sw == 0:
            return np.where(u <= 1.0 - self.p, 1.0, self.r)
        return np.interp(u, self._cdf, self._grid)

    def mean(self):
        m1 = (1 - self.p) + self.p * self.r
        return m1 * math.exp(self.sw ** 2 / 2)


def _mixture_sigma_w(p, r, cv_target):
    """Within-regime log-sigma hitting the mixture CV, shrinking r if needed."""
    def cv_two_point(rr):
        m1 = (1 - p) + p * rr
        m2 = (1 - p) + p * rr * rr
        return math.sqrt(max(m2 / (m1 * m1) - 1.0, 0.0))

    r_eff = r
    if cv_two_point(r) > cv_target:
        lo, hi = 1.0, r
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if cv_two_point(mid) > 0.8 * cv_target:
                hi = mid
            else:
                lo = mid
        r_eff = 0.5 * (lo + hi)
    m1 = (1 - p) + p * r_eff
    m2 = (1 - p) + p * r_eff * r_eff
    arg = (1.0 + cv_target ** 2) * m1 * m1 / m2
    if arg < 1.0:
        raise GeneratorInfeasibleError("cv_lambda below mixture's minimum spread")
    return r_eff, math.sqrt(math.log(arg))


def gen_correlated_trace(params: TraceGenParams, horizon_s: float,
                         bucket_s: float, seed: int,
                         profile_id: str = "hz-campus",
                         link_id: str = "bottleneck") -> TracePair:
    """Generate coupled per-bucket (lambda_e, avail) series.

    The copula correlation is bisected against the realized sample so the
    reported corr(lambda, B) lands on target for every seed; CV targets are
    met in distribution and land within a few percent at typical bucket
    counts.
    """
    params.validate()
    if horizon_s <= 0 or bucket_s <= 0 or bucket_s > horizon_s:
        raise ValueError("need 0 < bucket_s <= horizon_s")
    n = max(int(math.ceil(horizon_s / bucket_s)), 1)
    bps = tuple(i * bucket_s for i in range(n))
    rng = substream_for_trace(seed, profile_id, link_id)

    const_lam = params.cv_lambda == 0
    const_bw = params.cv_inv_bw == 0
    if (const_lam or const_bw) and params.target_corr != 0.0:
        raise GeneratorInfeasibleError(
            "nonzero target_corr with a zero-CV marginal is unreachable"
        )

    z1 = rng.standard_normal(n)
    eps = rng.standard_normal(n)
    if params.persistence > 0.0 and n > 1:
        # AR(1) on the latent load; innovations scaled so the stationary
        # marginal stays N(0,1) and the copula targets are untouched
        phi = params.persistence
        w = math.sqrt(1.0 - phi * phi)
        ar = np.empty(n)
        ar[0] = z1[0]
        for i in range(1, n):
            ar[i] = phi * ar[i - 1] + w * z1[i]
        z1 = ar

    if const_lam:
        lam = np.full(n, params.mean_lambda_per_s)
    else:
        r_eff, sigma_w = _mixture_sigma_w(params.peak_weight, params.peak_ratio,
                                          params.cv_lambda)
        q = _MixtureQuantile(params.peak_weight, r_eff, sigma_w)
        u1 = sstats.norm.cdf(z1)
        lam_unit = q(u1)
        lam = lam_unit * (params.mean_lambda_per_s / q.mean())

    sigma_b = math.sqrt(math.log(1.0 + params.cv_inv_bw ** 2))

    def bw_from(z):
        if const_bw:
            return np.full(n, params.mean_bw_bytes_per_s)
        return params.mean_bw_bytes_per_s * np.exp(sigma_b * z - sigma_b ** 2 / 2)

    def sample_corr(rho):
        z2 = rho * z1 + math.sqrt(1.0 - rho * rho) * eps
        bw = bw_from(z2)
        return float(np.corrcoef(lam, bw)[0, 1]), bw

    if const_lam and const_bw:
        bw = bw_from(eps)
        flag, corr = "constant", None
    elif const_lam or const_bw:
        bw = bw_from(eps)
        flag, corr = "degenerate-marginal", None
    else:
        c_lo, _ = sample_corr(-0.999)
        c_hi, _ = sample_corr(0.999)
        target = params.target_corr
        if not min(c_lo, c_hi) - 1e-9 <= target <= max(c_lo, c_hi) + 1e-9:
            raise GeneratorInfeasibleError(
                f"target corr {target} outside achievable [{c_lo:.3f}, {c_hi:.3f}]"
            )
        lo, hi = -0.999, 0.999
        sign = 1.0 if c_hi >= c_lo else -1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            c_mid, _ = sample_corr(mid)
            if sign * (c_mid - target) < 0:
                lo = mid
            else:
                hi = mid
        corr, bw = sample_corr(0.5 * (lo + hi))
        flag = "ok"

    hz = HazardTrace(profile_id, bps, tuple(float(x) for x in lam), float(horizon_s),
                     params.scheduled_fraction, params.notice_median_s,
                     params.notice_sigma)
    bt = BandwidthTrace(link_id, bps, tuple(float(x) for x in bw), float(horizon_s))
    hz.validate()
    bt.validate()
    cv_l = float(np.std(lam) / np.mean(lam)) if np.mean(lam) > 0 else 0.0
    inv = 1.0 / np.asarray(bw)
    cv_i = float(np.std(inv) / np.mean(inv))
    return TracePair(hz, bt, flag, corr, cv_l, cv_i)


def substream_for_trace(seed: int, profile_id: str, link_id: str):
    from .core import substream

    return substream(seed, "trace", profile_id, link_id)
