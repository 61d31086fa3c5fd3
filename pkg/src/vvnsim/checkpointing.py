"""Checkpoint interval control and egress bandwidth allocation.

Implements the expected-cost model for periodic checkpointing under a
piecewise-constant departure hazard: cost rate lam*dt/2 + C/(b*dt), its
state-dependent minimizer dt* = sqrt(2C/(lam*b)), the coupled cube-root
bandwidth split across jobs sharing an egress budget, box-constrained
water-filling against per-job write caps, and the adaptivity-gap statistics
that price a state-independent interval policy against the state-dependent
one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import substream


class IntervalInfeasibleError(ValueError):
    """Overhead floor exceeds the loss-budget ceiling; caller must escalate."""

    def __init__(self, floor_s: float, cap_s: float):
        super().__init__(
            f"interval floor {floor_s:.3f}s exceeds ceiling {cap_s:.3f}s"
        )
        self.floor_s = floor_s
        self.cap_s = cap_s


def interval_cost(payload_bytes: float, lambda_per_s: float,
                  bw_bytes_per_s: float, interval_s: float) -> float:
    """Expected cost rate (dimensionless slowdown) of checkpointing every dt."""
    _check_domain(payload_bytes, lambda_per_s, bw_bytes_per_s)
    if interval_s <= 0:
        raise ValueError("interval_s must be positive")
    return lambda_per_s * interval_s / 2.0 + payload_bytes / (bw_bytes_per_s * interval_s)


def local_interval(payload_bytes: float, lambda_per_s: float,
                   bw_bytes_per_s: float) -> float:
    """Unconstrained optimal interval sqrt(2C / (lam * b))."""
    _check_domain(payload_bytes, lambda_per_s, bw_bytes_per_s)
    return math.sqrt(2.0 * payload_bytes / (lambda_per_s * bw_bytes_per_s))


def optimal_cost_rate(payload_bytes: float, lambda_per_s: float,
                      bw_bytes_per_s: float) -> float:
    """Cost rate at the optimal interval: sqrt(2 * lam * C / b)."""
    _check_domain(payload_bytes, lambda_per_s, bw_bytes_per_s)
    return math.sqrt(2.0 * lambda_per_s * payload_bytes / bw_bytes_per_s)


def _check_domain(payload, lam, bw):
    if payload <= 0:
        raise ValueError("payload_bytes must be positive")
    if lam <= 0:
        raise ValueError("lambda_per_s must be positive")
    if bw <= 0:
        raise ValueError("bandwidth must be positive")


@dataclass(frozen=True)
class CkptJob:
    """Per-job inputs to one allocation/tick round."""

    job_id: str
    payload_bytes: float
    lambda_per_s: float
    cap_bytes_per_s: float = math.inf
    loss_budget_s: float = math.inf
    tau_s: float | None = None
    restart_s: float = 0.0

    def validate(self) -> None:
        _check_domain(self.payload_bytes, self.lambda_per_s,
                      self.cap_bytes_per_s if math.isfinite(self.cap_bytes_per_s) else 1.0)
        if self.cap_bytes_per_s <= 0:
            raise ValueError(f"job {self.job_id}: cap must be positive")
        if self.loss_budget_s <= 0:
            raise ValueError(f"job {self.job_id}: loss budget must be positive")
        if self.restart_s < 0:
            raise ValueError(f"job {self.job_id}: restart_s must be >= 0")


def _weights(jobs) -> dict[str, float]:
    return {j.job_id: (j.lambda_per_s * j.payload_bytes) ** (1.0 / 3.0) for j in jobs}


def cube_root_allocation(jobs: list[CkptJob], budget_bytes_per_s: float) -> dict[str, float]:
    """Split the egress budget proportionally to (lam_i * C_i)^(1/3)."""
    if budget_bytes_per_s <= 0:
        raise ValueError("budget must be positive")
    if not jobs:
        return {}
    for j in jobs:
        j.validate()
    w = _weights(jobs)
    total = sum(w.values())
    return {jid: budget_bytes_per_s * wi / total for jid, wi in w.items()}


def aggregate_cost(jobs: list[CkptJob], budget_bytes_per_s: float) -> float:
    """Closed-form total cost at the cube-root split:
    sqrt(2/B) * (sum_i (lam_i C_i)^(1/3))^(3/2).
    """
    if budget_bytes_per_s <= 0:
        raise ValueError("budget must be positive")
    s = sum((j.lambda_per_s * j.payload_bytes) ** (1.0 / 3.0) for j in jobs)
    return math.sqrt(2.0 / budget_bytes_per_s) * s ** 1.5


@dataclass(frozen=True)
class WaterFillResult:
    allocations: dict[str, float]
    capped: frozenset[str]
    iterations: int


def water_fill_boxed(jobs: list[CkptJob], budget_bytes_per_s: float) -> WaterFillResult:
    """Cube-root split with per-job caps: pin violators, re-split the rest.

    Terminates in at most len(jobs) passes; the returned active set satisfies
    the complementary-slackness structure (capped jobs sit exactly at their
    cap, uncapped jobs share the residual by cube-root weight).
    """
    if budget_bytes_per_s <= 0:
        raise ValueError("budget must be positive")
    if not jobs:
        return WaterFillResult({}, frozenset(), 0)
    for j in jobs:
        j.validate()
    finite_cap_total = sum(j.cap_bytes_per_s for j in jobs)
    if finite_cap_total <= budget_bytes_per_s:
        return WaterFillResult(
            {j.job_id: j.cap_bytes_per_s for j in jobs},
            frozenset(j.job_id for j in jobs), 0,
        )
    caps = {j.job_id: j.cap_bytes_per_s for j in jobs}
    active = list(jobs)
    alloc: dict[str, float] = {}
    capped: set[str] = set()
    budget = budget_bytes_per_s
    iterations = 0
    while active:
        iterations += 1
        shares = cube_root_allocation(active, budget)
        violators = [j for j in active if shares[j.job_id] > caps[j.job_id]]
        if not violators:
            alloc.update(shares)
            break
        for j in violators:
            alloc[j.job_id] = caps[j.job_id]
            capped.add(j.job_id)
            budget -= caps[j.job_id]
        active = [j for j in active if j.job_id not in capped]
    return WaterFillResult(alloc, frozenset(capped), iterations)


def constrained_interval(payload_bytes: float, lambda_per_s: float,
                         bw_bytes_per_s: float, loss_budget_s: float,
                         beta: float = 0.2) -> float:
    """Optimal interval clipped to [C/(beta*b), 2*loss_budget].

    The floor keeps checkpoint I/O duty cycle at most beta; the ceiling keeps
    expected rollback within the loss budget. An empty interval is an
    infeasibility the caller must escalate.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must be in (0, 1)")
    if loss_budget_s <= 0:
        raise ValueError("loss_budget_s must be positive")
    raw = local_interval(payload_bytes, lambda_per_s, bw_bytes_per_s)
    floor = payload_bytes / (beta * bw_bytes_per_s)
    cap = 2.0 * loss_budget_s
    if floor > cap:
        raise IntervalInfeasibleError(floor, cap)
    return min(max(raw, floor), cap)


def final_ckpt_feasible(payload_bytes: float, b_lower_bytes_per_s: float,
                        restart_s: float, tau_s: float) -> bool:
    """Can a full checkpoint land and restart inside the notice window?"""
    if b_lower_bytes_per_s <= 0:
        return False
    if tau_s < 0 or restart_s < 0 or payload_bytes <= 0:
        raise ValueError("bad final-checkpoint inputs")
    return payload_bytes / b_lower_bytes_per_s + restart_s <= tau_s


@dataclass(frozen=True)
class CkptDemand:
    """Per-job demand tuple exported to the admission layer each tick."""

    job_id: str
    payload_bytes: float
    rate_bytes_per_s: float
    interval_s: float
    loss_budget_s: float

    def validate(self) -> None:
        if self.rate_bytes_per_s <= 0:
            raise ValueError(f"demand {self.job_id}: rate must be positive")
        if not 0 < self.interval_s <= 2.0 * self.loss_budget_s + 1e-9:
            raise ValueError(
                f"demand {self.job_id}: interval outside (0, 2*loss_budget]"
            )


@dataclass(frozen=True)
class TickResult:
    demands: tuple[CkptDemand, ...]
    final_jobs: tuple[str, ...]
    infeasible: tuple[tuple[str, float, float], ...]
    allocations: dict[str, float] = field(default_factory=dict)


def adaptive_ckpt_tick(jobs: list[CkptJob], budget_lower_bytes_per_s: float,
                       beta: float = 0.2) -> TickResult:
    """One controller round over the jobs sharing an egress budget.

    Order: cube-root share with caps (water fill), final-checkpoint
    emission for noticed jobs that fit their window at the allocated rate,
    one re-allocation over the remaining jobs (the emitted jobs move to the
    admission-reserved path), then clipped intervals and demand export.
    """
    if not jobs:
        return TickResult((), (), ())
    wf = water_fill_boxed(jobs, budget_lower_bytes_per_s)
    finals: list[str] = []
    rest: list[CkptJob] = []
    for j in jobs:
        b = wf.allocations[j.job_id]
        if j.tau_s is not None and b > 0 and final_ckpt_feasible(
                j.payload_bytes, b, j.restart_s, j.tau_s):
            finals.append(j.job_id)
        else:
            rest.append(j)
    alloc = wf.allocations
    if finals and rest:
        alloc = water_fill_boxed(rest, budget_lower_bytes_per_s).allocations
    demands: list[CkptDemand] = []
    infeasible: list[tuple[str, float, float]] = []
    for j in rest:
        b = alloc[j.job_id]
        try:
            dt = constrained_interval(j.payload_bytes, j.lambda_per_s, b,
                                      j.loss_budget_s, beta)
        except IntervalInfeasibleError as err:
            infeasible.append((j.job_id, err.floor_s, err.cap_s))
            continue
        demands.append(CkptDemand(j.job_id, j.payload_bytes, b, dt, j.loss_budget_s))
    return TickResult(tuple(demands), tuple(finals), tuple(infeasible),
                      {j.job_id: alloc[j.job_id] for j in rest})


@dataclass(frozen=True)
class GapStats:
    """Sample statistics behind the state-dependent vs fixed interval gap."""

    mean_lambda: float
    mean_theta: float
    mean_w: float
    cs_defect: float
    predicted_ratio: float
    n_samples: int

    def absolute_gap(self, payload_bytes: float) -> float:
        """First-order cost-rate gap sqrt(2C) * defect / (sqrt(lt) + E[W])."""
        if payload_bytes <= 0:
            raise ValueError("payload_bytes must be positive")
        denom = math.sqrt(self.mean_lambda * self.mean_theta) + self.mean_w
        return math.sqrt(2.0 * payload_bytes) * self.cs_defect / denom


def adaptivity_gap(lambdas, bws) -> GapStats:
    """Gap statistics from joint (hazard, bandwidth) samples.

    predicted_ratio = sqrt(E[lam] E[1/B]) / E[sqrt(lam/B)] >= 1, with
    equality iff lam*B is constant over the samples.
    """
    lam = np.asarray(list(lambdas), dtype=float)
    bw = np.asarray(list(bws), dtype=float)
    if lam.size == 0 or lam.size != bw.size:
        raise ValueError("need equal-length, non-empty sample arrays")
    if np.any(lam <= 0) or np.any(bw <= 0):
        raise ValueError("samples must be positive")
    theta = 1.0 / bw
    w = np.sqrt(lam * theta)
    m_lam = float(lam.mean())
    m_th = float(theta.mean())
    m_w = float(w.mean())
    defect = m_lam * m_th - m_w * m_w
    ratio = math.sqrt(m_lam * m_th) / m_w
    return GapStats(m_lam, m_th, m_w, defect, ratio, int(lam.size))


def tv_fixed_interval(mean_lambda: float, mean_theta: float,
                      payload_bytes: float) -> float:
    """Best state-independent interval sqrt(2 C mean(1/B) / mean(lam))."""
    if mean_lambda <= 0 or mean_theta <= 0 or payload_bytes <= 0:
        raise ValueError("inputs must be positive")
    return math.sqrt(2.0 * payload_bytes * mean_theta / mean_lambda)


def simulate_policy_cost(lam_series, bw_series, bucket_s: float,
                         payload_bytes: float, mode: str, seed: int,
                         fixed_interval_s: float | None = None) -> float:
    """Monte Carlo cost rate of one interval policy on a bucketed trace.

    The job alternates compute phases and checkpoint writes (compute pauses
    during writes). Departures arrive as a Poisson process at the bucket's
    hazard rate; each one rolls the job back to the last completed capture.
    Cost = (lost compute seconds + write seconds) / horizon. Departure times
    are pre-sampled from the trace alone, so different policies on the same
    seed face identical departures.

    Modes: "state" re-solves dt* per bucket, "fixed_stats" commits to the
    trace-marginal interval, "const" uses fixed_interval_s.
    """
    lam = np.asarray(list(lam_series), dtype=float)
    bw = np.asarray(list(bw_series), dtype=float)
    if lam.size != bw.size or lam.size == 0:
        raise ValueError("need equal non-empty series")
    if mode not in ("state", "fixed_stats", "const"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "const" and (fixed_interval_s is None or fixed_interval_s <= 0):
        raise ValueError("const mode needs a positive fixed_interval_s")
    horizon = lam.size * bucket_s
    rng = substream(seed, "ckpt-mc")
    departures = []
    t = 0.0
    while t < horizon:
        k = min(int(t // bucket_s), lam.size - 1)
        rate = lam[k]
        if rate <= 0:
            t = (k + 1) * bucket_s
            continue
        gap = rng.exponential(1.0 / rate)
        if t + gap >= (k + 1) * bucket_s:
            t = (k + 1) * bucket_s
            continue
        t += gap
        departures.append(t)

    dt_fixed = None
    if mode == "fixed_stats":
        dt_fixed = tv_fixed_interval(float(lam.mean()), float((1.0 / bw).mean()),
                                     payload_bytes)
    elif mode == "const":
        dt_fixed = fixed_interval_s

    def interval_at(tt):
        if dt_fixed is not None:
            return dt_fixed
        k = min(int(tt // bucket_s), lam.size - 1)
        return local_interval(payload_bytes, lam[k], bw[k])

    lost = 0.0
    write_total = 0.0
    work_at_risk = 0.0
    t = 0.0
    phase = "compute"
    phase_target = interval_at(0.0)  # compute seconds remaining in phase
    bytes_left = 0.0
    dep_idx = 0
    while t < horizon:
        k = min(int(t // bucket_s), lam.size - 1)
        bucket_end = (k + 1) * bucket_s
        next_dep = departures[dep_idx] if dep_idx < len(departures) else math.inf
        if phase == "compute":
            phase_end = t + phase_target
        else:
            phase_end = t + bytes_left / bw[k]
        step_end = min(phase_end, bucket_end, horizon)
        if next_dep <= step_end:
            dt = next_dep - t
            if phase == "compute":
                work_at_risk += dt
                phase_target -= dt
            else:
                write_total += dt
                bytes_left -= dt * bw[k]
            lost += work_at_risk
            work_at_risk = 0.0
            t = next_dep
            dep_idx += 1
            phase = "compute"
            phase_target = interval_at(t)
            continue
        dt = step_end - t
        if phase == "compute":
            work_at_risk += dt
            phase_target -= dt
            if step_end == phase_end and phase_target <= 1e-12:
                phase = "write"
                bytes_left = payload_bytes
        else:
            write_total += dt
            bytes_left -= dt * bw[k]
            if step_end == phase_end and bytes_left <= 1e-6:
                work_at_risk = 0.0  # capture from write start is now durable
                phase = "compute"
                phase_target = interval_at(step_end)
        t = step_end
    return (lost + write_total) / horizon
