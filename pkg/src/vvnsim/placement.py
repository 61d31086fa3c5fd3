"""Destination selection for checkpoint shipping and migration.

Scores feasible destination nodes by immediate migration time plus the
survival-weighted expected cost of an onward hop, with a same-building
promotion rule: when at least k_min nodes in the source's building are
feasible, selection is restricted to that building so traffic stays off the
core tier.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import JobState, Topology, bottleneck_bandwidth, migration_time
from .hazard import HazardTrace


@dataclass(frozen=True)
class SelectParams:
    alpha: float = 1.0
    k_min: int = 2
    theta_load: float = 0.8

    def validate(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.k_min < 1:
            raise ValueError("k_min must be >= 1")
        if not 0 < self.theta_load <= 1:
            raise ValueError("theta_load must be in (0, 1]")


@dataclass(frozen=True)
class SurvivalResult:
    probability: float
    extrapolated: bool


def survival_probability(trace: HazardTrace, t0_s: float,
                         horizon_s: float) -> SurvivalResult:
    """P(node has no departure of any kind over [t0, t0 + horizon])."""
    if horizon_s < 0:
        raise ValueError("horizon_s must be >= 0")
    if horizon_s == 0:
        return SurvivalResult(1.0, False)
    integral, extrapolated = trace.cumulative_total(t0_s, t0_s + horizon_s)
    import math
    return SurvivalResult(math.exp(-integral), extrapolated)


def mean_onward_migration(topo: Topology, bw_traces, node_id: str,
                          peer_ids, payload_bytes: float, restart_s: float,
                          t_s: float) -> float:
    """Average migration time from node_id to each peer; 0 if no peers."""
    times = []
    for p in peer_ids:
        if p == node_id:
            continue
        bott = bottleneck_bandwidth(topo, bw_traces, node_id, p, t_s)
        times.append(migration_time(payload_bytes, bott, restart_s))
    if not times:
        return 0.0
    return sum(times) / len(times)


@dataclass(frozen=True)
class CandidateScore:
    node_id: str
    t_mig_s: float
    survival_prob: float
    mean_onward_s: float
    score_s: float
    same_building: bool


@dataclass(frozen=True)
class SelectionResult:
    chosen: CandidateScore | None
    scored: tuple[CandidateScore, ...]
    pool: str  # "local", "global", or "none"
    fail_reason: str | None = None


def _resource_feasible(topo: Topology, job: JobState, dst: str,
                       loads: dict[str, float] | None,
                       params: SelectParams) -> bool:
    spec = topo.nodes[dst]
    load = loads.get(dst, spec.load) if loads is not None else spec.load
    return (spec.vram_bytes >= job.vram_req_bytes
            and spec.cuda_capability >= job.cuda_cap_min
            and load <= params.theta_load + 1e-12)


def topo_select(topo: Topology, bw_traces, hazards: dict[str, HazardTrace],
                src: str, job: JobState, now_s: float,
                tau_s: float | None = None,
                params: SelectParams = SelectParams(),
                candidates=None,
                loads: dict[str, float] | None = None) -> SelectionResult:
    """Pick a destination for job's checkpoint or migration out of src.

    Feasibility: VRAM, CUDA capability, load headroom, and (when a notice
    deadline tau is given) migration time within tau. Scoring:
    T_mig + alpha * (1 - S_d) * mean onward migration time, where S_d is the
    destination's probability of surviving the job's remaining runtime. Ties
    break to the lexicographically smallest node id.
    """
    params.validate()
    pool_ids = list(candidates) if candidates is not None else list(topo.nodes)
    resource_ok = [d for d in sorted(pool_ids)
                   if d != src and _resource_feasible(topo, job, d, loads, params)]
    feasible = []
    for d in resource_ok:
        if tau_s is not None:
            bott = bottleneck_bandwidth(topo, bw_traces, src, d, now_s)
            if bott <= 0:
                continue
            if migration_time(job.payload_bytes, bott, job.restart_time_s) > tau_s:
                continue
        feasible.append(d)
    if not feasible:
        return SelectionResult(None, (), "none", "no feasible destination")
    local = [d for d in feasible if topo.same_building(src, d)]
    if len(local) >= params.k_min:
        pool, pool_set = "local", local
    else:
        pool, pool_set = "global", feasible
    scored = []
    for d in pool_set:
        bott = bottleneck_bandwidth(topo, bw_traces, src, d, now_s)
        t_mig = migration_time(job.payload_bytes, bott, job.restart_time_s)
        profile = topo.nodes[d].hazard_profile_id
        surv = survival_probability(hazards[profile], now_s,
                                    job.remaining_runtime_s).probability
        onward_peers = [p for p in resource_ok if p != d]
        t_onward = mean_onward_migration(topo, bw_traces, d, onward_peers,
                                         job.payload_bytes, job.restart_time_s,
                                         now_s)
        score = t_mig + params.alpha * (1.0 - surv) * t_onward
        scored.append(CandidateScore(d, t_mig, surv, t_onward, score,
                                     topo.same_building(src, d)))
    scored.sort(key=lambda c: (c.score_s, c.node_id))
    return SelectionResult(scored[0], tuple(scored), pool, None)


@dataclass(frozen=True)
class LocalityReport:
    """Diagnostic: does in-building bandwidth dominate cross-building?"""

    hypothesis_holds: bool
    dominance_holds: bool
    min_local_bw: float | None
    max_cross_bw: float | None
    best_local_t: float | None
    best_cross_t: float | None


def locality_dominance_check(topo: Topology, bw_traces, src: str,
                             payload_bytes: float, restart_s: float,
                             now_s: float, candidate_ids) -> LocalityReport:
    """Check that every same-building path out-bottlenecks every cross one.

    When the hypothesis holds, the fastest local candidate cannot be slower
    than any cross-building candidate, so building-local promotion never
    raises migration time.
    """
    local_bw, cross_bw = [], []
    for d in candidate_ids:
        if d == src:
            continue
        bott = bottleneck_bandwidth(topo, bw_traces, src, d, now_s)
        (local_bw if topo.same_building(src, d) else cross_bw).append(bott)
    if not local_bw or not cross_bw:
        return LocalityReport(True, True,
                              min(local_bw) if local_bw else None,
                              max(cross_bw) if cross_bw else None,
                              None, None)
    hyp = min(local_bw) >= max(cross_bw)
    t_local = migration_time(payload_bytes, max(local_bw), restart_s)
    t_cross = migration_time(payload_bytes, max(cross_bw), restart_s)
    return LocalityReport(hyp, t_local <= t_cross, min(local_bw), max(cross_bw),
                          t_local, t_cross)
