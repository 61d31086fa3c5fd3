"""Slotted micro-instances with an exhaustive clairvoyant baseline.

Instances are small enough (<= 3 jobs, <= 4 nodes, <= 6 slots) that every
joint checkpoint plan can be enumerated. A plan assigns each job one action
per slot: idle, or transfer a checkpoint to a named node (occupying the
shared bottleneck for the whole slot). The same state machine evaluates
exhaustive plans and the online policies, so the clairvoyant minimum is a
true lower bound for every online policy on the same instance.

Semantics: compute pauses during a job's own transfer slots; a transfer
captures the state at slot start and becomes durable at slot end; a node's
first departure removes it for the rest of the horizon; losing the host
rolls the job back to its last durable capture (or scratch), and the job
resumes on the capture holder or the lowest-indexed live node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .core import DepartureEvent, substream

IDLE = -1


@dataclass(frozen=True)
class TinyJob:
    job_id: str
    payload_bytes: float
    host0: int

    @property
    def rate_units(self) -> float:
        return 1.0


@dataclass(frozen=True)
class TinyInstance:
    node_ids: tuple[str, ...]
    slot_s: float
    n_slots: int
    cap_units: float  # concurrent transfers the bottleneck fits per slot
    jobs: tuple[TinyJob, ...]
    events: tuple[DepartureEvent, ...]
    lambda_segments: tuple[float, float]  # per-second rate, switch at mid-horizon
    node_scale: tuple[float, ...]

    @property
    def horizon_s(self) -> float:
        return self.n_slots * self.slot_s

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def lambda_at(self, t_s: float) -> float:
        half = self.horizon_s / 2.0
        return self.lambda_segments[0] if t_s < half else self.lambda_segments[1]

    def mean_lambda(self) -> float:
        return (self.lambda_segments[0] + self.lambda_segments[1]) / 2.0

    def death_time(self, node_idx: int) -> float:
        nid = self.node_ids[node_idx]
        times = [e.t_depart_s for e in self.events if e.node_id == nid]
        return min(times) if times else math.inf

    def alive_at(self, node_idx: int, t_s: float) -> bool:
        return t_s < self.death_time(node_idx)

    def validate(self) -> None:
        if not 1 <= len(self.jobs) <= 3:
            raise ValueError("tiny instances take 1..3 jobs")
        if not 2 <= self.n_nodes <= 4:
            raise ValueError("tiny instances take 2..4 nodes")
        if not 1 <= self.n_slots <= 6:
            raise ValueError("tiny instances take 1..6 slots")
        if self.slot_s <= 0 or self.cap_units <= 0:
            raise ValueError("slot_s and cap_units must be positive")
        seen_nodes = set()
        for e in self.events:
            if e.node_id not in self.node_ids:
                raise ValueError(f"event on unknown node {e.node_id}")
            if e.node_id in seen_nodes:
                raise ValueError("at most one departure per node")
            seen_nodes.add(e.node_id)
        for j in self.jobs:
            if not 0 <= j.host0 < self.n_nodes:
                raise ValueError(f"job {j.job_id}: bad host index")


class _JobSim:
    """Replays one job through the slot grid under a given action stream."""

    def __init__(self, inst: TinyInstance, job: TinyJob):
        self.inst = inst
        self.host: int | None = job.host0
        self.anchor: int | None = None  # holder of last durable capture
        self.safe_s = 0.0            # work protected by the anchor
        self.at_risk_s = 0.0         # compute seconds since last durable capture
        self.loss_s = 0.0
        self.attempted: list[bool] = []
        self.valid = True
        self._dst: int | None = None

    def _relocate(self, t_s: float) -> None:
        if self.anchor is not None and self.inst.alive_at(self.anchor, t_s):
            self.host = self.anchor
            return
        # capture holder gone too: restart from scratch somewhere alive
        self.at_risk_s += self.safe_s
        self.safe_s = 0.0
        self.anchor = None
        for idx in range(self.inst.n_nodes):
            if self.inst.alive_at(idx, t_s):
                self.host = idx
                return
        self.host = None

    def _handle_death(self, node: int, t_s: float, transferring: bool) -> bool:
        """Returns True if the in-progress transfer (if any) must abort."""
        abort = False
        if transferring and node == self._dst:
            abort = True
        if self.anchor == node and node != self.host:
            self.at_risk_s += self.safe_s
            self.safe_s = 0.0
            self.anchor = None
        if node == self.host:
            self.loss_s += self.at_risk_s
            self.at_risk_s = 0.0
            abort = True
            self._relocate(t_s)
        return abort

    def step_slot(self, s: int, action: int) -> None:
        """Advance through slot s taking the given action at its start.

        A transfer that ends exactly when a node departs completes first:
        deaths at the slot boundary are applied at the top of the next slot.
        """
        inst = self.inst
        t0 = s * inst.slot_s
        t1 = t0 + inst.slot_s
        for i in range(inst.n_nodes):
            if inst.death_time(i) == t0:
                self._handle_death(i, t0, False)
        deaths = sorted((inst.death_time(i), i) for i in range(inst.n_nodes)
                        if t0 < inst.death_time(i) < t1)
        transferring = False
        self._dst = None
        if self.host is None:
            self.attempted.append(False)
            return
        if action != IDLE:
            ok = (0 <= action < inst.n_nodes and action != self.host
                  and inst.alive_at(action, t0) and inst.alive_at(self.host, t0))
            if not ok:
                self.valid = False
                self.attempted.append(False)
                return
            transferring = True
            self._dst = action
        self.attempted.append(transferring)
        t = t0
        for td, node in deaths:
            if not transferring and self.host is not None:
                self.at_risk_s += td - t
            t = td
            if self._handle_death(node, td, transferring):
                transferring = False
                self._dst = None
            if self.host is None:
                return
        if not transferring and self.host is not None:
            self.at_risk_s += t1 - t
        if transferring:
            # durable at slot end: captured state is the slot-start state
            self.anchor = self._dst
            self.safe_s += self.at_risk_s
            self.at_risk_s = 0.0


@dataclass(frozen=True)
class EvalResult:
    total_loss_s: float
    per_job_loss_s: dict[str, float]
    feasible: bool
    reason: str | None = None


def evaluate_plans(inst: TinyInstance, plans: dict[str, tuple[int, ...]]) -> EvalResult:
    """Total lost work of one joint plan; infeasible if capacity or validity
    is violated in any slot."""
    inst.validate()
    if set(plans) != {j.job_id for j in inst.jobs}:
        raise ValueError("plans must cover exactly the instance's jobs")
    usage = np.zeros(inst.n_slots)
    per_job: dict[str, float] = {}
    for job in inst.jobs:
        plan = plans[job.job_id]
        if len(plan) != inst.n_slots:
            raise ValueError(f"plan for {job.job_id} has wrong length")
        sim = _JobSim(inst, job)
        for s in range(inst.n_slots):
            sim.step_slot(s, plan[s])
        if not sim.valid:
            return EvalResult(math.inf, {}, False, f"invalid action for {job.job_id}")
        usage += np.array(sim.attempted, dtype=float) * job.rate_units
        per_job[job.job_id] = sim.loss_s
    if np.any(usage > inst.cap_units + 1e-9):
        return EvalResult(math.inf, {}, False, "bottleneck capacity exceeded")
    return EvalResult(sum(per_job.values()), per_job, True)


def _enumerate_job(inst: TinyInstance, job: TinyJob):
    """All valid plans for one job with their loss and slot-usage rows."""
    actions = [IDLE] + list(range(inst.n_nodes))
    plans, losses, usages = [], [], []
    for plan in product(actions, repeat=inst.n_slots):
        sim = _JobSim(inst, job)
        for s in range(inst.n_slots):
            sim.step_slot(s, plan[s])
            if not sim.valid:
                break
        if not sim.valid:
            continue
        plans.append(plan)
        losses.append(sim.loss_s)
        usages.append([u * job.rate_units for u in
                       (sim.attempted + [False] * (inst.n_slots - len(sim.attempted)))])
    return plans, np.array(losses), np.array(usages, dtype=float)


@dataclass(frozen=True)
class OracleResult:
    refused: bool
    reason: str | None
    best_loss_s: float = math.inf
    best_plans: dict[str, tuple[int, ...]] = field(default_factory=dict)
    n_joint: int = 0


def oracle_tiny(inst: TinyInstance, limit: int = 1_000_000) -> OracleResult:
    """Exhaustive minimum-loss joint plan, or a refusal with a size report."""
    inst.validate()
    per_job = [_enumerate_job(inst, j) for j in inst.jobs]
    counts = [len(p[0]) for p in per_job]
    n_joint = math.prod(counts)
    if n_joint > limit:
        sizes = " x ".join(str(c) for c in counts)
        return OracleResult(True, f"joint space {sizes} = {n_joint} exceeds "
                                  f"limit {limit}")
    cap = inst.cap_units + 1e-9
    jobs = inst.jobs
    if len(jobs) == 1:
        plans, losses, usage = per_job[0]
        ok = np.all(usage <= cap, axis=1)
        losses = np.where(ok, losses, np.inf)
        best = int(np.argmin(losses))
        return OracleResult(False, None, float(losses[best]),
                            {jobs[0].job_id: plans[best]}, n_joint)
    if len(jobs) == 2:
        p1, l1, u1 = per_job[0]
        p2, l2, u2 = per_job[1]
        tot_use = u1[:, None, :] + u2[None, :, :]
        ok = np.all(tot_use <= cap, axis=2)
        tot = l1[:, None] + l2[None, :]
        tot = np.where(ok, tot, np.inf)
        i, j = np.unravel_index(np.argmin(tot), tot.shape)
        return OracleResult(False, None, float(tot[i, j]),
                            {jobs[0].job_id: p1[i], jobs[1].job_id: p2[j]},
                            n_joint)
    p1, l1, u1 = per_job[0]
    p2, l2, u2 = per_job[1]
    p3, l3, u3 = per_job[2]
    tot_use = (u1[:, None, None, :] + u2[None, :, None, :]
               + u3[None, None, :, :])
    ok = np.all(tot_use <= cap, axis=3)
    tot = l1[:, None, None] + l2[None, :, None] + l3[None, None, :]
    tot = np.where(ok, tot, np.inf)
    i, j, k = np.unravel_index(np.argmin(tot), tot.shape)
    return OracleResult(False, None, float(tot[i, j, k]),
                        {jobs[0].job_id: p1[i], jobs[1].job_id: p2[j],
                         jobs[2].job_id: p3[k]}, n_joint)


_POLICIES = ("adaptive", "tv_fixed", "static", "random_dst", "no_migration")


def online_plan(inst: TinyInstance, policy: str, seed: int = 0,
                static_interval_s: float | None = None) -> dict[str, tuple[int, ...]]:
    """Build each policy's plan using only information available per slot.

    Observable at slot start t: live node set, past departures, pending
    scheduled departures whose notice has been served (announce <= t), and
    the current hazard rate. Emergencies are never visible in advance.
    """
    inst.validate()
    if policy not in _POLICIES:
        raise ValueError(f"unknown tiny policy {policy!r}")
    rng = substream(seed, "tiny-online", policy)
    if static_interval_s is None:
        static_interval_s = 2.5 * inst.slot_s
    sims = {j.job_id: _JobSim(inst, j) for j in inst.jobs}
    plans: dict[str, list[int]] = {j.job_id: [] for j in inst.jobs}
    cap = inst.cap_units + 1e-9

    def announced_death(node_idx: int, t_now: float) -> float | None:
        nid = inst.node_ids[node_idx]
        for e in inst.events:
            if (e.node_id == nid and e.kind == "scheduled"
                    and e.t_announce_s <= t_now and e.t_depart_s > t_now):
                return e.t_depart_s
            if e.node_id == nid and e.t_depart_s <= t_now:
                return None
        return None

    for s in range(inst.n_slots):
        t0 = s * inst.slot_s
        t1 = t0 + inst.slot_s
        used = 0.0
        for job in inst.jobs:
            sim = sims[job.job_id]
            action = IDLE
            if policy != "no_migration" and sim.host is not None \
                    and inst.alive_at(sim.host, t0):
                candidates = [i for i in range(inst.n_nodes)
                              if i != sim.host and inst.alive_at(i, t0)]
                if policy in ("adaptive", "tv_fixed"):
                    candidates = [i for i in candidates
                                  if announced_death(i, t0) is None
                                  or announced_death(i, t0) > t1]
                want = False
                t_dep = announced_death(sim.host, t0)
                if t_dep is not None:
                    # last slot whose transfer completes before the departure
                    last_chance = int(math.floor(t_dep / inst.slot_s + 1e-9)) - 1
                    if s >= last_chance and sim.at_risk_s > 0:
                        want = True
                if not want and sim.at_risk_s > 0:
                    if policy in ("adaptive", "random_dst"):
                        lam = inst.lambda_at(t0)
                        due = math.sqrt(2.0 * inst.slot_s / max(lam, 1e-12))
                        want = sim.at_risk_s >= due
                    elif policy == "tv_fixed":
                        lam = inst.mean_lambda()
                        due = math.sqrt(2.0 * inst.slot_s / max(lam, 1e-12))
                        want = sim.at_risk_s >= due
                    elif policy == "static":
                        want = sim.at_risk_s >= static_interval_s
                if want and candidates and used + job.rate_units <= cap:
                    if policy in ("adaptive", "tv_fixed"):
                        action = min(candidates,
                                     key=lambda i: (inst.node_scale[i], i))
                    else:
                        action = int(candidates[rng.integers(len(candidates))])
                    used += job.rate_units
            plans[job.job_id].append(action)
            sim.step_slot(s, action)
    return {jid: tuple(p) for jid, p in plans.items()}


def gen_tiny_instance(seed: int) -> TinyInstance:
    """Random micro-instance sized so the exhaustive search stays tractable."""
    rng = substream(seed, "tiny-gen")
    n_jobs = int(rng.integers(1, 4))
    if n_jobs == 3:
        n_nodes, n_slots = 2, int(rng.integers(5, 7))
    elif n_jobs == 2:
        n_nodes, n_slots = int(rng.integers(2, 4)), int(rng.integers(4, 7))
    else:
        n_nodes, n_slots = int(rng.integers(2, 5)), int(rng.integers(4, 7))
    slot_s = 300.0
    horizon = n_slots * slot_s
    node_ids = tuple(f"t{i}" for i in range(n_nodes))
    cap_units = 1.0 if n_jobs == 1 else float(rng.integers(1, 3))
    base = float(rng.uniform(2e-4, 6e-4))
    ratio = float(rng.choice([0.3, 1.0, 3.0]))
    scales = tuple(float(x) for x in np.round(rng.uniform(0.5, 2.0, n_nodes), 3))
    lam_max = base * max(1.0, ratio) * max(scales)
    events: list[DepartureEvent] = []
    dead: set[str] = set()
    for idx, nid in enumerate(node_ids):
        t = 0.0
        while t < horizon and nid not in dead:
            t += rng.exponential(1.0 / lam_max)
            if t >= horizon:
                break
            lam_t = base * (1.0 if t < horizon / 2 else ratio) * scales[idx]
            if rng.uniform() <= lam_t / lam_max:
                kind = "scheduled" if rng.uniform() < 0.58 else "emergency"
                if kind == "scheduled":
                    notice = min(float(rng.uniform(0.5, 2.5)) * slot_s, t)
                    if notice < 10.0:
                        kind, notice = "emergency", 0.0
                else:
                    notice = 0.0
                events.append(DepartureEvent(nid, t, kind, notice))
                dead.add(nid)
    events.sort(key=lambda e: e.t_depart_s)
    events = events[:6]
    if not events:
        t = float(rng.uniform(0.35, 0.9)) * horizon
        nid = node_ids[int(rng.integers(n_nodes))]
        if rng.uniform() < 0.58:
            events = [DepartureEvent(nid, t, "scheduled",
                                     min(float(rng.uniform(0.5, 2.5)) * slot_s, t))]
        else:
            events = [DepartureEvent(nid, t, "emergency", 0.0)]
    jobs = tuple(TinyJob(f"j{k}", slot_s * 1e6, k % n_nodes)
                 for k in range(n_jobs))
    inst = TinyInstance(node_ids, slot_s, n_slots, cap_units, jobs,
                        tuple(events), (base, base * ratio), scales)
    inst.validate()
    return inst
