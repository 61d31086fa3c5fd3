"""Pre-emptive admission control and pacing for migration flows.

A slice of each controlled link is reserved for interactive traffic; planned
migration flows are admitted against the remainder only when their minimum
completion rate fits on every link of their path, earliest deadline first.
Admitted flows are irrevocable: later arrivals see only the residual.
Admission grants a minimum rate (the deadline-meeting floor) plus a max-min
share of the residual, start offsets staggered across a notice window, and
token-bucket pacing at the granted rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .fluid import max_min_fill


@dataclass(frozen=True)
class FlowClass:
    name: str
    dscp: int
    priority: int  # lower value preempts higher


CLASS_EMERGENCY = FlowClass("emergency", 46, 0)
CLASS_PLANNED = FlowClass("planned", 34, 1)
CLASS_PRESYNC = FlowClass("presync", 18, 2)
CLASS_BACKGROUND = FlowClass("background", 0, 3)

FLOW_CLASSES = {c.name: c for c in
                (CLASS_EMERGENCY, CLASS_PLANNED, CLASS_PRESYNC, CLASS_BACKGROUND)}


@dataclass
class MigrationFlow:
    """One transfer with an optional hard deadline.

    path_cap_bytes_per_s must be a lower bound on the path bottleneck over
    the flow's whole window (window-minimum, not instantaneous).
    """

    flow_id: str
    src: str
    dst: str
    payload_bytes: float
    restart_s: float
    klass: str = "planned"
    arrival_s: float = 0.0
    deadline_s: float | None = None
    path_cap_bytes_per_s: float = math.inf
    links: tuple[str, ...] = ()
    state: str = "pending"  # pending | admitted | degraded | active | done | killed
    min_rate_bytes_per_s: float = 0.0
    rate_bytes_per_s: float = 0.0
    offset_s: float = 0.0
    sent_bytes: float = 0.0

    def validate(self) -> None:
        if self.payload_bytes <= 0:
            raise ValueError(f"flow {self.flow_id}: payload must be positive")
        if self.klass not in FLOW_CLASSES:
            raise ValueError(f"flow {self.flow_id}: unknown class {self.klass!r}")
        if self.restart_s < 0:
            raise ValueError(f"flow {self.flow_id}: restart_s must be >= 0")
        if self.deadline_s is not None and self.deadline_s < self.arrival_s:
            raise ValueError(f"flow {self.flow_id}: deadline before arrival")

    @property
    def remaining_bytes(self) -> float:
        return max(0.0, self.payload_bytes - self.sent_bytes)

    def window_s(self, now_s: float) -> float:
        """Transfer time available before the restart must begin."""
        if self.deadline_s is None:
            return math.inf
        return self.deadline_s - self.restart_s - now_s


@dataclass(frozen=True)
class BandwidthBudget:
    """Reserve carve-out on one controlled link."""

    total_bytes_per_s: float
    b_min_bytes_per_s: float = 0.0
    beta: float = 0.3

    def validate(self) -> None:
        if self.total_bytes_per_s <= 0:
            raise ValueError("total must be positive")
        if not 0 <= self.beta < 1:
            raise ValueError("beta must be in [0, 1)")
        if self.b_min_bytes_per_s < 0:
            raise ValueError("b_min must be >= 0")

    @property
    def reserve_bytes_per_s(self) -> float:
        return max(self.beta * self.total_bytes_per_s, self.b_min_bytes_per_s)

    @property
    def migration_bytes_per_s(self) -> float:
        return max(0.0, self.total_bytes_per_s - self.reserve_bytes_per_s)


@dataclass(frozen=True)
class AdmitResult:
    admitted: tuple[str, ...]
    degraded: tuple[str, ...]
    all_deadlines_met: bool


def min_rate_for(flow: MigrationFlow, now_s: float) -> float:
    """Lowest constant rate that still meets the flow's deadline."""
    w = flow.window_s(now_s)
    if w == math.inf:
        return 0.0
    if w <= 0:
        return math.inf
    return flow.remaining_bytes / w


def admit(flows: list[MigrationFlow], budgets: dict[str, BandwidthBudget],
          now_s: float,
          committed: list[MigrationFlow] | None = None) -> AdmitResult:
    """Admit pending flows EDF-greedily against per-link migration budgets.

    Each candidate is admitted iff, on every link of its path, the sum of
    already-committed minimum rates plus its own stays within that link's
    migration share (and within the flow's own window-min path bottleneck).
    Admitted flows get min rate + max-min residual share, and start offsets
    staggered over the shortest notice window, clamped so every deadline
    still holds. Mutates flow state in place.
    """
    for b in budgets.values():
        b.validate()
    committed = list(committed or [])
    used: dict[str, float] = {l: 0.0 for l in budgets}
    for f in committed:
        # a committed flow may still be waiting out its stagger offset, so
        # its stored guarantee (sized to cover that delay) is what must stay
        # reserved; the instantaneous minimum would under-count it
        r = f.min_rate_bytes_per_s
        if not r > 0.0:
            r = min_rate_for(f, now_s)
        if not math.isfinite(r):
            continue
        for l in f.links:
            if l in used:
                used[l] += r
    pending = sorted(
        (f for f in flows if f.state == "pending"),
        key=lambda f: (f.deadline_s if f.deadline_s is not None else math.inf,
                       f.flow_id))
    admitted: list[MigrationFlow] = []
    degraded: list[str] = []
    for f in pending:
        f.validate()
        r = min_rate_for(f, now_s)
        fits = math.isfinite(r) and r <= f.path_cap_bytes_per_s * (1 + 1e-9)
        if fits:
            for l in f.links:
                if l in budgets and used[l] + r > budgets[l].migration_bytes_per_s * (1 + 1e-9):
                    fits = False
                    break
        if not fits:
            f.state = "degraded"
            degraded.append(f.flow_id)
            continue
        f.state = "admitted"
        f.min_rate_bytes_per_s = r
        for l in f.links:
            if l in used:
                used[l] += r
        admitted.append(f)

    if admitted:
        _grant_extras(admitted, committed, budgets, used)
        _stagger(admitted, now_s)
        for f in admitted:
            # the guarantee must absorb the stagger delay: a flow idle until
            # its offset needs remaining/(window - offset) from then on.
            # The stagger clamp keeps that at or below the assigned rate, so
            # raising the floor never overbooks the checked budgets.
            w = f.window_s(now_s)
            if math.isfinite(w) and w - f.offset_s > 0:
                f.min_rate_bytes_per_s = max(
                    f.min_rate_bytes_per_s,
                    f.remaining_bytes / (w - f.offset_s))
    return AdmitResult(tuple(f.flow_id for f in admitted), tuple(degraded),
                       not degraded)


def _grant_extras(admitted, committed, budgets, used):
    """Split residual migration bandwidth max-min across admitted flows."""
    residual = {l: max(0.0, budgets[l].migration_bytes_per_s - used[l])
                for l in budgets}
    caps = {}
    membership = {}
    for f in admitted + [c for c in committed if c.state in ("admitted", "active")]:
        headroom = f.path_cap_bytes_per_s - f.min_rate_bytes_per_s
        controlled = tuple(l for l in f.links if l in residual)
        if not controlled and not math.isfinite(headroom):
            headroom = 0.0
        caps[f.flow_id] = max(0.0, headroom)
        membership[f.flow_id] = controlled
    extras = max_min_fill(caps, residual, membership)
    for f in admitted + [c for c in committed if c.state in ("admitted", "active")]:
        f.rate_bytes_per_s = f.min_rate_bytes_per_s + extras[f.flow_id]


def _stagger(admitted, now_s):
    """Offset start times j * T_notice / K over EDF order, deadline-clamped."""
    k = len(admitted)
    t_notice = min(f.window_s(now_s) for f in admitted)
    if not math.isfinite(t_notice):
        t_notice = 0.0
    step = t_notice / k
    for j, f in enumerate(admitted):
        offset = j * step
        if f.deadline_s is not None and f.rate_bytes_per_s > 0:
            max_offset = (f.deadline_s - now_s - f.restart_s
                          - f.remaining_bytes / f.rate_bytes_per_s)
            offset = min(offset, max(0.0, max_offset))
        f.offset_s = offset


@dataclass
class TokenBucket:
    """Byte pacing at a granted rate with burst = 2 * rate * 100 ms."""

    rate_bytes_per_s: float
    capacity_bytes: float | None = None
    tokens: float = field(init=False)
    _t: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.rate_bytes_per_s <= 0:
            raise ValueError("rate must be positive")
        if self.capacity_bytes is None:
            self.capacity_bytes = 2.0 * self.rate_bytes_per_s * 0.1
        if self.capacity_bytes <= 0:
            raise ValueError("capacity must be positive")
        self.tokens = self.capacity_bytes

    def forward(self, nbytes: float, t_s: float) -> bool:
        """True iff nbytes may pass at time t_s; consumes tokens if so."""
        if nbytes < 0:
            raise ValueError("nbytes must be >= 0")
        if t_s < self._t:
            raise ValueError("time went backwards")
        self.tokens = min(self.capacity_bytes,
                          self.tokens + self.rate_bytes_per_s * (t_s - self._t))
        self._t = t_s
        if nbytes <= self.tokens + 1e-9:
            self.tokens -= nbytes
            return True
        return False


@dataclass(frozen=True)
class KillSwitchDecision:
    node_id: str
    mode: str  # "emergency" | "scheduled"
    active_from_s: float
    killed_flows: tuple[str, ...]


def kill_switch(node_id: str, mode: str, t_activate_s: float,
                inflight: list[MigrationFlow],
                latency_s: float = 1e-3) -> KillSwitchDecision:
    """Stop accepting new flows at a departing node.

    Emergency mode also kills inbound in-flight transfers; scheduled mode
    lets them drain. Activation completes within latency_s of the signal.
    """
    if mode not in ("emergency", "scheduled"):
        raise ValueError(f"unknown kill-switch mode {mode!r}")
    if latency_s < 0:
        raise ValueError("latency must be >= 0")
    killed = ()
    if mode == "emergency":
        killed = tuple(f.flow_id for f in inflight
                       if f.dst == node_id and f.state in ("admitted", "active"))
    return KillSwitchDecision(node_id, mode, t_activate_s + latency_s, killed)


class IsolationMonitor:
    """Audits migration usage on one link against capacity - b_min.

    Usage is recorded as piecewise-constant segments; tick statistics are
    derived analytically so long audits stay cheap.
    """

    def __init__(self, link_id: str, capacity_bytes_per_s: float,
                 b_min_bytes_per_s: float, tick_s: float = 0.1):
        if capacity_bytes_per_s <= 0 or tick_s <= 0 or b_min_bytes_per_s < 0:
            raise ValueError("bad monitor parameters")
        self.link_id = link_id
        self.capacity = capacity_bytes_per_s
        self.b_min = b_min_bytes_per_s
        self.tick_s = tick_s
        self.bound = capacity_bytes_per_s - b_min_bytes_per_s
        self._segments: list[tuple[float, float, float]] = []

    def observe(self, t0_s: float, t1_s: float,
                migration_rate_bytes_per_s: float) -> None:
        if t1_s < t0_s:
            raise ValueError("segment end before start")
        if t1_s == t0_s:
            return
        self._segments.append((t0_s, t1_s, migration_rate_bytes_per_s))

    def _ticks_in(self, t0: float, t1: float) -> int:
        first = math.ceil(t0 / self.tick_s - 1e-9)
        last = math.ceil(t1 / self.tick_s - 1e-9) - 1
        return max(0, last - first + 1)

    @property
    def total_ticks(self) -> int:
        return sum(self._ticks_in(a, b) for a, b, _ in self._segments)

    @property
    def max_rate(self) -> float:
        return max((r for _, _, r in self._segments), default=0.0)

    def violations(self, rel_tol: float = 1e-9) -> list[tuple[float, float, float]]:
        """Segments whose migration usage exceeds capacity - b_min."""
        lim = self.bound * (1 + rel_tol)
        return [(a, b, r) for a, b, r in self._segments if r > lim]

    def violation_ticks(self, rel_tol: float = 1e-9) -> int:
        lim = self.bound * (1 + rel_tol)
        return sum(self._ticks_in(a, b) for a, b, r in self._segments if r > lim)
