"""Shared model types for a campus pool of volunteered GPU nodes.

Conventions used across the package: sizes in bytes, bandwidth in bytes/s,
time in seconds, hazard rates in events/s. Topologies are three-tier trees
(access, distribution, core), so every node pair has exactly one simple path
and same-building pairs never cross a core link.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

NOTICE_FLOOR_S = 10.0

TIER_ACCESS = "access"
TIER_DIST = "distribution"
TIER_CORE = "core"
TIERS = (TIER_ACCESS, TIER_DIST, TIER_CORE)


def substream(seed: int, *tags) -> np.random.Generator:
    """Independent counter-based generator for one purpose.

    Streams are keyed by a hash of (seed, tags), so adding or reordering
    draws in one subsystem never perturbs another. This is what makes
    paired-seed policy comparisons and byte-identical reruns work.
    """
    h = hashlib.blake2b(digest_size=16)
    h.update(str(int(seed)).encode())
    for tag in tags:
        h.update(b"/")
        h.update(str(tag).encode())
    key = int.from_bytes(h.digest(), "little")
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class NodeSpec:
    """Static description of one volunteered node."""

    node_id: str
    building_id: str
    vram_bytes: int
    cuda_capability: float
    load: float
    write_speed_bytes_per_s: float
    hazard_profile_id: str

    def validate(self) -> None:
        if not self.node_id:
            raise ValueError("node_id must be non-empty")
        if self.vram_bytes <= 0:
            raise ValueError(f"node {self.node_id}: vram_bytes must be positive")
        if not 0.0 <= self.load <= 1.0:
            raise ValueError(f"node {self.node_id}: load must be in [0, 1]")
        if self.write_speed_bytes_per_s <= 0:
            raise ValueError(f"node {self.node_id}: write speed must be positive")
        if self.cuda_capability <= 0:
            raise ValueError(f"node {self.node_id}: cuda_capability must be positive")


@dataclass
class JobState:
    """Mutable per-job state tracked by the controller and engine."""

    job_id: str
    payload_bytes: float
    loss_budget_s: float
    remaining_runtime_s: float
    restart_time_s: float
    vram_req_bytes: float
    cuda_cap_min: float = 0.0
    host: str | None = None
    last_completed_ckpt_time: float | None = None
    ckpt_in_flight: bool = False

    def validate(self) -> None:
        if self.payload_bytes <= 0:
            raise ValueError(f"job {self.job_id}: payload_bytes must be positive")
        if self.loss_budget_s <= 0:
            raise ValueError(f"job {self.job_id}: loss_budget_s must be positive")
        if self.remaining_runtime_s < 0:
            raise ValueError(f"job {self.job_id}: remaining_runtime_s must be >= 0")
        if self.restart_time_s < 0:
            raise ValueError(f"job {self.job_id}: restart_time_s must be >= 0")
        if self.vram_req_bytes <= 0:
            raise ValueError(f"job {self.job_id}: vram_req_bytes must be positive")


@dataclass(frozen=True)
class DepartureEvent:
    """One node departure, with notice for scheduled reclaims."""

    node_id: str
    t_depart_s: float
    kind: str  # "scheduled" | "emergency"
    notice_s: float

    def __post_init__(self):
        if self.kind not in ("scheduled", "emergency"):
            raise ValueError(f"unknown departure kind {self.kind!r}")
        if self.kind == "emergency" and self.notice_s != 0.0:
            raise ValueError("emergency departures carry zero notice")
        if self.kind == "scheduled" and self.notice_s < NOTICE_FLOOR_S:
            raise ValueError(
                f"scheduled notice {self.notice_s} below floor {NOTICE_FLOOR_S}"
            )
        if self.t_depart_s < 0:
            raise ValueError("t_depart_s must be >= 0")

    @property
    def t_announce_s(self) -> float:
        return self.t_depart_s - self.notice_s


class SimClock:
    """Monotone simulation clock."""

    def __init__(self, now_s: float = 0.0):
        self.now_s = float(now_s)

    def advance(self, to_s: float) -> None:
        if to_s < self.now_s:
            raise ValueError(f"clock moved backwards: {self.now_s} -> {to_s}")
        self.now_s = float(to_s)


@dataclass(frozen=True)
class Link:
    link_id: str
    a: str
    b: str
    tier: str
    capacity_bytes_per_s: float

    def validate(self) -> None:
        if self.tier not in TIERS:
            raise ValueError(f"link {self.link_id}: unknown tier {self.tier!r}")
        if self.capacity_bytes_per_s <= 0:
            raise ValueError(f"link {self.link_id}: capacity must be positive")
        if self.a == self.b:
            raise ValueError(f"link {self.link_id}: self loop")


@dataclass
class Topology:
    """Three-tier tree of nodes, access switches, per-building routers, core.

    Paths between every node pair are precomputed at construction. validate()
    checks the tree property, which is what guarantees path uniqueness.
    """

    nodes: dict[str, NodeSpec]
    switches: tuple[str, ...]
    links: dict[str, Link]
    _paths: dict[tuple[str, str], tuple[str, ...]] = field(
        default_factory=dict, repr=False
    )

    def __post_init__(self):
        self.validate()
        self._build_paths()

    def validate(self) -> None:
        for n in self.nodes.values():
            n.validate()
        for l in self.links.values():
            l.validate()
        verts = set(self.nodes) | set(self.switches)
        if len(verts) != len(self.nodes) + len(self.switches):
            raise ValueError("node and switch ids overlap")
        for l in self.links.values():
            if l.a not in verts or l.b not in verts:
                raise ValueError(f"link {l.link_id} references unknown endpoint")
        # tree: connected with |E| = |V| - 1
        if len(self.links) != len(verts) - 1:
            raise ValueError("topology is not a tree (edge count)")
        adj = self._adjacency()
        seen = set()
        stack = [next(iter(verts))]
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            for _, other in adj.get(v, ()):
                if other not in seen:
                    stack.append(other)
        if seen != verts:
            raise ValueError("topology is not connected")
        for l in self.links.values():
            node_ends = (l.a in self.nodes) + (l.b in self.nodes)
            if l.tier == TIER_ACCESS and node_ends != 1:
                raise ValueError(f"access link {l.link_id} must join node to switch")
            if l.tier != TIER_ACCESS and node_ends != 0:
                raise ValueError(f"{l.tier} link {l.link_id} must join switches")

    def _adjacency(self) -> dict[str, list[tuple[str, str]]]:
        adj: dict[str, list[tuple[str, str]]] = {}
        for l in sorted(self.links.values(), key=lambda x: x.link_id):
            adj.setdefault(l.a, []).append((l.link_id, l.b))
            adj.setdefault(l.b, []).append((l.link_id, l.a))
        return adj

    def _build_paths(self) -> None:
        adj = self._adjacency()
        node_ids = sorted(self.nodes)
        for src in node_ids:
            # BFS from src over the tree; record link paths to every node
            prev: dict[str, tuple[str, str]] = {}
            seen = {src}
            queue = [src]
            while queue:
                v = queue.pop(0)
                for link_id, other in adj.get(v, ()):
                    if other in seen:
                        continue
                    seen.add(other)
                    prev[other] = (v, link_id)
                    queue.append(other)
            for dst in node_ids:
                if dst == src:
                    continue
                hops = []
                v = dst
                while v != src:
                    p, link_id = prev[v]
                    hops.append(link_id)
                    v = p
                self._paths[(src, dst)] = tuple(reversed(hops))

    def path_links(self, src: str, dst: str) -> tuple[str, ...]:
        if src not in self.nodes or dst not in self.nodes:
            raise ValueError(f"unknown node in pair ({src}, {dst})")
        if src == dst:
            raise ValueError("src and dst must differ")
        return self._paths[(src, dst)]

    def same_building(self, a: str, b: str) -> bool:
        return self.nodes[a].building_id == self.nodes[b].building_id

    def buildings(self) -> list[str]:
        return sorted({n.building_id for n in self.nodes.values()})

    def access_link_of(self, node_id: str) -> str:
        for l in self.links.values():
            if l.tier == TIER_ACCESS and node_id in (l.a, l.b):
                return l.link_id
        raise ValueError(f"node {node_id} has no access link")


def bottleneck_bandwidth(topo: Topology, traces, src: str, dst: str, t: float) -> float:
    """Minimum available bandwidth over the unique src->dst path at time t.

    `traces` is any object exposing avail(link_id, t) in bytes/s.
    """
    path = topo.path_links(src, dst)
    return min(traces.avail(link_id, t) for link_id in path)


def migration_time(payload_bytes: float, bottleneck_bytes_per_s: float,
                   restart_s: float) -> float:
    """Transfer plus restart time: C / bw_bottleneck + T_r."""
    if payload_bytes < 0:
        raise ValueError("payload_bytes must be >= 0")
    if bottleneck_bytes_per_s <= 0:
        raise ValueError("bottleneck bandwidth must be positive")
    if restart_s < 0:
        raise ValueError("restart_s must be >= 0")
    return payload_bytes / bottleneck_bytes_per_s + restart_s


@dataclass(frozen=True)
class TopologyParams:
    """Knobs for the synthetic campus generator."""

    buildings: int = 4
    nodes_per_building: int = 5
    access_per_building: int = 2
    access_capacity: float = 125e6        # 1 Gbps
    dist_capacity: float = 1.25e9         # 10 Gbps
    core_capacity: float = 1.25e9         # 10 Gbps
    vram_choices: tuple = (16e9, 24e9, 48e9, 80e9)
    cuda_choices: tuple = (7.0, 7.5, 8.0, 8.6, 9.0)
    write_speed_choices: tuple = (150e6, 400e6, 1.1e9)
    shared_hazard_profile: bool = False

    def validate(self) -> None:
        if self.buildings < 1 or self.nodes_per_building < 1:
            raise ValueError("buildings and nodes_per_building must be >= 1")
        if self.access_per_building < 1:
            raise ValueError("access_per_building must be >= 1")
        if min(self.access_capacity, self.dist_capacity, self.core_capacity) <= 0:
            raise ValueError("link capacities must be positive")


def gen_topology(params: TopologyParams, seed: int) -> Topology:
    """Generate a three-tier campus tree with randomized node specs."""
    params.validate()
    rng = substream(seed, "topology")
    nodes: dict[str, NodeSpec] = {}
    switches: list[str] = []
    links: dict[str, Link] = {}

    core = "core"
    switches.append(core)
    for b in range(params.buildings):
        bld = f"b{b}"
        dist = f"{bld}-dist"
        switches.append(dist)
        links[f"l-{dist}"] = Link(f"l-{dist}", dist, core, TIER_CORE,
                                  params.core_capacity)
        accs = []
        for a in range(params.access_per_building):
            acc = f"{bld}-acc{a}"
            switches.append(acc)
            accs.append(acc)
            links[f"l-{acc}"] = Link(f"l-{acc}", acc, dist, TIER_DIST,
                                     params.dist_capacity)
        for i in range(params.nodes_per_building):
            nid = f"{bld}-n{i:02d}"
            acc = accs[i % len(accs)]
            vram = float(rng.choice(np.asarray(params.vram_choices)))
            cuda = float(rng.choice(np.asarray(params.cuda_choices)))
            wspeed = float(rng.choice(np.asarray(params.write_speed_choices)))
            profile = "hz-campus" if params.shared_hazard_profile else f"hz-{nid}"
            nodes[nid] = NodeSpec(
                node_id=nid, building_id=bld, vram_bytes=int(vram),
                cuda_capability=cuda, load=0.0,
                write_speed_bytes_per_s=wspeed, hazard_profile_id=profile,
            )
            links[f"l-{nid}"] = Link(f"l-{nid}", nid, acc, TIER_ACCESS,
                                     params.access_capacity)

    return Topology(nodes=nodes, switches=tuple(switches), links=links)
