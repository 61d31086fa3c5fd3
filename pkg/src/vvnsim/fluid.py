"""Progressive-filling max-min fair allocation over a set of shared links."""

from __future__ import annotations

import math


def max_min_fill(caps: dict[str, float], link_avail: dict[str, float],
                 membership: dict[str, tuple[str, ...]],
                 weights: dict[str, float] | None = None) -> dict[str, float]:
    """(Weighted) max-min fair rates for flows with caps on shared links.

    caps: flow -> maximum useful rate (math.inf allowed).
    link_avail: link -> available capacity (>= 0).
    membership: flow -> links it crosses (may be empty: flow only cap-bound).
    weights: flow -> fair-share weight (default 1); a flow with weight w
    grows w times faster than a weight-1 flow, which models bulk transfers
    striped over w parallel connections.

    A flow freezes when it hits its own cap or when a link it crosses is
    exhausted. Runs in at most len(caps) + len(link_avail) rounds.
    """
    rates = {f: 0.0 for f in caps}
    if not caps:
        return rates
    w = {f: 1.0 for f in caps}
    if weights:
        for f, wt in weights.items():
            if f in w:
                if wt <= 0:
                    raise ValueError(f"flow {f}: weight must be positive")
                w[f] = wt
    for f, links in membership.items():
        for l in links:
            if l not in link_avail:
                raise KeyError(f"flow {f} references unknown link {l}")
    remaining = {l: max(0.0, a) for l, a in link_avail.items()}
    active = {f for f, c in caps.items() if c > 0}
    for _ in range(len(caps) + len(link_avail) + 1):
        if not active:
            break
        wsum: dict[str, float] = {}
        for f in active:
            for l in membership.get(f, ()):
                wsum[l] = wsum.get(l, 0.0) + w[f]
        # common growth of the fair-share level; rate_f = w_f * level
        inc = math.inf
        for l, ws in wsum.items():
            inc = min(inc, remaining[l] / ws)
        for f in active:
            inc = min(inc, (caps[f] - rates[f]) / w[f])
        if not math.isfinite(inc):
            raise ValueError("unbounded allocation: infinite cap off-link")
        inc = max(inc, 0.0)
        for f in active:
            rates[f] += inc * w[f]
            for l in membership.get(f, ()):
                remaining[l] -= inc * w[f]
        newly_frozen = set()
        for f in active:
            cap_scale = caps[f] if math.isfinite(caps[f]) else 1.0
            if rates[f] >= caps[f] - 1e-9 * max(1.0, cap_scale):
                newly_frozen.add(f)
                continue
            for l in membership.get(f, ()):
                if remaining[l] <= 1e-9 * max(1.0, link_avail[l]):
                    newly_frozen.add(f)
                    break
        if not newly_frozen and inc <= 0:
            break
        active -= newly_frozen
    return rates
