"""Per-switch building blocks of the practical load balancer.

Switches keep one queue per (output port, commodity).  The common queue of a
commodity is approximated by the sum of its port queues, neighbours learn each
other's approximation from a field piggybacked on data packets, each port runs
weighted fair queueing with weights built from those numbers, and flows are
split over next hops by hashing into ranges sized by a max-min water-fill.
"""

from __future__ import annotations

import bisect
import itertools
import math
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

MASK64 = (1 << 64) - 1
HASH_SPACE = 1 << 64


def approx_queue(port_queues: Mapping[Tuple[int, int, int], int], i: int, d: int, hops: Iterable[int]) -> int:
    """Sum of commodity-d port backlogs at switch i over its next hops."""
    return sum(port_queues.get((i, j, d), 0) for j in hops)


class PiggybackRotation:
    """Round-robin choice of which commodity's queue info rides on the next packet of a link."""

    def __init__(self, commodities: Iterable[int]):
        self.order = tuple(sorted(commodities))
        self.pos = 0

    def select(self) -> int:
        if not self.order:
            raise ValueError("no commodities to report on this link")
        d = self.order[self.pos]
        self.pos = (self.pos + 1) % len(self.order)
        return d


def piggyback_select(order: Sequence[int], step: int) -> int:
    """Commodity carried by the ``step``-th packet (0-based) on a link with report set ``order``."""
    return sorted(order)[step % len(order)]


def update_queue_info(ema: float, q: int, beta: float = 0.125) -> Tuple[float, int]:
    """One EMA step; returns the new average and the rounded value written into headers."""
    ema = (1.0 - beta) * ema + beta * q
    return ema, math.floor(ema + 0.5)


def wfq_weights(q_approx: Mapping[int, int], memory: Mapping[int, int], rate_prev: Mapping[int, int],
                alpha: float, commodities: Iterable[int]) -> Dict[int, float]:
    """max(1, Q~ - M + r/alpha) for every commodity using the port."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return {d: max(1.0, q_approx.get(d, 0) - memory.get(d, 0) + rate_prev.get(d, 0) / alpha)
            for d in sorted(commodities)}


def weight_shares(weights: Mapping[int, float]) -> Dict[int, float]:
    total = sum(weights.values())
    return {d: w / total for d, w in weights.items()} if total > 0 else {d: 0.0 for d in weights}


# --- max-min split ------------------------------------------------------------

def _split_loop(levels: Sequence[int], budget: int) -> List[int]:
    s = [0] * len(levels)
    cur = list(levels)
    for _ in range(budget):
        j = min(range(len(cur)), key=lambda n: (cur[n], n))
        s[j] += 1
        cur[j] += 1
    return s


def _split_bulk(levels: Sequence[int], budget: int) -> List[int]:
    n = len(levels)
    if budget == 0:
        return [0] * n

    def need(lam: int) -> int:
        return sum(max(0, lam - l) for l in levels)

    lo, hi = min(levels), min(levels) + budget + 1  # need(lo) == 0 <= budget < need(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if need(mid) <= budget:
            lo = mid
        else:
            hi = mid
    s = [max(0, lo - l) for l in levels]
    rest = budget - sum(s)
    for j in range(n):
        if rest == 0:
            break
        if levels[j] + s[j] == lo:
            s[j] += 1
            rest -= 1
    return s


def solve_split(q: Sequence[int], r: Sequence[int], accelerated: bool = True) -> List[int]:
    """Integer split s of sum(r) over next hops maximising min_j (q_j - r_j + s_j).

    Hops are given in ascending id order; units at equal level go to the lowest id.
    """
    if len(q) != len(r) or not q:
        raise ValueError("need one backlog and one rate per next hop")
    levels = [a - b for a, b in zip(q, r)]
    fill = _split_bulk if accelerated else _split_loop
    return fill(levels, sum(r))


def split_level(q: Sequence[int], r: Sequence[int], s: Sequence[int]) -> int:
    return min(a - b + c for a, b, c in zip(q, r, s))


def brute_force_split(q: Sequence[int], r: Sequence[int]) -> int:
    """Best achievable min level, by enumerating every integer split."""
    n, budget = len(q), sum(r)
    if n > 3 or budget > 12:
        raise ValueError(f"split oracle guard: {n} hops / total {budget} is too large")
    best = None
    for s in itertools.product(range(budget + 1), repeat=n):
        if sum(s) == budget:
            v = split_level(q, r, s)
            best = v if best is None else max(best, v)
    return best


def split_fractions(s: Mapping[int, int]) -> Dict[int, Fraction]:
    total = sum(s.values())
    if total == 0:
        return {j: Fraction(1, len(s)) for j in s}
    return {j: Fraction(v, total) for j, v in s.items()}


# --- hashing ------------------------------------------------------------------

def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def switch_hash(hash_field: int, switch: int) -> int:
    """Per-switch remix of a packet's hash field so consecutive hops split independently."""
    return splitmix64(hash_field ^ ((switch * 0x9E3779B97F4A7C15) & MASK64))


def range_bounds(fractions: Mapping[int, object]) -> Tuple[List[int], List[int]]:
    """(hops in ascending id, exclusive upper bounds of their hash ranges)."""
    hops = sorted(fractions)
    fr = [Fraction(fractions[j]) for j in hops]
    total = sum(fr)
    if total <= 0 or any(f < 0 for f in fr):
        raise ValueError("fractions must be non-negative with a positive sum")
    bounds, acc = [], Fraction(0)
    for f in fr:
        acc += f
        bounds.append(int(acc / total * HASH_SPACE))
    bounds[-1] = HASH_SPACE
    return hops, bounds


def route_by_bounds(hops: Sequence[int], bounds: Sequence[int], h: int) -> int:
    return hops[bisect.bisect_right(bounds, h)]


def hash_route(hash_field: int, fractions: Mapping[int, object]) -> int:
    """Next hop whose contiguous share of the 64-bit hash space contains ``hash_field``."""
    if abs(float(sum(Fraction(v) for v in fractions.values())) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    hops, bounds = range_bounds(fractions)
    return route_by_bounds(hops, bounds, hash_field & MASK64)


def ecmp_route(hash_field: int, hops: Iterable[int]) -> int:
    hs = sorted(hops)
    if not hs:
        raise ValueError("no next hop available")
    return hash_route(hash_field, {j: Fraction(1, len(hs)) for j in hs})
