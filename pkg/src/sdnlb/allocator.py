"""Per-link integer rate allocation kernels.

Everything here is a pure function of one link's snapshot.  The fairness
scalar ``k`` is always rational (1, K, or a request total over the budget), so
it is carried as a :class:`~fractions.Fraction` and all level comparisons are
done on integers scaled by its denominator.  That keeps the greedy argmax and
the exhaustive oracle free of floating-point ties.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class LinkAllocState:
    """Snapshot of link (i, j) at a reconfiguration time."""

    commodities: Tuple[int, ...]
    q_local: Mapping[int, int]
    q_next: Mapping[int, int]
    prev_alloc: Mapping[int, int]
    budget: int
    K: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "commodities", tuple(sorted(self.commodities)))
        for d in self.commodities:
            for name, m in (("q_local", self.q_local), ("q_next", self.q_next), ("prev_alloc", self.prev_alloc)):
                v = m.get(d, 0)
                if v < 0 or int(v) != v:
                    raise ValueError(f"{name}[{d}] must be a non-negative integer, got {v}")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if sum(self.prev_alloc.get(d, 0) for d in self.commodities) > self.budget:
            raise ValueError("previous allocation exceeds the budget")
        if self.K < 1:
            raise ValueError("K must be >= 1")

    @classmethod
    def from_lists(cls, q_local, q_next, prev_alloc, budget, K=10.0, commodities=None):
        ids = tuple(commodities) if commodities is not None else tuple(range(1, len(q_local) + 1))
        return cls(ids, dict(zip(ids, q_local)), dict(zip(ids, q_next)), dict(zip(ids, prev_alloc)), budget, K)

    def vectors(self):
        c = self.commodities
        return ([self.q_local.get(d, 0) for d in c], [self.q_next.get(d, 0) for d in c],
                [self.prev_alloc.get(d, 0) for d in c])


@dataclass(frozen=True)
class Allocation:
    rates: Dict[int, int]
    k_used: Optional[float]
    objective: float
    k_exact: Optional[Fraction] = field(default=None, compare=False)
    used_packet_fill: bool = field(default=False, compare=False)

    def vector(self, commodities: Iterable[int]) -> List[int]:
        return [self.rates.get(d, 0) for d in commodities]


# --- scalar helpers -------------------------------------------------------------

def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(str(x))


def round_half_up(x) -> int:
    """Nearest integer, halves rounded up: floor(x + 1/2)."""
    return math.floor(as_fraction(x) + Fraction(1, 2))


def compute_request(state: LinkAllocState) -> Dict[int, int]:
    return {d: state.q_local.get(d, 0) - state.q_next.get(d, 0) + state.prev_alloc.get(d, 0)
            for d in state.commodities}


def compute_k(request: Mapping[int, int], budget: int, K) -> Fraction:
    """Clamp of (sum of positive requests) / budget into [1, K]."""
    if budget <= 0:
        raise ValueError("compute_k: zero budget; a zero-capacity link must carry no commodities")
    total = sum(max(0, y) for y in request.values())
    return min(as_fraction(K), max(Fraction(1), Fraction(total, budget)))


def x_max(q_local: int, q_next: int, prev: int, k) -> int:
    k = as_fraction(k)
    if k <= 0:
        raise ValueError("k must be positive")
    return _cap(q_local - q_next + prev, k.numerator, k.denominator)


def _cap(y: int, p: int, q: int) -> int:
    # round_half_up(max(y, 0) / (p/q)) in integers
    if y <= 0:
        return 0
    return (2 * y * q + p) // (2 * p)


def cost_g(v: int, q_local: int, q_next: int, prev: int, k) -> float:
    """Per-commodity share of the link objective for v allocated units."""
    return float(exact_cost_g(v, q_local, q_next, prev, as_fraction(k)))


def exact_cost_g(v: int, q_local: int, q_next: int, prev: int, k: Fraction) -> Fraction:
    return v * (q_next - q_local) + k / 2 * (v - prev / k) ** 2


def level_l(v: int, q_local: int, q_next: int, prev: int, k) -> float:
    return float(q_local - q_next + prev - as_fraction(k) * v)


def problem_cost(state: LinkAllocState, rates: Mapping[int, int], k) -> Fraction:
    """Exact value of the link objective at ``rates`` for fairness scalar ``k``."""
    k = as_fraction(k)
    return sum((exact_cost_g(rates.get(d, 0), state.q_local.get(d, 0), state.q_next.get(d, 0),
                             state.prev_alloc.get(d, 0), k) for d in state.commodities), Fraction(0))


# --- packet filling -------------------------------------------------------------

def _fill_loop(y: Sequence[int], p: int, q: int, budget: int) -> List[int]:
    # scaled level of the next unit for commodity n: y[n]*q - p*v[n]
    v = [0] * len(y)
    lv = [yy * q for yy in y]
    for _ in range(budget):
        best = 0
        for n in range(1, len(y)):
            if lv[n] > lv[best]:
                best = n
        v[best] += 1
        lv[best] -= p
    return v


def _fill_bulk(y: Sequence[int], p: int, q: int, budget: int) -> List[int]:
    """Same result as :func:`_fill_loop`, found by a threshold search on scaled levels."""
    n = len(y)
    if n == 0 or budget == 0:
        return [0] * n
    top = [yy * q for yy in y]

    def above(lam: int) -> int:
        # units whose scaled level is strictly greater than lam
        return sum(max(0, -((lam - t) // p)) for t in top)

    # smallest integer lam with above(lam) <= budget
    hi = max(top)
    lo = min(top) - p * (budget // n + 1)
    while above(lo) <= budget:
        lo -= p * (budget + 1)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if above(mid) <= budget:
            hi = mid
        else:
            lo = mid
    lam = hi
    v = [max(0, -((lam - t) // p)) for t in top]
    rest = budget - sum(v)
    # remaining units all sit exactly at level lam; lowest id first
    for idx in range(n):
        if rest == 0:
            break
        if top[idx] - p * v[idx] == lam:
            v[idx] += 1
            rest -= 1
    assert rest == 0
    return v


def packet_fill(state: LinkAllocState, k, accelerated: bool = True) -> Allocation:
    """Greedy unit-by-unit filling: every unit goes to the highest unfulfilled level."""
    k = as_fraction(k)
    if k <= 0:
        raise ValueError("k must be positive")
    y = list(compute_request(state).values())
    fill = _fill_bulk if accelerated else _fill_loop
    v = fill(y, k.numerator, k.denominator, state.budget)
    rates = dict(zip(state.commodities, v))
    return Allocation(rates, float(k), float(problem_cost(state, rates, k)), k, True)


def allocate_rates(state: LinkAllocState, accelerated: bool = True) -> Allocation:
    """Throughput-optimal allocation for one link and one interval."""
    y = compute_request(state)
    if state.budget == 0 or not state.commodities:
        rates = {d: 0 for d in state.commodities}
        return Allocation(rates, 1.0, float(problem_cost(state, rates, 1)), Fraction(1))
    k = compute_k(y, state.budget, state.K)
    vals = list(y.values())
    v, filled = _allocate_vector(vals, state.budget, k, accelerated)
    rates = dict(zip(state.commodities, v))
    return Allocation(rates, float(k), float(problem_cost(state, rates, k)), k, filled)


def _allocate_vector(y: Sequence[int], budget: int, k: Fraction, accelerated: bool = True):
    p, q = k.numerator, k.denominator
    caps = [_cap(yy, p, q) for yy in y]
    if sum(caps) <= budget:
        return caps, False
    fill = _fill_bulk if accelerated else _fill_loop
    return fill(y, p, q, budget), True


def allocate_vector(y: Sequence[int], budget: int, K: Fraction) -> Tuple[List[int], Fraction]:
    """Fast path used by the simulator: requests in, (rates, k) out."""
    if budget <= 0:
        return [0] * len(y), Fraction(1)
    total = 0
    for yy in y:
        if yy > 0:
            total += yy
    k = Fraction(total, budget)
    if k < 1:
        k = Fraction(1)
    elif k > K:
        k = K
    return _allocate_vector(y, budget, k)[0], k


# --- exhaustive oracle ----------------------------------------------------------

MAX_ORACLE_COMMODITIES = 5
MAX_ORACLE_BUDGET = 15


def _scaled_tables(state: LinkAllocState, k: Fraction) -> np.ndarray:
    # 2*p*q * g(v) = 2*p*q*v*(qn - ql) + (p*v - q*z)^2, an integer; same argmin as g
    p, q = k.numerator, k.denominator
    ql, qn, z = state.vectors()
    vs = np.arange(state.budget + 1, dtype=object)
    rows = [2 * p * q * vs * (b - a) + (p * vs - q * c) ** 2 for a, b, c in zip(ql, qn, z)]
    return np.array(rows, dtype=object), 2 * p * q


def brute_force_optimum(state: LinkAllocState, k) -> Tuple[Fraction, Dict[int, int]]:
    """Enumerate every feasible integer allocation; return (exact objective, minimiser).

    Ties go to the lexicographically smallest rate vector (commodities sorted by id).
    """
    n, B = len(state.commodities), state.budget
    if n > MAX_ORACLE_COMMODITIES or B > MAX_ORACLE_BUDGET:
        raise ValueError(f"oracle guard: {n} commodities / budget {B} is too large to enumerate")
    k = as_fraction(k)
    if n == 0:
        return Fraction(0), {}
    tables, scale = _scaled_tables(state, k)
    try:
        tab = tables.astype(np.int64)
        if np.abs(tab).max() > 2 ** 55 // max(n, 1):
            raise OverflowError
    except OverflowError:
        tab = None
    if tab is not None:
        grid = np.zeros((B + 1,) * n, dtype=np.int64)
        used = np.zeros((B + 1,) * n, dtype=np.int64)
        for axis in range(n):
            shape = [1] * n
            shape[axis] = B + 1
            grid = grid + tab[axis].reshape(shape)
            used = used + np.arange(B + 1).reshape(shape)
        grid = np.where(used <= B, grid, np.iinfo(np.int64).max)
        flat = int(np.argmin(grid))  # first minimum in C order == lexicographically smallest
        best = np.unravel_index(flat, grid.shape)
        best_val = int(grid[best])
        rates = {d: int(v) for d, v in zip(state.commodities, best)}
    else:
        best_val, best_vec = None, None
        for vec in itertools.product(range(B + 1), repeat=n):
            if sum(vec) > B:
                continue
            val = sum(tables[a][b] for a, b in enumerate(vec))
            if best_val is None or val < best_val:
                best_val, best_vec = val, vec
        rates = dict(zip(state.commodities, best_vec))
    return Fraction(best_val, scale), rates


# --- MaxWeight ------------------------------------------------------------------

def maxweight_allocate(state: LinkAllocState) -> Allocation:
    """Whole budget to the commodity with the largest positive differential backlog."""
    best, best_w = None, 0
    for d in state.commodities:
        w = state.q_local.get(d, 0) - state.q_next.get(d, 0)
        if w > best_w:
            best, best_w = d, w
    rates = {d: 0 for d in state.commodities}
    if best is not None:
        rates[best] = state.budget
    obj = sum(rates[d] * (state.q_next.get(d, 0) - state.q_local.get(d, 0)) for d in state.commodities)
    return Allocation(rates, None, float(obj))


def maxweight_vector(w: Sequence[int], budget: int) -> List[int]:
    out = [0] * len(w)
    best, best_w = -1, 0
    for n, ww in enumerate(w):
        if ww > best_w:
            best, best_w = n, ww
    if best >= 0:
        out[best] = budget
    return out
