import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from sdnlb.allocator import (
    LinkAllocState,
    allocate_rates,
    brute_force_optimum,
    compute_k,
    compute_request,
    cost_g,
    exact_cost_g,
    level_l,
    maxweight_allocate,
    maxweight_vector,
    packet_fill,
    problem_cost,
    round_half_up,
    x_max,
    _fill_bulk,
    _fill_loop,
)


def naive_optimum(ql, qn, z, budget, k):
    """Plain enumeration with Fractions, written without any of the package helpers."""
    k = Fraction(k)
    best = None
    for vec in itertools.product(range(budget + 1), repeat=len(ql)):
        if sum(vec) > budget:
            continue
        val = sum(v * (b - a) + k / 2 * (v - Fraction(c) / k) ** 2 for v, a, b, c in zip(vec, ql, qn, z))
        if best is None or val < best[0]:
            best = (val, vec)
    return best


@st.composite
def link_states(draw, max_comm=4, max_budget=12, max_q=50, Ks=(1, 2, 10)):
    n = draw(st.integers(1, max_comm))
    budget = draw(st.integers(0, max_budget))
    ql = draw(st.lists(st.integers(0, max_q), min_size=n, max_size=n))
    qn = draw(st.lists(st.integers(0, max_q), min_size=n, max_size=n))
    prev = [0] * n
    left = budget
    for i in range(n):
        prev[i] = draw(st.integers(0, left))
        left -= prev[i]
    K = draw(st.sampled_from(Ks))
    return LinkAllocState.from_lists(ql, qn, prev, budget, K)


# --- spec examples -------------------------------------------------------------

def test_request_examples():
    s = LinkAllocState.from_lists([30, 5], [0, 9], [0, 2], 10)
    assert compute_request(s) == {1: 30, 2: -2}


def test_request_line_snapshot():
    # three switches in a line, weights 0,1 on the first link and 3,1 on the second
    first = LinkAllocState.from_lists([2, 3], [2, 2], [0, 0], 3)
    second = LinkAllocState.from_lists([3, 2], [0, 1], [0, 0], 3)
    assert compute_request(first) == {1: 0, 2: 1}
    assert compute_request(second) == {1: 3, 2: 1}


def test_compute_k_examples():
    assert compute_k({1: 30, 2: 60}, 30, 10) == 3
    assert compute_k({1: -4, 2: 0}, 30, 10) == 1
    assert compute_k({1: 600}, 30, 10) == 10
    with pytest.raises(ValueError):
        compute_k({1: 1}, 0, 10)


def test_x_max_examples():
    assert x_max(10, 3, 2, 2) == 5
    assert x_max(3, 7, 0, 1) == 0
    assert x_max(30, 0, 0, 3) == 10


def test_round_half_up():
    assert round_half_up(4.5) == 5
    assert round_half_up(0) == 0
    assert round_half_up(3.49) == 3
    assert round_half_up(Fraction(5, 2)) == 3


def test_allocate_wfq_branch():
    a = allocate_rates(LinkAllocState.from_lists([30, 60], [0, 0], [0, 0], 30, 10))
    assert a.k_used == 3 and a.rates == {1: 10, 2: 20}
    assert not a.used_packet_fill


def test_allocate_nothing_requested():
    a = allocate_rates(LinkAllocState.from_lists([1, 0], [4, 0], [0, 0], 10, 10))
    assert a.rates == {1: 0, 2: 0} and a.k_used == 1


def test_allocate_packet_fill_branch():
    s = LinkAllocState.from_lists([9, 1], [0, 0], [0, 0], 4, K=1)
    a = allocate_rates(s)
    assert a.used_packet_fill and a.k_used == 1
    assert a.rates == {1: 4, 2: 0}
    assert a.objective == -28
    assert problem_cost(s, {1: 3, 2: 1}, 1) == -23


def test_packet_fill_without_fairness():
    s = LinkAllocState.from_lists([2, 0, 4, 9], [0, 0, 0, 0], [0, 0, 0, 0], 9, K=1)
    assert packet_fill(s, 1).vector(s.commodities) == [0, 0, 2, 7]
    assert packet_fill(s, 1, accelerated=False).vector(s.commodities) == [0, 0, 2, 7]
    val, vec = naive_optimum([2, 0, 4, 9], [0] * 4, [0] * 4, 9, 1)
    assert vec == (0, 0, 2, 7) and val == packet_fill(s, 1).objective


def test_packet_fill_single():
    s = LinkAllocState.from_lists([5], [0], [0], 3, K=1)
    assert packet_fill(s, 1).rates == {1: 3}


def test_oracle_examples():
    assert brute_force_optimum(LinkAllocState.from_lists([3, 4], [0, 0], [0, 0], 0), 1) == (0, {1: 0, 2: 0})
    s = LinkAllocState.from_lists([30, 60], [0, 0], [0, 0], 30, 10)
    with pytest.raises(ValueError):
        brute_force_optimum(s, 3)  # budget 30 is past the guard
    small = LinkAllocState.from_lists([3, 6], [0, 0], [0, 0], 3, 10)
    assert brute_force_optimum(small, 3)[1] == {1: 1, 2: 2}
    obj, rates = brute_force_optimum(LinkAllocState.from_lists([9, 1], [0, 0], [0, 0], 4, 1), 1)
    assert obj == -28 and rates == {1: 4, 2: 0}


def test_cost_examples():
    assert cost_g(0, 5, 2, 0, 3) == 0
    assert cost_g(4, 9, 0, 0, 1) == -28


def test_maxweight_examples():
    first = LinkAllocState.from_lists([2, 3], [2, 2], [0, 0], 3)
    second = LinkAllocState.from_lists([3, 2], [0, 1], [0, 0], 3)
    assert maxweight_allocate(first).rates == {1: 0, 2: 3}
    assert maxweight_allocate(second).rates == {1: 3, 2: 0}
    assert maxweight_allocate(second).k_used is None
    neg = LinkAllocState.from_lists([0, 1], [5, 4], [0, 0], 3)
    assert maxweight_allocate(neg).rates == {1: 0, 2: 0}
    tie = LinkAllocState((7, 3), {7: 3, 3: 3}, {}, {}, 6)
    assert maxweight_allocate(tie).rates == {3: 6, 7: 0}
    assert maxweight_vector([3, 3], 6) == [6, 0]


def test_state_validation():
    with pytest.raises(ValueError):
        LinkAllocState.from_lists([1], [0], [5], 4)
    with pytest.raises(ValueError):
        LinkAllocState.from_lists([-1], [0], [0], 4)
    with pytest.raises(ValueError):
        LinkAllocState.from_lists([1], [0], [0], 4, K=0.5)


# --- properties -----------------------------------------------------------------

@settings(max_examples=300, deadline=None)
@given(link_states(max_comm=3, max_budget=8, max_q=20))
def test_package_oracle_matches_naive_enumeration(s):
    k = compute_k(compute_request(s), s.budget, s.K) if s.budget else Fraction(1)
    ql, qn, z = s.vectors()
    val, vec = naive_optimum(ql, qn, z, s.budget, k)
    obj, rates = brute_force_optimum(s, k)
    assert obj == val
    assert tuple(rates[d] for d in s.commodities) == vec


@settings(max_examples=400, deadline=None)
@given(link_states())
def test_algorithm_is_optimal(s):
    a = allocate_rates(s)
    k = a.k_exact
    obj, _ = brute_force_optimum(s, k)
    assert problem_cost(s, a.rates, k) == obj
    assert abs(a.objective - float(obj)) <= 1e-9 * max(1.0, abs(float(obj)))


@settings(max_examples=400, deadline=None)
@given(link_states(max_comm=6, max_budget=200, max_q=2000, Ks=(1, 1.5, 2, 10)))
def test_allocation_feasible_and_capped(s):
    a = allocate_rates(s)
    assert sum(a.rates.values()) <= s.budget
    assert all(v >= 0 and int(v) == v for v in a.rates.values())
    assert 1 <= a.k_used <= s.K
    for d in s.commodities:
        assert a.rates[d] <= x_max(s.q_local[d], s.q_next[d], s.prev_alloc[d], a.k_exact)
    if a.used_packet_fill:
        assert sum(a.rates.values()) == s.budget


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(-60, 300), min_size=1, max_size=7), st.integers(1, 9), st.integers(1, 9),
       st.integers(0, 150))
def test_bulk_fill_matches_unit_loop(y, p, q, budget):
    assert _fill_bulk(y, p, q, budget) == _fill_loop(y, p, q, budget)


@settings(max_examples=200, deadline=None)
@given(link_states(max_comm=5, max_budget=60, max_q=200))
def test_order_independent(s):
    ids = list(s.commodities)
    rev = LinkAllocState(tuple(reversed(ids)), dict(s.q_local), dict(s.q_next), dict(s.prev_alloc), s.budget, s.K)
    assert allocate_rates(rev) == allocate_rates(s)
    assert maxweight_allocate(rev) == maxweight_allocate(s)


@settings(max_examples=200, deadline=None)
@given(link_states(max_comm=5, max_budget=60, max_q=200), st.integers(2, 7))
def test_maxweight_scale_invariant(s, m):
    scaled = LinkAllocState(s.commodities, {d: m * v for d, v in s.q_local.items()},
                            {d: m * v for d, v in s.q_next.items()}, s.prev_alloc, s.budget, s.K)
    assert maxweight_allocate(scaled).rates == maxweight_allocate(s).rates


small = st.integers(0, 80)
ks = st.fractions(min_value=Fraction(1, 4), max_value=10, max_denominator=50)


@settings(max_examples=500)
@given(st.integers(0, 40), small, small, small, ks)
def test_cost_difference_identity(v, a, b, z, k):
    diff = exact_cost_g(v + 1, a, b, z, k) - exact_cost_g(v, a, b, z, k)
    assert diff == -(a - b + z - k / 2 - k * v)
    nxt = exact_cost_g(v + 2, a, b, z, k) - exact_cost_g(v + 1, a, b, z, k)
    assert nxt > diff


@settings(max_examples=10_000)
@given(st.integers(0, 30), st.integers(0, 30), small, small, small, small, small, small,
       st.floats(0.25, 10, allow_nan=False))
def test_exchange_identity(vd, ve, ad, bd, zd, ae, be, ze, k):
    lhs = (cost_g(vd + 1, ad, bd, zd, k) + cost_g(ve, ae, be, ze, k)
           - cost_g(vd, ad, bd, zd, k) - cost_g(ve + 1, ae, be, ze, k))
    rhs = -level_l(vd, ad, bd, zd, k) + level_l(ve, ae, be, ze, k)
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(lhs), abs(rhs))


@given(st.integers(0, 30), small, small, small, ks)
def test_equal_levels_swap_neutral(v, a, b, z, k):
    # a second commodity with the same unfulfilled level
    shift = 3
    ve, ae = v, a + shift
    be = b + shift
    assert level_l(v, a, b, z, k) == level_l(ve, ae, be, z, k)
    lhs = exact_cost_g(v + 1, a, b, z, k) + exact_cost_g(ve, ae, be, z, k)
    rhs = exact_cost_g(v, a, b, z, k) + exact_cost_g(ve + 1, ae, be, z, k)
    assert lhs == rhs


def test_level_at_zero_is_request():
    assert level_l(0, 12, 5, 3, 2) == 10
