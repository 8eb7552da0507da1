"""Slotted-time simulator for the ideal (common per-commodity queue) model.

Within a slot the order is: schedule per-link services from the token
buckets, remove served packets from the sending queues (lowest next-hop id
first when a queue cannot cover all of its links), apply destination
departures to what is left of the old backlog, then add delivered packets and
exogenous arrivals.  Delivered packets become servable in the next slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import allocator
from .model import ArrivalLaw, ArrivalSpec, ScenarioConfig, Topology, derive_sets

RNG_NAME = "numpy-pcg64/seedsequence-v1"
TRACE_MODES = ("none", "decimated", "full")


class NetIndex:
    """Integer indexing of switches, commodities, links and (link, commodity) pairs."""

    def __init__(self, topology: Topology):
        self.topology = topology
        self.nodes = sorted(topology.switches)
        self.comms = sorted(topology.destinations)
        self.nid = {s: n for n, s in enumerate(self.nodes)}
        self.cid = {d: n for n, d in enumerate(self.comms)}
        M = len(self.comms)
        self.nq = len(self.nodes) * M
        derived = derive_sets(topology)
        self.derived = derived
        self.links: List[Tuple[int, int]] = sorted(l for l, ds in derived.link_commodities.items() if ds)
        for (i, j) in self.links:
            if topology.capacity(i, j) <= 0:
                raise ValueError(f"link ({i},{j}) carries commodities but has zero capacity")
        self.link_cap = np.array([topology.capacity(i, j) for i, j in self.links], dtype=np.int64)
        pl, pc, ps, pd = [], [], [], []
        starts = []
        for l, (i, j) in enumerate(self.links):
            starts.append(len(pl))
            for d in sorted(derived.link_commodities[(i, j)]):
                pl.append(l)
                pc.append(self.cid[d])
                ps.append(self.nid[i] * M + self.cid[d])
                pd.append(self.nid[j] * M + self.cid[d])
        self.pair_link = np.array(pl, dtype=np.int64)
        self.pair_comm = np.array(pc, dtype=np.int64)
        self.pair_src_q = np.array(ps, dtype=np.int64)
        self.pair_dst_q = np.array(pd, dtype=np.int64)
        self.link_start = np.array(starts, dtype=np.int64)
        self.link_slices = [slice(s, e) for s, e in zip(starts, starts[1:] + [len(pl)])]
        self.n_pairs = len(pl)
        # serving order: by sending queue, then by next-hop switch id
        dst_node = np.array([self.nid[self.links[l][1]] for l in pl], dtype=np.int64)
        self.srv_perm = np.lexsort((dst_node, self.pair_src_q)) if pl else np.zeros(0, dtype=np.int64)
        sq = self.pair_src_q[self.srv_perm]
        if len(sq):
            first = np.r_[True, sq[1:] != sq[:-1]]
            self.srv_group_start = np.nonzero(first)[0]
            self.srv_group_q = sq[self.srv_group_start]
            self.srv_group_of = np.cumsum(first) - 1
        else:
            self.srv_group_start = self.srv_group_q = self.srv_group_of = np.zeros(0, dtype=np.int64)
        self.dest_cap = np.zeros(self.nq, dtype=np.int64)
        for (i, d), b in topology.dest_capacity.items():
            if i in self.nid and d in self.cid:
                self.dest_cap[self.nid[i] * M + self.cid[d]] = b
        # queues that can ever hold packets: a next hop, a sink, or a source of arrivals
        active = np.zeros(self.nq, dtype=bool)
        active[self.pair_src_q] = True
        active[self.pair_dst_q] = True
        active[self.dest_cap > 0] = True
        self.active = active

    def q(self, i: int, d: int) -> int:
        return self.nid[i] * len(self.comms) + self.cid[d]

    def pair_index(self, i: int, j: int, d: int) -> int:
        l = self.links.index((i, j))
        sl = self.link_slices[l]
        hits = np.nonzero(self.pair_comm[sl] == self.cid[d])[0]
        if not len(hits):
            raise KeyError((i, j, d))
        return sl.start + int(hits[0])


# --- arrivals -------------------------------------------------------------------

class ArrivalSampler:
    """Per-(switch, commodity) substreams derived from one master seed, sampled in blocks."""

    def __init__(self, spec: ArrivalSpec, index: NetIndex, seed: int, scale: float = 1.0, block: int = 4096):
        self.index = index
        self.scale = float(scale)
        self.block = block
        self.keys = sorted((i, d) for (i, d) in spec if i in index.nid and d in index.cid)
        self.laws = [spec[k] for k in self.keys]
        self.qidx = np.array([index.q(i, d) for i, d in self.keys], dtype=np.int64)
        self.gens = [np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(i, d))))
                     for i, d in self.keys]
        self._buf = np.zeros((0, len(self.keys)), dtype=np.int64)
        self._pos = 0

    def _draw(self, law: ArrivalLaw, gen: np.random.Generator, n: int) -> np.ndarray:
        if law.kind == "constant":
            a = np.full(n, law.value, dtype=np.int64)
        elif law.kind == "uniform":
            a = gen.integers(law.lo, law.hi + 1, size=n, dtype=np.int64)
        else:
            a = np.where(gen.random(n) < law.p, law.value, 0).astype(np.int64)
        if self.scale < 1.0:
            a = gen.binomial(a, self.scale).astype(np.int64)
        return a

    def _refill(self):
        cols = [self._draw(law, g, self.block) for law, g in zip(self.laws, self.gens)]
        self._buf = np.stack(cols, axis=1) if cols else np.zeros((self.block, 0), dtype=np.int64)
        self._pos = 0

    def next_vector(self) -> np.ndarray:
        if self._pos >= len(self._buf):
            self._refill()
        out = np.zeros(self.index.nq, dtype=np.int64)
        out[self.qidx] = self._buf[self._pos]
        self._pos += 1
        return out

    def sample(self) -> Dict[Tuple[int, int], int]:
        vec = self.next_vector()
        return {k: int(vec[q]) for k, q in zip(self.keys, self.qidx)}


def sample_arrivals(sampler: ArrivalSampler) -> Dict[Tuple[int, int], int]:
    return sampler.sample()


# --- state ----------------------------------------------------------------------

@dataclass
class SimState:
    clock: int
    queues: np.ndarray
    tokens: np.ndarray
    interval_alloc: np.ndarray
    prev_alloc: np.ndarray

    @classmethod
    def initial(cls, index: NetIndex) -> "SimState":
        z = lambda n: np.zeros(n, dtype=np.int64)
        return cls(0, z(index.nq), z(index.n_pairs), z(index.n_pairs), z(index.n_pairs))

    def copy(self) -> "SimState":
        return SimState(self.clock, self.queues.copy(), self.tokens.copy(),
                        self.interval_alloc.copy(), self.prev_alloc.copy())


# --- data plane -----------------------------------------------------------------

def data_plane_schedule(tokens: Sequence[int], backlog: Optional[Sequence[int]], capacity: int,
                        slots_remaining: int) -> List[int]:
    """Services for one link and one slot.

    Each commodity aims at ceil(tokens / slots_remaining); if that overshoots the
    link capacity, everyone gets the floor and the spare units go by descending
    remainder (lowest commodity index on ties).  Backlog, when given, caps the result.
    """
    r = slots_remaining
    assert r >= 1
    assert sum(tokens) <= r * capacity, "token precondition violated"
    fl = [t // r for t in tokens]
    rem = [t - f * r for t, f in zip(tokens, fl)]
    ceil = [f + (x > 0) for f, x in zip(fl, rem)]
    if sum(ceil) <= capacity:
        out = ceil
    else:
        out = list(fl)
        extra = capacity - sum(fl)
        for n in sorted(range(len(tokens)), key=lambda n: (-rem[n], n)):
            if extra == 0 or rem[n] == 0:
                break
            out[n] += 1
            extra -= 1
    if backlog is not None:
        out = [min(o, b) for o, b in zip(out, backlog)]
    return out


def _targets(idx: NetIndex, tokens: np.ndarray, r: int) -> np.ndarray:
    fl = tokens // r
    rem = tokens - fl * r
    ceil = fl + (rem > 0)
    if not len(ceil):
        return ceil
    sumc = np.add.reduceat(ceil, idx.link_start)
    over = sumc > idx.link_cap
    if not over.any():
        return ceil
    target = ceil.copy()
    sel = np.nonzero(over[idx.pair_link])[0]
    order = sel[np.lexsort((idx.pair_comm[sel], -rem[sel], idx.pair_link[sel]))]
    lk = idx.pair_link[order]
    rank = np.arange(len(order)) - np.searchsorted(lk, lk)
    sumf = np.add.reduceat(fl, idx.link_start)
    extra = idx.link_cap[lk] - sumf[lk]
    target[order] = fl[order] + ((rem[order] > 0) & (rank < extra))
    return target


def _serve(idx: NetIndex, queues: np.ndarray, target: np.ndarray) -> np.ndarray:
    perm = idx.srv_perm
    ts = target[perm]
    cs = np.cumsum(ts)
    excl = cs - ts
    before = excl - excl[idx.srv_group_start][idx.srv_group_of]
    avail = queues[idx.pair_src_q[perm]] - before
    got = np.clip(avail, 0, ts)
    served = np.empty_like(target)
    served[perm] = got
    return served


@dataclass
class SlotResult:
    arrivals: np.ndarray
    served: np.ndarray
    departures: np.ndarray
    target: np.ndarray


def step_slot(state: SimState, idx: NetIndex, T: int, arrivals: np.ndarray) -> SlotResult:
    """Advance ``state`` by one slot in place."""
    r = T - state.clock % T
    if idx.n_pairs:
        target = _targets(idx, state.tokens, r)
        served = _serve(idx, state.queues, target)
        out = np.add.reduceat(served[idx.srv_perm], idx.srv_group_start)
        state.queues[idx.srv_group_q] -= out
    else:
        target = served = np.zeros(0, dtype=np.int64)
    dep = np.minimum(state.queues, idx.dest_cap)
    state.queues -= dep
    if idx.n_pairs:
        state.queues += np.bincount(idx.pair_dst_q, weights=served, minlength=idx.nq).astype(np.int64)
    state.queues += arrivals
    if idx.n_pairs:
        state.tokens -= served
        if r > 1:
            _forfeit(idx, state.tokens, target - served, r - 1)
    state.clock += 1
    return SlotResult(arrivals, served, dep, target)


def _forfeit(idx: NetIndex, tokens: np.ndarray, shortfall: np.ndarray, r_next: int) -> None:
    # keep sum(tokens) <= r_next * c on every link; only starved commodities give up tokens
    excess = np.add.reduceat(tokens, idx.link_start) - r_next * idx.link_cap
    if not (excess > 0).any():
        return
    sel = np.nonzero((excess[idx.pair_link] > 0) & (shortfall > 0))[0]
    sf = shortfall[sel]
    lk = idx.pair_link[sel]
    cs = np.cumsum(sf)
    excl = cs - sf
    grp_first = np.searchsorted(lk, lk)
    before = excl - excl[grp_first]
    take = np.clip(excess[lk] - before, 0, sf)
    tokens[sel] -= take


# --- control plane --------------------------------------------------------------

@dataclass
class Reconfig:
    k: np.ndarray            # per link; NaN under MaxWeight
    saturated: np.ndarray    # k == K
    exact_k: List[Optional[Fraction]]


def reconfigure(state: SimState, idx: NetIndex, T: int, algorithm: str, K) -> Reconfig:
    """Recompute every link's interval allocation and refill its token bucket."""
    assert state.clock % T == 0, "reconfiguration off the interval grid"
    Q = state.queues
    diff = Q[idx.pair_src_q] - Q[idx.pair_dst_q]
    alloc = np.zeros(idx.n_pairs, dtype=np.int64)
    ks = np.full(len(idx.links), np.nan)
    sat = np.zeros(len(idx.links), dtype=bool)
    exact: List[Optional[Fraction]] = [None] * len(idx.links)
    budgets = (T * idx.link_cap).tolist()
    if algorithm == "algorithm1":
        Kf = allocator.as_fraction(K)
        # the allocation still in force is x(t - T, T)
        y = (diff + state.interval_alloc).tolist()
        for l, sl in enumerate(idx.link_slices):
            v, k = allocator.allocate_vector(y[sl], budgets[l], Kf)
            alloc[sl] = v
            ks[l] = float(k)
            sat[l] = k == Kf
            exact[l] = k
    elif algorithm == "maxweight":
        w = diff.tolist()
        for l, sl in enumerate(idx.link_slices):
            alloc[sl] = allocator.maxweight_vector(w[sl], budgets[l])
    else:
        raise ValueError(f"ideal simulator does not run algorithm {algorithm!r}")
    state.prev_alloc = state.interval_alloc
    state.interval_alloc = alloc
    state.tokens = alloc.copy()
    return Reconfig(ks, sat, exact)


# --- driver ---------------------------------------------------------------------

def _x_cap_violations(idx: NetIndex, y: np.ndarray, alloc: np.ndarray, ks: Sequence[Fraction]) -> int:
    bad = 0
    for l, sl in enumerate(idx.link_slices):
        k = ks[l]
        for yy, x in zip(y[sl].tolist(), alloc[sl].tolist()):
            if x > allocator.x_max(yy, 0, 0, k):
                bad += 1
    return bad


def run(config: ScenarioConfig, trace: str = "none", check: bool = True, stride: Optional[int] = None):
    """Simulate ``config.horizon`` slots; returns (MetricsReport, SlotTrace).

    ``trace`` selects queue snapshot recording: ``none``, ``decimated`` (every
    ``stride`` slots, default T) or ``full`` (every slot plus per-slot link services).
    With ``check`` the model invariants are verified every slot and every
    interval; violation counts land in the report.
    """
    from .metrics import INVARIANTS, SlotTrace, collect_metrics

    if trace not in TRACE_MODES:
        raise ValueError(f"trace mode must be one of {TRACE_MODES}")
    if config.algorithm not in ("algorithm1", "maxweight"):
        raise ValueError(f"ideal simulator runs algorithm1/maxweight, not {config.algorithm!r}")
    topo = config.topology
    idx = NetIndex(topo)
    T, H = config.T, config.horizon
    n_int = H // T
    M = len(idx.comms)
    L = len(idx.links)
    sampler = ArrivalSampler(config.arrivals, idx, config.seed, config.arrival_scale)
    state = SimState.initial(idx)

    prefix = np.zeros((n_int + 1, idx.nq), dtype=np.int64)
    by_comm = np.zeros((H + 1, M), dtype=np.int64)
    i_arr = np.zeros((n_int, idx.nq), dtype=np.int64)
    i_dep = np.zeros((n_int, idx.nq), dtype=np.int64)
    i_tx = np.zeros((n_int, idx.n_pairs), dtype=np.int64)
    i_alloc = np.zeros((n_int, idx.n_pairs), dtype=np.int64)
    kvals = np.full((n_int, L), np.nan)
    ksat = np.zeros((n_int, L), dtype=bool)
    if trace == "full":
        stride = 1
    elif stride is None:
        stride = T
    snaps = [] if trace != "none" else None
    slot_tx = np.zeros((H, idx.n_pairs), dtype=np.int64) if trace == "full" else None
    slot_arr = np.zeros((H, idx.nq), dtype=np.int64) if trace == "full" else None
    slot_dep = np.zeros((H, idx.nq), dtype=np.int64) if trace == "full" else None

    viol = {name: 0 for name in INVARIANTS}
    growth = topo.bound * (len(topo.switches) + 1)
    cum_arr = np.zeros(M, dtype=np.int64)
    cum_dep = np.zeros(M, dtype=np.int64)
    Q = state.queues
    running = np.zeros(idx.nq, dtype=np.int64)
    Kf = allocator.as_fraction(config.K)
    out_alloc = in_alloc = q_start = None
    dest_T = idx.dest_cap * T

    for t in range(H):
        n = t // T
        if t % T == 0:
            prefix[n] = running
            y_pre = (state.queues[idx.pair_src_q] - state.queues[idx.pair_dst_q] + state.interval_alloc)
            rc = reconfigure(state, idx, T, config.algorithm, config.K)
            kvals[n], ksat[n] = rc.k, rc.saturated
            i_alloc[n] = state.interval_alloc
            if check:
                if config.algorithm == "algorithm1" and L:
                    viol["k_range"] += sum(1 for k in rc.exact_k if not 1 <= k <= Kf)
                    viol["x_cap"] += _x_cap_violations(idx, y_pre, state.interval_alloc, rc.exact_k)
                out_alloc = np.bincount(idx.pair_src_q, weights=state.interval_alloc, minlength=idx.nq)
                in_alloc = np.bincount(idx.pair_dst_q, weights=state.interval_alloc, minlength=idx.nq)
                q_start = state.queues.copy()
        if snaps is not None and t % stride == 0:
            snaps.append(state.queues.copy())
        by_comm[t] = state.queues.reshape(-1, M).sum(axis=0)
        running += state.queues
        before = state.queues.copy() if check else None
        a = sampler.next_vector()
        res = step_slot(state, idx, T, a)
        i_arr[n] += a
        i_dep[n] += res.departures
        i_tx[n] += res.served
        if trace == "full":
            slot_tx[t], slot_arr[t], slot_dep[t] = res.served, a, res.departures
        if check:
            cum_arr += a.reshape(-1, M).sum(axis=0)
            cum_dep += res.departures.reshape(-1, M).sum(axis=0)
            Q = state.queues
            if (Q < 0).any():
                viol["nonnegative"] += int((Q < 0).sum())
            if (Q.reshape(-1, M).sum(axis=0) != cum_arr - cum_dep).any():
                viol["conservation"] += 1
            if idx.n_pairs and (np.add.reduceat(res.served, idx.link_start) > idx.link_cap).any():
                viol["capacity"] += 1
            if (Q - before > growth).any():
                viol["growth"] += 1
            if (t + 1) % T == 0:
                if (i_tx[n] > i_alloc[n]).any():
                    viol["token_bucket"] += int((i_tx[n] > i_alloc[n]).sum())
                bound = np.maximum(q_start - out_alloc - dest_T, 0) + in_alloc + i_arr[n]
                if (Q > bound).any():
                    viol["interval_bound"] += int((Q > bound).sum())
    prefix[n_int] = running
    by_comm[H] = state.queues.reshape(-1, M).sum(axis=0)

    tr = SlotTrace(
        T=T, horizon=H, nodes=idx.nodes, comms=idx.comms, links=idx.links,
        pairs=[(idx.links[l][0], idx.links[l][1], idx.comms[c]) for l, c in zip(idx.pair_link, idx.pair_comm)],
        active=idx.active, queue_prefix=prefix, backlog_by_comm=by_comm,
        interval_arrivals=i_arr, interval_departures=i_dep, interval_transmissions=i_tx,
        interval_alloc=i_alloc, k_values=kvals, k_saturated=ksat, mode=trace,
        snapshot_stride=stride if snaps is not None else 0,
        snapshots=np.array(snaps, dtype=np.int64).reshape(-1, idx.nq) if snaps is not None else None,
        slot_transmissions=slot_tx, slot_arrivals=slot_arr, slot_departures=slot_dep,
        violations=viol if check else {}, algorithm=config.algorithm, seed=config.seed,
        K=float(config.K), digest=config.digest(), warmup_fraction=config.warmup_fraction,
    )
    return collect_metrics(tr), tr
