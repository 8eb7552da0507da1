"""Packet-level flow simulator for the heuristic balancer and the ECMP baseline.

Time is slotted and links have no propagation delay: a packet sent on slot t
sits in the next switch's queue at the start of slot t+1, and it is delivered
as soon as it reaches a switch attached to its destination.  Transport is an
epoch-based AIMD: a flow releases ``window`` packets, waits until every one of
them is delivered or dropped, then grows the window by one (no drop) or halves
it (any drop, floor 1) and resends what was lost.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections import Counter, deque
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .heuristic import (
    PiggybackRotation,
    range_bounds,
    route_by_bounds,
    solve_split,
    split_fractions,
    switch_hash,
    wfq_weights,
)
from .model import ScenarioConfig, derive_sets

FCT_COLUMNS = ("flow", "commodity", "source", "start", "completion", "fct", "retransmits", "path")


@dataclass
class FlowRecord:
    id: int
    source: int
    commodity: int
    size: int
    start: int
    hash_field: int
    window: int = 2
    state: str = "pending"
    completion: Optional[int] = None
    delivered: int = 0
    in_flight: int = 0
    epoch_drops: int = 0
    sent: int = 0
    retransmits: int = 0
    hops: Dict[int, Counter] = field(default_factory=dict, repr=False)

    @property
    def fct(self) -> Optional[int]:
        return None if self.completion is None else self.completion - self.start

    def majority_hop(self, switch: int) -> Optional[int]:
        c = self.hops.get(switch)
        if not c:
            return None
        return min(c, key=lambda j: (-c[j], j))

    def path_digest(self) -> str:
        path = [(i, self.majority_hop(i)) for i in sorted(self.hops)]
        return hashlib.sha1(json.dumps(path).encode()).hexdigest()[:12]


@dataclass
class FlowSimReport:
    algorithm: str
    seed: int
    config_digest: str
    slots: int
    flows: int
    completed: int
    fct_mean: float
    fct_variance: float
    fct_p99: float
    drops: int
    retransmits: int
    remapped_flows: int
    via: Dict[str, Dict[str, int]]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


class _Port:
    """Output port (i, j): per-commodity FIFOs served by deficit round robin, or one shared FIFO."""

    def __init__(self, link, commodities, capacity, shared, buf):
        self.link = link
        self.capacity = capacity
        self.shared = shared
        self.comms = tuple(sorted(commodities))
        self.buf = buf
        if shared:
            self.fifo = deque()
            self.count = 0
        else:
            self.q = {d: deque() for d in self.comms}
            self.n = {d: 0 for d in self.comms}
            self.quantum = {d: 1.0 for d in self.comms}
            self.deficit = {d: 0.0 for d in self.comms}
            self.turn = 0
            self.fresh = True
        self.prio_acc = 0.0
        self.prio_rate = 0.0
        self.prio_start = 0

    def backlog(self, d=None) -> int:
        if self.shared:
            return self.count if d is None else sum(n for (f, dd), n in self.fifo if dd == d)
        return sum(self.n.values()) if d is None else self.n.get(d, 0)

    def push(self, flow_id: int, d: int) -> bool:
        if self.shared:
            if self.count >= self.buf:
                return False
            if self.fifo and self.fifo[-1][0] == (flow_id, d):
                self.fifo[-1][1] += 1
            else:
                self.fifo.append([(flow_id, d), 1])
            self.count += 1
            return True
        if self.n[d] >= self.buf:
            return False
        q = self.q[d]
        if q and q[-1][0] == flow_id:
            q[-1][1] += 1
        else:
            q.append([flow_id, 1])
        self.n[d] += 1
        return True

    @staticmethod
    def _pop(q):
        head = q[0]
        head[1] -= 1
        if head[1] == 0:
            q.popleft()
        return head[0]

    def set_weights(self, weights: Dict[int, float]) -> None:
        low = min(weights.values())
        self.quantum = {d: weights[d] / low for d in self.comms}

    def serve(self, budget: int) -> List[Tuple[int, int]]:
        """Dequeue up to ``budget`` packets; returns (flow id, commodity) in send order."""
        out = []
        if self.shared:
            while budget and self.count:
                out.append(self._pop(self.fifo))
                self.count -= 1
                budget -= 1
            return out
        comms = self.comms
        while budget and any(self.n[d] for d in comms):
            d = comms[self.turn]
            if self.n[d] == 0:
                self.deficit[d] = 0.0
                self.turn = (self.turn + 1) % len(comms)
                self.fresh = True
                continue
            if self.fresh:
                self.deficit[d] += self.quantum[d]
                self.fresh = False
            if self.deficit[d] >= 1.0:
                out.append((self._pop(self.q[d]), d))
                self.n[d] -= 1
                self.deficit[d] -= 1.0
                budget -= 1
                if self.n[d] == 0:
                    self.deficit[d] = 0.0
            else:
                self.turn = (self.turn + 1) % len(comms)
                self.fresh = True
        return out

    def drain(self) -> List[Tuple[int, int]]:
        if self.shared:
            out = [fd for fd, n in self.fifo for _ in range(n)]
            self.fifo.clear()
            self.count = 0
            return out
        out = [(f, d) for d in self.comms for f, n in self.q[d] for _ in range(n)]
        for d in self.comms:
            self.q[d].clear()
            self.n[d] = 0
        return out


class FlowSim:
    def __init__(self, config: ScenarioConfig):
        if config.algorithm not in ("heuristic", "ecmp"):
            raise ValueError(f"flow simulator runs heuristic/ecmp, not {config.algorithm!r}")
        if config.flows is None:
            raise ValueError("flow simulator needs a flows block")
        self.cfg = config
        self.heuristic = config.algorithm == "heuristic"
        self.T = config.T
        self.alpha = config.alpha
        self.beta = config.flows.ema_beta
        self.qcap = config.queue_capacity or 200
        self.rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed)))
        self.drops = 0
        self._set_topology(config.topology, fresh=True)
        self._make_flows()
        self.failures = sorted(config.failures, key=lambda e: e.slot)

    # --- setup --------------------------------------------------------------

    def _set_topology(self, topo, fresh=False):
        self.topo = topo
        ds = derive_sets(topo)
        self.sinks = {(i, d) for (i, d), b in topo.dest_capacity.items() if b > 0}
        self.hops = {k: tuple(sorted(v)) for k, v in topo.next_hops.items() if v}
        links = sorted(l for l, dd in ds.link_commodities.items() if dd and topo.capacity(*l) > 0)
        ndest = len(topo.destinations)
        if fresh:
            self.ports: Dict[Tuple[int, int], _Port] = {}
            self.M: Dict[Tuple[int, int, int], int] = {}
            self.r_prev: Dict[Tuple[int, int, int], int] = {}
            self.r_cur: Dict[Tuple[int, int, int], int] = {}
            self.rr: Dict[Tuple[int, int], PiggybackRotation] = {}
            self.route_cache: Dict[Tuple[int, int], Tuple] = {}
        dead = [l for l in self.ports if l not in links]
        for l in dead:
            for f, d in self.ports.pop(l).drain():
                self._drop(f)
        for l in links:
            if l not in self.ports:
                comms = ds.link_commodities[l]
                if self.heuristic:
                    self.ports[l] = _Port(l, comms, topo.capacity(*l), False, self.qcap)
                else:
                    self.ports[l] = _Port(l, comms, topo.capacity(*l), True, self.qcap * ndest)
        self.link_comms = {l: ds.link_commodities[l] for l in links}
        # piggyback: packets on (j, i) report j's queues for the commodities i sends to j
        self.rr = {(j, i): PiggybackRotation(self.link_comms[(i, j)])
                   for (i, j) in links if (j, i) in self.ports}
        for p in self.cfg.priority:
            if p.link in self.ports:
                self.ports[p.link].prio_rate = p.rate
                self.ports[p.link].prio_start = p.start
        nodes = sorted(topo.switches)
        self.nid = {s: n for n, s in enumerate(nodes)}
        comms = sorted(topo.destinations)
        self.cid = {d: n for n, d in enumerate(comms)}
        if fresh:
            self.qt = np.zeros((len(nodes), len(comms)), dtype=np.int64)
            self.ema = np.zeros((len(nodes), len(comms)))
        else:
            self.qt[:] = 0
            for (i, j), p in self.ports.items():
                for d in p.comms:
                    self.qt[self.nid[i], self.cid[d]] += p.backlog(d)
        self._reroute()

    def _make_flows(self):
        wl = self.cfg.flows
        self.flows: List[FlowRecord] = []
        lo, hi = wl.start
        for g in wl.groups:
            for _ in range(g.count):
                start = int(self.rng.integers(lo, hi + 1))
                h = int(self.rng.integers(0, 2 ** 64, dtype=np.uint64))
                self.flows.append(FlowRecord(len(self.flows), g.source, g.commodity, wl.size, start, h,
                                             window=wl.init_window))
        self.by_start: Dict[int, List[int]] = {}
        for f in self.flows:
            self.by_start.setdefault(f.start, []).append(f.id)
        self.shash: Dict[Tuple[int, int], int] = {}

    # --- routing ------------------------------------------------------------

    def _reroute(self):
        """Recompute hash ranges for every (switch, commodity) from the current splits."""
        cache = {}
        for (i, d), hs in self.hops.items():
            if self.heuristic:
                q = [self.ports[(i, j)].backlog(d) for j in hs]
                r = [self.r_prev.get((i, j, d), 0) for j in hs]
                s = solve_split(q, r)
                fr = split_fractions(dict(zip(hs, s)))
            else:
                fr = {j: 1 for j in hs}
            cache[(i, d)] = range_bounds(fr)
        self.route_cache = cache

    def _next_hop(self, i: int, f: FlowRecord) -> Optional[int]:
        rc = self.route_cache.get((i, f.commodity))
        if rc is None:
            return None
        key = (i, f.id)
        h = self.shash.get(key)
        if h is None:
            h = self.shash[key] = switch_hash(f.hash_field, i)
        return route_by_bounds(rc[0], rc[1], h)

    def _forward(self, i: int, fid: int) -> None:
        """Hand a packet of flow ``fid`` to switch i: deliver, or enqueue at the chosen port."""
        f = self.flows[fid]
        d = f.commodity
        if (i, d) in self.sinks:
            f.in_flight -= 1
            f.delivered += 1
            return
        j = self._next_hop(i, f)
        if j is None or not self.ports[(i, j)].push(fid, d):
            self._drop(fid)
            return
        self.qt[self.nid[i], self.cid[d]] += 1
        c = f.hops.setdefault(i, Counter())
        c[j] += 1

    def _drop(self, fid: int) -> None:
        f = self.flows[fid]
        f.in_flight -= 1
        f.epoch_drops += 1
        self.drops += 1

    # --- control plane ------------------------------------------------------

    def _reconfigure(self):
        self.r_prev, self.r_cur = self.r_cur, {}
        if not self.heuristic:
            return
        for (i, j), port in self.ports.items():
            ni = self.nid[i]
            qa = {d: int(self.qt[ni, self.cid[d]]) for d in port.comms}
            mem = {d: self.M.get((i, j, d), 0) for d in port.comms}
            rp = {d: self.r_prev.get((i, j, d), 0) for d in port.comms}
            port.set_weights(wfq_weights(qa, mem, rp, self.alpha, port.comms))
        self._reroute()

    # --- transport ----------------------------------------------------------

    def _start_epoch(self, f: FlowRecord) -> None:
        n = min(f.window, f.size - f.delivered)
        lost = min(n, f.sent - f.delivered)  # lost packets go out again first
        f.epoch_drops = 0
        f.in_flight = n
        f.retransmits += lost
        f.sent += n - lost
        for _ in range(n):
            self._forward(f.source, f.id)

    def _end_epochs(self, t: int, active: List[int]) -> List[int]:
        still = []
        for fid in active:
            f = self.flows[fid]
            if f.in_flight > 0:
                still.append(fid)
                continue
            if f.delivered >= f.size:
                f.state = "done"
                f.completion = t
                continue
            f.window = max(1, f.window // 2) if f.epoch_drops else f.window + 1
            self._start_epoch(f)
            still.append(fid)
        return still

    # --- main loop ----------------------------------------------------------

    def run(self, horizon: Optional[int] = None) -> List[FlowRecord]:
        H = self.cfg.horizon if horizon is None else horizon
        active: List[int] = []
        fail_pos = 0
        self.slots = 0
        for t in range(H):
            while fail_pos < len(self.failures) and self.failures[fail_pos].slot <= t:
                ev = self.failures[fail_pos]
                dead = [ev.link] + ([ev.link[::-1]] if ev.bidirectional else [])
                self._set_topology(self.topo.without_links(dead))
                fail_pos += 1
            if t % self.T == 0:
                self._reconfigure()
            active = self._end_epochs(t, active)
            for fid in self.by_start.get(t, ()):
                f = self.flows[fid]
                f.state = "active"
                self._start_epoch(f)
                active.append(fid)
            self._transmit(t)
            if self.heuristic:
                self.ema *= 1.0 - self.beta
                self.ema += self.beta * self.qt
            self.slots = t + 1
            if not active and t >= max(self.by_start, default=0) and all(f.state == "done" for f in self.flows):
                break
        if active:
            self._end_epochs(self.slots, active)
        return self.flows

    def _transmit(self, t: int) -> None:
        moved: List[Tuple[int, int]] = []
        for (i, j), port in self.ports.items():
            cap = port.capacity
            prio = 0
            if port.prio_rate > 0 and t >= port.prio_start:
                port.prio_acc += port.prio_rate
                prio = min(cap, int(port.prio_acc))
                port.prio_acc -= prio
            sent = port.serve(cap - prio) if port.backlog() else []
            ni = self.nid[i]
            for fid, d in sent:
                self.qt[ni, self.cid[d]] -= 1
                key = (i, j, d)
                self.r_cur[key] = self.r_cur.get(key, 0) + 1
                moved.append((j, fid))
            if self.heuristic:
                rot = self.rr.get((i, j))
                if rot is not None:
                    # the receiver j learns the sender's smoothed backlog
                    for _ in range(len(sent) + prio):
                        e = rot.select()
                        self.M[(j, i, e)] = int(np.floor(self.ema[ni, self.cid[e]] + 0.5))
        for j, fid in moved:
            self._forward(j, fid)


def run_flow_sim(config: ScenarioConfig) -> Tuple[FlowSimReport, List[FlowRecord]]:
    sim = FlowSim(config)
    flows = sim.run()
    return summarize(sim, flows), flows


def summarize(sim: FlowSim, flows: List[FlowRecord]) -> FlowSimReport:
    fcts = np.array([f.fct for f in flows if f.fct is not None], dtype=float)
    via: Dict[str, Dict[str, int]] = {}
    remapped = 0
    for f in flows:
        for i, c in f.hops.items():
            if len(c) > 1:
                remapped += 1
            j = f.majority_hop(i)
            row = via.setdefault(str(i), {})
            row[str(j)] = row.get(str(j), 0) + 1
    return FlowSimReport(
        algorithm=sim.cfg.algorithm, seed=sim.cfg.seed, config_digest=sim.cfg.digest(), slots=sim.slots,
        flows=len(flows), completed=int(len(fcts)),
        fct_mean=float(fcts.mean()) if len(fcts) else 0.0,
        fct_variance=float(fcts.var()) if len(fcts) else 0.0,
        fct_p99=float(np.percentile(fcts, 99)) if len(fcts) else 0.0,
        drops=sim.drops, retransmits=sum(f.retransmits for f in flows), remapped_flows=remapped,
        via={k: dict(sorted(v.items())) for k, v in sorted(via.items(), key=lambda kv: int(kv[0]))},
    )


def write_fct_csv(flows: List[FlowRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FCT_COLUMNS)
        for f in flows:
            w.writerow((f.id, f.commodity, f.source, f.start, "" if f.completion is None else f.completion,
                        "" if f.fct is None else f.fct, f.retransmits, f.path_digest()))
