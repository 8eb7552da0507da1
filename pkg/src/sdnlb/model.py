"""Network topology, commodity routing sets and scenario configuration.

A scenario is a JSON document with a ``topology``, an ``arrivals`` list and a
``run`` block (plus optional ``flows``/``events`` blocks used by the flow-level
simulator).  See ``docs/config.md`` for the schema.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Set, Tuple

SCHEMA_VERSION = 1

ALGORITHMS = ("algorithm1", "maxweight", "heuristic", "ecmp")

DEFAULT_T = 100
DEFAULT_K = 10.0
DEFAULT_ALPHA = 5.0
DEFAULT_SEED = 1
DEFAULT_QUEUE_CAPACITY = 200

Link = Tuple[int, int]


class ConfigError(ValueError):
    """Semantic or syntactic problem in a scenario document."""


@dataclass(frozen=True)
class Topology:
    switches: FrozenSet[int]
    destinations: FrozenSet[int]
    link_capacity: Mapping[Link, int]
    dest_capacity: Mapping[Tuple[int, int], int]
    next_hops: Mapping[Tuple[int, int], FrozenSet[int]]
    bound: int

    def capacity(self, i: int, j: int) -> int:
        return self.link_capacity.get((i, j), 0)

    def hops(self, i: int, d: int) -> FrozenSet[int]:
        return self.next_hops.get((i, d), frozenset())

    def sinks(self, d: int) -> List[int]:
        return sorted(i for (i, e), b in self.dest_capacity.items() if e == d and b > 0)

    def without_links(self, links) -> "Topology":
        """Copy with the given directed links removed from capacities and next-hop sets.

        Hops that can no longer reach a sink of the commodity are pruned too, so
        no switch keeps forwarding into a dead end.
        """
        dead = set(links)
        caps = {l: c for l, c in self.link_capacity.items() if l not in dead}
        hops = {}
        for (i, d), hs in self.next_hops.items():
            hops[(i, d)] = frozenset(j for j in hs if (i, j) not in dead)
        sink = {(i, d) for (i, d), b in self.dest_capacity.items() if b > 0}
        changed = True
        while changed:
            changed = False
            for key, hs in hops.items():
                keep = frozenset(j for j in hs if (j, key[1]) in sink or hops.get((j, key[1])))
                if keep != hs:
                    hops[key] = keep
                    changed = True
        return replace(self, link_capacity=caps, next_hops=hops)


@dataclass(frozen=True)
class DerivedSets:
    prev_hops: Dict[Tuple[int, int], FrozenSet[int]]
    all_next: Dict[int, FrozenSet[int]]
    link_commodities: Dict[Link, FrozenSet[int]]


def derive_sets(topology: Topology) -> DerivedSets:
    prev: Dict[Tuple[int, int], Set[int]] = {}
    all_next: Dict[int, Set[int]] = {i: set() for i in topology.switches}
    link_comm: Dict[Link, Set[int]] = {}
    for (i, d), hops in topology.next_hops.items():
        for j in hops:
            prev.setdefault((j, d), set()).add(i)
            all_next.setdefault(i, set()).add(j)
            link_comm.setdefault((i, j), set()).add(d)
    return DerivedSets(
        prev_hops={k: frozenset(v) for k, v in prev.items()},
        all_next={k: frozenset(v) for k, v in all_next.items()},
        link_commodities={k: frozenset(v) for k, v in link_comm.items()},
    )


@dataclass(frozen=True)
class Violation:
    rule: str
    element: Any
    message: str

    def __str__(self) -> str:
        return f"[{self.rule}] {self.element}: {self.message}"


def _find_cycle(edges: Dict[int, List[int]]) -> Optional[List[int]]:
    # iterative DFS with colours; returns one cycle as a node list
    white, grey, black = 0, 1, 2
    colour = {n: white for n in edges}
    for root in sorted(edges):
        if colour[root] != white:
            continue
        stack = [(root, iter(sorted(edges.get(root, ()))))]
        path = [root]
        colour[root] = grey
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[node] = black
                stack.pop()
                path.pop()
                continue
            c = colour.get(nxt, white)
            if c == grey:
                return path[path.index(nxt):] + [nxt]
            if c == white:
                colour[nxt] = grey
                edges.setdefault(nxt, [])
                stack.append((nxt, iter(sorted(edges[nxt]))))
                path.append(nxt)
    return None


def validate_topology(topology: Topology) -> List[Violation]:
    """Return every broken topology rule; an empty list means the topology is valid."""
    out: List[Violation] = []
    S, D, delta = topology.switches, topology.destinations, topology.bound
    if delta <= 0:
        out.append(Violation("bound", "delta", f"bound must be positive, got {delta}"))
    for (i, j), c in sorted(topology.link_capacity.items()):
        if i not in S or j not in S:
            out.append(Violation("unknown-switch", (i, j), "link endpoint is not a switch"))
        if i == j and c != 0:
            out.append(Violation("self-loop", (i, j), "c_ii must be 0"))
        if c < 0 or c > delta:
            out.append(Violation("bound", (i, j), f"capacity {c} outside [0, {delta}]"))
    for (i, d), b in sorted(topology.dest_capacity.items()):
        if i not in S or d not in D:
            out.append(Violation("unknown-id", (i, d), "destination capacity on unknown switch/commodity"))
        if b < 0 or b > delta:
            out.append(Violation("bound", (i, d), f"destination capacity {b} outside [0, {delta}]"))
    for (i, d), hops in sorted(topology.next_hops.items()):
        if i not in S or d not in D:
            out.append(Violation("unknown-id", (i, d), "next-hop set on unknown switch/commodity"))
        for j in sorted(hops):
            if j not in S:
                out.append(Violation("unknown-switch", (i, d, j), "next hop is not a switch"))
            elif topology.capacity(i, j) <= 0:
                out.append(Violation("no-link", (i, d, j), f"next hop {j} has no link with capacity > 0"))
    for d in sorted(D):
        edges = {}
        for (i, e), hops in topology.next_hops.items():
            if e == d and hops:
                edges[i] = sorted(hops)
        cyc = _find_cycle(dict(edges))
        if cyc:
            out.append(Violation("cycle", d, "next-hop graph has cycle " + " -> ".join(map(str, cyc))))
            continue
        # every switch carrying d must drain to a sink or dead-end explicitly
        sinks = {i for i in S if topology.dest_capacity.get((i, d), 0) > 0}
        memo: Dict[int, bool] = {}

        def reaches(i: int) -> bool:
            if i in memo:
                return memo[i]
            if i in sinks:
                memo[i] = True
                return True
            hops = edges.get(i, [])
            memo[i] = bool(hops) and all(reaches(j) for j in hops)
            return memo[i]

        for i in sorted(edges):
            if not reaches(i):
                out.append(Violation("unreachable", (i, d), f"switch {i} cannot deliver commodity {d} to a sink"))
    return out


# --- arrivals -----------------------------------------------------------------

@dataclass(frozen=True)
class ArrivalLaw:
    """i.i.d. per-slot arrival law: ``constant``, ``uniform`` over {lo..hi}, or ``bernoulli`` (value w.p. p)."""

    kind: str
    value: int = 0
    lo: int = 0
    hi: int = 0
    p: float = 0.0

    @property
    def mean(self) -> float:
        if self.kind == "constant":
            return float(self.value)
        if self.kind == "uniform":
            return (self.lo + self.hi) / 2.0
        return self.value * self.p

    @property
    def support_max(self) -> int:
        return self.hi if self.kind == "uniform" else self.value

    def check(self) -> None:
        if self.kind == "constant":
            if self.value < 0:
                raise ConfigError("constant arrival must be >= 0")
        elif self.kind == "uniform":
            if not 0 <= self.lo <= self.hi:
                raise ConfigError(f"uniform arrival needs 0 <= lo <= hi, got {self.lo}..{self.hi}")
        elif self.kind == "bernoulli":
            if self.value < 0 or not 0.0 <= self.p <= 1.0:
                raise ConfigError("bernoulli arrival needs value >= 0 and p in [0, 1]")
        else:
            raise ConfigError(f"unknown arrival kind {self.kind!r}")


ArrivalSpec = Dict[Tuple[int, int], ArrivalLaw]


def uniform_law_for_mean(mean: float) -> ArrivalLaw:
    """Default law for a stated mean: uniform integers {0..2*mean}."""
    hi = 2 * mean
    if hi != int(hi):
        raise ConfigError(f"mean {mean} has no symmetric integer uniform law")
    return ArrivalLaw("uniform", lo=0, hi=int(hi))


# --- flow-level workload (heuristic / ecmp) -------------------------------------

@dataclass(frozen=True)
class FlowGroup:
    source: int
    commodity: int
    count: int


@dataclass(frozen=True)
class FlowWorkload:
    groups: Tuple[FlowGroup, ...]
    size: int = 1000
    start: Tuple[int, int] = (0, 0)
    init_window: int = 2
    ema_beta: float = 0.125


@dataclass(frozen=True)
class LinkFailure:
    slot: int
    link: Link
    bidirectional: bool = True


@dataclass(frozen=True)
class PriorityReservation:
    link: Link
    rate: float
    start: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    topology: Topology
    arrivals: ArrivalSpec
    T: int = DEFAULT_T
    K: float = DEFAULT_K
    alpha: float = DEFAULT_ALPHA
    horizon: int = 0
    seed: int = DEFAULT_SEED
    algorithm: str = "algorithm1"
    queue_capacity: Optional[int] = None
    arrival_scale: float = 1.0
    warmup_fraction: float = 0.2
    flows: Optional[FlowWorkload] = None
    failures: Tuple[LinkFailure, ...] = ()
    priority: Tuple[PriorityReservation, ...] = ()
    name: str = ""
    source: Dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def digest(self) -> str:
        return config_digest(to_document(self))

    def with_overrides(self, **kw) -> "ScenarioConfig":
        cfg = replace(self, **kw)
        check_run(cfg)
        return cfg


def check_run(cfg: ScenarioConfig) -> None:
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError(f"run.algorithm: expected one of {ALGORITHMS}, got {cfg.algorithm!r}")
    if int(cfg.T) != cfg.T or cfg.T < 1:
        raise ConfigError(f"run.T: must be an integer >= 1, got {cfg.T}")
    if cfg.K < 1:
        raise ConfigError(f"run.K: must be >= 1, got {cfg.K}")
    if cfg.alpha <= 0:
        raise ConfigError(f"run.alpha: must be > 0, got {cfg.alpha}")
    if cfg.horizon < 0 or cfg.horizon % cfg.T:
        raise ConfigError(f"run.horizon: must be a non-negative multiple of T={cfg.T}, got {cfg.horizon}")
    if not 0.0 <= cfg.arrival_scale <= 1.0:
        raise ConfigError(f"run.arrival_scale: must lie in [0, 1], got {cfg.arrival_scale}")
    if not 0.0 <= cfg.warmup_fraction < 1.0:
        raise ConfigError(f"run.warmup_fraction: must lie in [0, 1), got {cfg.warmup_fraction}")
    if cfg.queue_capacity is not None and cfg.queue_capacity < 1:
        raise ConfigError("run.queue_capacity: must be >= 1")
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError("run.seed: must be a 64-bit unsigned integer")
    if cfg.algorithm in ("heuristic", "ecmp") and cfg.flows is None:
        raise ConfigError(f"algorithm {cfg.algorithm!r} needs a 'flows' block")


# --- document parsing ---------------------------------------------------------

_TOP_KEYS = {"version", "name", "description", "topology", "arrivals", "run", "flows", "events"}
_TOPO_KEYS = {"switches", "destinations", "links", "bidirectional", "dest_capacity", "next_hops", "delta"}
_RUN_KEYS = {"T", "K", "alpha", "horizon", "seed", "algorithm", "queue_capacity", "arrival_scale", "warmup_fraction"}
_FLOW_KEYS = {"groups", "size", "start", "init_window", "ema_beta"}
_EVENT_KEYS = {"failures", "priority"}


def _reject_unknown(block: Mapping, allowed: Set[str], where: str) -> None:
    extra = sorted(set(block) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {extra}")


def _int(v: Any, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}: expected integer, got {v!r}")
    return v


def _parse_topology(block: Mapping) -> Topology:
    if not isinstance(block, Mapping):
        raise ConfigError("topology: expected an object")
    _reject_unknown(block, _TOPO_KEYS, "topology")
    for key in ("switches", "destinations", "links", "next_hops"):
        if key not in block:
            raise ConfigError(f"topology.{key}: missing")
    switches = frozenset(_int(s, "topology.switches[]") for s in block["switches"])
    dests = frozenset(_int(d, "topology.destinations[]") for d in block["destinations"])
    both = bool(block.get("bidirectional", False))
    caps: Dict[Link, int] = {}
    for n, row in enumerate(block["links"]):
        if len(row) != 3:
            raise ConfigError(f"topology.links[{n}]: expected [i, j, capacity]")
        i, j, c = (_int(x, f"topology.links[{n}]") for x in row)
        caps[(i, j)] = c
        if both:
            caps.setdefault((j, i), c)
    dcap: Dict[Tuple[int, int], int] = {}
    for n, row in enumerate(block.get("dest_capacity", [])):
        if len(row) != 3:
            raise ConfigError(f"topology.dest_capacity[{n}]: expected [switch, commodity, capacity]")
        i, d, b = (_int(x, f"topology.dest_capacity[{n}]") for x in row)
        dcap[(i, d)] = b
    hops: Dict[Tuple[int, int], FrozenSet[int]] = {}
    for n, row in enumerate(block["next_hops"]):
        if len(row) != 3 or not isinstance(row[2], list):
            raise ConfigError(f"topology.next_hops[{n}]: expected [switch, commodity, [hops...]]")
        i = _int(row[0], f"topology.next_hops[{n}]")
        d = _int(row[1], f"topology.next_hops[{n}]")
        hops[(i, d)] = frozenset(_int(j, f"topology.next_hops[{n}]") for j in row[2])
    if "delta" in block:
        delta = _int(block["delta"], "topology.delta")
    else:
        delta = max([1, *caps.values(), *dcap.values()])
    return Topology(switches, dests, caps, dcap, hops, delta)


def _parse_law(entry: Mapping, where: str) -> ArrivalLaw:
    kind = entry.get("kind", "constant")
    if kind == "constant":
        law = ArrivalLaw("constant", value=_int(entry.get("value", 0), where + ".value"))
    elif kind == "uniform":
        if "mean" in entry and "lo" not in entry:
            law = uniform_law_for_mean(float(entry["mean"]))
        else:
            law = ArrivalLaw("uniform", lo=_int(entry.get("lo", 0), where + ".lo"),
                             hi=_int(entry.get("hi", 0), where + ".hi"))
    elif kind == "bernoulli":
        law = ArrivalLaw("bernoulli", value=_int(entry.get("value", 0), where + ".value"),
                         p=float(entry.get("p", 0.0)))
    else:
        raise ConfigError(f"{where}.kind: unknown arrival kind {kind!r}")
    law.check()
    if "mean" in entry and abs(law.mean - float(entry["mean"])) > 1e-9:
        raise ConfigError(f"{where}.mean: declared {entry['mean']} but law has mean {law.mean}")
    return law


def _parse_arrivals(rows: Any) -> ArrivalSpec:
    if not isinstance(rows, list):
        raise ConfigError("arrivals: expected a list")
    spec: ArrivalSpec = {}
    for n, entry in enumerate(rows):
        where = f"arrivals[{n}]"
        _reject_unknown(entry, {"switch", "switches", "commodity", "commodities", "kind", "value", "lo", "hi", "p", "mean"}, where)
        law = _parse_law(entry, where)
        sw = entry.get("switches", [entry.get("switch")])
        cs = entry.get("commodities", [entry.get("commodity")])
        for i in sw:
            for d in cs:
                spec[(_int(i, where + ".switch"), _int(d, where + ".commodity"))] = law
    return spec


def _parse_flows(block: Mapping) -> FlowWorkload:
    _reject_unknown(block, _FLOW_KEYS, "flows")
    groups = []
    for n, row in enumerate(block.get("groups", [])):
        if len(row) != 3:
            raise ConfigError(f"flows.groups[{n}]: expected [source, commodity, count]")
        groups.append(FlowGroup(*(_int(x, f"flows.groups[{n}]") for x in row)))
    start = block.get("start", [0, 0])
    wl = FlowWorkload(
        groups=tuple(groups),
        size=_int(block.get("size", 1000), "flows.size"),
        start=(_int(start[0], "flows.start"), _int(start[1], "flows.start")),
        init_window=_int(block.get("init_window", 2), "flows.init_window"),
        ema_beta=float(block.get("ema_beta", 0.125)),
    )
    if wl.size < 1 or wl.init_window < 1 or wl.start[0] > wl.start[1] or wl.start[0] < 0:
        raise ConfigError("flows: size and init_window must be >= 1 and start a valid [lo, hi] window")
    if not 0.0 < wl.ema_beta <= 1.0:
        raise ConfigError("flows.ema_beta: must lie in (0, 1]")
    return wl


def _parse_events(block: Mapping):
    _reject_unknown(block, _EVENT_KEYS, "events")
    fails = []
    for n, e in enumerate(block.get("failures", [])):
        _reject_unknown(e, {"slot", "link", "bidirectional"}, f"events.failures[{n}]")
        i, j = e["link"]
        fails.append(LinkFailure(_int(e.get("slot", 0), "slot"), (int(i), int(j)), bool(e.get("bidirectional", True))))
    prio = []
    for n, e in enumerate(block.get("priority", [])):
        _reject_unknown(e, {"link", "rate", "start"}, f"events.priority[{n}]")
        i, j = e["link"]
        prio.append(PriorityReservation((int(i), int(j)), float(e["rate"]), _int(e.get("start", 0), "start")))
    return tuple(fails), tuple(prio)


def parse_document(doc: Mapping) -> ScenarioConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("document: expected a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "document")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"version: unsupported schema version {version}")
    if "topology" not in doc:
        raise ConfigError("topology: missing")
    topo = _parse_topology(doc["topology"])
    arrivals = _parse_arrivals(doc.get("arrivals", []))
    run = doc.get("run", {})
    _reject_unknown(run, _RUN_KEYS, "run")
    if "delta" not in doc["topology"] and arrivals:
        topo = replace(topo, bound=max(topo.bound, *(l.support_max for l in arrivals.values())))
    flows = _parse_flows(doc["flows"]) if "flows" in doc else None
    fails, prio = _parse_events(doc.get("events", {}))
    T = _int(run.get("T", DEFAULT_T), "run.T")
    cfg = ScenarioConfig(
        topology=topo,
        arrivals=arrivals,
        T=T,
        K=float(run.get("K", DEFAULT_K)),
        alpha=float(run.get("alpha", DEFAULT_ALPHA)),
        horizon=_int(run.get("horizon", 1000 * T), "run.horizon"),
        seed=_int(run.get("seed", DEFAULT_SEED), "run.seed"),
        algorithm=run.get("algorithm", "algorithm1"),
        queue_capacity=run.get("queue_capacity"),
        arrival_scale=float(run.get("arrival_scale", 1.0)),
        warmup_fraction=float(run.get("warmup_fraction", 0.2)),
        flows=flows,
        failures=fails,
        priority=prio,
        name=str(doc.get("name", "")),
        source=dict(doc),
    )
    check_run(cfg)
    for (i, d), law in arrivals.items():
        if i not in topo.switches or d not in topo.destinations:
            raise ConfigError(f"arrivals: unknown switch/commodity ({i}, {d})")
        if law.support_max > topo.bound:
            raise ConfigError(f"arrivals: support of ({i}, {d}) exceeds delta={topo.bound}")
    if cfg.queue_capacity is None and flows is not None:
        cfg = replace(cfg, queue_capacity=DEFAULT_QUEUE_CAPACITY)
    return cfg


def load_scenario(text: str) -> ScenarioConfig:
    """Parse a JSON scenario document; parse errors carry line/column."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_document(doc)


def load_scenario_file(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read())


# --- serialisation ------------------------------------------------------------

def topology_to_block(topo: Topology) -> Dict[str, Any]:
    return {
        "switches": sorted(topo.switches),
        "destinations": sorted(topo.destinations),
        "links": [[i, j, c] for (i, j), c in sorted(topo.link_capacity.items())],
        "dest_capacity": [[i, d, b] for (i, d), b in sorted(topo.dest_capacity.items())],
        "next_hops": [[i, d, sorted(h)] for (i, d), h in sorted(topo.next_hops.items())],
        "delta": topo.bound,
    }


def _law_to_entry(law: ArrivalLaw) -> Dict[str, Any]:
    if law.kind == "constant":
        return {"kind": "constant", "value": law.value}
    if law.kind == "uniform":
        return {"kind": "uniform", "lo": law.lo, "hi": law.hi}
    return {"kind": "bernoulli", "value": law.value, "p": law.p}


def to_document(cfg: ScenarioConfig) -> Dict[str, Any]:
    doc: Dict[str, Any] = {
        "version": SCHEMA_VERSION,
        "name": cfg.name,
        "topology": topology_to_block(cfg.topology),
        "arrivals": [dict(switch=i, commodity=d, **_law_to_entry(l)) for (i, d), l in sorted(cfg.arrivals.items())],
        "run": {
            "T": cfg.T, "K": cfg.K, "alpha": cfg.alpha, "horizon": cfg.horizon, "seed": cfg.seed,
            "algorithm": cfg.algorithm, "arrival_scale": cfg.arrival_scale,
            "warmup_fraction": cfg.warmup_fraction,
        },
    }
    if cfg.queue_capacity is not None:
        doc["run"]["queue_capacity"] = cfg.queue_capacity
    if cfg.flows is not None:
        f = cfg.flows
        doc["flows"] = {
            "groups": [[g.source, g.commodity, g.count] for g in f.groups],
            "size": f.size, "start": list(f.start), "init_window": f.init_window, "ema_beta": f.ema_beta,
        }
    if cfg.failures or cfg.priority:
        doc["events"] = {
            "failures": [{"slot": e.slot, "link": list(e.link), "bidirectional": e.bidirectional} for e in cfg.failures],
            "priority": [{"link": list(e.link), "rate": e.rate, "start": e.start} for e in cfg.priority],
        }
    return doc


def config_digest(doc: Mapping) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
