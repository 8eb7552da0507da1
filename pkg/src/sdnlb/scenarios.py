"""Builders for the shipped scenario documents.

The JSON files under ``sdnlb/configs`` are generated from these functions
(``python -m sdnlb.scenarios``) so the next-hop tables of the larger
topologies do not have to be written by hand.
"""

from __future__ import annotations

import json
from collections import deque
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Set, Tuple

from .model import ScenarioConfig, load_scenario, parse_document

POD_A = (1, 2, 3, 4)
POD_B = (5, 6, 7, 8)
AGG_A = (9, 10)
AGG_B = (11, 12)
CORES = (13, 14)


def shortest_next_hops(adjacency: Mapping[int, Iterable[int]], sinks: Mapping[int, Iterable[int]]):
    """Next-hop sets containing every neighbour one hop closer to a sink of the commodity."""
    hops: Dict[Tuple[int, int], List[int]] = {}
    for d, targets in sinks.items():
        dist = {s: 0 for s in targets}
        todo = deque(targets)
        while todo:
            u = todo.popleft()
            for v in adjacency:
                if u in adjacency[v] and v not in dist:
                    dist[v] = dist[u] + 1
                    todo.append(v)
        for i in sorted(adjacency):
            if i in dist and dist[i] > 0:
                hs = sorted(j for j in adjacency[i] if dist.get(j, -1) == dist[i] - 1)
                hops[(i, d)] = hs
    return hops


def _topology_block(edges: Dict[Tuple[int, int], int], sinks: Dict[int, List[int]], dest_cap: int,
                    switches: Iterable[int]) -> dict:
    adj: Dict[int, Set[int]] = {s: set() for s in switches}
    for (i, j) in edges:
        adj[i].add(j)
    hops = shortest_next_hops(adj, sinks)
    return {
        "switches": sorted(adj),
        "destinations": sorted(sinks),
        "links": [[i, j, c] for (i, j), c in sorted(edges.items())],
        "dest_capacity": sorted([s, d, dest_cap] for d, ss in sinks.items() for s in ss),
        "next_hops": [[i, d, h] for (i, d), h in sorted(hops.items())],
    }


def _both(pairs, cap) -> Dict[Tuple[int, int], int]:
    out = {}
    for i, j in pairs:
        out[(i, j)] = cap
        out[(j, i)] = cap
    return out


def line3_doc(algorithm: str = "maxweight", T: int = 1, horizon: int = 1000) -> dict:
    """Three switches in a line, capacity 3, deterministic arrivals (1, 2) at switch 1."""
    return {
        "version": 1,
        "name": "fig2_line3",
        "description": "two commodities through switches 1-2-3, both leaving at switch 3",
        "topology": {
            "switches": [1, 2, 3],
            "destinations": [1, 2],
            "links": [[1, 2, 3], [2, 3, 3]],
            "dest_capacity": [[3, 1, 3], [3, 2, 3]],
            "next_hops": [[1, 1, [2]], [1, 2, [2]], [2, 1, [3]], [2, 2, [3]]],
        },
        "arrivals": [
            {"switch": 1, "commodity": 1, "kind": "constant", "value": 1},
            {"switch": 1, "commodity": 2, "kind": "constant", "value": 2},
        ],
        "run": {"T": T, "K": 10, "horizon": horizon, "seed": 1, "algorithm": algorithm},
    }


LINE4_CAPACITY = 10


def line4_doc(algorithm: str = "algorithm1", T: int = 100, horizon: int = 100_000, seed: int = 1) -> dict:
    """Four-switch line; commodity means 7 and 2 at switch 1, capacity 10 per link."""
    return {
        "version": 1,
        "name": "fig6_line",
        "description": "line network 1-2-3-4, both commodities exit at switch 4",
        "topology": {
            "switches": [1, 2, 3, 4],
            "destinations": [1, 2],
            "links": [[1, 2, LINE4_CAPACITY], [2, 3, LINE4_CAPACITY], [3, 4, LINE4_CAPACITY]],
            "bidirectional": True,
            "dest_capacity": [[4, 1, LINE4_CAPACITY], [4, 2, LINE4_CAPACITY]],
            "next_hops": [[i, d, [i + 1]] for i in (1, 2, 3) for d in (1, 2)],
        },
        "arrivals": [
            {"switch": 1, "commodity": 1, "kind": "uniform", "lo": 0, "hi": 14, "mean": 7},
            {"switch": 1, "commodity": 2, "kind": "uniform", "lo": 0, "hi": 4, "mean": 2},
        ],
        "run": {"T": T, "K": 10, "horizon": horizon, "seed": seed, "algorithm": algorithm},
    }


def intra_dc_edges(edge_cap: int, core_cap: int, failed: Iterable[Tuple[int, int]] = ()) -> Dict[Tuple[int, int], int]:
    edges = {}
    edges.update(_both([(t, a) for t in POD_A for a in AGG_A], edge_cap))
    edges.update(_both([(t, a) for t in POD_B for a in AGG_B], edge_cap))
    edges.update(_both([(a, c) for a in AGG_A + AGG_B for c in CORES], core_cap))
    for i, j in failed:
        edges.pop((i, j), None)
        edges.pop((j, i), None)
    return edges


FIG7_EDGE_CAPACITY = 10
FIG7_CORE_CAPACITY = 10


def intra_dc_doc(algorithm: str = "algorithm1", T: int = 100, horizon: int = 100_000, seed: int = 1,
                 edge_cap: int = FIG7_EDGE_CAPACITY, core_cap: int = FIG7_CORE_CAPACITY) -> dict:
    """14-switch two-pod fabric; commodity d <= 8 leaves at ToR d, commodity 9 at either core."""
    sinks = {d: [d] for d in POD_A + POD_B}
    sinks[9] = list(CORES)
    topo = _topology_block(intra_dc_edges(edge_cap, core_cap), sinks, 20, range(1, 15))
    tors = list(POD_A + POD_B)
    return {
        "version": 1,
        "name": "fig7_intra_dc",
        "description": "intra-DC fabric, E[a]=2 for commodities 1-8 and 1 for commodity 9 at every ToR",
        "topology": topo,
        "arrivals": [
            {"switches": tors, "commodities": tors, "kind": "uniform", "lo": 0, "hi": 4, "mean": 2},
            {"switches": tors, "commodities": [9], "kind": "uniform", "lo": 0, "hi": 2, "mean": 1},
        ],
        "run": {"T": T, "K": 10, "horizon": horizon, "seed": seed, "algorithm": algorithm},
    }


# --- flow-level scenarios ---------------------------------------------------------

FLOW_EDGE_CAPACITY = 4
FLOW_CORE_CAPACITY = 1


def link_failure_doc(algorithm: str = "heuristic", seed: int = 1, flows_per_pair: int = 2, size: int = 150,
                     T: int = 250, horizon: int = 40_000, alpha: float = 5.0) -> dict:
    """Fabric without commodity 9, link 12-14 down, all-to-all ToR flows."""
    sinks = {d: [d] for d in POD_A + POD_B}
    edges = intra_dc_edges(FLOW_EDGE_CAPACITY, FLOW_CORE_CAPACITY, failed=[(12, 14)])
    topo = _topology_block(edges, sinks, 20, range(1, 15))
    tors = POD_A + POD_B
    groups = [[s, d, flows_per_pair] for s in tors for d in tors if s != d]
    return {
        "version": 1,
        "name": "fig7_link_failure",
        "description": "commodity 9 removed and link 12-14 failed; flows between every ToR pair",
        "topology": topo,
        "arrivals": [],
        "run": {"T": T, "K": 10, "alpha": alpha, "horizon": horizon, "seed": seed, "algorithm": algorithm,
                "queue_capacity": 200},
        "flows": {"groups": groups, "size": size, "start": [0, 100], "init_window": 2},
    }


def priority_doc(algorithm: str = "heuristic", seed: int = 1, flows_each_way: int = 60, size: int = 150,
                 T: int = 250, horizon: int = 40_000, alpha: float = 5.0, reserve: float = 0.5) -> dict:
    """Two edge switches joined through middle switches 3 and 4; priority traffic via 3."""
    edges = _both([(1, 3), (1, 4), (2, 3), (2, 4)], 2)
    sinks = {1: [1], 2: [2]}
    topo = _topology_block(edges, sinks, 20, range(1, 5))
    rate = 2 * reserve
    return {
        "version": 1,
        "name": "fig10_priority",
        "description": "normal flows between commodities 1 and 2; a priority flow each way through switch 3",
        "topology": topo,
        "arrivals": [],
        "run": {"T": T, "K": 10, "alpha": alpha, "horizon": horizon, "seed": seed, "algorithm": algorithm,
                "queue_capacity": 200},
        "flows": {"groups": [[1, 2, flows_each_way], [2, 1, flows_each_way]], "size": size,
                  "start": [0, 100], "init_window": 2},
        "events": {"priority": [{"link": [1, 3], "rate": rate}, {"link": [3, 2], "rate": rate},
                                {"link": [2, 3], "rate": rate}, {"link": [3, 1], "rate": rate}]},
    }


SHIPPED = {
    "fig2_line3": lambda: line3_doc("maxweight", T=1),
    "fig3_line3_ideal": lambda: dict(line3_doc("algorithm1", T=100, horizon=10_000), name="fig3_line3_ideal"),
    "fig6_line": line4_doc,
    "fig7_intra_dc": intra_dc_doc,
    "fig7_link_failure": link_failure_doc,
    "fig10_priority": priority_doc,
}


def shipped_path(name: str) -> Path:
    return Path(str(resources.files("sdnlb") / "configs" / f"{name}.json"))


def load_shipped(name: str) -> ScenarioConfig:
    return load_scenario(shipped_path(name).read_text())


def build(name: str, **kw) -> ScenarioConfig:
    return parse_document(SHIPPED[name](**kw) if kw else SHIPPED[name]())


def write_shipped(directory=None) -> List[Path]:
    directory = Path(directory) if directory else Path(__file__).parent / "configs"
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, make in SHIPPED.items():
        path = directory / f"{name}.json"
        path.write_text(json.dumps(make(), indent=1) + "\n")
        out.append(path)
    return out


if __name__ == "__main__":
    for p in write_shipped():
        print(p)
