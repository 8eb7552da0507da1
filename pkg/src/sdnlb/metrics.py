"""Slot traces, metric reports and their file formats."""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

TRACE_MAGIC = b"SDNLBTR1"
TRACE_CSV_COLUMNS = ("slot", "switch", "commodity", "backlog")
METRICS_SCHEMA = 1

INVARIANTS = ("conservation", "capacity", "token_bucket", "k_range", "x_cap",
              "growth", "interval_bound", "nonnegative")


@dataclass
class SlotTrace:
    T: int
    horizon: int
    nodes: List[int]
    comms: List[int]
    links: List[Tuple[int, int]]
    pairs: List[Tuple[int, int, int]]
    active: np.ndarray
    queue_prefix: np.ndarray            # (intervals + 1, nq): sum of Q(s) for s < n*T
    backlog_by_comm: np.ndarray         # (horizon + 1, M): network backlog per commodity at slot start
    interval_arrivals: np.ndarray       # (intervals, nq)
    interval_departures: np.ndarray     # (intervals, nq)
    interval_transmissions: np.ndarray  # (intervals, pairs)
    interval_alloc: np.ndarray          # (intervals, pairs)
    k_values: np.ndarray                # (intervals, links); NaN when not applicable
    k_saturated: np.ndarray             # (intervals, links)
    mode: str = "none"
    snapshot_stride: int = 0
    snapshots: Optional[np.ndarray] = None        # (n, nq) queues at slots 0, stride, ...
    slot_transmissions: Optional[np.ndarray] = None  # full mode: (horizon, pairs)
    slot_arrivals: Optional[np.ndarray] = None
    slot_departures: Optional[np.ndarray] = None
    violations: Dict[str, int] = field(default_factory=dict)
    algorithm: str = ""
    seed: int = 0
    K: float = 0.0
    digest: str = ""
    warmup_fraction: float = 0.2

    def queue_index(self, i: int, d: int) -> int:
        return self.nodes.index(i) * len(self.comms) + self.comms.index(d)

    def queue_series(self, i: int, d: int) -> np.ndarray:
        if self.snapshots is None:
            raise ValueError("trace was recorded without queue snapshots")
        return self.snapshots[:, self.queue_index(i, d)]

    def link_service(self, i: int, j: int) -> np.ndarray:
        """Full-mode per-slot service on link (i, j), one column per commodity in D_ij."""
        if self.slot_transmissions is None:
            raise ValueError("per-slot transmissions need trace mode 'full'")
        cols = [n for n, p in enumerate(self.pairs) if p[:2] == (i, j)]
        return self.slot_transmissions[:, cols]


@dataclass
class MetricsReport:
    algorithm: str
    seed: int
    config_digest: str
    T: int
    K: float
    horizon: int
    window: Tuple[int, int]
    avg_backlog: Dict[str, float]
    mean_backlog_per_queue: float
    n_queues: int
    k_saturation: Optional[float]
    k_max: Optional[float]
    convergence_slot: Optional[int]
    violations: Dict[str, int]
    schema: int = METRICS_SCHEMA

    def backlog(self, i: int, d: int) -> float:
        return self.avg_backlog.get(f"{i},{d}", 0.0)

    def to_json(self) -> str:
        doc = asdict(self)
        doc["window"] = list(self.window)
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def default_window(trace: SlotTrace) -> Tuple[int, int]:
    t0 = int(trace.horizon * trace.warmup_fraction) // trace.T * trace.T
    return t0, trace.horizon


def convergence_slot(trace: SlotTrace, block: int = 10, tol: float = 0.01) -> Optional[int]:
    """First slot after which the block-mean total backlog moves by < tol between blocks."""
    per_int = np.diff(trace.queue_prefix.sum(axis=1)) / trace.T
    nb = len(per_int) // block
    if nb < 2:
        return None
    means = per_int[: nb * block].reshape(nb, block).mean(axis=1)
    for b in range(nb - 1):
        ref = max(means[b], 1e-12)
        if abs(means[b + 1] - means[b]) <= tol * ref:
            return (b + 1) * block * trace.T
    return None


def collect_metrics(trace: SlotTrace, window: Optional[Tuple[int, int]] = None,
                    use_detector: bool = False) -> MetricsReport:
    conv = convergence_slot(trace)
    if window is None:
        window = default_window(trace)
        if use_detector and conv is not None:
            window = (conv, trace.horizon)
    t0, t1 = window
    if trace.horizon == 0:
        t0 = t1 = 0
    elif not 0 <= t0 < t1 <= trace.horizon:
        raise ValueError(f"empty or out-of-range metrics window [{t0}, {t1})")
    elif t0 % trace.T or t1 % trace.T:
        raise ValueError(f"metrics window [{t0}, {t1}) must lie on the interval grid (T={trace.T})")
    M = len(trace.comms)
    avg: Dict[str, float] = {}
    n_active = int(trace.active.sum())
    if t1 > t0:
        sums = trace.queue_prefix[t1 // trace.T] - trace.queue_prefix[t0 // trace.T]
        means = sums / float(t1 - t0)
        for q in np.nonzero(trace.active)[0]:
            i, d = trace.nodes[q // M], trace.comms[q % M]
            avg[f"{i},{d}"] = float(means[q])
        per_queue = float(means[trace.active].mean()) if n_active else 0.0
        ints = slice(t0 // trace.T, t1 // trace.T)
        kv = trace.k_values[ints]
        if kv.size and not np.isnan(kv).all():
            k_sat = float(trace.k_saturated[ints].mean())
            k_max = float(np.nanmax(kv))
        else:
            k_sat = k_max = None
    else:
        per_queue, k_sat, k_max = 0.0, None, None
    return MetricsReport(
        algorithm=trace.algorithm, seed=trace.seed, config_digest=trace.digest, T=trace.T, K=trace.K,
        horizon=trace.horizon, window=(t0, t1), avg_backlog=avg, mean_backlog_per_queue=per_queue,
        n_queues=n_active, k_saturation=k_sat, k_max=k_max, convergence_slot=conv,
        violations=dict(trace.violations),
    )


# --- exports --------------------------------------------------------------------

def write_trace_csv(trace: SlotTrace, path) -> None:
    """One row per recorded slot per active queue."""
    if trace.snapshots is None:
        raise ValueError("trace has no queue snapshots (mode 'none')")
    M = len(trace.comms)
    qs = np.nonzero(trace.active)[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_CSV_COLUMNS)
        for n, row in enumerate(trace.snapshots):
            slot = n * trace.snapshot_stride
            for q in qs:
                w.writerow((slot, trace.nodes[q // M], trace.comms[q % M], int(row[q])))


def write_trace_binary(trace: SlotTrace, path) -> None:
    """Little-endian layout::

        8s   magic "SDNLBTR1"
        32s  sha256 config digest (raw bytes)
        u32  n_switches, u32 n_commodities, u32 stride, u32 n_snapshots, u64 seed
        i32  switch ids[n_switches], i32 commodity ids[n_commodities]
        i64  backlog[n_snapshots][n_switches * n_commodities]   (row-major)
    """
    if trace.snapshots is None:
        raise ValueError("trace has no queue snapshots (mode 'none')")
    digest = bytes.fromhex(trace.digest) if trace.digest else bytes(32)
    snaps = np.ascontiguousarray(trace.snapshots, dtype="<i8")
    with open(path, "wb") as fh:
        fh.write(TRACE_MAGIC)
        fh.write(digest)
        fh.write(struct.pack("<IIIIQ", len(trace.nodes), len(trace.comms), trace.snapshot_stride,
                             len(snaps), trace.seed))
        fh.write(np.asarray(trace.nodes, dtype="<i4").tobytes())
        fh.write(np.asarray(trace.comms, dtype="<i4").tobytes())
        fh.write(snaps.tobytes())


def read_trace_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != TRACE_MAGIC:
        raise ValueError("not an sdnlb binary trace")
    digest = raw[8:40].hex()
    n, m, stride, count, seed = struct.unpack_from("<IIIIQ", raw, 40)
    off = 40 + struct.calcsize("<IIIIQ")
    nodes = np.frombuffer(raw, "<i4", n, off).tolist()
    off += 4 * n
    comms = np.frombuffer(raw, "<i4", m, off).tolist()
    off += 4 * m
    snaps = np.frombuffer(raw, "<i8", count * n * m, off).reshape(count, n * m)
    return {"digest": digest, "nodes": nodes, "comms": comms, "stride": stride, "seed": seed, "snapshots": snaps}
