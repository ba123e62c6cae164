"""Packet-granularity discrete-event simulator with flowlet load balancing
and trimming-based ("purified") transport.

Transport model, deliberately small: receivers pull data at line rate,
senders blast the first window at line rate, overflowing router queues trim
data packets to headers instead of dropping them, and control traffic
(headers, pulls, acks) travels at high priority.  Load-balancing policies:
static-hash minimal (EcmpMinimal), flowlet re-hashing over minimal paths
(LetFlow), per-packet minimal spraying (PacketSpray), and layered flowlet
balancing with trim-triggered layer changes (FatPaths).

Time is integer picoseconds; one run is strictly single-threaded and
deterministic for a fixed (workload, config, seed).
"""

from __future__ import annotations

import csv
import heapq
import os
import random
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DeadlockDetected, InvalidParameter
from .layers import ForwardingTables
from .topology import RouterGraph

PS = 10**12  # picoseconds per second

DATA = 0
HDR = 1  # trimmed data packet: header only, high priority
PULL = 2
ACK = 3

_PRIO_HIGH = 0
_PRIO_NORM = 1


@dataclass
class SimConfig:
    link_rate: float = 10e9  # bits/s
    link_latency: float = 1e-6  # s
    mtu: int = 9216  # bytes per data packet
    header_bytes: int = 64
    queue_limit: int = 8  # payload-bearing packets per router output port
    window: int = 8  # first-RTT burst, packets
    flowlet_gap: float = 50e-6  # s
    policy: str = "FatPaths"  # EcmpMinimal | LetFlow | FatPaths | PacketSpray
    rto: float = 2e-3  # s, recovery for silent (failed-link) losses
    max_rto_retries: int = 60
    seed: int = 0

    def __post_init__(self):
        if min(self.link_rate, self.link_latency, self.mtu, self.queue_limit,
               self.window, self.flowlet_gap, self.rto) <= 0:
            raise InvalidParameter("all SimConfig quantities must be positive")
        if self.policy not in ("EcmpMinimal", "LetFlow", "FatPaths", "PacketSpray"):
            raise InvalidParameter(f"unknown policy {self.policy!r}")


@dataclass
class FlowRecord:
    flow_id: int
    size: int
    start: float
    finish: float
    fct: float
    retransmits: int
    trims: int
    layers_used: tuple
    policy: str


class _Packet:
    __slots__ = ("flow", "seq", "kind", "layer", "wire_bytes", "prio", "hops")

    def __init__(self, flow, seq, kind, layer, wire_bytes, prio):
        self.flow = flow
        self.seq = seq
        self.kind = kind
        self.layer = layer
        self.wire_bytes = wire_bytes
        self.prio = prio
        self.hops = 0


class _Link:
    __slots__ = ("key", "rate_ps_per_byte", "latency_ps", "queue_high",
                 "queue_norm", "busy", "data_occupancy", "is_router_port",
                 "failed")

    def __init__(self, key, rate, latency_ps, is_router_port):
        self.key = key
        self.rate_ps_per_byte = 8 * PS / rate
        self.latency_ps = latency_ps
        self.queue_high = deque()
        self.queue_norm = deque()
        self.busy = False
        self.data_occupancy = 0
        self.is_router_port = is_router_port
        self.failed = False

    def ser_ps(self, nbytes):
        return max(1, int(nbytes * self.rate_ps_per_byte))


class _FlowState:
    __slots__ = ("flow_id", "src_ep", "dst_ep", "src_router", "dst_router",
                 "size", "start_ps", "n_seqs", "last_seq_bytes", "next_seq",
                 "received", "bytes_rx", "finish_ps", "layer", "last_send_ps",
                 "change_layer", "retransmits", "trims", "layers_used",
                 "recv_upto", "rto_retries", "stalled", "done",
                 "ecmp_salt")

    def __init__(self, f, placement, mtu, rng):
        self.flow_id = f.flow_id
        self.src_ep = f.src
        self.dst_ep = f.dst
        self.src_router = placement[f.src]
        self.dst_router = placement[f.dst]
        self.size = f.size
        self.start_ps = int(round(f.start * PS))
        self.n_seqs = max(1, -(-f.size // mtu))
        self.last_seq_bytes = f.size - (self.n_seqs - 1) * mtu
        self.next_seq = 0
        self.received = set()
        self.bytes_rx = 0
        self.finish_ps = -1
        self.layer = 1
        self.last_send_ps = -(10**18)
        self.change_layer = False
        self.retransmits = 0
        self.trims = 0
        self.layers_used = set()
        self.recv_upto = 0
        self.rto_retries = 0
        self.stalled = False
        self.done = False
        self.ecmp_salt = rng.getrandbits(32)

    def seq_bytes(self, seq, mtu):
        return self.last_seq_bytes if seq == self.n_seqs - 1 else mtu

    def lowest_missing(self):
        while self.recv_upto < self.n_seqs and self.recv_upto in self.received:
            self.recv_upto += 1
        return self.recv_upto if self.recv_upto < self.n_seqs else None


def _fnv1a(*ints) -> int:
    h = 0xCBF29CE484222325
    for x in ints:
        for _ in range(8):
            h ^= x & 0xFF
            h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
            x >>= 8
    return h


class Simulation:
    """One deterministic run over a placed workload."""

    def __init__(self, g: RouterGraph, tables: ForwardingTables, workload,
                 config: SimConfig, failed_links=()):
        self.g = g
        self.tables = tables
        self.config = config
        self.rng = random.Random(config.seed)
        self.nr = g.num_routers
        self.adj = g.adjacency()
        latency_ps = int(round(config.link_latency * PS))
        self.links = {}
        for u, v in g.edges:
            self.links[(u, v)] = _Link((u, v), config.link_rate, latency_ps, True)
            self.links[(v, u)] = _Link((v, u), config.link_rate, latency_ps, True)
        # endpoint NIC links keyed ("ep", e) up and ("rep", e) down
        self.placement = workload.placement
        endpoints = set()
        for f in workload.flows:
            endpoints.add(f.src)
            endpoints.add(f.dst)
        for ep in endpoints:
            r = self.placement[ep]
            self.links[("ep", ep)] = _Link(("ep", ep), config.link_rate, latency_ps, False)
            self.links[("rep", ep)] = _Link(("rep", ep), config.link_rate, latency_ps, True)
        self.any_failed = False
        for u, v in failed_links:
            for key in ((u, v), (v, u)):
                if key in self.links:
                    self.links[key].failed = True
                    self.any_failed = True
        # layer-1 distances for minimal-path policies
        self.dist1 = tables.dist[0]
        self.n_layers = tables.n_layers
        self.flows = [_FlowState(f, self.placement, config.mtu, self.rng) for f in workload.flows]
        self.flow_by_id = {fs.flow_id: fs for fs in self.flows}
        self.letflow_state: dict = {}
        self.pull_queue: dict = {ep: deque() for ep in endpoints}
        self.pacer_free: dict = {ep: 0 for ep in endpoints}
        self.pacer_scheduled: dict = {ep: False for ep in endpoints}
        self.pull_interval = _Link(("x",), config.link_rate, 0, False).ser_ps(config.mtu)
        self.events: list = []
        self.event_seq = 0
        self.now = 0
        self.max_router_queue = 0
        self.drops_failed_link = 0
        self.total_trims = 0
        self.stalled_flows: list = []
        self.mtu = config.mtu
        self.header_bytes = config.header_bytes
        self.flowlet_gap_ps = int(round(config.flowlet_gap * PS))
        self.rto_ps = int(round(config.rto * PS))

    # -- event plumbing ----------------------------------------------------

    def _push(self, t, kind, payload):
        heapq.heappush(self.events, (t, self.event_seq, kind, payload))
        self.event_seq += 1

    def run(self) -> list:
        for i, fs in enumerate(self.flows):
            self._push(fs.start_ps, "start", i)
        while self.events:
            self.now, _, kind, payload = heapq.heappop(self.events)
            getattr(self, "_ev_" + kind)(payload)
        unfinished = [fs.flow_id for fs in self.flows if not fs.done and not fs.stalled]
        if unfinished:
            raise DeadlockDetected(f"event queue drained with {len(unfinished)} unfinished flows")
        records = []
        for fs in self.flows:
            if fs.stalled:
                continue
            records.append(FlowRecord(
                flow_id=fs.flow_id, size=fs.size,
                start=fs.start_ps / PS, finish=fs.finish_ps / PS,
                fct=(fs.finish_ps - fs.start_ps) / PS,
                retransmits=fs.retransmits, trims=fs.trims,
                layers_used=tuple(sorted(fs.layers_used)),
                policy=self.config.policy,
            ))
        return records

    # -- flow start / sending ----------------------------------------------

    def _ev_start(self, idx):
        fs = self.flows[idx]
        burst = min(self.config.window, fs.n_seqs)
        for _ in range(burst):
            self._send_next_data(fs)
        self._push(self.now + self.rto_ps, "rto", idx)

    def _send_next_data(self, fs, retx_seq=None):
        if retx_seq is None:
            if fs.next_seq >= fs.n_seqs:
                return
            seq = fs.next_seq
            fs.next_seq += 1
        else:
            seq = retx_seq
            fs.retransmits += 1
        self._choose_layer(fs)
        prio = _PRIO_HIGH if retx_seq is not None else _PRIO_NORM
        pkt = _Packet(fs, seq, DATA, fs.layer, fs.seq_bytes(seq, self.mtu), prio)
        fs.last_send_ps = self.now
        fs.layers_used.add(fs.layer)
        self._enqueue(self.links[("ep", fs.src_ep)], pkt)

    def _choose_layer(self, fs):
        if self.config.policy != "FatPaths" or self.n_layers == 1:
            fs.layer = 1
            return
        gap_expired = self.now - fs.last_send_ps > self.flowlet_gap_ps
        if gap_expired or fs.change_layer or fs.layer < 1:
            fs.change_layer = False
            reach = self.tables.next_hop[:, fs.src_router, fs.dst_router]
            options = [i + 1 for i in range(self.n_layers)
                       if reach[i] >= 0 or fs.src_router == fs.dst_router]
            fs.layer = options[self.rng.randrange(len(options))] if options else 1

    # -- link machinery ------------------------------------------------------

    def _enqueue(self, link, pkt):
        if link.failed:
            self.drops_failed_link += 1
            return
        if pkt.kind == DATA and link.is_router_port \
                and link.data_occupancy >= self.config.queue_limit:
            # purified transport: drop the payload, keep the header
            pkt.kind = HDR
            pkt.wire_bytes = self.header_bytes
            pkt.prio = _PRIO_HIGH
            pkt.flow.trims += 1
            self.total_trims += 1
        if pkt.kind == DATA and link.is_router_port:
            link.data_occupancy += 1
            if link.data_occupancy > self.max_router_queue:
                self.max_router_queue = link.data_occupancy
        if pkt.prio == _PRIO_HIGH:
            link.queue_high.append(pkt)
        else:
            link.queue_norm.append(pkt)
        if not link.busy:
            self._start_tx(link)

    def _start_tx(self, link):
        if link.queue_high:
            pkt = link.queue_high.popleft()
        elif link.queue_norm:
            pkt = link.queue_norm.popleft()
        else:
            return
        if pkt.kind == DATA and link.is_router_port:
            link.data_occupancy -= 1
        link.busy = True
        ser = link.ser_ps(pkt.wire_bytes)
        self._push(self.now + ser, "txdone", link.key)
        self._push(self.now + ser + link.latency_ps, "arrive", (link.key, pkt))

    def _ev_txdone(self, key):
        link = self.links[key]
        link.busy = False
        if link.queue_high or link.queue_norm:
            self._start_tx(link)

    # -- arrivals ------------------------------------------------------------

    def _ev_arrive(self, payload):
        key, pkt = payload
        pkt.hops += 1
        # control detours around failed links may wander; everything else
        # must follow loop-free forwarding walks
        budget = self.nr + 4 if not self.any_failed else 4 * self.nr + 16
        if pkt.hops > budget:
            raise AssertionError(f"packet looped: flow {pkt.flow.flow_id} seq {pkt.seq}")
        if key[0] == "ep":  # endpoint uplink reached the endpoint's router
            self._route_at_router(self.placement[key[1]], pkt)
        elif key[0] == "rep":  # router downlink reached the endpoint
            self._deliver(key[1], pkt)
        else:
            self._route_at_router(key[1], pkt)

    def _route_at_router(self, router, pkt):
        fs = pkt.flow
        if pkt.kind in (PULL, ACK):
            target_ep = fs.src_ep
            target_router = fs.src_router
        else:
            target_ep = fs.dst_ep
            target_router = fs.dst_router
        if router == target_router:
            self._enqueue(self.links[("rep", target_ep)], pkt)
            return
        nxt = self._next_hop(router, target_router, pkt)
        if nxt < 0:
            self.drops_failed_link += 1  # unroutable within chosen layer
            return
        self._enqueue(self.links[(router, nxt)], pkt)

    def _next_hop(self, router, target_router, pkt):
        policy = self.config.policy
        fs = pkt.flow
        if pkt.kind in (PULL, ACK) or policy == "EcmpMinimal":
            cands = self._minimal_candidates(router, target_router)
            if not cands and pkt.kind in (PULL, ACK) and self.any_failed:
                # control detour around a dead link: least-distance live port
                cands = self._detour_candidates(router, target_router)
            if not cands:
                return -1
            # under failures the static distances may point back across the
            # dead link; hop-salted hashing breaks the resulting ping-pong
            salt = pkt.hops if (self.any_failed and pkt.kind in (PULL, ACK)) else 0
            return cands[_fnv1a(fs.flow_id, fs.ecmp_salt, router, salt) % len(cands)]
        if policy == "FatPaths":
            return int(self.tables.next_hop[pkt.layer - 1, router, target_router])
        if policy == "PacketSpray":
            cands = self._minimal_candidates(router, target_router)
            if not cands:
                return -1
            return cands[self.rng.randrange(len(cands))]
        # LetFlow: flowlet re-hash over minimal candidates at each router
        cands = self._minimal_candidates(router, target_router)
        if not cands:
            return -1
        key = (router, fs.flow_id)
        state = self.letflow_state.get(key)
        if state is None or self.now - state[1] > self.flowlet_gap_ps or state[0] not in cands:
            choice = cands[self.rng.randrange(len(cands))]
        else:
            choice = state[0]
        self.letflow_state[key] = (choice, self.now)
        return choice

    def _minimal_candidates(self, router, target_router):
        dist = self.dist1
        dr = dist[router, target_router]
        if dr < 0:
            return []
        out = []
        for v in self.adj[router]:
            if dist[v, target_router] == dr - 1 and not self.links[(router, v)].failed:
                out.append(v)
        return out

    def _detour_candidates(self, router, target_router):
        dist = self.dist1
        live = [v for v in self.adj[router] if not self.links[(router, v)].failed]
        if not live:
            return []
        best = min(dist[v, target_router] for v in live if dist[v, target_router] >= 0)
        return [v for v in live if dist[v, target_router] == best]

    # -- receiver ------------------------------------------------------------

    def _deliver(self, ep, pkt):
        fs = pkt.flow
        if pkt.kind == ACK:
            return
        if pkt.kind == PULL:
            self._sender_pull(fs, pkt)
            return
        if pkt.kind == HDR:
            # payload was trimmed: request a retransmission, high priority,
            # and ask the sender to move the flow to a different layer
            fs.change_layer = True
            self._queue_pull(ep, fs, retx_seq=pkt.seq, urgent=True)
            return
        # DATA
        if fs.done or pkt.seq in fs.received:
            return  # duplicate delivery is ignored, never double-counted
        fs.received.add(pkt.seq)
        fs.bytes_rx += pkt.wire_bytes
        if fs.bytes_rx >= fs.size:
            fs.done = True
            fs.finish_ps = self.now
            ack = _Packet(fs, 0, ACK, 1, self.header_bytes, _PRIO_HIGH)
            self._enqueue(self.links[("ep", ep)], ack)
            return
        # one pull per new arrival (never per duplicate, so pulls stay
        # bounded); at the tail the sender answers with a retransmission
        self._queue_pull(ep, fs, retx_seq=None, urgent=False)

    def _queue_pull(self, ep, fs, retx_seq, urgent):
        q = self.pull_queue[ep]
        if urgent:
            q.appendleft((fs.flow_id, retx_seq))
        else:
            q.append((fs.flow_id, retx_seq))
        self._drain_pacer(ep)

    def _drain_pacer(self, ep):
        if self.pacer_scheduled[ep] or not self.pull_queue[ep]:
            return
        t = max(self.now, self.pacer_free[ep])
        self.pacer_scheduled[ep] = True
        self._push(t, "pacer", ep)

    def _ev_pacer(self, ep):
        self.pacer_scheduled[ep] = False
        q = self.pull_queue[ep]
        if not q:
            return
        flow_id, retx_seq = q.popleft()
        fs = self.flow_by_id[flow_id]
        self.pacer_free[ep] = self.now + self.pull_interval
        pull = _Packet(fs, retx_seq if retx_seq is not None else -1, PULL, 1,
                       self.header_bytes, _PRIO_HIGH)
        self._enqueue(self.links[("ep", ep)], pull)
        self._drain_pacer(ep)

    # -- sender reactions ----------------------------------------------------

    def _sender_pull(self, fs, pkt):
        if fs.done:
            return
        fs.rto_retries = 0
        if pkt.seq >= 0:
            self._send_next_data(fs, retx_seq=pkt.seq)
        elif fs.next_seq < fs.n_seqs:
            self._send_next_data(fs)
        else:
            # everything was sent at least once: the receiver-driven pull
            # now asks for the lowest sequence it still misses
            seq = fs.lowest_missing()
            if seq is not None:
                self._send_next_data(fs, retx_seq=seq)

    def _ev_rto(self, idx):
        fs = self.flows[idx]
        if fs.done or fs.stalled:
            return
        idle = self.now - fs.last_send_ps >= self.rto_ps
        if idle:
            fs.rto_retries += 1
            if fs.rto_retries > self.config.max_rto_retries:
                fs.stalled = True
                self.stalled_flows.append(fs.flow_id)
                return
            seq = fs.lowest_missing()
            if seq is not None:
                fs.change_layer = True
                self._send_next_data(fs, retx_seq=seq)
        self._push(self.now + self.rto_ps, "rto", idx)


def run_sim(g: RouterGraph, tables: ForwardingTables, workload, config: SimConfig,
            failed_links=()) -> list:
    """Simulate the workload; returns completed FlowRecords.  Stalled flows
    (possible only with failed links and no alternate layer) are reported in
    run_sim.last_diagnostics instead of silently hanging."""
    sim = Simulation(g, tables, workload, config, failed_links=failed_links)
    records = sim.run()
    run_sim.last_diagnostics = {
        "stalled_flows": sim.stalled_flows,
        "max_router_queue": sim.max_router_queue,
        "drops_failed_link": sim.drops_failed_link,
        "trims": sim.total_trims,
    }
    return records


# ---------------------------------------------------------------------------
# metrics and composite workloads


def fct_stats(records, warmup_window: float = 0.0) -> dict:
    """Mean / p10 / p50 / p99 FCT and throughput-per-flow by size bucket;
    flows starting in the first half of the warmup window are dropped."""
    cutoff = warmup_window / 2.0
    kept = [r for r in records if r.start >= cutoff]
    out = {"n_flows": len(kept), "buckets": {}}
    if not kept:
        return out
    by_size: dict = {}
    for r in kept:
        by_size.setdefault(r.size, []).append(r)
    for size, rs in sorted(by_size.items()):
        fcts = np.array([r.fct for r in rs])
        tpf = np.array([r.size / r.fct for r in rs])
        out["buckets"][size] = {
            "n": len(rs),
            "fct_mean": float(fcts.mean()),
            "fct_p10": float(np.percentile(fcts, 10)),
            "fct_p50": float(np.percentile(fcts, 50)),
            "fct_p99": float(np.percentile(fcts, 99)),
            "tpf_mean": float(tpf.mean()),
        }
    all_fct = np.array([r.fct for r in kept])
    out["fct_mean"] = float(all_fct.mean())
    out["fct_p99"] = float(np.percentile(all_fct, 99))
    out["tpf_mean"] = float(np.mean([r.size / r.fct for r in kept]))
    return out


def run_stencil_barrier(g, tables, config, offsets, flow_size=200_000,
                        phases=1, seed=0, randomized_placement=True) -> float:
    """Stencil phases separated by barriers: every endpoint sends one flow
    per offset, the phase ends when the last flow finishes, and phases run
    back-to-back on an empty network.  Returns total completion time."""
    from .traffic import FlowWorkload, Flow, randomize_placement

    n = g.num_endpoints
    total = 0.0
    for phase in range(phases):
        placement = randomize_placement(n, g.concentration, g.hosts(),
                                        seed=seed + phase,
                                        identity=not randomized_placement)
        flows = []
        fid = 0
        for s in range(n):
            for c in offsets:
                flows.append(Flow(fid, s, (s + c) % n, flow_size, 0.0))
                fid += 1
        wl = FlowWorkload(flows=flows, placement=placement)
        records = run_sim(g, tables, wl, config)
        total += max(r.finish for r in records)
    return total


def records_to_csv(records, path: str, topology: str = "") -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["flow_id", "bytes", "start_s", "fct_s", "retx", "trims",
                         "policy", "topology"])
        for r in records:
            writer.writerow([r.flow_id, r.size, f"{r.start:.9f}", f"{r.fct:.9f}",
                             r.retransmits, r.trims, r.policy, topology])
    os.replace(tmp, path)
