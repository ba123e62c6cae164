"""Traffic patterns, flow workloads, and endpoint placement."""

from __future__ import annotations

import csv
import json
import os
import random
from dataclasses import dataclass, field

from .errors import InvalidParameter
from .topology import RouterGraph

# 20-point discretization of a web-search-style flow size mix, calibrated so
# the fixed set spans 32 KiB..2 MiB with an arithmetic mean of 1 MB (within
# 2%).  Calibrated, not taken from a published table; kept in one place so
# experiment manifests are self-describing.
FLOW_SIZE_TABLE = (
    32768, 176821, 263602, 347421, 431960, 518536, 607791, 700098,
    795696, 894758, 997414, 1103772, 1213921, 1327941, 1445905, 1567881,
    1693933, 1824122, 1958509, 2097152,
)

STENCIL_OFFSETS_SMALL = (1, -1, 42, -42)
STENCIL_OFFSETS_LARGE = (1, -1, 1337, -1337)
STENCIL_LARGE_THRESHOLD = 10_000


# ---------------------------------------------------------------------------
# endpoint-level patterns


def pattern_targets(kind: str, n: int, seed: int = 0, **params) -> list:
    """Source->destination endpoint pairs for the named pattern.

    Single-target kinds return one pair per source in source order; stencil
    and parallel-permutation kinds return several pairs per source.
    """
    if n < 2:
        raise InvalidParameter("need at least two endpoints")
    rng = random.Random(seed)
    kind_l = kind.lower()
    if kind_l == "randomuniform":
        out = []
        for s in range(n):
            t = rng.randrange(n - 1)
            if t >= s:
                t += 1
            out.append((s, t))
        return out
    if kind_l == "randompermutation":
        return [(s, t) for s, t in enumerate(_fixed_point_free_permutation(n, rng))]
    if kind_l == "offdiagonal":
        c = params.get("c", 1)
        if c % n == 0:
            raise InvalidParameter("off-diagonal offset must not be 0 mod N")
        return [(s, (s + c) % n) for s in range(n)]
    if kind_l == "shuffle":
        return [(s, shuffle_target(s, n)) for s in range(n)]
    if kind_l == "stencil":
        offsets = params.get("offsets")
        if offsets is None:
            offsets = STENCIL_OFFSETS_LARGE if n > STENCIL_LARGE_THRESHOLD else STENCIL_OFFSETS_SMALL
        out = []
        for s in range(n):
            for c in offsets:
                out.append((s, (s + c) % n))
        return out
    if kind_l == "parallelpermutations":
        m = params.get("m", 4)
        out = []
        for _ in range(m):
            out.extend((s, t) for s, t in enumerate(_fixed_point_free_permutation(n, rng)))
        return out
    raise InvalidParameter(f"unknown traffic pattern {kind!r}")


def _fixed_point_free_permutation(n: int, rng: random.Random) -> list:
    perm = list(range(n))
    rng.shuffle(perm)
    # rotate any fixed points among themselves
    fixed = [i for i in range(n) if perm[i] == i]
    if len(fixed) == 1:
        j = fixed[0]
        k = (j + 1) % n
        perm[j], perm[k] = perm[k], perm[j]
    elif fixed:
        for a, b in zip(fixed, fixed[1:] + fixed[:1]):
            perm[a] = b
    return perm


def shuffle_target(s: int, n: int) -> int:
    """Bitwise left rotation by one position in an (i+1)-bit field, with
    2^i < N < 2^(i+1), taken modulo N."""
    i = _shuffle_bits(n)
    width = i + 1
    mask = (1 << width) - 1
    rotated = ((s << 1) | (s >> i)) & mask
    return rotated % n


def _shuffle_bits(n: int) -> int:
    i = n.bit_length() - 1
    if (1 << i) == n:
        raise InvalidParameter("shuffle undefined when N is a power of two")
    return i


def skewed_offdiagonal_pairs(g: RouterGraph, active_fraction: float = 0.1) -> list:
    """Adversarial non-randomized off-diagonal: only the first fraction of
    routers is active and the offset is a router-aligned long jump, so all
    endpoints of an active router collide onto one destination router.

    The jump is chosen so active pairs sit at router distance >= 2 where
    possible: adjacent pairs would collide on the direct link instead of on
    contended multi-hop paths."""
    p = g.concentration
    n = g.num_endpoints
    hosts = g.hosts()
    nh = len(hosts)
    active_routers = max(1, int(nh * active_fraction))
    jump_routers = max(1, nh // 2)
    if g.num_routers > 1:
        dist_rows = {hosts[ri]: g.bfs_distances(hosts[ri]) for ri in range(active_routers)}

        def adjacent_pairs(j):
            return sum(
                1 for ri in range(active_routers)
                if dist_rows[hosts[ri]][hosts[(ri + j) % nh]] < 2
            )

        candidates = sorted(range(nh // 4, 3 * nh // 4) or [jump_routers],
                            key=lambda j: (adjacent_pairs(j), abs(j - nh // 2)))
        if candidates:
            jump_routers = candidates[0]
    jump = jump_routers * p
    pairs = []
    for ri in range(active_routers):
        for slot in range(p):
            s = ri * p + slot
            pairs.append((s, (s + jump) % n))
    return pairs


# ---------------------------------------------------------------------------
# worst-case pattern (maximum-weight distance matching)


def worst_case_pattern(g: RouterGraph, seed: int = 0, exact_limit: int = 500):
    """Endpoint pairing from a maximum-weight matching over router pairs
    weighted by shortest-path distance; both directions of each matched
    router pair communicate.  Exact blossom matching up to exact_limit
    routers, greedy farthest-pair extraction above.  Returns (pairs,
    method) so outputs record which matching solver ran."""
    return _worst_case_impl(g, list(g.hosts()), seed, exact_limit)


def _worst_case_impl(g, hosts, seed, exact_limit):
    dist_rows = {}
    for s in hosts:
        dist_rows[s] = g.bfs_distances(s)
    if len(hosts) <= exact_limit:
        import networkx as nx

        mg = nx.Graph()
        for i, u in enumerate(hosts):
            for v in hosts[i + 1 :]:
                mg.add_edge(u, v, weight=dist_rows[u][v])
        matching = nx.max_weight_matching(mg, maxcardinality=True)
        matched = sorted((min(u, v), max(u, v)) for u, v in matching)
        method = "blossom"
    else:
        rng = random.Random(seed)
        remaining = set(hosts)
        matched = []
        while len(remaining) > 1:
            u = max(remaining, key=lambda x: (max(dist_rows[x][y] for y in remaining if y != x), -x))
            best = max((y for y in remaining if y != u), key=lambda y: (dist_rows[u][y], -y))
            remaining.discard(u)
            remaining.discard(best)
            matched.append((min(u, best), max(u, best)))
        method = "greedy"
    p = g.concentration
    host_index = {r: i for i, r in enumerate(hosts)}
    pairs = []
    for r1, r2 in matched:
        for slot in range(p):
            e1 = host_index[r1] * p + slot
            e2 = host_index[r2] * p + slot
            pairs.append((e1, e2))
            pairs.append((e2, e1))
    return pairs, method


def worst_case_router_demands(g: RouterGraph, seed: int = 0, intensity: float = 1.0) -> list:
    """Router-level commodities from the worst-case matching: one unit of
    demand per direction per matched pair, subsampled without replacement
    at the given intensity."""
    pairs, method = _worst_case_impl(g, list(g.hosts()), seed, 500)
    p = g.concentration
    router_pairs = sorted({(g.hosts()[s // p], g.hosts()[t // p]) for s, t in pairs})
    if not (0 < intensity <= 1):
        raise InvalidParameter("intensity must be in (0, 1]")
    rng = random.Random(seed + 1)
    keep = max(1, round(len(router_pairs) * intensity))
    chosen = sorted(rng.sample(router_pairs, keep))
    return chosen, method


# ---------------------------------------------------------------------------
# sizes, arrivals, placement


def flow_sizes(count: int, seed: int = 0) -> list:
    """Sizes drawn uniformly from the fixed 20-point table."""
    rng = random.Random(seed)
    return [FLOW_SIZE_TABLE[rng.randrange(len(FLOW_SIZE_TABLE))] for _ in range(count)]


def poisson_arrivals(n_endpoints: int, lam: float, window: float, seed: int = 0) -> list:
    """Per-endpoint start times: exponential inter-arrivals at rate lam
    within [0, window)."""
    if lam < 0 or window < 0:
        raise InvalidParameter("lambda and window must be non-negative")
    rng = random.Random(seed)
    out = []
    for _ in range(n_endpoints):
        times = []
        t = 0.0
        while lam > 0:
            t += rng.expovariate(lam)
            if t >= window:
                break
            times.append(t)
        out.append(times)
    return out


def randomize_placement(n_endpoints: int, p: int, hosts, seed: int = 0, identity: bool = False) -> list:
    """endpoint -> router map: a random permutation of endpoints over the
    p slots of each endpoint-bearing router (identity keeps endpoint e on
    hosts[e // p], the skewed non-randomized variant)."""
    hosts = list(hosts)
    if n_endpoints != p * len(hosts):
        raise InvalidParameter("N must equal p * number of endpoint-bearing routers")
    if identity:
        return [hosts[e // p] for e in range(n_endpoints)]
    rng = random.Random(seed)
    perm = list(range(n_endpoints))
    rng.shuffle(perm)
    return [hosts[perm[e] // p] for e in range(n_endpoints)]


# ---------------------------------------------------------------------------
# workload assembly


@dataclass
class Flow:
    flow_id: int
    src: int  # endpoint id
    dst: int
    size: int  # bytes
    start: float  # seconds


@dataclass
class FlowWorkload:
    flows: list
    placement: list  # endpoint -> router
    lam: float = 0.0
    meta: dict = field(default_factory=dict)

    def to_csv(self, path: str) -> None:
        tmp = path + ".tmp"
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["flow_id", "src_ep", "dst_ep", "bytes", "start_s"])
            for f in self.flows:
                writer.writerow([f.flow_id, f.src, f.dst, f.size, f"{f.start:.9f}"])
        os.replace(tmp, path)


def build_workload(
    g: RouterGraph,
    pattern_pairs: list,
    lam: float,
    window: float,
    seed: int = 0,
    randomized_placement: bool = True,
    fixed_size: int | None = None,
) -> FlowWorkload:
    """Pattern pairs + Poisson arrivals + sized flows + placement.

    Each source endpoint launches its pattern targets round-robin, one
    flow per arrival; lam = 0 fires each source's pattern exactly once at
    time zero (barrier-style phases)."""
    targets: dict = {}
    for s, t in pattern_pairs:
        targets.setdefault(s, []).append(t)
    placement = randomize_placement(
        g.num_endpoints, g.concentration, g.hosts(), seed=seed, identity=not randomized_placement
    )
    rng = random.Random(seed + 1)
    flows = []
    fid = 0
    if lam == 0:
        for s in sorted(targets):
            for t in targets[s]:
                size = fixed_size if fixed_size is not None else FLOW_SIZE_TABLE[rng.randrange(20)]
                flows.append(Flow(fid, s, t, size, 0.0))
                fid += 1
    else:
        arrivals = poisson_arrivals(g.num_endpoints, lam, window, seed + 2)
        for s in sorted(targets):
            tlist = targets[s]
            for i, start in enumerate(arrivals[s]):
                t = tlist[i % len(tlist)]
                size = fixed_size if fixed_size is not None else FLOW_SIZE_TABLE[rng.randrange(20)]
                flows.append(Flow(fid, s, t, size, start))
                fid += 1
    return FlowWorkload(flows=flows, placement=placement, lam=lam,
                        meta={"seed": seed, "randomized_placement": randomized_placement})


def pattern_spec_json(path: str, kind: str, n: int, seed: int, **params) -> None:
    doc = {"kind": kind, "N": n, "seed": seed, "params": params}
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
