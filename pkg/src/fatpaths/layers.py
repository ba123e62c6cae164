"""Multipath routing layers and per-layer forwarding tables.

A layer is a subset of the network's links with its own destination-based
forwarding function; layer 1 always carries every link (minimal routing).
Builders: random permutation-oriented edge sampling, the overlap-minimizing
path packer, SPAIN-style VLAN trees, PAST-style per-host spanning trees,
and Yen k-shortest-paths (as a path baseline, not a layer scheme).
"""

from __future__ import annotations

import csv
import heapq
import itertools
import json
import os
import random
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path as _sp_shortest_path

from .errors import InvalidParameter, PathNotFound, RetryExhausted
from .topology import RouterGraph

# ---------------------------------------------------------------------------
# data types


@dataclass
class Layer:
    index: int
    directed_edges: tuple  # ordered (u, v) pairs
    orientation: tuple | None = None  # permutation witness for DAG layers


@dataclass
class LayerSet:
    layers: list
    method: str
    rho: float = 1.0
    seed: int = 0
    notes: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.layers)

    def to_json(self, path: str) -> None:
        doc = {
            "method": self.method,
            "rho": self.rho,
            "n": self.n,
            "seed": self.seed,
            "notes": self.notes,
            "layers": [
                {
                    "index": lay.index,
                    "edges": [list(e) for e in lay.directed_edges],
                    "orientation": list(lay.orientation) if lay.orientation else None,
                }
                for lay in self.layers
            ],
        }
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(doc, fh)
            fh.write("\n")
        os.replace(tmp, path)

    @classmethod
    def from_json(cls, path: str) -> "LayerSet":
        with open(path) as fh:
            doc = json.load(fh)
        layers = [
            Layer(
                index=entry["index"],
                directed_edges=tuple(tuple(e) for e in entry["edges"]),
                orientation=tuple(entry["orientation"]) if entry.get("orientation") else None,
            )
            for entry in doc["layers"]
        ]
        return cls(layers=layers, method=doc["method"], rho=doc["rho"], seed=doc["seed"], notes=doc.get("notes", {}))


def _full_layer(g: RouterGraph) -> Layer:
    both = []
    for u, v in g.edges:
        both.append((u, v))
        both.append((v, u))
    return Layer(index=1, directed_edges=tuple(sorted(both)))


def layer_is_dag(layer: Layer, num_routers: int) -> bool:
    """Kahn's procedure on the layer's directed edges."""
    indeg = [0] * num_routers
    out = [[] for _ in range(num_routers)]
    for u, v in layer.directed_edges:
        out[u].append(v)
        indeg[v] += 1
    queue = deque(v for v in range(num_routers) if indeg[v] == 0)
    seen = 0
    while queue:
        u = queue.popleft()
        seen += 1
        for v in out[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    return seen == num_routers


# ---------------------------------------------------------------------------
# random sampled layers


def build_layers_random(
    g: RouterGraph,
    n: int,
    rho: float,
    seed: int = 0,
    retry_budget: int = 20,
    reachability_target: float = 0.95,
    reachability_samples: int = 400,
) -> LayerSet:
    """Layer 1 plus n-1 sparse layers: a random vertex permutation orients
    each edge low-to-high, and each oriented edge survives with probability
    rho.  A sparse layer is redrawn until the directed reachability over
    sampled permutation-ordered pairs meets the target."""
    if n < 1:
        raise InvalidParameter("layer count n must be >= 1")
    if not (0 < rho <= 1):
        raise InvalidParameter("rho must be in (0, 1]")
    rng = random.Random(seed)
    layers = [_full_layer(g)]
    for idx in range(2, n + 1):
        for attempt in range(retry_budget):
            perm = list(range(g.num_routers))
            rng.shuffle(perm)
            directed = []
            for u, v in g.edges:
                a, b = (u, v) if perm[u] < perm[v] else (v, u)
                if rng.random() < rho:
                    directed.append((a, b))
            layer = Layer(index=idx, directed_edges=tuple(sorted(directed)), orientation=tuple(perm))
            if _layer_reach_fraction(g, layer, rng, reachability_samples) >= reachability_target:
                layers.append(layer)
                break
        else:
            raise RetryExhausted(
                f"layer {idx}: no draw reached {reachability_target:.0%} pair reachability "
                f"in {retry_budget} attempts (rho={rho})"
            )
    return LayerSet(layers=layers, method="RandomSample", rho=rho, seed=seed)


def _layer_reach_fraction(g, layer, rng, num_samples) -> float:
    """Fraction of sampled router pairs connected within the layer's
    undirected support.  The permutation orientation deliberately halves
    directed coverage (adaptivity skips a layer that cannot serve a pair),
    so the redraw gate guards only against sampling-induced disconnection."""
    n = g.num_routers
    comp = _components_of_support(layer.directed_edges, n)
    ok = tot = 0
    for _ in range(num_samples):
        s, t = rng.randrange(n), rng.randrange(n)
        if s == t:
            continue
        tot += 1
        if comp[s] == comp[t]:
            ok += 1
    return ok / tot if tot else 1.0


def _components_of_support(directed_edges, n):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in directed_edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
    return [find(x) for x in range(n)]


# ---------------------------------------------------------------------------
# overlap-minimizing layers


def build_layers_overlapmin(
    g: RouterGraph,
    n: int,
    l_min: int | None = None,
    l_max: int | None = None,
    path_budget: int | None = None,
    seed: int = 0,
) -> LayerSet:
    """Layer 1 plus n-1 packed layers.  Each sparse layer repeatedly pops
    the least-served router pair, embeds a minimum-weight permutation-
    monotone path with hop count in [l_min, l_max], masks shortcut edges,
    retires pairs already served by an embedded subpath, and bumps the edge
    weights of the chosen path so later paths avoid it."""
    if n < 1:
        raise InvalidParameter("layer count n must be >= 1")
    nr = g.num_routers
    if l_min is None:
        l_min = _typical_lmin(g) + 1
    if l_max is None:
        l_max = l_min + 1
    if l_min > l_max or l_min < 1:
        raise InvalidParameter("need 1 <= l_min <= l_max")
    if path_budget is None:
        path_budget = -(-nr * nr // n)
    rng = random.Random(seed)

    adj_mask = np.zeros((nr, nr), dtype=bool)
    for u, v in g.edges:
        adj_mask[u, v] = True
        adj_mask[v, u] = True
    weights = np.zeros((nr, nr), dtype=np.float64)  # shared across layers
    pair_paths: dict = {}  # unordered pair -> paths embedded so far
    layers = [_full_layer(g)]
    failures = 0

    for idx in range(2, n + 1):
        perm = list(range(nr))
        rng.shuffle(perm)
        rank = np.array(perm)
        incidence = adj_mask.copy()
        candidates = set()
        heap = []
        for u in range(nr):
            for v in range(nr):
                if u != v and rank[u] < rank[v]:
                    pair = (u, v)
                    candidates.add(pair)
                    cnt = pair_paths.get((min(u, v), max(u, v)), 0)
                    heap.append((cnt, rng.random(), pair))
        heapq.heapify(heap)
        edges_here = set()
        p_cnt = 0
        while candidates and p_cnt < path_budget and heap:
            cnt, _, pair = heapq.heappop(heap)
            if pair not in candidates:
                continue
            key = (min(pair), max(pair))
            if cnt != pair_paths.get(key, 0):
                continue  # stale heap entry
            candidates.discard(pair)  # one attempt per pair per layer
            try:
                path = _find_monotone_path(pair[0], pair[1], weights, incidence, rank,
                                           l_min, l_max, salt=seed + idx)
            except PathNotFound:
                failures += 1
                continue
            p_cnt += 1
            pair_paths[key] = pair_paths.get(key, 0) + 1
            d = len(path)
            for i in range(d - 1):
                edges_here.add((path[i], path[i + 1]))
                # discourage reuse of the middle of this path by later pairs
                weights[path[i], path[i + 1]] += (i + 1) * (d - 1 - (i + 1))
            for i in range(d):
                for j in range(i + 1, d):
                    if j - i > 1:
                        incidence[path[i], path[j]] = False
                        incidence[path[j], path[i]] = False
                    if j - i < l_min:
                        candidates.discard((path[i], path[j]))
        layers.append(Layer(index=idx, directed_edges=tuple(sorted(edges_here)), orientation=tuple(perm)))
    ls = LayerSet(layers=layers, method="OverlapMin", rho=1.0, seed=seed)
    ls.notes.update({"l_min": l_min, "l_max": l_max, "path_budget": path_budget,
                     "pairs_without_paths": failures})
    return ls


def _typical_lmin(g: RouterGraph, sample: int = 64) -> int:
    """Most common shortest-path length over a deterministic router sample."""
    from collections import Counter

    step = max(1, g.num_routers // sample)
    counter: Counter = Counter()
    for s in range(0, g.num_routers, step):
        for dv in g.bfs_distances(s):
            if dv > 0:
                counter[dv] += 1
    return counter.most_common(1)[0][0]


def _find_monotone_path(src, dst, weights, incidence, rank, l_min, l_max, salt=0):
    """Minimum-weight path src->dst with hop count in [l_min, l_max] whose
    ranks strictly increase (so any walk is simple), using only unmasked
    edges.  Ties break toward fewer hops, then by a seeded hash: a fixed
    smallest-id rule funnels the many zero-weight ties of early layers onto
    low-id routers and measurably hurts the packing."""
    nr = len(rank)
    allowed = incidence & (rank[:, None] < rank[None, :])
    if rank[src] >= rank[dst]:
        raise PathNotFound(f"{src}->{dst} against permutation order")
    wmat = np.where(allowed, weights, np.inf)
    # back[h][v] = min weight of a monotone path v -> dst using h hops
    back = np.full((l_max + 1, nr), np.inf)
    back[0][dst] = 0.0
    for h in range(1, l_max + 1):
        back[h] = (wmat + back[h - 1][None, :]).min(axis=1)
    options = [(back[h][src], h) for h in range(l_min, l_max + 1) if np.isfinite(back[h][src])]
    if not options:
        raise PathNotFound(f"no monotone path {src}->{dst} within [{l_min},{l_max}] hops")
    best_w, best_h = min(options)
    path = [src]
    v, h = src, best_h
    while h > 0:
        row = wmat[v] + back[h - 1]
        cands = np.flatnonzero(np.isclose(row, back[h][v], rtol=0, atol=1e-9))
        nxt = int(cands[hash((src, dst, v, h, salt)) % len(cands)])
        path.append(nxt)
        v, h = nxt, h - 1
    assert path[-1] == dst
    return path


# ---------------------------------------------------------------------------
# SPAIN baseline


def build_layers_spain(g: RouterGraph, k: int = 4, seed: int = 0, merge_passes: int = 3) -> LayerSet:
    """Per-destination k disjoint-preferring shortest paths, greedy coloring
    of the path-conflict graph into VLAN trees, then randomized greedy
    acyclic merging.  The resulting layer count is an output."""
    if k < 1:
        raise InvalidParameter("k must be >= 1")
    rng = random.Random(seed)
    nr = g.num_routers
    adj = g.adjacency()
    layers_edges = []  # undirected frozensets

    for dest in range(nr):
        paths = []
        for src in range(nr):
            if src == dest:
                continue
            penalties: dict = {}
            found = []
            for _ in range(k):
                p = _weighted_shortest_path(adj, src, dest, penalties)
                if p is None or p in found:
                    break
                found.append(p)
                for e in zip(p, p[1:]):
                    key = (min(e), max(e))
                    penalties[key] = penalties.get(key, 0) + len(g.edges)
            paths.extend(found)
        if not paths:
            continue
        colors = _greedy_color_paths(paths)
        by_color: dict = {}
        for p, c in zip(paths, colors):
            by_color.setdefault(c, set()).update((min(a, b), max(a, b)) for a, b in zip(p, p[1:]))
        for c in sorted(by_color):
            layers_edges.append(frozenset(by_color[c]))

    # the full link set participates in merging: on trees everything
    # collapses into it, on cyclic graphs it can never merge
    layers_edges.insert(0, frozenset(g.edges))
    layers_edges = _greedy_acyclic_merge(layers_edges, nr, rng, merge_passes)
    layers_edges.sort(key=lambda s: (-len(s), sorted(s)))
    layers = []
    for i, edge_set in enumerate(layers_edges, start=1):
        both = []
        for u, v in sorted(edge_set):
            both.append((u, v))
            both.append((v, u))
        layers.append(Layer(index=i, directed_edges=tuple(both)))
    ls = LayerSet(layers=layers, method="SPAIN", rho=1.0, seed=seed)
    ls.notes["k"] = k
    return ls


def _weighted_shortest_path(adj, src, dest, penalties):
    """Dijkstra with edge cost 1 + accumulated penalty; deterministic
    smallest-id tie-breaking."""
    dist = {src: 0.0}
    prev = {}
    heap = [(0.0, src)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        if u == dest:
            break
        done.add(u)
        for v in adj[u]:
            key = (min(u, v), max(u, v))
            nd = d + 1 + penalties.get(key, 0)
            if nd < dist.get(v, float("inf")) - 1e-12:
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if dest not in dist:
        return None
    path = [dest]
    while path[-1] != src:
        path.append(prev[path[-1]])
    path.reverse()
    return tuple(path)


def vlan_compatible(p1, p2) -> bool:
    """Two same-destination paths can share a VLAN tree iff every shared
    vertex continues to the same successor."""
    nxt = {}
    for a, b in zip(p1, p1[1:]):
        nxt[a] = b
    for a, b in zip(p2, p2[1:]):
        if a in nxt and nxt[a] != b:
            return False
    return True


def _greedy_color_paths(paths):
    colors = []
    for i, p in enumerate(paths):
        used = {colors[j] for j in range(i) if not vlan_compatible(paths[j], p)}
        c = 0
        while c in used:
            c += 1
        colors.append(c)
    return colors


def _is_acyclic_undirected(edge_set, nr) -> bool:
    parent = list(range(nr))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edge_set:
        ru, rv = find(u), find(v)
        if ru == rv:
            return False
        parent[ru] = rv
    return True


def _greedy_acyclic_merge(edge_sets, nr, rng, passes):
    sets = [set(s) for s in edge_sets]
    for _ in range(passes):
        rng.shuffle(sets)
        merged_any = False
        out = []
        for s in sets:
            placed = False
            for t in out:
                union = t | s
                if _is_acyclic_undirected(union, nr):
                    t |= s
                    placed = True
                    merged_any = True
                    break
            if not placed:
                out.append(set(s))
        sets = out
        if not merged_any:
            break
    return [frozenset(s) for s in sets]


# ---------------------------------------------------------------------------
# PAST baseline


def build_layers_past(g: RouterGraph, variant: str = "BFS", seed: int = 0) -> LayerSet:
    """One spanning tree per endpoint: rooted at the endpoint's router (BFS
    and RandomTieBreak variants) or at a uniformly random router (Valiant)."""
    if variant not in ("BFS", "RandomTieBreak", "Valiant"):
        raise InvalidParameter(f"unknown PAST variant {variant!r}")
    rng = random.Random(seed)
    layers = []
    for idx, endpoint in enumerate(range(g.num_endpoints), start=1):
        if variant == "Valiant":
            root = rng.randrange(g.num_routers)
        else:
            root = g.endpoint_router(endpoint)
        tree = _bfs_tree(g, root, rng if variant in ("RandomTieBreak", "Valiant") else None)
        both = []
        for u, v in sorted(tree):
            both.append((u, v))
            both.append((v, u))
        layers.append(Layer(index=idx, directed_edges=tuple(both)))
    return LayerSet(layers=layers, method=f"PAST-{variant}", rho=1.0, seed=seed)


def _bfs_tree(g: RouterGraph, root: int, rng):
    adj = g.adjacency()
    seen = bytearray(g.num_routers)
    seen[root] = 1
    queue = deque([root])
    edges = []
    while queue:
        u = queue.popleft()
        neigh = list(adj[u])
        if rng is not None:
            rng.shuffle(neigh)
        for v in neigh:
            if not seen[v]:
                seen[v] = 1
                edges.append((min(u, v), max(u, v)))
                queue.append(v)
    return edges


# ---------------------------------------------------------------------------
# k shortest paths (Yen)


def ksp(g: RouterGraph, s: int, t: int, k: int) -> list:
    """Yen's algorithm over hop counts: up to k loop-free shortest paths
    sorted by length then lexicographically; exhausts available paths."""
    if k < 1:
        raise InvalidParameter("k must be >= 1")
    if s == t:
        raise InvalidParameter("s and t must differ")
    adj = g.adjacency()

    def spur_shortest(src, dst, banned_edges, banned_nodes):
        dist = {src: 0}
        prev = {}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            if u == dst:
                break
            for v in adj[u]:
                if v in banned_nodes or (u, v) in banned_edges or v in dist:
                    continue
                dist[v] = dist[u] + 1
                prev[v] = u
                queue.append(v)
        if dst not in dist:
            return None
        path = [dst]
        while path[-1] != src:
            path.append(prev[path[-1]])
        path.reverse()
        return tuple(path)

    first = spur_shortest(s, t, frozenset(), frozenset())
    if first is None:
        return []
    found = [first]
    candidates: list = []
    seen_candidates = {first}
    while len(found) < k:
        base = found[-1]
        for i in range(len(base) - 1):
            spur_node = base[i]
            root = base[: i + 1]
            banned_edges = set()
            for p in found:
                if p[: i + 1] == root and len(p) > i + 1:
                    banned_edges.add((p[i], p[i + 1]))
                    banned_edges.add((p[i + 1], p[i]))
            banned_nodes = set(root[:-1])
            spur = spur_shortest(spur_node, t, frozenset(banned_edges), frozenset(banned_nodes))
            if spur is None:
                continue
            total = root[:-1] + spur
            if total not in seen_candidates:
                seen_candidates.add(total)
                heapq.heappush(candidates, (len(total), total))
        if not candidates:
            break
        _, best = heapq.heappop(candidates)
        found.append(best)
    return found


# ---------------------------------------------------------------------------
# forwarding tables


@dataclass
class ForwardingTables:
    """Per-layer next-hop and hop-distance matrices.

    next_hop[i][s][t] is the next router from s toward t in layer i+1, or
    -1 when t is unreachable within the layer.  Walking entries for a fixed
    destination either reaches it or starts at an unreachable marker; the
    shortest-path construction guarantees loop-freedom."""

    next_hop: np.ndarray  # (n_layers, N, N) int16
    dist: np.ndarray  # (n_layers, N, N) int16, -1 unreachable
    seed: int = 0

    @property
    def n_layers(self) -> int:
        return self.next_hop.shape[0]

    def reachable(self, layer_id: int, s: int, t: int) -> bool:
        return s == t or self.next_hop[layer_id - 1, s, t] >= 0

    def to_csv(self, path: str) -> None:
        tmp = path + ".tmp"
        n_layers, nr, _ = self.next_hop.shape
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["layer", "src", "dst", "nexthop"])
            for i in range(n_layers):
                mat = self.next_hop[i]
                for s in range(nr):
                    row = mat[s]
                    for t in range(nr):
                        if s != t:
                            writer.writerow([i + 1, s, t, int(row[t])])
        os.replace(tmp, path)


def forwarding_tables(g: RouterGraph, layerset: LayerSet, seed: int = 0) -> ForwardingTables:
    """Shortest-path next hops within each layer; when several first hops
    tie, one is chosen uniformly at random.

    A layer is a subset of full-duplex links: forwarding runs over the
    layer's undirected support.  The stored orientation of sparse layers is
    a construction witness (it guarantees the sampled subset is acyclic as
    ordered), not a restriction on packet direction."""
    nr = g.num_routers
    n_layers = layerset.n
    rng = np.random.default_rng(seed)
    next_hop = np.full((n_layers, nr, nr), -1, dtype=np.int16)
    dist_out = np.full((n_layers, nr, nr), -1, dtype=np.int16)
    for li, layer in enumerate(layerset.layers):
        support = sorted({(u, v) for u, v in layer.directed_edges}
                         | {(v, u) for u, v in layer.directed_edges})
        if support:
            rows = np.array([e[0] for e in support])
            cols = np.array([e[1] for e in support])
        else:
            rows = np.zeros(0, dtype=int)
            cols = np.zeros(0, dtype=int)
        graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(nr, nr))
        dist = _sp_shortest_path(graph, method="D", directed=True, unweighted=True)
        out_neighbors = [[] for _ in range(nr)]
        for u, v in support:
            out_neighbors[u].append(v)
        for s in range(nr):
            neigh = out_neighbors[s]
            if not neigh:
                continue
            narr = np.array(neigh)
            good = np.isfinite(dist[s])
            # neighbor v continues a shortest path to t iff dist matches
            cand = (dist[narr] + 1 == dist[s][None, :]) & good[None, :]
            counts = cand.sum(axis=0)
            targets = np.flatnonzero(counts > 0)
            if targets.size == 0:
                continue
            pick = rng.integers(0, counts[targets])
            cum = np.cumsum(cand[:, targets], axis=0)
            chosen = (cum == (pick + 1)[None, :]) & cand[:, targets]
            rowidx = chosen.argmax(axis=0)
            next_hop[li, s, targets] = narr[rowidx].astype(np.int16)
        finite = np.isfinite(dist)
        dist_out[li][finite] = dist[finite].astype(np.int16)
    return ForwardingTables(next_hop=next_hop, dist=dist_out, seed=seed)


class Unreachable:
    """Sentinel: no route to the destination within the queried layer."""

    def __repr__(self):
        return "Unreachable"


UNREACHABLE = Unreachable()


def route(tables: ForwardingTables, layer_id: int, s: int, t: int):
    """Deterministic table walk; the router sequence from s to t, or the
    Unreachable sentinel."""
    if s == t:
        return [s]
    nr = tables.next_hop.shape[1]
    path = [s]
    cur = s
    for _ in range(nr):
        nxt = int(tables.next_hop[layer_id - 1, cur, t])
        if nxt < 0:
            return UNREACHABLE
        path.append(nxt)
        cur = nxt
        if cur == t:
            return path
    raise AssertionError("forwarding walk exceeded router count (loop)")


def route_edges(path) -> frozenset:
    if path is UNREACHABLE or path is None:
        return frozenset()
    return frozenset((min(a, b), max(a, b)) for a, b in zip(path, path[1:]))


def disjoint_routes_across_layers(tables: ForwardingTables, s: int, t: int) -> int:
    """Largest set of pairwise edge-disjoint s->t routes drawn from the
    per-layer forwarding walks (exhaustive over layer subsets)."""
    routes = []
    for layer_id in range(1, tables.n_layers + 1):
        p = route(tables, layer_id, s, t)
        if p is not UNREACHABLE:
            routes.append(route_edges(p))
    best = 0
    for size in range(len(routes), 0, -1):
        if size <= best:
            break
        for combo in itertools.combinations(routes, size):
            union = set()
            total = 0
            for edge_set in combo:
                union |= edge_set
                total += len(edge_set)
            if len(union) == total:
                best = size
                break
    return best
