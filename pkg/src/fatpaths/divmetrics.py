"""Path-diversity measures: disjoint-path counts, interference, load bounds,
collision statistics, and the matrix/rank counting machinery.

The central quantity is cdp(g, A, B, l): the maximum number of pairwise
edge-disjoint paths of length <= l hops between router sets A and B,
computed by length-bounded augmentation (BFS restricted to l hops in the
residual graph, each undirected edge modeled as two unit-capacity arcs).
"""

from __future__ import annotations

import csv
import json
import math
import os
import random
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameter, RankDeficiencyWarning
from .topology import RouterGraph

# ---------------------------------------------------------------------------
# bounded-length max flow


class _FlowEngine:
    """Reusable dense machinery for length-bounded unit-capacity max flow."""

    def __init__(self, g: RouterGraph):
        n = g.num_routers
        self.n = n
        adj = np.zeros((n, n), dtype=np.int8)
        for u, v in g.edges:
            adj[u, v] = 1
            adj[v, u] = 1
        self.adj = adj

    def maxflow(self, sources, targets, l: int) -> int:
        """Count augmenting paths of <= l hops between vertex sets."""
        srcs = set(sources)
        tgts = set(targets)
        if srcs & tgts:
            raise InvalidParameter("source and target sets must be disjoint")
        n = self.n
        resid = self.adj.copy()
        smask = np.zeros(n, dtype=bool)
        tmask = np.zeros(n, dtype=bool)
        smask[list(srcs)] = True
        tmask[list(tgts)] = True
        flow = 0
        while True:
            path = self._augmenting_path(resid, smask, tmask, l)
            if path is None:
                return flow
            for u, v in zip(path, path[1:]):
                resid[u, v] -= 1
                resid[v, u] += 1
            flow += 1

    @staticmethod
    def _augmenting_path(resid, smask, tmask, l):
        """Shortest residual path from the source set to the target set,
        None if all such paths exceed l hops."""
        visited = smask.copy()
        frontier = smask
        levels = [frontier]
        for _ in range(l):
            rows = np.flatnonzero(frontier)
            if rows.size == 0:
                return None
            reach = (resid[rows] > 0).any(axis=0)
            nxt = reach & ~visited
            if not nxt.any():
                return None
            hits = nxt & tmask
            if hits.any():
                cur = int(np.flatnonzero(hits)[0])
                path = [cur]
                for lev in reversed(levels):
                    prev = np.flatnonzero(lev & (resid[:, cur] > 0))
                    cur = int(prev[0])
                    path.append(cur)
                path.reverse()
                return path
            visited |= nxt
            frontier = nxt
            levels.append(nxt)
        return None


def _engine(g: RouterGraph) -> _FlowEngine:
    # cached on the graph instance; id()-keyed caches are unsafe under GC
    eng = getattr(g, "_flow_engine", None)
    if eng is None:
        eng = _FlowEngine(g)
        g._flow_engine = eng
    return eng


# Below this size (and for short length bounds) the bounded-length packing
# is solved exactly; greedy augmentation can strand one path on adversarial
# small instances.  Larger graphs or loose bounds use augmentation, whose
# conservative behavior is the documented trade-off.
_EXACT_ROUTER_LIMIT = 32
_EXACT_LENGTH_LIMIT = 6


def _cdp_exact_small(g: RouterGraph, a_set, b_set, l: int) -> int:
    """Exact maximum edge-disjoint bounded-path packing: enumerate simple
    paths (truncated at first target contact), then solve the packing ILP."""
    from scipy.optimize import LinearConstraint, milp

    adjacency = g.adjacency()
    a_all, b_all = set(a_set), set(b_set)
    edge_ids = {}
    for eid, (u, v) in enumerate(g.edges):
        edge_ids[(u, v)] = eid
        edge_ids[(v, u)] = eid
    paths = []

    def dfs(v, seen, used):
        if v in b_all:
            paths.append(tuple(used))
            return
        if len(used) == l:
            return
        for w in adjacency[v]:
            if w in seen or w in a_all:
                continue
            dfs(w, seen | {w}, used + [edge_ids[(v, w)]])

    for a in sorted(a_all):
        dfs(a, {a}, [])
    if not paths:
        return 0
    n_paths = len(paths)
    rows, cols = [], []
    for j, p in enumerate(paths):
        for e in p:
            rows.append(e)
            cols.append(j)
    import scipy.sparse as sp

    n_edges = len(g.edges)
    mat = sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n_edges, n_paths)
    )
    res = milp(
        c=-np.ones(n_paths),
        constraints=LinearConstraint(mat, -np.inf, 1),
        integrality=np.ones(n_paths),
        bounds=None,
    )
    if not res.success:
        raise RuntimeError(f"packing ILP failed: {res.message}")
    return round(-res.fun)


def cdp(g: RouterGraph, a_set, b_set, l: int) -> int:
    """Maximum number of pairwise edge-disjoint paths of <= l hops from
    router set A to router set B (0 when no such path exists)."""
    if l < 1:
        raise InvalidParameter("path length bound must be >= 1")
    a_set, b_set = list(a_set), list(b_set)
    if set(a_set) & set(b_set):
        raise InvalidParameter("A and B must be disjoint")
    if len(a_set) == 1 and len(b_set) == 1 and l <= 2:
        # closed form: the direct edge plus one 2-hop path per common neighbor
        adjacency = g.adjacency()
        s, t = a_set[0], b_set[0]
        ns, nt = set(adjacency[s]), set(adjacency[t])
        direct = 1 if t in ns else 0
        if l == 1:
            return direct
        return direct + len(ns & nt)
    if g.num_routers <= _EXACT_ROUTER_LIMIT and l <= _EXACT_LENGTH_LIMIT:
        return _cdp_exact_small(g, a_set, b_set, l)
    return _engine(g).maxflow(a_set, b_set, l)


def path_interference(g: RouterGraph, a: int, b: int, c: int, d: int, l: int) -> int:
    """Bandwidth-diversity loss when pairs (a,b) and (c,d) communicate:
    c_l({a,c},{b}) + c_l({a,c},{d}) - c_l({a,c},{b,d})."""
    if len({a, b, c, d}) != 4:
        raise InvalidParameter("routers a, b, c, d must be pairwise distinct")
    both = cdp(g, (a, c), (b, d), l)
    return cdp(g, (a, c), (b,), l) + cdp(g, (a, c), (d,), l) - both


def tnl(g: RouterGraph, d: float) -> float:
    """Total network load: k' * N_r / d, an upper bound on the number of
    flows the topology sustains without sharing a link."""
    if d <= 0:
        raise InvalidParameter("average path length must be positive")
    return g.network_radix * g.num_routers / d


# ---------------------------------------------------------------------------
# sampled statistics


@dataclass
class DiversityReport:
    lmin_histogram: dict = field(default_factory=dict)
    cmin_histogram: dict = field(default_factory=dict)
    cdp_samples: list = field(default_factory=list)  # ((s, t), l, count)
    pi_samples: list = field(default_factory=list)  # ((a,b,c,d), l, value)
    tnl: float = 0.0
    sample_seed: int = 0
    d_prime: int = 0
    network_radix: int = 0

    def summary(self) -> dict:
        def tail(vals, q):
            if not vals:
                return 0.0
            return float(np.percentile(np.asarray(vals, dtype=float), q))

        cdp_vals = [v for _, _, v in self.cdp_samples]
        pi_vals = [v for _, _, v in self.pi_samples]
        k = self.network_radix or 1
        return {
            "d_prime": self.d_prime,
            "tnl": self.tnl,
            "sample_seed": self.sample_seed,
            "lmin_histogram": {str(k_): v for k_, v in sorted(self.lmin_histogram.items())},
            "cmin_histogram": {str(k_): v for k_, v in sorted(self.cmin_histogram.items())},
            "cdp_mean_frac": float(np.mean(cdp_vals)) / k if cdp_vals else 0.0,
            "cdp_tail1_frac": tail(cdp_vals, 1) / k,
            "pi_mean_frac": float(np.mean(pi_vals)) / k if pi_vals else 0.0,
            "pi_tail999_frac": tail(pi_vals, 99.9) / k,
        }


def _sample_host_pair(rng, hosts):
    s = rng.randrange(len(hosts))
    t = rng.randrange(len(hosts) - 1)
    if t >= s:
        t += 1
    return hosts[s], hosts[t]


def shortest_path_stats(g: RouterGraph, num_samples: int, seed: int = 0):
    """Histograms of minimal path length and minimal path count over router
    pairs sampled uniformly with replacement (endpoint-bearing routers)."""
    if num_samples < 1:
        raise InvalidParameter("num_samples must be >= 1")
    rng = random.Random(seed)
    hosts = g.hosts()
    dist_cache: dict = {}
    lmin_counter: Counter = Counter()
    cmin_counter: Counter = Counter()
    for _ in range(num_samples):
        s, t = _sample_host_pair(rng, hosts)
        dist = dist_cache.get(s)
        if dist is None:
            dist = g.bfs_distances(s)
            dist_cache[s] = dist
        lmin = dist[t]
        cmin = cdp(g, (s,), (t,), lmin)
        lmin_counter[lmin] += 1
        cmin_counter[cmin] += 1
    lhist = {k: v / num_samples for k, v in lmin_counter.items()}
    chist = {k: v / num_samples for k, v in cmin_counter.items()}
    return lhist, chist


def choose_d_prime(g: RouterGraph, seed: int = 0, num_samples: int = 200, l_max: int = 6) -> int:
    """Smallest distance l whose sampled 1%-tail of c_l(s, t) reaches 3."""
    rng = random.Random(seed)
    hosts = g.hosts()
    pairs = [_sample_host_pair(rng, hosts) for _ in range(num_samples)]
    for l in range(2, l_max + 1):
        vals = sorted(cdp(g, (s,), (t,), l) for s, t in pairs)
        tail = vals[max(0, int(0.01 * len(vals)) - 1)] if len(vals) >= 100 else vals[0]
        if tail >= 3:
            return l
    return l_max


def cdp_samples(g: RouterGraph, l: int, num_samples: int, seed: int = 0) -> list:
    rng = random.Random(seed)
    hosts = g.hosts()
    out = []
    for _ in range(num_samples):
        s, t = _sample_host_pair(rng, hosts)
        out.append(((s, t), l, cdp(g, (s,), (t,), l)))
    return out


def pi_samples(g: RouterGraph, l: int, num_samples: int, seed: int = 0) -> list:
    rng = random.Random(seed)
    hosts = list(g.hosts())
    if len(hosts) < 4:
        raise InvalidParameter("need at least 4 endpoint-bearing routers")
    out = []
    for _ in range(num_samples):
        a, b, c, d = rng.sample(hosts, 4)
        out.append(((a, b, c, d), l, path_interference(g, a, b, c, d, l)))
    return out


def analyze(
    g: RouterGraph,
    num_pairs_short: int = 100_000,
    num_pairs_cdp: int = 1_000,
    num_quads_pi: int = 1_000,
    d_prime: int | None = None,
    seed: int = 0,
) -> DiversityReport:
    """Full diversity report with the default sampling volumes."""
    from .topology import avg_shortest_path

    lhist, chist = shortest_path_stats(g, num_pairs_short, seed)
    if d_prime is None:
        d_prime = choose_d_prime(g, seed=seed + 1)
    report = DiversityReport(
        lmin_histogram=lhist,
        cmin_histogram=chist,
        cdp_samples=cdp_samples(g, d_prime, num_pairs_cdp, seed + 2),
        pi_samples=pi_samples(g, d_prime, num_quads_pi, seed + 3),
        tnl=tnl(g, avg_shortest_path(g)) if g.num_routers > 1 else 0.0,
        sample_seed=seed,
        d_prime=d_prime,
        network_radix=g.network_radix,
    )
    return report


def save_report(report: DiversityReport, csv_path: str, json_path: str) -> None:
    """One CSV row per sample plus a JSON summary with normalized tails."""
    tmp = csv_path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "ids", "l", "value"])
        for k, frac in sorted(report.lmin_histogram.items()):
            writer.writerow(["lmin_hist", "", k, frac])
        for k, frac in sorted(report.cmin_histogram.items()):
            writer.writerow(["cmin_hist", "", k, frac])
        for (s, t), l, v in report.cdp_samples:
            writer.writerow(["cdp", f"{s}-{t}", l, v])
        for quad, l, v in report.pi_samples:
            writer.writerow(["pi", "-".join(map(str, quad)), l, v])
        writer.writerow(["tnl", "", "", report.tnl])
    os.replace(tmp, csv_path)
    tmp = json_path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(report.summary(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, json_path)


# ---------------------------------------------------------------------------
# collisions


def collision_histogram(g: RouterGraph, pairs, placement, seed: int = 0) -> dict:
    """Distribution of flow multiplicity over ordered router pairs carrying
    at least one flow.  `pairs` is a list of (src endpoint, dst endpoint);
    `placement` maps endpoint id to router id."""
    counts: Counter = Counter()
    for s_ep, t_ep in pairs:
        rs, rt = placement[s_ep], placement[t_ep]
        if rs != rt:
            counts[(rs, rt)] += 1
    if not counts:
        return {}
    hist = Counter(counts.values())
    total = sum(hist.values())
    return {mult: cnt / total for mult, cnt in sorted(hist.items())}


def expected_collisions(n_endpoints: int, router_pairs: int) -> float:
    """Expected number of colliding paths when N endpoint pairs land
    uniformly on P router pairs: N - P + P((P-1)/P)^N."""
    if n_endpoints < 0 or router_pairs < 1:
        raise InvalidParameter("need N >= 0 and P >= 1")
    n, p = n_endpoints, router_pairs
    if n == 0:
        return 0.0
    # P((P-1)/P)^N = P * exp(N * log1p(-1/P)), stable for large P
    return n - p + p * math.exp(n * math.log1p(-1.0 / p))


# ---------------------------------------------------------------------------
# matrix path counting


def count_paths_matrix(g: RouterGraph, l: int) -> np.ndarray:
    """Entry (i, j) counts the walks from i to j with exactly l steps
    (cycles included)."""
    if l < 1:
        raise InvalidParameter("l must be >= 1")
    n = g.num_routers
    a = np.zeros((n, n), dtype=np.int64)
    for u, v in g.edges:
        a[u, v] = 1
        a[v, u] = 1
    return np.linalg.matrix_power(a, l)


def nexthop_sets_matrix(g: RouterGraph, l: int) -> list:
    """Entry (i, j) is the set of first-hop neighbors of i that begin some
    walk of <= l steps ending at j.  Built by repeated multiplication with
    the original adjacency structure on the right."""
    if l < 1:
        raise InvalidParameter("l must be >= 1")
    n = g.num_routers
    adj = g.adjacency()
    base = [[frozenset((j,)) if j in adj[i] else frozenset() for j in range(n)] for i in range(n)]
    cur = [row[:] for row in base]
    for _ in range(l - 1):
        nxt = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(n):
                acc = set(base[i][j])
                for k in adj[j]:  # walks whose last step is k -> j
                    acc |= cur[i][k]
                nxt[i][j] = frozenset(acc)
        cur = nxt
    return cur


# ---------------------------------------------------------------------------
# randomized rank-based edge connectivity


_FIELD_PRIME = 2**31 - 1


def _arc_index(g: RouterGraph):
    arcs = []
    for u, v in g.edges:
        arcs.append((u, v))
        arcs.append((v, u))
    arcs.sort()
    index = {arc: i for i, arc in enumerate(arcs)}
    return arcs, index


def _rank_mod_p(mat: np.ndarray, p: int) -> int:
    m = mat % p
    rows, cols = m.shape
    rank = 0
    for col in range(cols):
        if rank == rows:
            break
        pivots = np.flatnonzero(m[rank:, col])
        if pivots.size == 0:
            continue
        pivot = rank + int(pivots[0])
        if pivot != rank:
            m[[rank, pivot]] = m[[pivot, rank]]
        inv = pow(int(m[rank, col]), p - 2, p)
        m[rank] = (m[rank] * inv) % p
        below = m[rank + 1 :, col].copy()
        if below.any():
            m[rank + 1 :] = (m[rank + 1 :] - np.outer(below, m[rank])) % p
        rank += 1
    return rank


def _rank_estimates_once(g: RouterGraph, l: int, pairs, rng) -> list:
    arcs, index = _arc_index(g)
    m = len(arcs)
    p = _FIELD_PRIME
    kmat = np.zeros((m, m), dtype=np.int64)
    adj = g.adjacency()
    for i, (a, b) in enumerate(arcs):
        for c in adj[b]:
            if c == a:
                continue  # no immediate backtracking over the same link
            kmat[i, index[(b, c)]] = rng.randrange(1, p)
    # M_l = I + K' + K'^2 + ... + K'^(l-1), built in l iterations
    eye = np.eye(m, dtype=np.int64)
    acc = eye.copy()
    for _ in range(l - 1):
        acc = (acc @ kmat) % p
        acc += eye
    out = []
    out_arcs = [[] for _ in range(g.num_routers)]
    in_arcs = [[] for _ in range(g.num_routers)]
    for i, (a, b) in enumerate(arcs):
        out_arcs[a].append(i)
        in_arcs[b].append(i)
    for s, t in pairs:
        sub = acc[np.ix_(out_arcs[s], in_arcs[t])]
        out.append(_rank_mod_p(sub, p))
    return out


def edge_connectivity_rank(g: RouterGraph, l: int, pairs, field_seed: int = 0) -> list:
    """Per-pair bounded edge-connectivity estimates from the randomized
    finite-field propagation scheme; matches cdp with high probability.

    Runs twice with independent coefficients; a disagreement emits
    RankDeficiencyWarning and reports the larger estimate (random
    coefficient collisions can only lose rank)."""
    if l < 1:
        raise InvalidParameter("l must be >= 1")
    pairs = list(pairs)
    for s, t in pairs:
        if not (0 <= s < g.num_routers and 0 <= t < g.num_routers) or s == t:
            raise InvalidParameter(f"invalid pair ({s},{t})")
    first = _rank_estimates_once(g, l, pairs, random.Random(field_seed))
    second = _rank_estimates_once(g, l, pairs, random.Random(field_seed + 0x9E3779B9))
    if first != second:
        warnings.warn(
            "rank estimates disagreed between randomized runs; retry with a new field_seed",
            RankDeficiencyWarning,
        )
    return [max(a, b) for a, b in zip(first, second)]
