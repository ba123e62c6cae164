"""Router-level topology generators and basic graph metrics.

All generators return a :class:`RouterGraph`: a simple undirected graph over
dense router ids 0..N_r-1 with a concentration (endpoints per router) and a
network radix (inter-router ports per router).  Fat trees are materialized
flat, with a role annotation so only edge routers carry endpoints; every
other family attaches endpoints to all routers.
"""

from __future__ import annotations

import json
import os
import random
from collections import deque
from dataclasses import dataclass, field

from .errors import InvalidParameter, RetryExhausted

# ---------------------------------------------------------------------------
# core graph type


@dataclass
class RouterGraph:
    """Undirected router-level graph.

    edges are unordered pairs stored as (u, v) with u < v, sorted.
    `edge_routers` is set only for fat trees: the routers that carry
    endpoints.  Endpoint e lives on router hosts()[e // concentration]
    before placement randomization.
    """

    name: str
    num_routers: int
    edges: tuple
    concentration: int
    network_radix: int
    edge_routers: tuple | None = None
    meta: dict = field(default_factory=dict)
    _adj: list | None = field(default=None, repr=False, compare=False)

    def adjacency(self) -> list:
        """Adjacency lists, built lazily and cached."""
        if self._adj is None:
            adj = [[] for _ in range(self.num_routers)]
            for u, v in self.edges:
                adj[u].append(v)
                adj[v].append(u)
            for lst in adj:
                lst.sort()
            self._adj = adj
        return self._adj

    def hosts(self) -> tuple:
        """Routers that carry endpoints, in id order."""
        if self.edge_routers is not None:
            return self.edge_routers
        return tuple(range(self.num_routers))

    @property
    def num_endpoints(self) -> int:
        return self.concentration * len(self.hosts())

    def endpoint_router(self, endpoint: int) -> int:
        """Default (non-randomized) router of an endpoint."""
        return self.hosts()[endpoint // self.concentration]

    def degree(self, v: int) -> int:
        return len(self.adjacency()[v])

    def validate(self, regular: bool = True) -> None:
        """Check the structural invariants: simple, connected, and (for the
        regular families) k'-regular."""
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise InvalidParameter(f"self loop on router {u}")
            if not (0 <= u < self.num_routers and 0 <= v < self.num_routers):
                raise InvalidParameter(f"edge ({u},{v}) out of range")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise InvalidParameter(f"duplicate edge {key}")
            seen.add(key)
        if self.num_routers > 1 and not self.is_connected():
            raise InvalidParameter("graph is not connected")
        if regular:
            k = self.network_radix
            bad = [v for v in range(self.num_routers) if self.degree(v) != k]
            if bad:
                raise InvalidParameter(
                    f"{len(bad)} routers deviate from degree {k} (first: {bad[0]})"
                )

    def is_connected(self) -> bool:
        if self.num_routers == 0:
            return False
        adj = self.adjacency()
        seen = bytearray(self.num_routers)
        queue = deque([0])
        seen[0] = 1
        count = 1
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = 1
                    count += 1
                    queue.append(v)
        return count == self.num_routers

    def bfs_distances(self, source: int) -> list:
        """Hop distances from source to every router (-1 if unreachable)."""
        adj = self.adjacency()
        dist = [-1] * self.num_routers
        dist[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            du = dist[u]
            for v in adj[u]:
                if dist[v] < 0:
                    dist[v] = du + 1
                    queue.append(v)
        return dist


def _normalize_edges(pairs) -> tuple:
    out = {(u, v) if u < v else (v, u) for (u, v) in pairs}
    return tuple(sorted(out))


# ---------------------------------------------------------------------------
# small Galois-field helper for the MMS Slim Fly construction


def _factor_prime_power(q: int):
    """Return (p, m) with q == p**m, or raise InvalidParameter."""
    if q < 2:
        raise InvalidParameter(f"q={q} is not a prime power")
    for p in range(2, q + 1):
        if p * p > q and p != q:
            break
        if q % p == 0:
            m, rest = 0, q
            while rest % p == 0:
                rest //= p
                m += 1
            if rest != 1:
                raise InvalidParameter(f"q={q} is not a prime power")
            return p, m
    return q, 1  # q itself prime


class _GF:
    """Arithmetic in GF(p^m).  Elements are ints 0..q-1 encoding the
    coefficient vector of a polynomial over GF(p) in base p."""

    def __init__(self, q: int):
        p, m = _factor_prime_power(q)
        self.q, self.p, self.m = q, p, m
        if m == 1:
            self._mul = lambda a, b: (a * b) % p
            self._add = lambda a, b: (a + b) % p
            self._neg = lambda a: (-a) % p
        else:
            poly = self._find_irreducible()
            self._modpoly = poly
            self._mul = self._poly_mul
            self._add = self._poly_add
            self._neg = self._poly_neg

    # -- polynomial representation helpers (m > 1)
    def _digits(self, a: int) -> list:
        p, m = self.p, self.m
        out = []
        for _ in range(m):
            out.append(a % p)
            a //= p
        return out

    def _undigits(self, coeffs) -> int:
        val = 0
        for c in reversed(coeffs):
            val = val * self.p + c
        return val

    def _poly_add(self, a: int, b: int) -> int:
        da, db = self._digits(a), self._digits(b)
        return self._undigits([(x + y) % self.p for x, y in zip(da, db)])

    def _poly_neg(self, a: int) -> int:
        return self._undigits([(-x) % self.p for x in self._digits(a)])

    def _poly_mul(self, a: int, b: int) -> int:
        p, m = self.p, self.m
        da, db = self._digits(a), self._digits(b)
        prod = [0] * (2 * m - 1)
        for i, x in enumerate(da):
            if x:
                for j, y in enumerate(db):
                    prod[i + j] = (prod[i + j] + x * y) % p
        mod = self._modpoly  # monic, degree m, coefficient list low..high
        for i in range(len(prod) - 1, m - 1, -1):
            c = prod[i]
            if c:
                prod[i] = 0
                for j in range(m):
                    prod[i - m + j] = (prod[i - m + j] - c * mod[j]) % p
        return self._undigits(prod[:m])

    def _find_irreducible(self) -> list:
        """Smallest monic irreducible polynomial of degree m over GF(p),
        as a coefficient list c0..c_{m-1} (the monic x^m term implied)."""
        p, m = self.p, self.m

        def poly_mod(num, den):
            num = list(num)
            dd = len(den) - 1
            inv = pow(den[-1], -1, p)
            for i in range(len(num) - 1, dd - 1, -1):
                c = (num[i] * inv) % p
                if c:
                    for j in range(dd + 1):
                        num[i - dd + j] = (num[i - dd + j] - c * den[j]) % p
            while len(num) > 1 and num[-1] == 0:
                num.pop()
            return num

        def monic_polys(deg):
            for tail in range(p**deg):
                coeffs = []
                t = tail
                for _ in range(deg):
                    coeffs.append(t % p)
                    t //= p
                yield coeffs + [1]

        for cand in monic_polys(m):
            irreducible = True
            for d in range(1, m // 2 + 1):
                for div in monic_polys(d):
                    rem = poly_mod(cand, div)
                    if len(rem) == 1 and rem[0] == 0:
                        irreducible = False
                        break
                if not irreducible:
                    break
            if irreducible:
                return cand[:m]
        raise InvalidParameter(f"no irreducible polynomial for GF({p}^{m})")

    # -- public field ops
    def add(self, a, b):
        return self._add(a, b)

    def sub(self, a, b):
        return self._add(a, self._neg(b))

    def mul(self, a, b):
        return self._mul(a, b)

    def primitive_element(self) -> int:
        """Smallest generator of the multiplicative group."""
        target = self.q - 1
        for g in range(1, self.q):
            x, order = g, 1
            while x != 1:
                x = self._mul(x, g)
                order += 1
                if order > target:
                    break
            if order == target:
                return g
        raise InvalidParameter(f"no primitive element in GF({self.q})")


def _mms_generator_sets(gf: _GF, delta: int):
    """The two symmetric Cayley connection sets of the MMS construction."""
    q = gf.q
    xi = gf.primitive_element()
    powers = [1]
    for _ in range(q - 2):
        powers.append(gf.mul(powers[-1], xi))
    w = (q - delta) // 4
    if delta == 1:
        x1 = {powers[i] for i in range(0, q - 1, 2)}
        x2 = {powers[i] for i in range(1, q - 1, 2)}
    elif delta == 0:
        # char 2: negation is identity, sets are symmetric automatically
        x1 = {powers[(2 * i) % (q - 1)] for i in range(2 * w)}
        x2 = {powers[(2 * i + 1) % (q - 1)] for i in range(2 * w)}
    else:  # delta == -1
        x1, x2 = set(), set()
        for i in range(w):
            e1 = powers[2 * i]
            e2 = powers[2 * i + 1]
            x1.update((e1, gf.sub(0, e1)))
            x2.update((e2, gf.sub(0, e2)))
    expect = (q - delta) // 2
    if len(x1) != expect or len(x2) != expect:
        raise InvalidParameter(
            f"generator sets degenerate for q={q} (got {len(x1)},{len(x2)})"
        )
    return x1, x2


def gen_slimfly(q: int) -> RouterGraph:
    """Diameter-2 MMS graph: 2q^2 routers, (3q-delta)/2-regular, where
    q = 4w + delta is a prime power and delta is -1, 0, or 1."""
    delta = ((q + 1) % 4) - 1
    if delta not in (-1, 0, 1) or (q - delta) % 4 != 0:
        raise InvalidParameter(f"q={q} does not satisfy q = 4w + delta")
    gf = _GF(q)  # raises InvalidParameter when q is not a prime power
    x1, x2 = _mms_generator_sets(gf, delta)
    k_prime = (3 * q - delta) // 2

    def rid(block, a, b):
        return block * q * q + a * q + b

    edges = []
    fq = range(q)
    for x in fq:
        for y in fq:
            for yp in fq:
                if yp > y and gf.sub(y, yp) in x1:
                    edges.append((rid(0, x, y), rid(0, x, yp)))
                if yp > y and gf.sub(y, yp) in x2:
                    edges.append((rid(1, x, y), rid(1, x, yp)))
    for m in fq:
        for c in fq:
            for x in fq:
                y = gf.add(gf.mul(m, x), c)
                edges.append((rid(0, x, y), rid(1, m, c)))
    g = RouterGraph(
        name=f"SF(q={q})",
        num_routers=2 * q * q,
        edges=_normalize_edges(edges),
        # k'/d with the true average path length (slightly above 2) rounds
        # down for odd k'; this is what makes q=19 carry 14*722 endpoints
        concentration=max(1, k_prime // 2),
        network_radix=k_prime,
        meta={"family": "SlimFly", "params": {"q": q}},
    )
    g.validate()
    return g


def slimfly_q_for_endpoints(target_n: int, q_max: int = 100) -> int:
    """The valid q whose network size N is nearest to target_n."""
    best = None
    for q in range(3, q_max + 1):
        try:
            p, m = _factor_prime_power(q)
        except InvalidParameter:
            continue
        delta = ((q + 1) % 4) - 1
        k_prime = (3 * q - delta) // 2
        n = 2 * q * q * ((k_prime + 1) // 2)
        if best is None or abs(n - target_n) < best[0]:
            best = (abs(n - target_n), q)
    return best[1]


# ---------------------------------------------------------------------------
# deterministic families


def gen_dragonfly(p: int) -> RouterGraph:
    """Balanced maximum-capacity dragonfly: groups of a=2p routers (cliques),
    h=p global links per router, one link between any two groups."""
    if p < 1:
        raise InvalidParameter("dragonfly parameter p must be >= 1")
    a, h = 2 * p, p
    g_count = a * h + 1  # 2p^2 + 1 groups
    n_r = a * g_count

    def rid(group, r):
        return group * a + r

    edges = []
    for grp in range(g_count):
        for r1 in range(a):
            for r2 in range(r1 + 1, a):
                edges.append((rid(grp, r1), rid(grp, r2)))
    # global links: router r of group g serves relative offsets r*h+1 .. r*h+h
    for grp in range(g_count):
        for r in range(a):
            for j in range(1, h + 1):
                dst_grp = (grp + r * h + j) % g_count
                dst_r = a - 1 - r
                if grp < dst_grp:
                    edges.append((rid(grp, r), rid(dst_grp, dst_r)))
                else:
                    edges.append((rid(dst_grp, dst_r), rid(grp, r)))
    g = RouterGraph(
        name=f"DF(p={p})",
        num_routers=n_r,
        edges=_normalize_edges(edges),
        concentration=p,
        network_radix=3 * p - 1,
        meta={"family": "Dragonfly", "params": {"p": p}},
    )
    g.validate()
    return g


def gen_hyperx(dims: int, side: int) -> RouterGraph:
    """Regular HyperX (Hamming graph): routers form an L-dimensional array
    with a clique along every 1-dimensional row.  Diameter = L."""
    if dims not in (1, 2, 3):
        raise InvalidParameter("hyperx supports 1..3 dimensions")
    if side < 2:
        raise InvalidParameter("hyperx needs side >= 2")
    n_r = side**dims
    k_prime = dims * (side - 1)

    edges = []
    for v in range(n_r):
        coords = []
        rest = v
        for _ in range(dims):
            coords.append(rest % side)
            rest //= side
        for axis in range(dims):
            stride = side**axis
            base = v - coords[axis] * stride
            for other in range(coords[axis] + 1, side):
                edges.append((v, base + other * stride))
    g = RouterGraph(
        name=f"HX(L={dims},S={side})",
        num_routers=n_r,
        edges=_normalize_edges(edges),
        concentration=-(-k_prime // dims),  # ceil(k'/L)
        network_radix=k_prime,
        meta={"family": "HyperX", "params": {"L": dims, "S": side}},
    )
    g.validate()
    return g


def gen_xpander(k_prime: int, ell: int, seed: int = 0, max_retries: int = 100) -> RouterGraph:
    """Expander built by one random ell-lift of the (k'+1)-clique: each base
    edge becomes a random perfect matching between the two stacks of copies."""
    if ell < 2:
        raise InvalidParameter("lift factor ell must be >= 2")
    if k_prime < 2:
        raise InvalidParameter("xpander degree k' must be >= 2")
    base = k_prime + 1
    rng = random.Random(seed)
    for _ in range(max_retries):
        edges = []
        for u in range(base):
            for v in range(u + 1, base):
                perm = list(range(ell))
                rng.shuffle(perm)
                for i in range(ell):
                    edges.append((u * ell + i, v * ell + perm[i]))
        g = RouterGraph(
            name=f"XP(k'={k_prime},l={ell})",
            num_routers=ell * base,
            edges=_normalize_edges(edges),
            concentration=(k_prime + 1) // 2,
            network_radix=k_prime,
            meta={"family": "Xpander", "params": {"k_prime": k_prime, "ell": ell}, "seed": seed},
        )
        if g.is_connected():
            g.validate()
            return g
    raise RetryExhausted(f"xpander lift stayed disconnected after {max_retries} draws")


def gen_jellyfish(n_routers: int, k_prime: int, seed: int = 0, max_retries: int = 100) -> RouterGraph:
    """Random k'-regular graph built by greedy pairing with the standard
    edge-swap repair, redrawn until connected."""
    if n_routers * k_prime % 2 != 0:
        raise InvalidParameter("n_routers * k_prime must be even")
    if k_prime >= n_routers:
        raise InvalidParameter("k_prime must be < n_routers")
    rng = random.Random(seed)
    for _ in range(max_retries):
        edges = _regular_graph_attempt(n_routers, k_prime, rng)
        if edges is None:
            continue
        g = RouterGraph(
            name=f"JF(N_r={n_routers},k'={k_prime})",
            num_routers=n_routers,
            edges=_normalize_edges(edges),
            concentration=max(1, (k_prime + 1) // 2),
            network_radix=k_prime,
            meta={"family": "Jellyfish", "params": {"n_routers": n_routers, "k_prime": k_prime}, "seed": seed},
        )
        if g.is_connected():
            g.validate()
            return g
    raise RetryExhausted(f"no connected {k_prime}-regular graph after {max_retries} draws")


def _regular_graph_attempt(n: int, d: int, rng: random.Random):
    """One greedy construction pass; returns an edge set or None."""
    free = {v: d for v in range(n)}
    adj = [set() for _ in range(n)]
    edges = set()

    def connect(u, v):
        edges.add((min(u, v), max(u, v)))
        adj[u].add(v)
        adj[v].add(u)
        for x in (u, v):
            free[x] -= 1
            if free[x] == 0:
                del free[x]

    stall = 0
    while free:
        nodes = list(free)
        if len(nodes) == 1 or stall > 50:
            # incremental repair: rewire a random existing edge through a
            # port-starved router
            u = nodes[0]
            candidates = [
                (x, y) for (x, y) in edges if x not in adj[u] and y not in adj[u] and u not in (x, y)
            ]
            if not candidates or free[u] < 2:
                return None
            x, y = candidates[rng.randrange(len(candidates))]
            edges.remove((x, y))
            adj[x].discard(y)
            adj[y].discard(x)
            free[x] = free.get(x, 0) + 1
            free[y] = free.get(y, 0) + 1
            connect(u, x)
            connect(u, y)
            stall = 0
            continue
        u, v = rng.sample(nodes, 2)
        if v in adj[u]:
            stall += 1
            continue
        connect(u, v)
        stall = 0
    return sorted(edges)


def gen_fattree3(k: int, oversubscribed: bool = False) -> RouterGraph:
    """Three-stage fat tree from uniform radix-k routers: k pods of k/2 edge
    and k/2 aggregation routers (complete bipartite within a pod), plus
    (k/2)^2 core routers, each linking once into every pod.

    Only edge routers carry endpoints (p = k/2, or k when oversubscribed
    2x).  Reported network_radix is the edge-router uplink count k/2;
    aggregation and core routers have degree k.
    """
    if k % 2 != 0 or k < 2:
        raise InvalidParameter("fat tree radix k must be even and >= 2")
    half = k // 2
    pods = k
    n_edge = pods * half
    n_agg = pods * half
    n_core = half * half

    def edge_id(pod, i):
        return pod * half + i

    def agg_id(pod, i):
        return n_edge + pod * half + i

    def core_id(i, j):
        return n_edge + n_agg + i * half + j

    edges = []
    for pod in range(pods):
        for e in range(half):
            for a in range(half):
                edges.append((edge_id(pod, e), agg_id(pod, a)))
        for a in range(half):
            for j in range(half):
                edges.append((agg_id(pod, a), core_id(a, j)))
    g = RouterGraph(
        name=f"FT3(k={k})" + ("-2x" if oversubscribed else ""),
        num_routers=n_edge + n_agg + n_core,
        edges=_normalize_edges(edges),
        concentration=k if oversubscribed else half,
        network_radix=half,
        edge_routers=tuple(range(n_edge)),
        meta={"family": "FatTree3", "params": {"k": k, "oversubscribed": oversubscribed}},
    )
    g.validate(regular=False)
    return g


def gen_clique(k_prime: int) -> RouterGraph:
    """Complete graph on k'+1 routers; lower bound on path-length metrics."""
    if k_prime < 1:
        raise InvalidParameter("clique needs k' >= 1")
    n = k_prime + 1
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)]
    g = RouterGraph(
        name=f"clique(k'={k_prime})",
        num_routers=n,
        edges=tuple(edges),
        concentration=k_prime,
        network_radix=k_prime,
        meta={"family": "Clique", "params": {"k_prime": k_prime}},
    )
    g.validate()
    return g


def gen_star(n_endpoints: int) -> RouterGraph:
    """Single crossbar router with all endpoints attached; no inter-router
    links, so routing has nothing to balance."""
    if n_endpoints < 1:
        raise InvalidParameter("star needs at least one endpoint")
    return RouterGraph(
        name=f"star(N={n_endpoints})",
        num_routers=1,
        edges=(),
        concentration=n_endpoints,
        network_radix=0,
        meta={"family": "Star", "params": {"N": n_endpoints}},
    )


# ---------------------------------------------------------------------------
# metrics and the concentration rule


def diameter(g: RouterGraph) -> int:
    """Exact hop diameter over router pairs (BFS from every router)."""
    worst = 0
    for s in range(g.num_routers):
        dist = g.bfs_distances(s)
        m = max(dist)
        if min(dist) < 0:
            raise InvalidParameter("diameter undefined: graph disconnected")
        worst = max(worst, m)
    return worst


def avg_shortest_path(g: RouterGraph) -> float:
    """Mean BFS distance over ordered router pairs (s != t)."""
    if g.num_routers < 2:
        return 0.0
    total = 0
    for s in range(g.num_routers):
        dist = g.bfs_distances(s)
        if min(dist) < 0:
            raise InvalidParameter("average path length undefined: disconnected")
        total += sum(dist)
    return total / (g.num_routers * (g.num_routers - 1))


def concentration_for(family: str, **params) -> int:
    """The p = k'/d endpoint-attachment rule, per family."""
    fam = family.lower()
    if fam == "slimfly":
        q = params["q"]
        delta = ((q + 1) % 4) - 1
        return ((3 * q - delta) // 2 + 1) // 2
    if fam == "dragonfly":
        return params["p"]
    if fam == "hyperx":
        dims, side = params["L"], params["S"]
        k_prime = dims * (side - 1)
        return -(-k_prime // dims)
    if fam == "xpander":
        return (params["k_prime"] + 1) // 2
    if fam == "jellyfish":
        return max(1, (params["k_prime"] + 1) // 2)
    if fam == "fattree3":
        return params["k"] // 2
    if fam == "clique":
        return params["k_prime"]
    if fam == "star":
        return params["N"]
    raise InvalidParameter(f"unknown family {family!r}")


_GENERATORS = {
    "SlimFly": lambda params, seed: gen_slimfly(params["q"]),
    "Dragonfly": lambda params, seed: gen_dragonfly(params["p"]),
    "HyperX": lambda params, seed: gen_hyperx(params["L"], params["S"]),
    "Xpander": lambda params, seed: gen_xpander(params["k_prime"], params["ell"], seed),
    "Jellyfish": lambda params, seed: gen_jellyfish(params["n_routers"], params["k_prime"], seed),
    "FatTree3": lambda params, seed: gen_fattree3(params["k"], params.get("oversubscribed", False)),
    "Clique": lambda params, seed: gen_clique(params["k_prime"]),
    "Star": lambda params, seed: gen_star(params["N"]),
}


def generate(family: str, params: dict, seed: int = 0) -> RouterGraph:
    """Dispatch by family name; seed matters only for randomized families."""
    if family not in _GENERATORS:
        raise InvalidParameter(f"unknown topology family {family!r}")
    g = _GENERATORS[family](params, seed)
    g.meta.setdefault("seed", seed)
    return g


# ---------------------------------------------------------------------------
# plain-text export / import


def save_graph(g: RouterGraph, path: str) -> None:
    """Write `N_r k' p` then one sorted `u v` line per edge, plus a JSON
    metadata sidecar at path + '.json'."""
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(f"{g.num_routers} {g.network_radix} {g.concentration}\n")
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")
    os.replace(tmp, path)
    sidecar = {
        "name": g.name,
        "family": g.meta.get("family"),
        "params": g.meta.get("params"),
        "seed": g.meta.get("seed"),
    }
    if g.edge_routers is not None:
        sidecar["edge_routers"] = list(g.edge_routers)
    tmp = path + ".json.tmp"
    with open(tmp, "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path + ".json")


def load_graph(path: str) -> RouterGraph:
    with open(path) as fh:
        header = fh.readline().split()
        n_r, k_prime, p = (int(x) for x in header)
        edges = []
        for line in fh:
            u, v = line.split()
            edges.append((int(u), int(v)))
    meta, name, edge_routers = {}, os.path.basename(path), None
    sidecar = path + ".json"
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            side = json.load(fh)
        name = side.get("name", name)
        meta = {"family": side.get("family"), "params": side.get("params"), "seed": side.get("seed")}
        if side.get("edge_routers") is not None:
            edge_routers = tuple(side["edge_routers"])
    return RouterGraph(
        name=name,
        num_routers=n_r,
        edges=_normalize_edges(edges),
        concentration=p,
        network_radix=k_prime,
        edge_routers=edge_routers,
        meta=meta,
    )
