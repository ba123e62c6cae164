"""Maximum achievable throughput (MAT) via multicommodity flow.

mat_general solves the unrestricted concurrent-flow problem: maximize T
such that every commodity i can route T * demand_i simultaneously under
per-arc capacities.  mat_layered restricts each commodity to the fixed
per-layer forwarding paths (deterministic destination-based forwarding
means one path per commodity and layer), which reduces the problem to
concurrent flow over fixed paths; mat_ksp does the same over Yen paths.

Instances small enough for a dense LP are solved exactly (scipy/HiGHS);
larger ones fall back to a multiplicative-weights approximation with a
certified feasible answer no worse than (1 - eps) of the optimum.
"""

from __future__ import annotations

import heapq
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import InvalidParameter
from .layers import UNREACHABLE, ForwardingTables, LayerSet, ksp, route
from .topology import RouterGraph

EXACT_VARIABLE_LIMIT = 20_000
T_UPPER_BOUND = 10.0


@dataclass
class Commodity:
    src: int
    dst: int
    demand: float = 1.0

    def __post_init__(self):
        if self.demand <= 0:
            raise InvalidParameter("commodity demand must be positive")
        if self.src == self.dst:
            raise InvalidParameter("commodity endpoints must differ")


@dataclass
class MATResult:
    throughput: float
    method: str
    per_commodity_flow: dict = field(default_factory=dict)  # (i, layer) -> flow
    delivered: list = field(default_factory=list)  # per commodity
    diagnostics: dict = field(default_factory=dict)


def _arcs_of(g: RouterGraph):
    arcs = []
    for u, v in g.edges:
        arcs.append((u, v))
        arcs.append((v, u))
    arcs.sort()
    return arcs, {a: i for i, a in enumerate(arcs)}


def _capacity_vector(arcs, capacity):
    if capacity is None:
        return np.ones(len(arcs))
    if np.isscalar(capacity):
        return np.full(len(arcs), float(capacity))
    return np.array([capacity[a] for a in arcs], dtype=float)


# ---------------------------------------------------------------------------
# general (unrestricted routing) MCF


def mat_general(g: RouterGraph, commodities, eps: float = 0.05, method: str = "auto",
                capacity=None) -> MATResult:
    """Maximum concurrent multicommodity flow over all links."""
    commodities = list(commodities)
    if not commodities:
        raise InvalidParameter("need at least one commodity")
    if not (0 < eps <= 0.5):
        raise InvalidParameter("eps must be in (0, 0.5]")
    arcs, arc_idx = _arcs_of(g)
    caps = _capacity_vector(arcs, capacity)
    # a disconnected commodity pins T = 0
    for i, c in enumerate(commodities):
        if g.bfs_distances(c.src)[c.dst] < 0:
            return MATResult(0.0, "Degenerate",
                             diagnostics={"disconnected_commodity": i})
    n_vars = len(commodities) * len(arcs) + 1
    if method == "exact" or (method == "auto" and n_vars <= EXACT_VARIABLE_LIMIT):
        return _mat_general_exact(g, commodities, arcs, arc_idx, caps)
    return _mat_general_approx(g, commodities, arcs, arc_idx, caps, eps)


def _mat_general_exact(g, commodities, arcs, arc_idx, caps):
    k, m = len(commodities), len(arcs)
    n_vars = k * m + 1  # f_{i,arc} then T last
    t_col = n_vars - 1

    rows_ub, cols_ub, vals_ub, b_ub = [], [], [], []
    # capacity per arc
    for a in range(m):
        r = len(b_ub)
        for i in range(k):
            rows_ub.append(r)
            cols_ub.append(i * m + a)
            vals_ub.append(1.0)
        b_ub.append(caps[a])
    rows_eq, cols_eq, vals_eq, b_eq = [], [], [], []
    out_arcs = [[] for _ in range(g.num_routers)]
    in_arcs = [[] for _ in range(g.num_routers)]
    for a, (u, v) in enumerate(arcs):
        out_arcs[u].append(a)
        in_arcs[v].append(a)
    r = 0
    for i, c in enumerate(commodities):
        for u in range(g.num_routers):
            if u == c.dst:
                continue
            for a in out_arcs[u]:
                rows_eq.append(r)
                cols_eq.append(i * m + a)
                vals_eq.append(1.0)
            for a in in_arcs[u]:
                rows_eq.append(r)
                cols_eq.append(i * m + a)
                vals_eq.append(-1.0)
            if u == c.src:
                rows_eq.append(r)
                cols_eq.append(t_col)
                vals_eq.append(-c.demand)
            b_eq.append(0.0)
            r += 1
    cost = np.zeros(n_vars)
    cost[t_col] = -1.0
    res = linprog(
        cost,
        A_ub=sp.csr_matrix((vals_ub, (rows_ub, cols_ub)), shape=(len(b_ub), n_vars)),
        b_ub=np.array(b_ub),
        A_eq=sp.csr_matrix((vals_eq, (rows_eq, cols_eq)), shape=(len(b_eq), n_vars)),
        b_eq=np.array(b_eq),
        bounds=[(0, None)] * n_vars,
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"LP solve failed: {res.message}")
    t_val = float(res.x[t_col])
    delivered = [t_val * c.demand for c in commodities]
    flows = {}
    for i in range(k):
        total = float(res.x[i * m : (i + 1) * m].sum())
        flows[(i, 0)] = total
    return MATResult(t_val, "Exact", per_commodity_flow=flows, delivered=delivered)


def _mat_general_approx(g, commodities, arcs, arc_idx, caps, eps):
    """Fleischer-style multiplicative-weights concurrent flow; the answer
    is certified feasible by rescaling with the worst arc load."""
    e = eps / 3.0
    m = len(arcs)
    delta = (m / (1.0 - e)) ** (-1.0 / e)
    length = delta / caps
    adj = [[] for _ in range(g.num_routers)]
    for a, (u, v) in enumerate(arcs):
        adj[u].append((v, a))
    flow = np.zeros((len(commodities), m))
    phases = 0
    d_sum = float((length * caps).sum())
    max_phases = int(math.ceil(math.log((1 + e) / delta) / math.log(1 + e))) + 1
    while d_sum < 1.0 and phases < max_phases:
        for i, c in enumerate(commodities):
            rem = c.demand
            while rem > 1e-12 and d_sum < 1.0:
                path = _dijkstra_arcs(adj, c.src, c.dst, length)
                if path is None:
                    raise RuntimeError("commodity became unroutable mid-run")
                cap_min = min(caps[a] for a in path)
                f = min(rem, cap_min)
                for a in path:
                    flow[i, a] += f
                    d_sum -= length[a] * caps[a]
                    length[a] *= 1.0 + e * f / caps[a]
                    d_sum += length[a] * caps[a]
                rem -= f
        phases += 1
    if phases == 0:
        return MATResult(0.0, f"ApproxEps({eps})", diagnostics={"phases": 0})
    loads = flow.sum(axis=0) / caps
    scale = max(loads.max(), 1e-300)
    t_val = phases / scale
    delivered = [phases * c.demand / scale for c in commodities]
    flows = {(i, 0): float(flow[i].sum() / scale) for i in range(len(commodities))}
    return MATResult(t_val, f"ApproxEps({eps})", per_commodity_flow=flows,
                     delivered=delivered, diagnostics={"phases": phases})


def _dijkstra_arcs(adj, src, dst, length):
    dist = {src: 0.0}
    prev_arc = {}
    heap = [(0.0, src)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        if u == dst:
            break
        done.add(u)
        for v, a in adj[u]:
            nd = d + length[a]
            if nd < dist.get(v, float("inf")):
                dist[v] = nd
                prev_arc[v] = (u, a)
                heapq.heappush(heap, (nd, v))
    if dst not in dist:
        return None
    path = []
    cur = dst
    while cur != src:
        u, a = prev_arc[cur]
        path.append(a)
        cur = u
    path.reverse()
    return path


# ---------------------------------------------------------------------------
# fixed-path concurrent flow (layered routing and kSP reduce to this)


@dataclass
class FixedPathProblem:
    """Concurrent flow where commodity i may only split over paths[i],
    each path an arc-index tuple; label[i][j] names the path (layer id)."""

    arcs: list
    caps: np.ndarray
    demands: list
    paths: list  # per commodity: list of arc-index tuples
    labels: list  # per commodity: list of path labels (e.g. layer ids)

    @property
    def n_vars(self) -> int:
        return sum(len(p) for p in self.paths) + 1


def mat_layered(g: RouterGraph, layerset: LayerSet, tables: ForwardingTables,
                commodities, eps: float = 0.05, method: str = "auto",
                capacity=None) -> MATResult:
    """MAT under layered deterministic forwarding: each commodity uses at
    most one fixed path per layer (the forwarding walk), flows never leak
    between layers, and the per-arc sums respect physical capacities."""
    commodities = list(commodities)
    if not commodities:
        raise InvalidParameter("need at least one commodity")
    arcs, arc_idx = _arcs_of(g)
    caps = _capacity_vector(arcs, capacity)
    paths, labels = [], []
    for i, c in enumerate(commodities):
        plist, llist = [], []
        for layer_id in range(1, layerset.n + 1):
            walk = route(tables, layer_id, c.src, c.dst)
            if walk is UNREACHABLE:
                continue
            plist.append(tuple(arc_idx[(a, b)] for a, b in zip(walk, walk[1:])))
            llist.append(layer_id)
        if not plist:
            return MATResult(0.0, "Degenerate",
                             diagnostics={"all_layers_unreachable": i})
        paths.append(plist)
        labels.append(llist)
    problem = FixedPathProblem(arcs=arcs, caps=caps,
                               demands=[c.demand for c in commodities],
                               paths=paths, labels=labels)
    return solve_fixed_paths(problem, eps=eps, method=method)


def mat_ksp(g: RouterGraph, commodities, k: int, eps: float = 0.05,
            method: str = "auto", capacity=None, minimal_only: bool = True) -> MATResult:
    """MAT when each commodity splits over its k shortest loop-free paths.

    minimal_only keeps just the equal-length shortest paths (the classic
    baseline: traffic spreads over multiple minimal paths if available,
    which on low-diameter topologies often means a single path)."""
    commodities = list(commodities)
    arcs, arc_idx = _arcs_of(g)
    caps = _capacity_vector(arcs, capacity)
    paths, labels = [], []
    for i, c in enumerate(commodities):
        plist = ksp(g, c.src, c.dst, k)
        if not plist:
            return MATResult(0.0, "Degenerate", diagnostics={"disconnected_commodity": i})
        if minimal_only:
            shortest = len(plist[0])
            plist = [p for p in plist if len(p) == shortest]
        paths.append([tuple(arc_idx[(a, b)] for a, b in zip(p, p[1:])) for p in plist])
        labels.append(list(range(1, len(plist) + 1)))
    problem = FixedPathProblem(arcs=arcs, caps=caps,
                               demands=[c.demand for c in commodities],
                               paths=paths, labels=labels)
    return solve_fixed_paths(problem, eps=eps, method=method)


def solve_fixed_paths(problem: FixedPathProblem, eps: float = 0.05,
                      method: str = "auto") -> MATResult:
    if method == "exact" or (method == "auto" and problem.n_vars <= EXACT_VARIABLE_LIMIT):
        return _fixed_paths_exact(problem)
    return _fixed_paths_approx(problem, eps)


def _var_layout(problem):
    offsets = []
    total = 0
    for plist in problem.paths:
        offsets.append(total)
        total += len(plist)
    return offsets, total


def _fixed_paths_exact(problem: FixedPathProblem) -> MATResult:
    offsets, total = _var_layout(problem)
    n_vars = total + 1
    t_col = total
    rows, cols, vals, b_ub = [], [], [], []
    # demand satisfaction: -sum_l x_{il} + d_i T <= 0
    for i, plist in enumerate(problem.paths):
        r = len(b_ub)
        for j in range(len(plist)):
            rows.append(r)
            cols.append(offsets[i] + j)
            vals.append(-1.0)
        rows.append(r)
        cols.append(t_col)
        vals.append(problem.demands[i])
        b_ub.append(0.0)
    # emission cap per commodity (optimization aid)
    for i, plist in enumerate(problem.paths):
        r = len(b_ub)
        for j in range(len(plist)):
            rows.append(r)
            cols.append(offsets[i] + j)
            vals.append(1.0)
        b_ub.append(T_UPPER_BOUND * problem.demands[i])
    # physical capacity per arc
    arc_rows: dict = {}
    for i, plist in enumerate(problem.paths):
        for j, path in enumerate(plist):
            for a in path:
                arc_rows.setdefault(a, []).append(offsets[i] + j)
    for a, var_ids in sorted(arc_rows.items()):
        r = len(b_ub)
        for vid in var_ids:
            rows.append(r)
            cols.append(vid)
            vals.append(1.0)
        b_ub.append(problem.caps[a])
    cost = np.zeros(n_vars)
    cost[t_col] = -1.0
    res = linprog(
        cost,
        A_ub=sp.csr_matrix((vals, (rows, cols)), shape=(len(b_ub), n_vars)),
        b_ub=np.array(b_ub),
        bounds=[(0, None)] * n_vars,
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"LP solve failed: {res.message}")
    t_val = float(res.x[t_col])
    flows = {}
    delivered = []
    for i, plist in enumerate(problem.paths):
        tot = 0.0
        for j, label in enumerate(problem.labels[i]):
            x = float(res.x[offsets[i] + j])
            flows[(i, label)] = x
            tot += x
        delivered.append(tot)
    return MATResult(t_val, "Exact", per_commodity_flow=flows, delivered=delivered)


def _fixed_paths_approx(problem: FixedPathProblem, eps: float) -> MATResult:
    e = eps / 3.0
    m = len(problem.arcs)
    caps = problem.caps
    delta = (m / (1.0 - e)) ** (-1.0 / e)
    length = delta / caps
    k = len(problem.paths)
    flow = [np.zeros(len(p)) for p in problem.paths]
    d_sum = float((length * caps).sum())
    phases = 0
    max_phases = int(math.ceil(math.log((1 + e) / delta) / math.log(1 + e))) + 1
    while d_sum < 1.0 and phases < max_phases:
        for i in range(k):
            rem = problem.demands[i]
            while rem > 1e-12 and d_sum < 1.0:
                costs = [sum(length[a] for a in path) for path in problem.paths[i]]
                j = int(np.argmin(costs))
                path = problem.paths[i][j]
                cap_min = min(caps[a] for a in path)
                f = min(rem, cap_min)
                flow[i][j] += f
                for a in path:
                    d_sum -= length[a] * caps[a]
                    length[a] *= 1.0 + e * f / caps[a]
                    d_sum += length[a] * caps[a]
                rem -= f
        phases += 1
    if phases == 0:
        return MATResult(0.0, f"ApproxEps({eps})", diagnostics={"phases": 0})
    loads = np.zeros(m)
    for i in range(k):
        for j, path in enumerate(problem.paths[i]):
            for a in path:
                loads[a] += flow[i][j]
    loads /= caps
    scale = max(loads.max(), 1e-300)
    t_val = phases / scale
    flows = {}
    delivered = []
    for i in range(k):
        tot = 0.0
        for j, label in enumerate(problem.labels[i]):
            x = float(flow[i][j] / scale)
            flows[(i, label)] = x
            tot += x
        delivered.append(tot)
    return MATResult(t_val, f"ApproxEps({eps})", per_commodity_flow=flows,
                     delivered=delivered, diagnostics={"phases": phases})


# ---------------------------------------------------------------------------
# LP text emission (external-solver escape hatch)


def emit_lp(problem: FixedPathProblem, destination: str) -> None:
    """Textual LP: maximize T subject to per-commodity demand coverage and
    per-arc capacity.  Variables x_<i>_<label> mirror (commodity, path)."""
    lines = ["Maximize", " obj: T", "Subject To"]
    for i, plist in enumerate(problem.paths):
        terms = " + ".join(f"x_{i}_{lab}" for lab in problem.labels[i])
        lines.append(f" dem_{i}: {terms} - {problem.demands[i]:.12g} T >= 0")
    arc_users: dict = {}
    for i, plist in enumerate(problem.paths):
        for lab, path in zip(problem.labels[i], plist):
            for a in path:
                arc_users.setdefault(a, []).append((i, lab))
    for a, users in sorted(arc_users.items()):
        terms = " + ".join(f"x_{i}_{lab}" for i, lab in users)
        u, v = problem.arcs[a]
        lines.append(f" cap_{u}_{v}: {terms} <= {problem.caps[a]:.12g}")
    lines.append("End")
    tmp = destination + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, destination)


def solve_lp_file(path: str) -> float:
    """Parse a file written by emit_lp and solve it independently; used to
    cross-check the internal solver."""
    var_ids: dict = {}

    def vid(name):
        if name not in var_ids:
            var_ids[name] = len(var_ids)
        return var_ids[name]

    vid("T")
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line in ("Maximize", "Subject To", "End") or line.startswith("obj:"):
                continue
            m = re.match(r"^\w+:\s*(.+?)\s*(<=|>=)\s*([-\d.eE+]+)$", line)
            if not m:
                continue
            expr, sense, rhs = m.groups()
            coeffs: dict = {}
            for term in re.finditer(r"([+-]?)\s*([\d.eE+]*)\s*\*?\s*([A-Za-z]\w*)", expr):
                sign, num, name = term.groups()
                val = float(num) if num not in ("", "+") else 1.0
                if sign == "-":
                    val = -val
                coeffs[vid(name)] = coeffs.get(vid(name), 0.0) + val
            rows.append((coeffs, sense, float(rhs)))
    n = len(var_ids)
    a_ub, b_ub = [], []
    for coeffs, sense, rhs in rows:
        row = np.zeros(n)
        for j, v in coeffs.items():
            row[j] = v
        if sense == "<=":
            a_ub.append(row)
            b_ub.append(rhs)
        else:
            a_ub.append(-row)
            b_ub.append(-rhs)
    cost = np.zeros(n)
    cost[var_ids["T"]] = -1.0
    res = linprog(cost, A_ub=np.array(a_ub), b_ub=np.array(b_ub),
                  bounds=[(0, None)] * n, method="highs")
    if not res.success:
        raise RuntimeError(f"LP re-solve failed: {res.message}")
    return float(res.x[var_ids["T"]])
