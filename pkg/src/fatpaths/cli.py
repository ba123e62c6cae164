"""Command-line orchestration with seed-pinned, self-describing manifests.

Every output file embeds the manifest digest (sha256 of the canonical
manifest JSON): `# manifest_digest=...` as the first line of CSVs, or a
"manifest_digest" field in JSON documents.  `report` refuses to merge
results whose digests disagree.

Exit codes: 0 success, 2 validation error (the offending field is named),
3 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import divmetrics, layers, simnet, throughput, topology, traffic
from .errors import InvalidParameter


class ValidationError(Exception):
    pass


def manifest_digest(manifest: dict) -> str:
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_text_atomic(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _stamp_csv(path, digest):
    with open(path) as fh:
        body = fh.read()
    _write_text_atomic(path, f"# manifest_digest={digest}\n" + body)


def _write_json(path, doc, digest):
    doc = dict(doc)
    doc["manifest_digest"] = digest
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def read_csv_digest(path) -> str:
    with open(path) as fh:
        first = fh.readline().strip()
    if first.startswith("# manifest_digest="):
        return first.split("=", 1)[1]
    return ""


# ---------------------------------------------------------------------------
# manifest plumbing


_TOPO_ALIASES = {
    "slimfly": "SlimFly", "sf": "SlimFly",
    "dragonfly": "Dragonfly", "df": "Dragonfly",
    "hyperx": "HyperX", "hx": "HyperX",
    "xpander": "Xpander", "xp": "Xpander",
    "jellyfish": "Jellyfish", "jf": "Jellyfish",
    "fattree3": "FatTree3", "ft3": "FatTree3",
    "clique": "Clique", "star": "Star",
}


def _topology_from_spec(spec: dict) -> topology.RouterGraph:
    family = spec.get("family")
    if family not in topology._GENERATORS:
        raise ValidationError(f"topology.family: unknown family {family!r}")
    try:
        return topology.generate(family, spec.get("params", {}), seed=spec.get("seed", 0))
    except KeyError as exc:
        raise ValidationError(f"topology.params: missing {exc}") from exc
    except InvalidParameter as exc:
        raise ValidationError(f"topology.params: {exc}") from exc


def _merge_manifest(manifest: dict | None, flag_spec: dict) -> dict:
    """Manifest fields win over conflicting flags, with a warning."""
    if not manifest:
        return flag_spec
    merged = dict(flag_spec)
    for key, value in manifest.items():
        if key in merged and merged[key] is not None and merged[key] != value:
            print(f"warning: manifest overrides --{key} ({merged[key]!r} -> {value!r})",
                  file=sys.stderr)
        merged[key] = value
    return merged


def _load_manifest(path):
    with open(path) as fh:
        return json.load(fh)


def _build_layers(g, spec, seed):
    method = spec.get("method", "RandomSample").lower()
    n = spec.get("n", 9)
    rho = spec.get("rho", 1.0)
    if method in ("randomsample", "random"):
        return layers.build_layers_random(g, n=n, rho=rho, seed=seed)
    if method in ("overlapmin", "overlap"):
        return layers.build_layers_overlapmin(
            g, n=n, l_min=spec.get("l_min"), l_max=spec.get("l_max"),
            path_budget=spec.get("path_budget"), seed=seed)
    if method == "spain":
        return layers.build_layers_spain(g, k=spec.get("k", 4), seed=seed)
    if method == "past":
        return layers.build_layers_past(g, variant=spec.get("variant", "BFS"), seed=seed)
    raise ValidationError(f"layers.method: unknown method {spec.get('method')!r}")


def _build_pattern_pairs(g, spec, seed):
    kind = spec.get("pattern", "RandomPermutation")
    if kind.lower() == "worstcase":
        pairs, _ = traffic.worst_case_pattern(g, seed=seed)
        return pairs
    if kind.lower() == "skewed":
        return traffic.skewed_offdiagonal_pairs(g, spec.get("active_fraction", 0.1))
    params = {k: v for k, v in spec.items()
              if k in ("c", "offsets", "m")}
    return traffic.pattern_targets(kind, g.num_endpoints, seed=seed, **params)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args):
    spec = {"family": _TOPO_ALIASES.get(args.topo.lower(), args.topo),
            "params": {}, "seed": args.seed}
    for name, key in (("q", "q"), ("p", "p"), ("l", "L"), ("s", "S"), ("k", "k"),
                      ("k_prime", "k_prime"), ("ell", "ell"),
                      ("n_routers", "n_routers"), ("n", "N")):
        val = getattr(args, name, None)
        if val is not None:
            spec["params"][key] = val
    g = _topology_from_spec(spec)
    digest = manifest_digest(spec)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "topology.graph")
    topology.save_graph(g, path)
    meta = {
        "name": g.name, "num_routers": g.num_routers, "network_radix": g.network_radix,
        "concentration": g.concentration, "num_endpoints": g.num_endpoints,
        "spec": spec,
    }
    _write_json(os.path.join(args.out, "topology.json"), meta, digest)
    print(f"{g.name}: N_r={g.num_routers} k'={g.network_radix} N={g.num_endpoints}")
    return 0


def cmd_analyze(args):
    g = topology.load_graph(args.graph)
    manifest = {"graph": os.path.abspath(args.graph), "pairs_short": args.pairs_short,
                "pairs_cdp": args.pairs_cdp, "quads_pi": args.quads_pi,
                "d_prime": args.dprime, "seed": args.seed}
    digest = manifest_digest(manifest)
    report = divmetrics.analyze(
        g, num_pairs_short=args.pairs_short, num_pairs_cdp=args.pairs_cdp,
        num_quads_pi=args.quads_pi, d_prime=args.dprime, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "diversity.csv")
    json_path = os.path.join(args.out, "diversity.json")
    divmetrics.save_report(report, csv_path, json_path)
    _stamp_csv(csv_path, digest)
    doc = json.load(open(json_path))
    _write_json(json_path, doc, digest)
    print(f"d'={report.d_prime} cdp_mean={doc['cdp_mean_frac']:.3f}k' "
          f"cdp_tail1={doc['cdp_tail1_frac']:.3f}k'")
    return 0


def cmd_layers(args):
    g = topology.load_graph(args.graph)
    spec = {"method": args.method, "n": args.layers_n, "rho": args.rho, "seed": args.seed}
    digest = manifest_digest(spec)
    ls = _build_layers(g, spec, args.seed)
    tables = layers.forwarding_tables(g, ls, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    ls.to_json(os.path.join(args.out, "layers.json"))
    tables_path = os.path.join(args.out, "tables.csv")
    tables.to_csv(tables_path)
    _stamp_csv(tables_path, digest)
    print(f"{ls.method}: {ls.n} layers")
    return 0


def cmd_throughput(args):
    manifest = _load_manifest(args.manifest)
    digest = manifest_digest(manifest)
    seed = manifest.get("seed", 0)
    g = _topology_from_spec(manifest["topology"])
    tspec = manifest.get("throughput", {})
    intensity = tspec.get("intensity", 1.0)
    eps = tspec.get("eps", 0.05)
    demands, method = traffic.worst_case_router_demands(g, seed=seed, intensity=intensity)
    comms = [throughput.Commodity(s, t, 1.0) for s, t in demands]
    rows = ["topology,scheme,n,intensity,T"]
    for scheme in tspec.get("schemes", ["random"]):
        sname = scheme if isinstance(scheme, str) else scheme.get("method", "random")
        sspec = {"method": sname, **(scheme if isinstance(scheme, dict) else {})}
        sspec.setdefault("n", manifest.get("layers", {}).get("n", 9))
        sspec.setdefault("rho", manifest.get("layers", {}).get("rho", 0.75))
        if sname.lower() == "ksp":
            res = throughput.mat_ksp(g, comms, k=sspec["n"], eps=eps)
            n_used = sspec["n"]
        else:
            ls = _build_layers(g, sspec, seed)
            tables = layers.forwarding_tables(g, ls, seed=seed)
            res = throughput.mat_layered(g, ls, tables, comms, eps=eps)
            n_used = ls.n
        rows.append(f"{g.name},{sname},{n_used},{intensity},{res.throughput:.6f}")
        print(rows[-1])
    os.makedirs(args.out, exist_ok=True)
    out = os.path.join(args.out, "mat.csv")
    _write_text_atomic(out, f"# manifest_digest={digest}\n" + "\n".join(rows) + "\n")
    return 0


def _run_sim_case(case, out_dir):
    manifest = case
    digest = manifest_digest(manifest)
    seed = manifest.get("seed", 0)
    g = _topology_from_spec(manifest["topology"])
    ls = _build_layers(g, manifest.get("layers", {"method": "RandomSample", "n": 9, "rho": 0.75}), seed)
    tables = layers.forwarding_tables(g, ls, seed=seed)
    tr_spec = manifest.get("traffic", {})
    pairs = _build_pattern_pairs(g, tr_spec, seed)
    wl = traffic.build_workload(
        g, pairs, lam=tr_spec.get("lambda", 300.0), window=tr_spec.get("window", 0.02),
        seed=seed, randomized_placement=tr_spec.get("randomized_placement", True),
        fixed_size=tr_spec.get("fixed_size"))
    sim_spec = manifest.get("sim", {})
    cfg_fields = {k: v for k, v in sim_spec.items()
                  if k in ("link_rate", "link_latency", "mtu", "queue_limit", "window",
                           "flowlet_gap", "policy", "rto", "max_rto_retries")}
    cfg = simnet.SimConfig(seed=seed, **cfg_fields)
    records = simnet.run_sim(g, tables, wl, cfg)
    os.makedirs(out_dir, exist_ok=True)
    rec_path = os.path.join(out_dir, "records.csv")
    simnet.records_to_csv(records, rec_path, topology=g.name)
    _stamp_csv(rec_path, digest)
    stats = simnet.fct_stats(records, warmup_window=tr_spec.get("window", 0.0))
    _write_json(os.path.join(out_dir, "fct_stats.json"), stats, digest)
    import dataclasses

    _write_json(os.path.join(out_dir, "sim_config.json"), dataclasses.asdict(cfg), digest)
    return len(records)


def cmd_simulate(args):
    manifest = _load_manifest(args.manifest)
    flag_spec = {}
    if getattr(args, "pattern", None) is not None:
        flag_spec["traffic"] = {"pattern": args.pattern}
        if args.lam is not None:
            flag_spec["traffic"]["lambda"] = args.lam
    elif getattr(args, "lam", None) is not None:
        flag_spec["traffic"] = {"lambda": args.lam}
    if getattr(args, "seed", None) is not None:
        flag_spec["seed"] = args.seed
    if flag_spec:
        manifest = _merge_manifest(manifest, flag_spec)
    cases = manifest.get("sweep")
    if cases is None:
        n = _run_sim_case(manifest, args.out)
        print(f"{n} flows completed")
        return 0
    max_workers = int(os.environ.get("FATPATHS_THREADS", "0")) or min(4, len(cases))
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = []
        for i, case in enumerate(cases):
            case = {**{k: v for k, v in manifest.items() if k != "sweep"}, **case}
            futures.append(pool.submit(_run_sim_case, case, os.path.join(args.out, f"case{i:03d}")))
        for i, fut in enumerate(futures):
            print(f"case{i:03d}: {fut.result()} flows completed")
    return 0


def cmd_report(args):
    import csv as _csv

    rows = []
    digests = set()
    for root in args.inputs:
        if not os.path.isdir(root):
            raise ValidationError(f"inputs: {root} is not a directory")
        for dirpath, _, files in os.walk(root):
            for name in files:
                if name == "records.csv":
                    path = os.path.join(dirpath, name)
                    digests.add(read_csv_digest(path))
                    with open(path) as fh:
                        first = fh.readline()
                        if not first.startswith("#"):
                            fh.seek(0)
                        reader = _csv.DictReader(fh)
                        rows.extend(reader)
    if not rows:
        raise ValidationError("inputs: no records.csv found (empty result set)")
    if len(digests) > 1:
        raise ValidationError(f"inputs: manifest digests disagree: {sorted(digests)}")
    digest = digests.pop()
    by_key: dict = {}
    for row in rows:
        key = (row["topology"], row["policy"], int(row["bytes"]))
        by_key.setdefault(key, []).append(float(row["fct_s"]))
    import numpy as np

    out_rows = ["topology,policy,bytes,n,fct_mean,fct_p50,fct_p99,tpf_mean"]
    for (topo, policy, size), fcts in sorted(by_key.items()):
        arr = np.array(fcts)
        out_rows.append(
            f"{topo},{policy},{size},{len(arr)},{arr.mean():.9f},"
            f"{np.percentile(arr, 50):.9f},{np.percentile(arr, 99):.9f},"
            f"{(size / arr).mean():.3f}"
        )
    os.makedirs(args.out, exist_ok=True)
    _write_text_atomic(os.path.join(args.out, "fct_summary.csv"),
                       f"# manifest_digest={digest}\n" + "\n".join(out_rows) + "\n")
    _write_json(os.path.join(args.out, "summary.json"),
                {"n_records": len(rows), "groups": len(by_key)}, digest)
    print(f"merged {len(rows)} records into {len(by_key)} groups")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(prog="fatpaths",
                                     description="low-diameter routing laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a topology")
    p.add_argument("--topo", required=True)
    p.add_argument("--q", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--l", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--k-prime", dest="k_prime", type=int)
    p.add_argument("--ell", type=int)
    p.add_argument("--n-routers", dest="n_routers", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("analyze", help="path-diversity report for a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--pairs-short", type=int, default=100_000)
    p.add_argument("--pairs-cdp", type=int, default=1_000)
    p.add_argument("--quads-pi", type=int, default=1_000)
    p.add_argument("--dprime", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("layers", help="build routing layers and tables")
    p.add_argument("--graph", required=True)
    p.add_argument("--method", default="random")
    p.add_argument("--layers-n", dest="layers_n", type=int, default=9)
    p.add_argument("--rho", type=float, default=0.75)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_layers)

    p = sub.add_parser("throughput", help="maximum achievable throughput (MAT)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_throughput)

    p = sub.add_parser("simulate", help="run the packet-level simulator")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pattern", help="traffic pattern (manifest wins on conflict)")
    p.add_argument("--lambda", dest="lam", type=float, help="flows/endpoint/s")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="merge simulation outputs")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InvalidParameter, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
