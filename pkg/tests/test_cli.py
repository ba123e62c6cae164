import json
import os

import pytest

from fatpaths import cli


def run(argv):
    return cli.main(argv)


def test_gen_writes_graph_and_meta(tmp_path):
    out = str(tmp_path / "sf")
    assert run(["gen", "--topo", "slimfly", "--q", "5", "--out", out]) == 0
    assert os.path.exists(out + "/topology.graph")
    meta = json.load(open(out + "/topology.json"))
    assert meta["num_routers"] == 50
    assert meta["network_radix"] == 7
    assert "manifest_digest" in meta


def test_gen_rejects_bad_params(tmp_path):
    assert run(["gen", "--topo", "slimfly", "--q", "6", "--out", str(tmp_path)]) == 2
    assert run(["gen", "--topo", "nosuch", "--q", "5", "--out", str(tmp_path)]) == 2


def test_analyze_produces_report(tmp_path):
    out = str(tmp_path / "sf")
    run(["gen", "--topo", "slimfly", "--q", "3", "--out", out])
    rep = str(tmp_path / "rep")
    code = run(["analyze", "--graph", out + "/topology.graph", "--pairs-short", "500",
                "--pairs-cdp", "50", "--quads-pi", "30", "--out", rep])
    assert code == 0
    doc = json.load(open(rep + "/diversity.json"))
    assert 0 < doc["cdp_mean_frac"] <= 1.0
    first = open(rep + "/diversity.csv").readline()
    assert first.startswith("# manifest_digest=")


def test_layers_command(tmp_path):
    out = str(tmp_path / "sf")
    run(["gen", "--topo", "slimfly", "--q", "3", "--out", out])
    lay = str(tmp_path / "lay")
    code = run(["layers", "--graph", out + "/topology.graph", "--method", "random",
                "--layers-n", "3", "--rho", "0.8", "--out", lay])
    assert code == 0
    assert os.path.exists(lay + "/layers.json")
    assert os.path.exists(lay + "/tables.csv")


def test_throughput_command(tmp_path):
    manifest = {
        "seed": 1,
        "topology": {"family": "Clique", "params": {"k_prime": 4}},
        "layers": {"n": 3, "rho": 1.0},
        "throughput": {"intensity": 1.0, "schemes": ["random", "ksp"]},
    }
    mpath = str(tmp_path / "m.json")
    json.dump(manifest, open(mpath, "w"))
    out = str(tmp_path / "mat")
    assert run(["throughput", "--manifest", mpath, "--out", out]) == 0
    lines = open(out + "/mat.csv").read().splitlines()
    assert lines[1] == "topology,scheme,n,intensity,T"
    assert len(lines) == 4


def simulate_manifest(tmp_path, seed=3):
    manifest = {
        "seed": seed,
        "topology": {"family": "SlimFly", "params": {"q": 3}},
        "layers": {"method": "RandomSample", "n": 3, "rho": 0.8},
        "traffic": {"pattern": "RandomPermutation", "lambda": 50.0, "window": 0.005},
        "sim": {"policy": "FatPaths"},
    }
    mpath = str(tmp_path / "sim.json")
    json.dump(manifest, open(mpath, "w"))
    return mpath


def test_simulate_and_report(tmp_path):
    mpath = simulate_manifest(tmp_path)
    out = str(tmp_path / "run1")
    assert run(["simulate", "--manifest", mpath, "--out", out]) == 0
    rec = out + "/records.csv"
    assert open(rec).readline().startswith("# manifest_digest=")
    rep = str(tmp_path / "rep")
    assert run(["report", "--inputs", out, "--out", rep]) == 0
    summary = open(rep + "/fct_summary.csv").read().splitlines()
    assert summary[1] == "topology,policy,bytes,n,fct_mean,fct_p50,fct_p99,tpf_mean"


def test_simulate_deterministic(tmp_path):
    mpath = simulate_manifest(tmp_path)
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    run(["simulate", "--manifest", mpath, "--out", out1])
    run(["simulate", "--manifest", mpath, "--out", out2])
    assert open(out1 + "/records.csv").read() == open(out2 + "/records.csv").read()


def test_report_empty_dir_exits_2(tmp_path):
    empty = str(tmp_path / "empty")
    os.makedirs(empty)
    assert run(["report", "--inputs", empty, "--out", str(tmp_path / "rep")]) == 2


def test_report_refuses_mixed_digests(tmp_path):
    m1 = simulate_manifest(tmp_path, seed=3)
    out1 = str(tmp_path / "r1")
    run(["simulate", "--manifest", m1, "--out", out1])
    manifest = json.load(open(m1))
    manifest["seed"] = 4
    m2 = str(tmp_path / "sim2.json")
    json.dump(manifest, open(m2, "w"))
    out2 = str(tmp_path / "r2")
    run(["simulate", "--manifest", m2, "--out", out2])
    assert run(["report", "--inputs", out1, out2, "--out", str(tmp_path / "rep")]) == 2


def test_sweep_fanout(tmp_path, monkeypatch):
    monkeypatch.setenv("FATPATHS_THREADS", "2")
    manifest = {
        "seed": 5,
        "topology": {"family": "Clique", "params": {"k_prime": 3}},
        "layers": {"method": "RandomSample", "n": 2, "rho": 1.0},
        "sim": {"policy": "FatPaths"},
        "sweep": [
            {"traffic": {"pattern": "RandomPermutation", "lambda": 40.0, "window": 0.004}},
            {"traffic": {"pattern": "RandomUniform", "lambda": 40.0, "window": 0.004}},
        ],
    }
    mpath = str(tmp_path / "sweep.json")
    json.dump(manifest, open(mpath, "w"))
    out = str(tmp_path / "sweep_out")
    assert run(["simulate", "--manifest", mpath, "--out", out]) == 0
    assert os.path.exists(out + "/case000/records.csv")
    assert os.path.exists(out + "/case001/records.csv")


def test_simulate_flags_merge_manifest_wins(tmp_path):
    mpath = simulate_manifest(tmp_path)
    out = str(tmp_path / "flagged")
    code = run(["simulate", "--manifest", mpath, "--pattern", "RandomUniform",
                "--lambda", "99.0", "--out", out])
    assert code == 0
    assert os.path.exists(out + "/records.csv")
    assert os.path.exists(out + "/sim_config.json")
    cfg = json.load(open(out + "/sim_config.json"))
    for field in ("link_rate", "link_latency", "mtu", "queue_limit", "window",
                  "flowlet_gap", "policy", "rto", "max_rto_retries", "seed"):
        assert field in cfg


def test_layers_command_spain(tmp_path):
    out = str(tmp_path / "ft")
    run(["gen", "--topo", "ft3", "--k", "4", "--out", out])
    lay = str(tmp_path / "spain")
    assert run(["layers", "--graph", out + "/topology.graph", "--method", "spain",
                "--out", lay]) == 0
    from fatpaths.layers import LayerSet
    ls = LayerSet.from_json(lay + "/layers.json")
    assert ls.method == "SPAIN"
    assert ls.n >= 2
