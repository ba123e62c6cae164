"""End-to-end: render from CSVs produced by the primary CLI, when present."""

import json
import os
import subprocess
import sys

import pytest

from plotkit import FigureSpec, render

fatpaths = pytest.importorskip("fatpaths", reason="primary package not installed")


def run_cli(args):
    from fatpaths.cli import main

    assert main(args) == 0


@pytest.fixture(scope="module")
def produced(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    topo = str(root / "topo")
    run_cli(["gen", "--topo", "slimfly", "--q", "3", "--out", topo])
    div = str(root / "div")
    run_cli(["analyze", "--graph", topo + "/topology.graph", "--pairs-short", "400",
             "--pairs-cdp", "60", "--quads-pi", "40", "--out", div])
    manifest = {
        "seed": 7,
        "topology": {"family": "SlimFly", "params": {"q": 3}},
        "layers": {"method": "RandomSample", "n": 3, "rho": 0.8},
        "traffic": {"pattern": "RandomPermutation", "lambda": 80.0, "window": 0.004},
        "sim": {"policy": "FatPaths"},
    }
    mpath = str(root / "m.json")
    json.dump(manifest, open(mpath, "w"))
    sim = str(root / "sim")
    run_cli(["simulate", "--manifest", mpath, "--out", sim])
    rep = str(root / "rep")
    run_cli(["report", "--inputs", sim, "--out", rep])
    tman = {
        "seed": 7,
        "topology": {"family": "Clique", "params": {"k_prime": 4}},
        "layers": {"n": 3, "rho": 1.0},
        "throughput": {"intensity": 1.0, "schemes": ["random", "ksp"]},
    }
    tpath = str(root / "t.json")
    json.dump(tman, open(tpath, "w"))
    mat = str(root / "mat")
    run_cli(["throughput", "--manifest", tpath, "--out", mat])
    return {
        "diversity": div + "/diversity.csv",
        "records": sim + "/records.csv",
        "summary": rep + "/fct_summary.csv",
        "mat": mat + "/mat.csv",
    }


def test_pipeline_renders_all_kinds(produced, tmp_path):
    sizes = None
    specs = [
        FigureSpec("histogram", [produced["diversity"]], str(tmp_path / "p1.png"),
                   params={"hist_kind": "cmin_hist"}),
        FigureSpec("cdf", [produced["diversity"]], str(tmp_path / "p2.png"),
                   value_col="value", params={"row_kind": "cdp"}),
        FigureSpec("bar_group", [produced["mat"]], str(tmp_path / "p3.png")),
        FigureSpec("tail_panel", [produced["summary"]], str(tmp_path / "p4.png")),
        FigureSpec("fct_histogram", [produced["records"]], str(tmp_path / "p5.png")),
    ]
    for spec in specs:
        assert os.path.getsize(render(spec)) > 1000


def test_pipeline_render_deterministic(produced, tmp_path):
    a = FigureSpec("fct_histogram", [produced["records"]], str(tmp_path / "a.png"))
    b = FigureSpec("fct_histogram", [produced["records"]], str(tmp_path / "b.png"))
    render(a)
    render(b)
    assert open(a.output, "rb").read() == open(b.output, "rb").read()
