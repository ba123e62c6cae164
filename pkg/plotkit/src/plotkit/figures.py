"""The six figure kinds rendered from routing-lab outputs.

histogram     -- value histograms (shortest-path lengths/counts)
cdf           -- cumulative distribution of sampled per-pair quantities
bar_group     -- grouped bars (throughput per topology and scheme)
tail_panel    -- mean/p10/p99 flow completion time by flow size
fct_histogram -- completion-time histogram for one flow-size bucket
heat_panel    -- tail completion time over a (layer count, density) sweep

Rendering is deterministic: fixed style, fixed dpi, no timestamps or
environment-dependent metadata in the output bytes.
"""

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import PlotInputError, check_digests, read_csv, require_columns

FIGURE_KINDS = ("histogram", "cdf", "bar_group", "tail_panel", "fct_histogram", "heat_panel")

_STYLE = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "plotkit",
}


@dataclass
class FigureSpec:
    kind: str  # one of FIGURE_KINDS
    inputs: list  # CSV paths
    output: str  # image path (.png)
    group_by: str | None = None
    value_col: str | None = None
    normalization: str = "none"  # none | by_k_prime | by_serialization_bound
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise PlotInputError(f"unknown figure kind {self.kind!r}")
        if self.normalization not in ("none", "by_k_prime", "by_serialization_bound"):
            raise PlotInputError(f"unknown normalization {self.normalization!r}")


def _load_inputs(spec):
    loaded = []
    digests = []
    for path in spec.inputs:
        rows, digest = read_csv(path)
        loaded.append((path, rows))
        digests.append((path, digest))
    check_digests(digests)
    return loaded


def _normalize(values, spec):
    if spec.normalization == "by_k_prime":
        k = float(spec.params.get("k_prime", 0))
        if k <= 0:
            raise PlotInputError("by_k_prime normalization needs params['k_prime'] > 0")
        return values / k, "fraction of k'"
    if spec.normalization == "by_serialization_bound":
        rate = float(spec.params.get("link_rate", 10e9))
        sizes = np.asarray(spec.params["sizes"], dtype=float)
        return values / (sizes * 8.0 / rate), "x serialization bound"
    return values, ""


def render(spec: FigureSpec) -> str:
    """Render the figure and return the output path."""
    loaded = _load_inputs(spec)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        _RENDERERS[spec.kind](spec, loaded, ax)
        fig.tight_layout()
        fig.savefig(spec.output, format="png", metadata={"Software": None})
        plt.close(fig)
    return spec.output


def _render_histogram(spec, loaded, ax):
    # diversity.csv style: kind,ids,l,value -- or any (value_col) histogram
    width = 0.8 / len(loaded)
    for i, (path, rows) in enumerate(loaded):
        if spec.value_col and spec.value_col in rows[0]:
            require_columns(rows, [spec.value_col], path)
            vals = np.array([float(r[spec.value_col]) for r in rows])
            xs, weights = np.unique(vals, return_counts=True)
            weights = weights / weights.sum()
        else:
            require_columns(rows, ["kind", "l", "value"], path)
            sel = spec.params.get("hist_kind", "lmin_hist")
            picked = [r for r in rows if r["kind"] == sel]
            if not picked:
                raise PlotInputError(f"{path}: no rows of kind {sel!r}")
            xs = np.array([float(r["l"]) for r in picked])
            weights = np.array([float(r["value"]) for r in picked])
        ax.bar(xs + i * width, weights, width=width, label=path.rsplit("/", 1)[-1])
    ax.set_xlabel(spec.params.get("xlabel", "value"))
    ax.set_ylabel("fraction of sampled pairs")
    ax.legend(fontsize=7)


def _render_cdf(spec, loaded, ax):
    col = spec.value_col or "value"
    for path, rows in loaded:
        require_columns(rows, [col], path)
        kind_filter = spec.params.get("row_kind")
        if kind_filter:
            rows = [r for r in rows if r.get("kind") == kind_filter]
            if not rows:
                raise PlotInputError(f"{path}: no rows of kind {kind_filter!r}")
        vals = np.sort(np.array([float(r[col]) for r in rows]))
        vals, xlabel = _normalize(vals, spec)
        ys = np.arange(1, len(vals) + 1) / len(vals)
        ax.step(vals, ys, where="post", label=path.rsplit("/", 1)[-1])
    ax.set_xlabel(xlabel or col)
    ax.set_ylabel("cumulative fraction")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=7)


def _render_bar_group(spec, loaded, ax):
    group_col = spec.group_by or "topology"
    series_col = spec.params.get("series", "scheme")
    val_col = spec.value_col or "T"
    path, rows = loaded[0]
    require_columns(rows, [group_col, series_col, val_col], path)
    groups = sorted({r[group_col] for r in rows})
    series = sorted({r[series_col] for r in rows})
    width = 0.8 / len(series)
    for i, s in enumerate(series):
        vals = []
        for g in groups:
            match = [float(r[val_col]) for r in rows if r[group_col] == g and r[series_col] == s]
            vals.append(np.mean(match) if match else 0.0)
        xs = np.arange(len(groups)) + i * width
        ax.bar(xs, vals, width=width, label=s)
    ax.set_xticks(np.arange(len(groups)) + 0.4 - width / 2)
    ax.set_xticklabels(groups, fontsize=7)
    ax.set_ylabel(val_col)
    ax.legend(fontsize=7)


def _render_tail_panel(spec, loaded, ax):
    # fct_summary.csv style: topology,policy,bytes,n,fct_mean,fct_p50,fct_p99,...
    path, rows = loaded[0]
    group_col = spec.group_by or "policy"
    require_columns(rows, [group_col, "bytes", "fct_mean", "fct_p99"], path)
    groups = sorted({r[group_col] for r in rows})
    for g in groups:
        sub = sorted((int(r["bytes"]), float(r["fct_mean"]), float(r["fct_p99"]))
                     for r in rows if r[group_col] == g)
        sizes = np.array([s for s, _, _ in sub], dtype=float)
        mean = np.array([m for _, m, _ in sub])
        p99 = np.array([p for _, _, p in sub])
        if spec.normalization == "by_serialization_bound":
            spec.params["sizes"] = sizes
            mean, ylabel = _normalize(mean, spec)
            p99, _ = _normalize(p99, spec)
        else:
            ylabel = "completion time [s]"
        ax.plot(sizes, mean, marker="o", markersize=3, label=f"{g} mean")
        ax.plot(sizes, p99, marker="^", markersize=3, linestyle="--", label=f"{g} p99")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("flow size [bytes]")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=6)


def _render_fct_histogram(spec, loaded, ax):
    # records.csv style: flow_id,bytes,start_s,fct_s,...
    bucket = spec.params.get("bytes")
    for path, rows in loaded:
        require_columns(rows, ["bytes", "fct_s"], path)
        vals = np.array([float(r["fct_s"]) for r in rows
                         if bucket is None or int(r["bytes"]) == int(bucket)])
        if vals.size == 0:
            raise PlotInputError(f"{path}: no rows for bytes={bucket} (row count 0)")
        bins = spec.params.get("bins", 30)
        ax.hist(vals, bins=bins, alpha=0.6, label=path.rsplit("/", 1)[-1], density=True)
    ax.set_xlabel("flow completion time [s]")
    ax.set_ylabel("density")
    ax.legend(fontsize=7)


def _render_heat_panel(spec, loaded, ax):
    # layer sweep: rho,n,<value_col>
    path, rows = loaded[0]
    val_col = spec.value_col or "fct_p99"
    require_columns(rows, ["rho", "n", val_col], path)
    rhos = sorted({float(r["rho"]) for r in rows})
    ns = sorted({int(r["n"]) for r in rows})
    grid = np.full((len(ns), len(rhos)), np.nan)
    for r in rows:
        grid[ns.index(int(r["n"])), rhos.index(float(r["rho"]))] = float(r[val_col])
    im = ax.imshow(grid, aspect="auto", origin="lower", cmap="viridis")
    ax.set_xticks(range(len(rhos)))
    ax.set_xticklabels([f"{x:g}" for x in rhos], fontsize=7)
    ax.set_yticks(range(len(ns)))
    ax.set_yticklabels([str(n) for n in ns], fontsize=7)
    ax.set_xlabel("fraction of links per layer")
    ax.set_ylabel("number of layers")
    ax.figure.colorbar(im, ax=ax, label=val_col)


_RENDERERS = {
    "histogram": _render_histogram,
    "cdf": _render_cdf,
    "bar_group": _render_bar_group,
    "tail_panel": _render_tail_panel,
    "fct_histogram": _render_fct_histogram,
    "heat_panel": _render_heat_panel,
}
