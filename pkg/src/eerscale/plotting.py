"""SVG figures from the experiments' ``fig*.csv`` series (needs matplotlib)."""

import csv
import os
from collections import defaultdict


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the install
        raise RuntimeError("plotting needs matplotlib: pip install 'artifact[plot]'") from exc
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    return plt


def _box_by_group(rows, group_key, title, xlabel, out):
    plt = _pyplot()
    series = defaultdict(lambda: defaultdict(list))
    for r in rows:
        series[r["n_subjects"]][r[group_key]].append(float(r["eer_percent"]))
    groups = sorted({g for s in series.values() for g in s}, key=float)
    counts = sorted(series, key=int)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    width = 0.8 / max(len(counts), 1)
    for i, n in enumerate(counts):
        data = [series[n].get(g, []) for g in groups]
        pos = [j + (i - (len(counts) - 1) / 2) * width for j in range(len(groups))]
        bp = ax.boxplot(data, positions=pos, widths=width * 0.9, patch_artist=True, manage_ticks=False)
        for patch in bp["boxes"]:
            patch.set_facecolor(f"C{i}")
            patch.set_alpha(0.6)
        ax.plot([], [], color=f"C{i}", lw=6, alpha=0.6, label=f"N = {int(n):,}")
    ax.set_xticks(range(len(groups)))
    ax.set_xticklabels(groups)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("EER (%)")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, format="svg")
    plt.close(fig)
    return out


def plot_fig2(path, out):
    plt = _pyplot()
    rows = _read(path)
    by_n = defaultdict(list)
    for r in rows:
        if r["min_features"].isdigit():
            by_n[r["n_subjects"]].append((float(r["eer_target"]), int(r["min_features"])))
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for i, n in enumerate(sorted(by_n, key=int)):
        pts = sorted(by_n[n], reverse=True)
        ax.plot(range(len(pts)), [p[1] for p in pts], marker="o", color=f"C{i}", label=f"N = {int(n):,}")
        ax.set_xticks(range(len(pts)))
        ax.set_xticklabels([f"{p[0]:g}" for p in pts])
    ax.set_xlabel("EER target (%)")
    ax.set_ylabel("features required")
    ax.set_title("Features needed to keep every rep at or under the target")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, format="svg")
    plt.close(fig)
    return out


def plot_fig3(path, out):
    return _box_by_group(_read(path), "band", "EER by band, 10 features", "band", out)


def plot_fig4(path, out):
    return _box_by_group(_read(path), "n_features", "EER of band 9 by feature count", "features", out)


def plot_fig5(path, out):
    return _box_by_group(_read(path), "n_features", "EER by leading PCA components", "components", out)


PLOTTERS = {"fig2": plot_fig2, "fig3": plot_fig3, "fig4": plot_fig4, "fig5": plot_fig5}


def plot_directory(src, dst):
    """Render every known ``fig*.csv`` in ``src`` to ``dst/fig*.svg``."""
    os.makedirs(dst, exist_ok=True)
    written = []
    for name, fn in PLOTTERS.items():
        path = os.path.join(src, f"{name}.csv")
        if os.path.exists(path):
            written.append(fn(path, os.path.join(dst, f"{name}.svg")))
    return written
