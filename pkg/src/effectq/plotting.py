"""SVG rendering for the experiment tables.

Plots are rebuilt from the written CSV files, not from in-memory state, so
a figure can always be regenerated from its table alone. SVG output is kept
byte-stable: fixed hash salt, no embedded creation date.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "effectq"

import matplotlib.pyplot as plt

_SAVE_KWARGS = {"format": "svg", "metadata": {"Date": None}}

_POLICY_COLORS = {
    "effect_aware": "tab:blue",
    "qaoi": "tab:purple",
    "voi": "tab:cyan",
    "periodic": "tab:orange",
    "binomial": "tab:green",
    "markovian": "tab:red",
}


def _read_rows(csv_path: str | Path) -> list[dict[str, str]]:
    with open(csv_path, newline="") as fh:
        return list(csv.DictReader(fh))


def _save(fig, csv_path: str | Path) -> Path:
    out = Path(csv_path).with_suffix(".svg")
    fig.savefig(out, **_SAVE_KWARGS)
    plt.close(fig)
    return out


def plot_snapshot(csv_path: str | Path) -> Path:
    rows = _read_rows(csv_path)
    series: dict[str, tuple[list[int], list[float], list[int]]] = defaultdict(
        lambda: ([], [], [])
    )
    for r in rows:
        slots, ngoes, pulls = series[r["policy"]]
        slots.append(int(r["slot"]))
        ngoes.append(float(r["ngoe"]))
        pulls.append(int(r["alpha"]))
    fig, ax = plt.subplots(figsize=(8, 3.2))
    for policy, (slots, ngoes, pulls) in series.items():
        color = _POLICY_COLORS.get(policy)
        ax.plot(slots, ngoes, label=policy, color=color, drawstyle="steps-post")
        pulled = [(s, n) for s, n, a in zip(slots, ngoes, pulls) if a == 1]
        if pulled:
            ax.scatter(*zip(*pulled), s=12, color=color, zorder=3)
    ax.set_xlabel("slot")
    ax.set_ylabel("NGoE")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return _save(fig, csv_path)


def plot_cdf(csv_path: str | Path) -> Path:
    rows = _read_rows(csv_path)
    series: dict[str, tuple[list[float], list[float]]] = defaultdict(lambda: ([], []))
    for r in rows:
        xs, ys = series[r["policy"]]
        xs.append(float(r["avg_ngoe"]))
        ys.append(float(r["cdf"]))
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for policy, (xs, ys) in series.items():
        ax.step(xs, ys, where="post", label=policy, color=_POLICY_COLORS.get(policy))
    ax.set_xlabel("average NGoE per replication")
    ax.set_ylabel("empirical CDF")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    return _save(fig, csv_path)


def plot_rate_sweep(csv_path: str | Path) -> Path:
    rows = [r for r in _read_rows(csv_path) if r["status"] == "ok"]
    fig, (ax_ngoe, ax_rate) = plt.subplots(1, 2, figsize=(9, 3.6))
    policies = sorted({r["policy"] for r in rows})
    for policy in policies:
        mine = [r for r in rows if r["policy"] == policy]
        mine.sort(key=lambda r: float(r["rate"]))
        rates = [float(r["rate"]) for r in mine]
        color = _POLICY_COLORS.get(policy)
        ax_ngoe.errorbar(
            rates,
            [float(r["mean_ngoe"]) for r in mine],
            yerr=[float(r["se_ngoe"]) for r in mine],
            label=policy,
            color=color,
            marker="o",
            markersize=3,
            capsize=2,
        )
        analytical = [(float(r["rate"]), float(r["analytical_ngoe"]))
                      for r in mine if r["analytical_ngoe"]]
        if analytical:
            ax_ngoe.plot(*zip(*analytical), linestyle="--", alpha=0.6, color=color)
        ax_rate.plot(
            rates,
            [float(r["mean_query_rate"]) for r in mine],
            label=policy,
            color=color,
            marker="o",
            markersize=3,
        )
    ax_ngoe.set_xlabel("target query rate")
    ax_ngoe.set_ylabel("mean NGoE (dashed: stationary analysis)")
    ax_rate.set_xlabel("target query rate")
    ax_rate.set_ylabel("achieved query rate")
    ax_rate.plot([0, 1], [0, 1], color="gray", linewidth=0.6, linestyle=":")
    ax_ngoe.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, csv_path)


def plot_convergence(csv_path: str | Path) -> Path:
    rows = _read_rows(csv_path)
    columns = [name for name in rows[0].keys() if name != "iteration"]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for name in columns:
        pts = [(int(r["iteration"]), float(r[name])) for r in rows if r[name]]
        ax.plot(*zip(*pts), label=name.replace("gain_", "c0="))
    ax.set_xlabel("inner iteration")
    ax.set_ylabel("gain estimate")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, csv_path)


def plot_thresholds(csv_path: str | Path) -> Path:
    rows = _read_rows(csv_path)
    level_names = [name for name in rows[0].keys() if name != "delta"]
    grid = [[1 if r[name] == "Pull" else 0 for name in level_names] for r in rows]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.imshow(grid, cmap="Blues", aspect="auto", vmin=0, vmax=1.4, origin="upper")
    for i, row in enumerate(grid):
        for j, val in enumerate(row):
            ax.text(j, i, "P" if val else "·", ha="center", va="center", fontsize=8)
    ax.set_xticks(range(len(level_names)))
    ax.set_xticklabels([n.lstrip("v") for n in level_names], fontsize=7)
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels([r["delta"] for r in rows], fontsize=7)
    ax.set_xlabel("importance level")
    ax.set_ylabel("age")
    fig.tight_layout()
    return _save(fig, csv_path)
