"""Matplotlib figures written next to the CSV outputs (Agg backend, files only)."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

NS_PER_S = 1e9


def read_throughput(out_dir: str) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    series: dict[int, list[tuple[int, float]]] = {}
    with open(os.path.join(out_dir, "throughput.csv")) as fh:
        for row in csv.DictReader(fh):
            series.setdefault(int(row["flow"]), []).append((int(row["t_start"]), float(row["bps"])))
    return {f: (np.array([r[0] for r in rows]), np.array([r[1] for r in rows]))
            for f, rows in sorted(series.items())}


def read_delays(out_dir: str) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Per-flow (created, delay) arrays in nanoseconds."""
    data: dict[int, tuple[list[int], list[int]]] = {}
    with open(os.path.join(out_dir, "delays.csv")) as fh:
        for row in csv.DictReader(fh):
            c, d = data.setdefault(int(row["flow"]), ([], []))
            created = int(row["created_ns"])
            c.append(created)
            d.append(int(row["delivered_ns"]) - created)
    return {f: (np.array(c), np.array(d)) for f, (c, d) in sorted(data.items())}


def read_cdf(out_dir: str) -> tuple[np.ndarray, np.ndarray]:
    xs, ps = [], []
    with open(os.path.join(out_dir, "cdf.csv")) as fh:
        for row in csv.DictReader(fh):
            xs.append(int(row["delay_ns"]))
            ps.append(float(row["fraction"]))
    return np.array(xs), np.array(ps)


def _save(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def _thin(x: np.ndarray, y: np.ndarray, limit: int = 5000):
    if len(x) <= limit:
        return x, y
    step = int(np.ceil(len(x) / limit))
    return x[::step], y[::step]


def plot_run(out_dir: str) -> list[str]:
    """throughput.png, delay.png and cdf.png for one run directory."""
    paths = []
    tp = read_throughput(out_dir)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for f, (t, b) in tp.items():
        ax.step(t / NS_PER_S, b / 1e9, where="post", label=f"flow {f}")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("throughput (Gb/s)")
    ax.grid(alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    paths.append(_save(fig, os.path.join(out_dir, "throughput.png")))

    fig, ax = plt.subplots(figsize=(7, 3.5))
    for f, (c, d) in read_delays(out_dir).items():
        x, y = _thin(c / NS_PER_S, d / 1e6)
        ax.plot(x, y, ".", ms=1.5, label=f"flow {f}")
    ax.set_xlabel("creation time (s)")
    ax.set_ylabel("delay (ms)")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    paths.append(_save(fig, os.path.join(out_dir, "delay.png")))

    x, p = read_cdf(out_dir)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if x.size:
        ax.step(x / 1e6, p, where="post")
        ax.set_xscale("log")
    ax.set_xlabel("delay (ms)")
    ax.set_ylabel("CDF")
    ax.grid(alpha=0.3)
    paths.append(_save(fig, os.path.join(out_dir, "cdf.png")))
    return paths


def plot_compare(dir_a: str, dir_b: str, out_dir: str, labels=("A", "B")) -> list[str]:
    """Overlay throughput and delay CDF of two runs."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for d, lab, style in ((dir_a, labels[0], "-"), (dir_b, labels[1], "--")):
        for f, (t, b) in read_throughput(d).items():
            ax.step(t / NS_PER_S, b / 1e9, style, where="post", label=f"{lab} flow {f}")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("throughput (Gb/s)")
    ax.grid(alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    paths.append(_save(fig, os.path.join(out_dir, "compare_throughput.png")))

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for d, lab in ((dir_a, labels[0]), (dir_b, labels[1])):
        x, p = read_cdf(d)
        if x.size:
            ax.step(x / 1e6, p, where="post", label=lab)
    ax.set_xscale("log")
    ax.set_xlabel("delay (ms)")
    ax.set_ylabel("CDF")
    ax.grid(alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    paths.append(_save(fig, os.path.join(out_dir, "compare_cdf.png")))
    return paths
