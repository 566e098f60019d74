"""Learning-curve statistics computed from an episode log alone."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

Z90 = 1.645


@dataclass
class WindowRow:
    episode: int          # last episode in the window
    n: int
    reward_mean: float
    reward_lo: float
    reward_hi: float
    steps_mean: float
    steps_lo: float
    steps_hi: float


def _bounds(x: np.ndarray) -> tuple[float, float, float]:
    m = float(np.mean(x))
    half = Z90 * float(np.std(x, ddof=1)) / math.sqrt(len(x)) if len(x) > 1 else 0.0
    return m, m - half, m + half


def moving_window(episodes, rewards, steps, window: int = 20) -> list[WindowRow]:
    """Trailing-window mean with 90% bounds (mean ± 1.645·s/√n).

    With fewer episodes than ``window`` the whole run is one row.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    ep = np.asarray(episodes, int)
    r = np.asarray(rewards, float)
    k = np.asarray(steps, float)
    if not len(r):
        return []
    w = min(window, len(r))
    rows = []
    for end in range(w, len(r) + 1):
        rs, ks = r[end - w:end], k[end - w:end]
        rows.append(WindowRow(int(ep[end - 1]), w, *_bounds(rs), *_bounds(ks)))
    return rows


def trend(episodes, values) -> float:
    """Spearman rank correlation of ``values`` against episode index (nan if undefined)."""
    if len(values) < 3 or np.ptp(np.asarray(values, float)) == 0:
        return float("nan")
    return float(stats.spearmanr(episodes, values).statistic)


def read_episodes(path) -> dict:
    """Episode CSV grouped by stage, in file order."""
    by_stage: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            by_stage.setdefault(row["stage"], []).append(row)
    return by_stage


def summarize(path, window: int = 20) -> dict:
    out = {}
    for stage, rows in read_episodes(path).items():
        ep = [int(r["episode"]) for r in rows]
        rw = [float(r["reward"]) for r in rows]
        ks = [int(r["steps"]) for r in rows]
        win = moving_window(ep, rw, ks, window)
        last = win[-1] if win else None
        out[stage] = {
            "episodes": len(rows),
            "window": min(window, len(rows)),
            "final_reward_mean": last.reward_mean if last else float("nan"),
            "final_steps_mean": last.steps_mean if last else float("nan"),
            "success_rate": float(np.mean([r["terminal_kind"] == "success" for r in rows])),
            "reward_spearman": trend(ep, rw),
            "rows": win,
        }
    return out


def write_report(run_dir, window: int = 20, plot: bool = True) -> dict:
    """Write ``curve_<stage>.csv`` files and ``report.json`` next to ``episodes.csv``."""
    run_dir = Path(run_dir)
    summary = summarize(run_dir / "episodes.csv", window)
    cols = list(WindowRow.__dataclass_fields__)
    for stage, s in summary.items():
        with open(run_dir / f"curve_{stage}.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(cols)
            for row in s["rows"]:
                wr.writerow([getattr(row, c) for c in cols])
    slim = {st: {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in s.items() if k != "rows"}
            for st, s in summary.items()}
    (run_dir / "report.json").write_text(json.dumps(slim, indent=2))
    if plot:
        _plot(run_dir, summary)
    return slim


def _plot(run_dir: Path, summary: dict) -> None:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for stage, s in summary.items():
        rows = s["rows"]
        x = [r.episode for r in rows]
        for ax, key in zip(axes, ("reward", "steps")):
            m = [getattr(r, f"{key}_mean") for r in rows]
            ax.plot(x, m, label=stage)
            ax.fill_between(x, [getattr(r, f"{key}_lo") for r in rows], [getattr(r, f"{key}_hi") for r in rows],
                            alpha=0.25)
            ax.set_ylabel(key)
    axes[0].legend()
    axes[1].set_xlabel("episode")
    fig.tight_layout()
    fig.savefig(run_dir / "learning_curves.png", dpi=100)
    plt.close(fig)
