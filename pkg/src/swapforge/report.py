"""CSV reports and the matplotlib figures rendered next to them."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .engine import RunResult  # noqa: E402
from .metrics import STRATEGIES, BatchReport  # noqa: E402

RUN_FIELDS = ("party", "conforming", "safety_ok", "liveness_ok", "collateral", "completion_round", "paid", "received")


def figure_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".png")


def write_run_report(result: RunResult, path) -> tuple[Path, Path]:
    """One row per party, plus a figure of collateral and settlements."""
    path = Path(path)
    rep = result.report
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUN_FIELDS)
        for x in sorted(rep.verdicts):
            v = rep.verdicts[x]
            w.writerow(
                [
                    x,
                    v.conforming,
                    v.safety_ok,
                    v.liveness_ok,
                    v.collateral,
                    "" if v.completion_round is None else v.completion_round,
                    " ".join(v.paid),
                    " ".join(v.received),
                ]
            )

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    parties = sorted(rep.verdicts)
    ax1.bar(parties, [rep.verdicts[x].collateral for x in parties], color="tab:blue")
    ax1.set_title("Maximum collateral")
    ax1.set_ylabel("units escrowed at once")
    events = result.trace.events if result.world is not None else []
    horizon = max([e["round"] for e in events], default=0)
    rounds = list(range(horizon + 1))
    for kind, colour in (("trigger", "tab:green"), ("refund", "tab:red"), ("unlock", "tab:orange")):
        counts = [sum(1 for e in events if e["type"] == kind and e["round"] == r) for r in rounds]
        ax2.plot(rounds, counts, marker="o", label=kind, color=colour)
    ax2.set_title("Ledger events per round")
    ax2.set_xlabel("round")
    ax2.legend()
    fig.suptitle(f"{result.setup.name} ({result.setup.protocol})")
    fig.tight_layout()
    png = figure_path(path)
    fig.savefig(png, dpi=100)
    plt.close(fig)
    return path, png


def write_batch_report(batch: BatchReport, path) -> tuple[Path, Path]:
    """One row per (strategy, run); the figure compares completion times
    against the closed forms and shows worst-case collateral."""
    path = Path(path)
    parties = sorted({x for r in batch.rows for x in r.collateral})
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["strategy", "run", "seed", "completion_round", "time", "completed", "failed_schemes", "attempts"]
            + [f"collateral_{x}" for x in parties]
        )
        for r in batch.rows:
            w.writerow(
                [
                    r.strategy,
                    r.run,
                    r.seed,
                    "" if r.completion_round is None else r.completion_round,
                    "" if r.time is None else r.time,
                    " ".join(map(str, r.completed)),
                    " ".join(map(str, r.failed_schemes)),
                    r.attempts,
                ]
                + [r.collateral.get(x, 0) for x in parties]
            )

    summary = batch.summary()
    strategies = [s for s in STRATEGIES if s in summary]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    for s in strategies:
        times = [r.time for r in batch.of(s) if r.time is not None]
        if times:
            ax1.hist(times, bins=range(0, int(max(times)) + 2), alpha=0.5, label=f"{s} (mean {summary[s]['mean_time']:.2f})")
    closed = batch.closed.get("sequential")
    if closed is not None:
        ax1.axvline(closed.sequential, color="black", linestyle="--", label=f"sequential closed form {closed.sequential:g}")
    ax1.set_xlabel("completion time (rounds)")
    ax1.set_ylabel("runs")
    ax1.set_title(f"Completion time, q={batch.q:g}")
    ax1.legend(fontsize=8)
    width = 0.8 / max(len(strategies), 1)
    for i, s in enumerate(strategies):
        xs = [j + i * width for j in range(len(parties))]
        ax2.bar(xs, [summary[s]["max_collateral"].get(x, 0) for x in parties], width=width, label=s)
    ax2.set_xticks([j + width * (len(strategies) - 1) / 2 for j in range(len(parties))])
    ax2.set_xticklabels(parties)
    ax2.set_title("Worst-case collateral")
    ax2.legend(fontsize=8)
    fig.suptitle(f"{batch.scenario}: {batch.runs} runs from seed {batch.seed}")
    fig.tight_layout()
    png = figure_path(path)
    fig.savefig(png, dpi=100)
    plt.close(fig)
    return path, png
