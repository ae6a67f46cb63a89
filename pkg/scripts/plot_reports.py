"""Charts from report files (needs the ``plots`` extra).

    python scripts/plot_reports.py --search runs/search --sweep runs/sweep --similarity runs/latest

Produces top_prompts.png (best average BLEU by structure), sweep.png (score
by augmentation kind and magnitude) and similarity.png (max similarity
against score).
"""
from __future__ import annotations

import argparse
import csv
import json
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_search(summary_path: Path, out: Path) -> None:
    summary = json.loads(summary_path.read_text())
    top = summary["top"]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar([f"{t['prompt_index']}\n{t['structure']}" for t in top], [t["average_bleu"] for t in top])
    ax.set_ylabel("average BLEU")
    ax.set_ylim(0, 1)
    ax.set_title(f"top {len(top)} of {summary['total_prompts']} prompts")
    fig.tight_layout()
    fig.savefig(out / "top_prompts.png", dpi=120)


def plot_sweep(csv_path: Path, out: Path) -> None:
    series = defaultdict(lambda: defaultdict(list))
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            series[row["kind"]][row["magnitude"]].append(float(row["avg_bleu"]))
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for kind, by_mag in sorted(series.items()):
        mags = sorted(by_mag, key=lambda m: [float(x) for x in m.split("+")])
        ax.errorbar(
            range(len(mags)),
            [sum(v) / len(v) for v in (by_mag[m] for m in mags)],
            yerr=[(max(v) - min(v)) / 2 for v in (by_mag[m] for m in mags)],
            label=kind, marker="o", capsize=3,
        )
        ax.set_xticks(range(len(mags)), mags)
    ax.set_xlabel("magnitude")
    ax.set_ylabel("average BLEU")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out / "sweep.png", dpi=120)


def plot_similarity(csv_path: Path, out: Path) -> None:
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.scatter([float(r["max_sim"]) for r in rows], [float(r["score"]) for r in rows], s=12)
    ax.set_xlabel("max cosine similarity to corpus")
    ax.set_ylabel("average BLEU")
    fig.tight_layout()
    fig.savefig(out / "similarity.png", dpi=120)


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--search", type=Path, help="directory holding summary.json")
    p.add_argument("--sweep", type=Path, help="directory holding sweep.csv")
    p.add_argument("--similarity", type=Path, help="directory holding similarity.csv")
    p.add_argument("--out", type=Path, default=Path("runs/plots"))
    args = p.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    if args.search:
        plot_search(args.search / "summary.json", args.out)
    if args.sweep:
        plot_sweep(args.sweep / "sweep.csv", args.out)
    if args.similarity:
        plot_similarity(args.similarity / "similarity.csv", args.out)
    print("plots in", args.out)


if __name__ == "__main__":
    main()
