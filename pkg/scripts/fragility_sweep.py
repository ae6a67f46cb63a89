"""EDA fragility sweep over one prompt structure; writes sweep.csv.

    python scripts/fragility_sweep.py --structure 5L+4V --trials 3 --out runs/sweep
    python scripts/fragility_sweep.py --policy-length 2 --magnitudes 0.05 0.1
"""
from __future__ import annotations

import argparse
import csv
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from umrf_forge import data_path
from umrf_forge.augment import DEFAULT_MAGNITUDES, KINDS, SWEEP_COLUMNS, AugmentationOp, Lexicon, fragility_sweep, sweep_csv_rows
from umrf_forge.prompt import PromptSpec, load_pool
from umrf_forge.provider import CachingProvider, HttpProvider, MockProvider, ProviderConfig
from umrf_forge.search import echo_fixture, load_validation


@dataclass
class SweepConfig:
    pool: str = str(data_path("example_types.jsonl"))
    validation: str = str(data_path("validation.jsonl"))
    lexicon: str = str(data_path("lexicon.tsv"))
    structure: str = "5L+4V"
    kinds: list[str] = field(default_factory=lambda: list(KINDS))
    magnitudes: list[float] = field(default_factory=lambda: list(DEFAULT_MAGNITUDES))
    trials: int = 3
    seed: int = 0
    policy_length: int = 1
    provider: str = "mock"
    cache_dir: str | None = None
    out: str = "runs/sweep"


def parse_args() -> SweepConfig:
    d = SweepConfig()
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--pool", default=d.pool)
    p.add_argument("--validation", default=d.validation)
    p.add_argument("--lexicon", default=d.lexicon)
    p.add_argument("--structure", default=d.structure)
    p.add_argument("--kinds", nargs="+", choices=KINDS, default=d.kinds)
    p.add_argument("--magnitudes", nargs="+", type=float, default=d.magnitudes)
    p.add_argument("--trials", type=int, default=d.trials)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--policy-length", type=int, default=d.policy_length)
    p.add_argument("--provider", choices=("mock", "http"), default=d.provider)
    p.add_argument("--cache-dir", default=d.cache_dir)
    p.add_argument("--out", default=d.out)
    return SweepConfig(**vars(p.parse_args()))


def main() -> None:
    cfg = parse_args()
    pool = load_pool(cfg.pool)
    items = load_validation(cfg.validation)
    lookup = {f"{ex.example_id}{flag.value}": (ex, flag) for ex, flag in pool}
    base = PromptSpec(tuple(lookup[s] for s in cfg.structure.split("+")))
    provider = MockProvider(echo_fixture(items)) if cfg.provider == "mock" else HttpProvider(ProviderConfig.from_env())
    if cfg.cache_dir:
        provider = CachingProvider(provider, cfg.cache_dir)
    grid = [AugmentationOp(k, m) for k in cfg.kinds for m in cfg.magnitudes]
    records = fragility_sweep(base, grid, cfg.trials, items, provider, base_seed=cfg.seed,
                              policy_length=cfg.policy_length, lexicon=Lexicon.load(cfg.lexicon))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        w.writerows(sweep_csv_rows(records))

    groups = defaultdict(list)
    for r in records:
        groups[(r.policy.kind, r.policy.magnitude)].append(r.average_bleu)
    for (kind, mag), scores in sorted(groups.items()):
        spread = statistics.pstdev(scores) if len(scores) > 1 else 0.0
        print(f"{kind:<45} {mag:<12} mean {statistics.fmean(scores):.3f}  sd {spread:.3f}")
    print(f"{len(records)} records -> {out / 'sweep.csv'}")


if __name__ == "__main__":
    main()
