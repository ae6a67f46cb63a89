"""Run the exhaustive prompt search and write records.csv / summary.json.

    python scripts/run_search.py --provider mock --out runs/search-mock
    UMRF_FORGE_API_KEY=... python scripts/run_search.py --provider http --cache-dir cache/
"""
from __future__ import annotations

import argparse
import logging
from dataclasses import dataclass, fields
from pathlib import Path

from umrf_forge import data_path
from umrf_forge.prompt import load_pool
from umrf_forge.provider import CachingProvider, HttpProvider, MockProvider, ProviderConfig
from umrf_forge.search import echo_fixture, exhaustive_search, load_validation, write_report


@dataclass
class SearchConfig:
    pool: str = str(data_path("example_types.jsonl"))
    validation: str = str(data_path("validation.jsonl"))
    k: int = 2
    provider: str = "mock"
    base_url: str = "https://api.openai.com/v1"
    rpm: float = 20.0
    workers: int = 2
    cache_dir: str | None = None
    top_n: int = 10
    no_cot: bool = False
    out: str = "runs/search"


def parse_args() -> SearchConfig:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    for f in fields(SearchConfig):
        if f.type == "bool":
            p.add_argument(f"--{f.name.replace('_', '-')}", action="store_true")
        else:
            p.add_argument(f"--{f.name.replace('_', '-')}", default=f.default,
                           type=int if f.type == "int" else float if f.type == "float" else str)
    return SearchConfig(**vars(p.parse_args()))


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    cfg = parse_args()
    pool = load_pool(cfg.pool)
    items = load_validation(cfg.validation)
    if cfg.provider == "mock":
        provider = MockProvider(echo_fixture(items))
    else:
        provider = HttpProvider(ProviderConfig.from_env(base_url=cfg.base_url, requests_per_minute=cfg.rpm))
    if cfg.cache_dir:
        provider = CachingProvider(provider, cfg.cache_dir)
    report = exhaustive_search(pool, cfg.k, items, provider, include_cot=not cfg.no_cot, max_workers=cfg.workers)
    paths = write_report(report, Path(cfg.out), cfg.k, len(items), cfg.top_n)
    print(f"{report.total_prompts} prompts, {len(report.records)} records in {report.elapsed:.1f}s")
    for rank, (i, label, avg) in enumerate(report.top(cfg.top_n), 1):
        print(f"{rank:>3}. prompt {i:>3} {label:<10} {avg:.3f}")
    print("wrote", *paths.values())


if __name__ == "__main__":
    main()
