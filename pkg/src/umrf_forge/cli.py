"""Command-line entry point: ``umrf-forge <subcommand> ...``.

Exit status is 0 on success, 1 on a domain error (invalid graph, provider
failure, unparsable command) and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from datetime import datetime
from pathlib import Path
from typing import Sequence

from umrf_forge import data_path
from umrf_forge.augment import (
    DEFAULT_MAGNITUDES,
    KINDS,
    SWEEP_COLUMNS,
    AugmentationOp,
    Lexicon,
    fragility_sweep,
    sweep_csv_rows,
)
from umrf_forge.engine import ground_graph, execute_graph, load_registry
from umrf_forge.grammar import CommandParseError, parse_command
from umrf_forge.prompt import (
    OrderingFlag,
    PromptSpec,
    build_prompt,
    extract_candidate,
    load_examples,
    load_pool,
    render_examples,
)
from umrf_forge.provider import (
    CACHE_ENV,
    DEFAULT_MODEL,
    CachingProvider,
    CompletionRequest,
    HttpProvider,
    MockProvider,
    ProviderConfig,
    ProviderError,
)
from umrf_forge.search import echo_fixture, enumerate_prompts, exhaustive_search, load_validation, write_report
from umrf_forge.similarity import correlation_summary, load_corpus, similarity_report
from umrf_forge.umrf import UmrfError, parse_graph, serialize_graph, validate_graph

logger = logging.getLogger("umrf_forge")


class DomainError(Exception):
    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


# --------------------------------------------------------------------------
# shared helpers


def _provider(args, fixture_items=None):
    if args.provider == "mock":
        if args.fixture:
            fixture = json.loads(Path(args.fixture).read_text(encoding="utf-8"))
        else:
            items = fixture_items if fixture_items is not None else load_validation(args.validation)
            fixture = echo_fixture(items)
        inner = MockProvider(fixture)
    else:
        cfg = ProviderConfig.from_env(base_url=args.base_url, requests_per_minute=args.rpm)
        inner = HttpProvider(cfg)
    cache_dir = args.cache_dir or os.environ.get(CACHE_ENV)
    return CachingProvider(inner, cache_dir) if cache_dir else inner


def _run_dir(args, name: str) -> Path:
    root = Path(args.output_dir)
    stamp = datetime.now().strftime("%Y%m%dT%H%M%S_%f")
    out = root / f"{name}-{stamp}"
    out.mkdir(parents=True, exist_ok=False)
    latest = root / "latest"
    try:
        if latest.is_symlink() or latest.exists():
            latest.unlink()
        latest.symlink_to(out.name)
    except OSError:
        (root / "LATEST").write_text(out.name + "\n")
    return out


def _emit(args, payload: dict, text: str | None = None) -> None:
    if args.json:
        print(json.dumps(payload, indent=2))
    elif text is not None:
        print(text)


def _parse_structure(label: str, pool) -> PromptSpec:
    wanted = [s.strip() for s in label.replace("+", ",").split(",") if s.strip()]
    lookup = {f"{ex.example_id}{flag.value}": (ex, flag) for ex, flag in pool}
    try:
        return PromptSpec(tuple(lookup[w] for w in wanted))
    except KeyError as exc:
        raise DomainError(f"structure element {exc.args[0]!r} not in pool {sorted(lookup)}") from None


def _umrf_from_command(text: str, args, provider) -> dict:
    examples = load_examples(args.examples_file)
    flag = OrderingFlag(args.flag)
    spec = PromptSpec(tuple((ex, flag) for ex in examples), parse_command(text), not args.no_cot)
    prompt = build_prompt(spec)
    result = provider.complete(CompletionRequest(prompt.text, model_id=args.model))
    candidate = extract_candidate(result.text)
    start = candidate.find("{")
    try:
        if start < 0:
            raise UmrfError("completion contains no JSON object")
        graph = parse_graph(candidate[start:], strict=False)
    except UmrfError as exc:
        raise DomainError(f"incomplete parse: {exc}", raw_completion=result.text) from None
    violations = validate_graph(graph)
    if violations:
        raise DomainError(
            "provider returned an invalid UMRF graph",
            raw_completion=result.text,
            violations=[str(v) for v in violations],
        )
    return {"ok": True, "command": text, "umrf": json.loads(serialize_graph(graph)), "text": serialize_graph(graph)}


# --------------------------------------------------------------------------
# subcommands


def cmd_parse(args) -> int:
    out = _umrf_from_command(args.command, args, _provider(args))
    _emit(args, {k: v for k, v in out.items() if k != "text"}, out["text"])
    return 0


def cmd_repl(args) -> int:
    provider = _provider(args)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            out = _umrf_from_command(line, args, provider)
            _emit(args, {k: v for k, v in out.items() if k != "text"}, out["text"])
        except (DomainError, UmrfError, CommandParseError, ProviderError, ValueError) as exc:
            payload = {"ok": False, "command": line, "error": str(exc), **getattr(exc, "details", {})}
            if args.json:
                print(json.dumps(payload))
            else:
                print(f"error: {exc}", file=sys.stderr)
        sys.stdout.flush()
    return 0


def _load_graph_file(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DomainError(str(exc)) from None
    return parse_graph(text)


def cmd_validate(args) -> int:
    graph = _load_graph_file(args.file)
    violations = validate_graph(graph)
    payload = {
        "ok": not violations,
        "violations": [
            {"code": v.code, "node": str(v.node) if v.node else None, "message": v.message} for v in violations
        ],
    }
    _emit(args, payload, "\n".join(str(v) for v in violations) if violations else "ok: no violations")
    return 1 if violations else 0


def cmd_exec(args) -> int:
    graph = _load_graph_file(args.file)
    violations = validate_graph(graph)
    if violations:
        raise DomainError("graph is invalid", violations=[str(v) for v in violations])
    plan = ground_graph(graph, load_registry(args.registry))
    if isinstance(plan, list):
        raise DomainError("graph cannot be grounded", violations=[str(v) for v in plan])
    trace = execute_graph(plan, max_steps=args.max_steps)
    if args.json:
        print(json.dumps({"ok": True, "truncated": trace.truncated, "events": [e.to_dict() for e in trace]}, indent=2))
    else:
        sys.stdout.write(trace.to_jsonl())
    return 0


def cmd_search(args) -> int:
    pool = load_pool(args.pool)
    items = load_validation(args.validation)
    provider = _provider(args, items)
    report = exhaustive_search(
        pool, args.k, items, provider, include_cot=not args.no_cot, max_workers=args.workers, model_id=args.model
    )
    out = _run_dir(args, "search")
    paths = write_report(report, out, args.k, len(items), args.top_n)
    lines = [f"{report.total_prompts} prompts x {len(items)} items -> {out}"]
    lines += [f"{rank:>3}. prompt {i:>3}  {s:<12} {avg:.3f}" for rank, (i, s, avg) in enumerate(report.top(args.top_n), 1)]
    _emit(
        args,
        {"ok": True, "output_dir": str(out), "files": {k: str(v) for k, v in paths.items()},
         "total_prompts": report.total_prompts, "n_records": len(report.records),
         "top": [{"prompt_index": i, "structure": s, "average_bleu": a} for i, s, a in report.top(args.top_n)]},
        "\n".join(lines),
    )
    return 0


def cmd_perturb(args) -> int:
    pool = load_pool(args.pool)
    items = load_validation(args.validation)
    provider = _provider(args, items)
    base = _parse_structure(args.structure, pool)
    grid = [AugmentationOp(k, m) for k in args.kinds for m in args.magnitudes]
    lexicon = Lexicon.load(args.lexicon_file)
    records = fragility_sweep(
        base, grid, args.trials, items, provider, base_seed=args.seed,
        policy_length=args.policy_length, lexicon=lexicon, model_id=args.model,
    )
    out = _run_dir(args, "perturb")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    w.writerows(sweep_csv_rows(records))
    (out / "sweep.csv").write_text(buf.getvalue(), encoding="utf-8")
    _emit(
        args,
        {"ok": True, "output_dir": str(out), "n_records": len(records), "file": str(out / "sweep.csv")},
        f"{len(records)} sweep records -> {out / 'sweep.csv'}",
    )
    return 0


def cmd_similarity(args) -> int:
    pool = load_pool(args.pool)
    specs = enumerate_prompts(pool, args.k)
    if args.scores:
        summary = json.loads(Path(args.scores).read_text(encoding="utf-8"))
        scores = [p["average_bleu"] for p in summary["prompts"]]
        if len(scores) != len(specs):
            raise DomainError(f"scores file has {len(scores)} prompts, pool/k give {len(specs)}")
    else:
        items = load_validation(args.validation)
        report = exhaustive_search(pool, args.k, items, _provider(args, items), max_workers=args.workers, model_id=args.model)
        scores = list(report.averages)
    prompts = [(render_examples(s), score) for s, score in zip(specs, scores)]
    records = similarity_report(prompts, load_corpus(args.corpus_file))
    summary = correlation_summary(records)
    out = _run_dir(args, "similarity")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("prompt_index", "max_sim", "mean_sim", "score"))
    for r in records:
        w.writerow((r.prompt_index, repr(r.max_similarity), repr(r.mean_similarity), repr(r.score)))
    (out / "similarity.csv").write_text(buf.getvalue(), encoding="utf-8")
    (out / "similarity_summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    _emit(args, {"ok": True, "output_dir": str(out), **summary},
          f"{len(records)} prompts; pearson r (max) = {summary['pearson_r_max']}, (mean) = {summary['pearson_r_mean']}")
    return 0


# --------------------------------------------------------------------------
# argument parsing


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--provider", choices=("http", "mock"), default="http")
    p.add_argument("--fixture", help="mock fixture JSON: query suffix -> completion")
    p.add_argument("--cache-dir", help=f"completion cache directory (or ${CACHE_ENV})")
    p.add_argument("--base-url", default="https://api.openai.com/v1")
    p.add_argument("--model", default=DEFAULT_MODEL)
    p.add_argument("--rpm", type=float, default=20.0, help="requests per minute")
    p.add_argument("--examples-file", default=str(data_path("demo_examples.jsonl")))
    p.add_argument("--validation", "--validation-file", dest="validation", default=str(data_path("validation.jsonl")))
    p.add_argument("--lexicon-file", default=str(data_path("lexicon.tsv")))
    p.add_argument("--corpus-file", default=str(data_path("corpus.txt")))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", default="runs")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="umrf-forge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("parse", parents=[common], help="command text -> UMRF via the provider")
    p.add_argument("command")
    p.add_argument("--flag", choices=("V", "L"), default="V")
    p.add_argument("--no-cot", action="store_true")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("repl", parents=[common], help="parse one command per stdin line")
    p.add_argument("--flag", choices=("V", "L"), default="V")
    p.add_argument("--no-cot", action="store_true")
    p.set_defaults(func=cmd_repl)

    p = sub.add_parser("validate", parents=[common], help="list violations of a UMRF file")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("exec", parents=[common], help="run a UMRF file in the simulator")
    p.add_argument("file")
    p.add_argument("--registry", help="action-spec JSON file")
    p.add_argument("--max-steps", type=int, default=1000)
    p.set_defaults(func=cmd_exec)

    pool_default = str(data_path("example_types.jsonl"))
    p = sub.add_parser("search", parents=[common], help="exhaustive k-permutation prompt search")
    p.add_argument("--pool", default=pool_default)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--no-cot", action="store_true")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("perturb", parents=[common], help="EDA fragility sweep of one prompt")
    p.add_argument("--pool", default=pool_default)
    p.add_argument("--structure", default="5L+4V", help="prompt structure, e.g. 5L+4V")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--kinds", nargs="+", choices=KINDS, default=list(KINDS))
    p.add_argument("--magnitudes", nargs="+", type=float, default=list(DEFAULT_MAGNITUDES))
    p.add_argument("--policy-length", type=int, default=1)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("similarity", parents=[common], help="prompt/corpus similarity vs. score")
    p.add_argument("--pool", default=pool_default)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--scores", help="summary.json from a previous search")
    p.add_argument("--workers", type=int, default=2)
    p.set_defaults(func=cmd_similarity)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DomainError, UmrfError, CommandParseError, ProviderError, ValueError, OSError) as exc:
        details = getattr(exc, "details", {})
        if args.json:
            print(json.dumps({"ok": False, "error": str(exc), **details}, indent=2))
        else:
            print(f"error: {exc}", file=sys.stderr)
            for v in details.get("violations", []):
                print(f"  {v}", file=sys.stderr)
            if "raw_completion" in details:
                print("raw completion:\n" + details["raw_completion"], file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
