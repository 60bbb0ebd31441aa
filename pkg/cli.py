#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
命令行接口 - 重构引擎与评估工具的统一入口

设计理念 (CleanRL哲学):
- 单文件自包含: 所有子命令在一个文件中定义
- 透明的处理流程: 参数 -> 配置 -> 调用模块函数 -> stdout
- 最小化抽象: argparse子命令, 每个子命令一个函数
- 便于调试: stdout只输出机器可读结果, 日志走stderr

Exit codes: 0 success, 1 domain failure (invalid argument, failed run, or an
exhausted run under --strict), 2 usage error.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from loguru import logger

from config import CRITERIA, Config, ConfigError, get_err_message
from dataset import (
    batch_reconstruct,
    compute_stats,
    read_corpus,
    split,
    write_corpus,
)
from evaluation import (
    EvaluationError,
    PairwiseJudge,
    TopsisRow,
    fit_bradley_terry,
    formalize_for_validity,
    judge_items,
    read_topsis_rows,
    run_league,
    run_tournament,
    topsis,
    validity_rate,
    winning_rate,
    winning_rates_by,
    write_match_log,
    AllTiesError,
)
from fol import FormulaError, parse_formula
from llm_client import BackendError, create_backend
from logger_config import setup_logger
from pipeline import GAAREngine, RunStatus
from reconstruction import ArgumentInput
from report_generator import (
    corpus_stats_markdown,
    pairwise_markdown,
    ratings_markdown,
    tournament_json,
    tournament_markdown,
)
from solver import SolverError, check_validity, minimal_premise_sets
from storage_manager import StorageManager


EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """参数组合无效"""


# ============================================================================
# 问题文件
# ============================================================================

def parse_problem(text: str):
    """
    解析问题文件

    One formula per line, optionally prefixed "Pn:"; blank lines and "#"
    comments are skipped; the conclusion line is prefixed "CONCLUSION:".

    Returns:
        (labeled premises, conclusion formula)
    """
    premises, conclusion = [], None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if conclusion is not None:
            raise ValueError(f"line {lineno}: formulas after the CONCLUSION line")
        head, sep, rest = line.partition(":")
        head = head.strip()
        if sep and head.upper() == "CONCLUSION":
            conclusion = _parse_line(rest, lineno)
        elif sep and head[:1] == "P" and head[1:].isdigit():
            premises.append((head, _parse_line(rest, lineno)))
        else:
            premises.append((f"P{len(premises) + 1}", _parse_line(line, lineno)))
    if conclusion is None:
        raise ValueError("problem file has no CONCLUSION line")
    labels = [l for l, _ in premises]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate premise labels: {labels}")
    return premises, conclusion


def _parse_line(text: str, lineno: int):
    try:
        return parse_formula(text.strip())
    except FormulaError as e:
        raise ValueError(f"line {lineno}: {e}") from e


def _read_problem(path: str):
    return parse_problem(Path(path).read_text(encoding="utf-8"))


# ============================================================================
# 配置
# ============================================================================

def build_config(args: argparse.Namespace) -> Config:
    """命令行参数覆盖dataclass默认值"""
    config = Config(seed=args.seed, debug=args.debug)
    config.storage.base_dir = Path(args.output_dir)
    config.llm.model = args.model
    config.llm.credential_env = args.credential_env
    if args.base_url:
        config.llm.base_url = args.base_url

    pipeline = config.pipeline
    pipeline.scheme_theory = args.scheme
    pipeline.max_iterations = args.max_iter
    pipeline.fallacy_revision_threshold = args.fallacy_n
    pipeline.fallacy_path = not args.no_fallacy_path
    pipeline.fine_grained_faithfulness = not args.coarse_faithfulness
    pipeline.criteria = tuple(c for c in CRITERIA if c not in (args.drop_criterion or []))
    pipeline.scheme_instruction = not args.no_scheme_instruction
    pipeline.pruning = not args.no_pruning
    if args.validity_only:
        pipeline.criteria = ()
    config.validate()
    if args.debug:
        config.print_config()
    return config


def _backend(args: argparse.Namespace, config: Config):
    if args.backend == "replay" and not args.cassette:
        raise UsageError("--backend replay requires --cassette")
    if args.backend == "scripted" and not args.script:
        raise UsageError("--backend scripted requires --script")
    return create_backend(args.backend, config.llm, args.cassette, args.script)


# ============================================================================
# 子命令
# ============================================================================

def cmd_validate(args: argparse.Namespace) -> int:
    premises, conclusion = _read_problem(args.problem)
    verdict = check_validity(premises, conclusion, args.fresh_constant)
    if not verdict.valid:
        print("invalid")
        print(json.dumps(verdict.countermodel or {}, ensure_ascii=False, sort_keys=True))
        return EXIT_DOMAIN
    result = minimal_premise_sets(premises, conclusion, cap=args.premise_cap, fresh_constant=args.fresh_constant)
    pruned = [l for l, _ in premises if l not in result.union] if result.union else []
    print("valid")
    print(json.dumps(pruned))
    return EXIT_OK


def cmd_prune(args: argparse.Namespace) -> int:
    premises, conclusion = _read_problem(args.problem)
    if not check_validity(premises, conclusion, args.fresh_constant).valid:
        print("invalid")
        return EXIT_DOMAIN
    result = minimal_premise_sets(
        premises, conclusion, cap=args.premise_cap, strict=args.strict_cap, fresh_constant=args.fresh_constant
    )
    data = result.to_dict()
    data["pruned"] = [l for l, _ in premises if l not in result.union] if result.union else []
    print(json.dumps(data, ensure_ascii=False))
    return EXIT_OK


def cmd_reconstruct(args: argparse.Namespace) -> int:
    config = build_config(args)
    backend = _backend(args, config)
    storage = StorageManager(config.storage)

    if args.corpus:
        if not args.out:
            raise UsageError("--corpus requires --out")
        summary = batch_reconstruct(args.corpus, config, backend, args.out, jobs=args.jobs, storage=storage)
        print(json.dumps(summary.to_dict(), ensure_ascii=False))
        incomplete = summary.failed + summary.malformed + summary.exhausted
        return EXIT_DOMAIN if (incomplete and args.strict) else EXIT_OK

    if not args.argument and not args.argument_file:
        raise UsageError("reconstruct needs --argument, --argument-file or --corpus")
    if not args.topic:
        raise UsageError("reconstruct needs --topic")
    argument = args.argument or Path(args.argument_file).read_text(encoding="utf-8")
    inp = ArgumentInput(topic=args.topic, argument=argument, background=args.background)

    engine = GAAREngine(config.pipeline, backend, config.llm, config.solver)
    try:
        reconstruction, formalization, trace = engine.run(inp)
    except BackendError as e:
        if e.trace is not None:
            storage.save_trace(e.trace)
        print(json.dumps({"status": RunStatus.FAILED, "error": str(e)}, ensure_ascii=False))
        return EXIT_DOMAIN

    path = storage.save_trace(trace)
    print(json.dumps({
        "status": trace.status,
        "iterations": len(trace.iterations),
        "reconstruction": reconstruction.to_dict(),
        "formalization": formalization.to_dict() if formalization else None,
        "fallacy": trace.fallacy_report.to_dict() if trace.fallacy_report else None,
        "trace": str(path),
        "trace_hash": trace.trace_hash(),
    }, ensure_ascii=False))
    if trace.status == RunStatus.EXHAUSTED and args.strict:
        return EXIT_DOMAIN
    return EXIT_OK


def _parse_methods(specs: Sequence[str]) -> Dict[str, Path]:
    methods = {}
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"--method expects NAME=PATH, got {spec!r}")
        methods[name] = Path(path)
    if len(methods) < 2:
        raise UsageError("evaluate needs at least two --method entries")
    return methods


def _load_method(path: Path):
    files = sorted(path.glob("*.jsonl")) if path.is_dir() else [path]
    records = {}
    for file in files:
        for record in read_corpus(file):
            records[record.id] = record
    return records


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = build_config(args)
    backend = _backend(args, config)
    corpora = {name: _load_method(path) for name, path in _parse_methods(args.method).items()}

    shared = sorted(set.intersection(*(set(c) for c in corpora.values())))
    if not shared:
        raise EvaluationError("the methods share no item ids")
    first = next(iter(corpora.values()))
    items = {i: ArgumentInput(first[i].title or i, first[i].argument, first[i].background) for i in shared}
    groups = {i: first[i].fallacy_group for i in shared}
    reconstructions = {m: {i: c[i].reconstruction for i in shared} for m, c in corpora.items()}

    judge = PairwiseJudge(
        backend, items, reconstructions,
        swap=args.swap or config.evaluation.swap_positions,
        model=config.llm.model, temperature=config.llm.temperature, max_tokens=config.llm.max_tokens,
    )
    costs = json.loads(Path(args.costs).read_text(encoding="utf-8")) if args.costs else None
    methods = list(corpora)
    if costs is not None:
        missing = [m for m in methods if m not in costs]
        if missing:
            raise ValueError(f"--costs has no entry for {', '.join(missing)}")
    out: Dict[str, object] = {"items": len(shared)}
    unparsed: List[Tuple[str, str, str]] = []

    if args.bracket:
        bracket = json.loads(Path(args.bracket).read_text(encoding="utf-8"))
        result = run_tournament(bracket, shared, judge, costs, unparsed)
        records = result.records
        out.update(tournament_json(result))
        report = tournament_markdown(result)
    elif args.league or len(methods) > 2:
        records = run_league(methods, shared, judge, unparsed)
        table = fit_bradley_terry(records, config.evaluation)
        scores = None
        if costs:
            scores = topsis([TopsisRow(m, costs[m], table.ratings[m]) for m in methods])
            out["topsis"] = scores
        out["ratings"] = table.to_records()
        report = ratings_markdown(table, costs, scores)
    else:
        a, b = methods
        records = judge_items(judge, shared, a, b, unparsed)
        try:
            rate: Optional[float] = winning_rate(records, a, b)
        except AllTiesError:
            rate = None
        out.update({
            "a": a,
            "b": b,
            "winning_rate": rate,
            "ties": sum(r.outcome == "Tie" for r in records),
            "by_group": winning_rates_by(records, a, b, groups),
        })
        report = pairwise_markdown(a, b, rate, out["by_group"], out["ties"], len(records))
    out["unparsed"] = len(unparsed)

    if args.validity:
        out["validity"] = {
            m: validity_rate(formalize_for_validity(
                [reconstructions[m][i] for i in shared], backend, config.pipeline
            ), config.solver.fresh_constant)
            for m in methods
        }

    if args.match_log:
        write_match_log(records, args.match_log)
    if report:
        StorageManager(config.storage).save_report("evaluation", report, out)
    print(json.dumps(out, ensure_ascii=False))
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    stats = compute_stats(read_corpus(args.corpus), ddof=args.ddof)
    if args.format == "json":
        print(json.dumps(stats.to_dict(), ensure_ascii=False))
    else:
        print(corpus_stats_markdown(stats), end="")
    return EXIT_OK


def cmd_split(args: argparse.Namespace) -> int:
    records = read_corpus(args.corpus)
    train, test = split(records, args.train, args.test, args.seed)
    out_dir = Path(args.out_dir)
    write_corpus(train, out_dir / "train.jsonl")
    write_corpus(test, out_dir / "test.jsonl")
    print(json.dumps({"train": len(train), "test": len(test), "seed": args.seed}))
    return EXIT_OK


def cmd_topsis(args: argparse.Namespace) -> int:
    rows = read_topsis_rows(args.table)
    scores = topsis(rows)
    print("method,score")
    for row in rows:
        print(f"{row.method},{scores[row.method]:.2f}")
    return EXIT_OK


# ============================================================================
# 参数解析
# ============================================================================

def _add_engine_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("engine")
    group.add_argument("--backend", choices=["live", "replay", "scripted"], default="live")
    group.add_argument("--model", default="gpt-5.1", help="Model id (default: gpt-5.1)")
    group.add_argument("--base-url", default=None, help="OpenAI-compatible endpoint")
    group.add_argument("--credential-env", default="OPENAI_API_KEY",
                       help="Environment variable holding the API key")
    group.add_argument("--cassette", default=None, help="Replay source, or recording target for live/scripted")
    group.add_argument("--script", default=None, help="Scripted responses (JSONL with a 'response' field)")
    group.add_argument("--scheme", choices=["general", "specific"], default="general")
    group.add_argument("--max-iter", type=int, default=10)
    group.add_argument("--fallacy-n", type=int, default=3, help="Failed iterations before a fallacy revision")
    group.add_argument("--no-fallacy-path", action="store_true")
    group.add_argument("--coarse-faithfulness", action="store_true")
    group.add_argument("--drop-criterion", action="append", choices=list(CRITERIA))
    group.add_argument("--validity-only", action="store_true", help="Skip the faithfulness judge")
    group.add_argument("--no-scheme-instruction", action="store_true")
    group.add_argument("--no-pruning", action="store_true")
    group.add_argument("--jobs", type=int, default=1)
    group.add_argument("--output-dir", "-o", default="./outputs")


def _add_solver_flags(parser: argparse.ArgumentParser):
    parser.add_argument("problem", help="Problem file: one formula per line, last line CONCLUSION: ...")
    parser.add_argument("--premise-cap", type=int, default=16)
    parser.add_argument("--fresh-constant", default="c0")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaar",
        description="Argument reconstruction engine with a native first-order validity checker",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  gaar validate problem.txt
  gaar reconstruct --topic "Abortion" --argument-file arg.txt --backend replay --cassette run.jsonl
  gaar stats corpus.jsonl
  gaar topsis model_costs.csv
        """,
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    parser.add_argument("--log-dir", default=None, help="Also write log files here")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("reconstruct", help="Reconstruct one argument or a corpus")
    p.add_argument("--topic")
    p.add_argument("--argument")
    p.add_argument("--argument-file")
    p.add_argument("--background")
    p.add_argument("--corpus", help="Input JSONL (id, source, title, background, argument)")
    p.add_argument("--out", help="Output corpus for --corpus")
    p.add_argument("--strict", action="store_true", help="Exit 1 when a run is exhausted")
    _add_engine_flags(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("validate", help="Check validity and report prunable premises")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("prune", help="Enumerate minimal valid premise subsets")
    _add_solver_flags(p)
    p.add_argument("--strict-cap", action="store_true")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("evaluate", help="Pairwise faithfulness judging and ratings")
    p.add_argument("--method", action="append", default=[], help="NAME=PATH (corpus file or directory)")
    p.add_argument("--bracket", help="Tournament bracket JSON")
    p.add_argument("--league", action="store_true", help="Round robin plus Bradley-Terry ratings")
    p.add_argument("--costs", help="JSON object method -> cost")
    p.add_argument("--swap", action="store_true", help="Judge both A/B orders")
    p.add_argument("--match-log", help="Write match records here")
    p.add_argument("--validity", action="store_true",
                   help="Also formalize each method's reconstructions once and report validity rates")
    _add_engine_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="Corpus statistics")
    p.add_argument("corpus")
    p.add_argument("--ddof", type=int, choices=[0, 1], default=0)
    p.add_argument("--format", choices=["markdown", "json"], default="markdown")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="Deterministic train/test split")
    p.add_argument("corpus")
    p.add_argument("--train", type=int, required=True)
    p.add_argument("--test", type=int, required=True)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("topsis", help="TOPSIS over a method,cost,quality CSV")
    p.add_argument("table")
    p.set_defaults(func=cmd_topsis)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """主函数"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    setup_logger(
        log_dir=Path(args.log_dir) if args.log_dir else None,
        console_level="DEBUG" if args.debug else "WARNING",
        credential_env=getattr(args, "credential_env", None) or "OPENAI_API_KEY",
    )

    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        parser.print_usage(sys.stderr)
        logger.error(str(e))
        return EXIT_USAGE
    except (ValueError, FileNotFoundError, SolverError, BackendError) as e:
        # FormulaError, EvaluationError and DatasetError are ValueErrors
        logger.error(f"{args.command} 失败: {e}")
        logger.debug(get_err_message())
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
