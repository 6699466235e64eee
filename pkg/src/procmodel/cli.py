"""Command-line entry point: ``procmodel <subcommand> ...``.

Any long option can also come from a JSON config file passed with
``--config``; keys are the option names with dashes replaced by
underscores (e.g. ``{"threshold": 0.8, "llm_endpoint": "https://..."}``).
Flags given on the command line win over the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .breakdown import breakdown
from .embeddings import ProviderConfig, RecordingEmbeddingTransport, RemoteEmbeddingProvider, urllib_transport
from .generation import (
    DocumentPages,
    HttpChatClient,
    LlmClientConfig,
    PromptStrategy,
    RecordingChatClient,
    ReplayChatClient,
    generate_model,
)
from .harness import load_dataset, load_records, render_report, run_batch, summarize
from .model import ModelError, parse_model, serialize_model, validate_model
from .similarity import MatchingConfig, score_models

PROVIDERS = {"lexical": "lexical-fallback", "lexical-fallback": "lexical-fallback", "remote": "remote", "exact": "exact"}


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_model(path: str):
    m = parse_model(Path(path).read_text(encoding="utf-8"))
    report = validate_model(m)
    if not report.ok:
        raise ModelError(f"{path}: " + "; ".join(f"{e.code} {e.message}" for e in report.errors))
    return m


def _matching_config(args) -> MatchingConfig:
    kind = PROVIDERS[args.provider]
    if kind == "remote" and args.embeddings_record:
        # recording wraps the live transport, so build the provider directly
        provider = RemoteEmbeddingProvider(
            args.embeddings_endpoint,
            args.embeddings_model or "sentence-transformer",
            transport=RecordingEmbeddingTransport(args.embeddings_record, urllib_transport()),
        )
        return MatchingConfig(args.threshold, provider)
    cfg = ProviderConfig(
        kind=kind,
        endpoint=args.embeddings_endpoint,
        model_name=args.embeddings_model,
        cache_path=args.embeddings_cache,
        replay_path=args.embeddings_replay,
    )
    return MatchingConfig(args.threshold, cfg)


def _llm(args) -> tuple[LlmClientConfig, object]:
    cfg = LlmClientConfig(
        endpoint=args.llm_endpoint or "",
        model_name=args.model,
        temperature=args.temperature,
        max_output_tokens=args.max_output_tokens,
        timeout=args.timeout,
        retries=args.retries,
    )
    if args.replay:
        client = ReplayChatClient(args.replay)
    else:
        client = HttpChatClient()
        if args.record:
            client = RecordingChatClient(args.record, client)
    return cfg, client


def cmd_breakdown(args) -> int:
    b = breakdown(_load_model(args.model))
    _emit(json.dumps(b.to_dict(), indent=2, ensure_ascii=False) + "\n", args.out)
    return 0


def cmd_score(args) -> int:
    gt = breakdown(_load_model(args.ground_truth))
    gen = breakdown(parse_model(Path(args.generated).read_text(encoding="utf-8")), strict=False)
    report = score_models(gt, gen, _matching_config(args))
    _emit(json.dumps(report.to_dict(trace=args.trace), indent=2) + "\n", args.out)
    return 0


def cmd_generate(args) -> int:
    doc = DocumentPages.from_directory(args.pages_dir)
    if args.dataset:
        strategy = load_dataset(args.dataset).strategy(args.strategy)
    else:
        strategy = PromptStrategy(args.strategy)
    cfg, client = _llm(args)
    trace = generate_model(doc, strategy, cfg, client)
    if args.out and trace.parsed is not None and trace.validation.ok:
        Path(args.out).write_text(serialize_model(trace.parsed) + "\n", encoding="utf-8")
    _emit(json.dumps(trace.to_dict(), indent=2, ensure_ascii=False) + "\n", args.trace_out)
    return 1 if trace.failed else 0


def cmd_evaluate(args) -> int:
    index = load_dataset(args.dataset_root)
    cfg, client = _llm(args)
    records = run_batch(index, args.strategy, cfg, _matching_config(args), args.parallelism, client)
    text = render_report(summarize(records), records, args.format)
    _emit(text, args.out)
    return 0


def cmd_report(args) -> int:
    records = load_records(args.records)
    _emit(render_report(summarize(records), records, args.format), args.out)
    return 0


def _add_matching(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("matching")
    g.add_argument("--threshold", type=float, default=0.7, help="cosine threshold a match must exceed")
    g.add_argument("--provider", choices=sorted(PROVIDERS), default="lexical")
    g.add_argument("--embeddings-endpoint")
    g.add_argument("--embeddings-model")
    g.add_argument("--embeddings-cache", help="JSON-lines embedding cache file")
    g.add_argument("--embeddings-replay", help="recorded embeddings file to serve instead of the endpoint")
    g.add_argument("--embeddings-record", help="record remote embeddings to this file")


def _add_llm(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("llm")
    g.add_argument("--strategy", choices=["zero", "one", "few"], default="zero")
    g.add_argument("--llm-endpoint", help="chat-completions URL (key from LLM_API_KEY)")
    g.add_argument("--model", default="gpt-4-vision-preview")
    g.add_argument("--temperature", type=float, default=0.0)
    g.add_argument("--max-output-tokens", type=int, default=4096)
    g.add_argument("--timeout", type=float, default=120.0)
    g.add_argument("--retries", type=int, default=2)
    g.add_argument("--replay", help="directory of recorded responses to replay")
    g.add_argument("--record", help="directory to record responses into")


def build_parser() -> tuple[argparse.ArgumentParser, list[argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="procmodel", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file supplying option defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("breakdown", help="print the ten element multisets of a model")
    p.add_argument("model")
    p.add_argument("--out")
    p.set_defaults(func=cmd_breakdown)
    subs = [p]

    p = sub.add_parser("score", help="score a generated model against a ground truth")
    p.add_argument("ground_truth")
    p.add_argument("generated")
    p.add_argument("--trace", action="store_true", help="include per-multiset matchings")
    p.add_argument("--out")
    _add_matching(p)
    p.set_defaults(func=cmd_score)
    subs.append(p)

    p = sub.add_parser("generate", help="extract a model from a directory of page images")
    p.add_argument("pages_dir")
    p.add_argument("--dataset", help="dataset root supplying one-/few-shot examples")
    p.add_argument("--out", help="write the extracted model here (only if it validates)")
    p.add_argument("--trace-out", help="write the generation trace here instead of stdout")
    _add_llm(p)
    p.set_defaults(func=cmd_generate)
    subs.append(p)

    p = sub.add_parser("evaluate", help="generate and score every evaluation model of a dataset")
    p.add_argument("dataset_root")
    p.add_argument("--out")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--parallelism", type=int, default=2)
    _add_llm(p)
    _add_matching(p)
    p.set_defaults(func=cmd_evaluate)
    subs.append(p)

    p = sub.add_parser("report", help="summarize records from an evaluate JSON report")
    p.add_argument("records")
    p.add_argument("--format", choices=["json", "csv"], default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    subs.append(p)
    return parser, subs


def main(argv: list[str] | None = None) -> int:
    parser, subs = build_parser()
    pre, _ = parser.parse_known_args(argv)
    if pre.config:
        defaults = json.loads(Path(pre.config).read_text(encoding="utf-8"))
        for p in subs:
            p.set_defaults(**defaults)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ModelError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
