"""Command-line front end.

Subcommands: gen-corpus, analyze, attack, stft-attack, compose, summarize.
Exit codes: 0 success, 1 partial per-file failures, 2 configuration or
endpoint/handshake errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .attacks import (AttackConfig, DEFAULT_BUDGET, DEFAULT_DELTAS,
                      DEFAULT_FRAME_SCHEDULE, fourier_attack, stft_attack)
from .classifier import BridgeProtocolError, make_classifier
from .corpus import DEFAULT_SEED, gen_corpus
from .report import (RunConfig, _compose_batch, _collect_inputs, analyze,
                     summarize, write_json, write_summary_tables)
from .responsibility import DEFAULT_EPSILON, PartitionConfig, accumulate
from .signals import forward, load_wav, save_wav
from .subsets import ExtractionConfig, extract

log = logging.getLogger("freqcause")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", default="builtin",
                   help="builtin | cmd:<argv> | tcp:<host:port>")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="reports", help="output directory")


def _add_analysis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--partitions", type=int, default=4, help="parts per split")
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--chain-length", type=int, default=5)
    p.add_argument("--min-score-ratio", type=float, default=0.5)
    p.add_argument("--step", type=int, default=None,
                   help="bins per greedy step (default: one equal-score cell)")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--deltas", default=",".join(str(d) for d in DEFAULT_DELTAS),
                   help="comma-separated mutation scalars")
    p.add_argument("--frames", default=",".join(str(f) for f in DEFAULT_FRAME_SCHEDULE),
                   help="comma-separated STFT frame sizes")
    p.add_argument("--export-wav", action="store_true")
    p.add_argument("--jobs", type=int, default=1)


def _run_config(args, inputs: list[str]) -> RunConfig:
    return RunConfig(
        inputs=tuple(inputs),
        model=args.model,
        partition=PartitionConfig(p=args.partitions, max_depth=args.max_depth,
                                  iterations=args.iterations, epsilon=args.epsilon,
                                  seed=args.seed),
        extraction=ExtractionConfig(chain_length=args.chain_length,
                                    min_score_ratio=args.min_score_ratio,
                                    step=args.step),
        attack=AttackConfig(deltas=tuple(float(d) for d in args.deltas.split(",")),
                            budget=args.budget),
        frame_schedule=tuple(int(f) for f in args.frames.split(",")),
        out_dir=args.out,
        seed=args.seed,
        export_wav=args.export_wav,
        jobs=args.jobs,
    )


def _cmd_gen_corpus(args) -> int:
    manifest = gen_corpus(seed=args.seed, out_dir=args.out,
                          clips_per_class=args.clips_per_class)
    print(f"wrote {len(manifest['clips'])} clips to {args.out} "
          f"(builtin accuracy {manifest['accuracy']:.3f})")
    return 0


def _cmd_analyze(args) -> int:
    config = _run_config(args, args.inputs)
    outcome = analyze(config)
    print(f"analyzed {outcome['reports']} files, {outcome['errors']} errors; "
          f"reports in {config.out_dir}")
    return 1 if outcome["errors"] else 0


def _attack_one(path: Path, args, with_stft: bool) -> dict:
    config = _run_config(args, [str(path)])
    handle = make_classifier(config.model)
    signal = load_wav(path)
    spectrum = forward(signal)
    from dataclasses import replace
    from .report import _file_seed, _attack_dict, _classification_dict, _subset_dict
    partition = replace(config.partition, seed=_file_seed(config.seed, path.name))
    rmap = accumulate(handle, spectrum, partition)
    report = extract(spectrum, rmap, handle, config.extraction)
    doc = {
        "file": path.name,
        "config": config.embedded(),
        "original": _classification_dict(report.original),
        "sufficient": _subset_dict(report.sufficient, len(spectrum.bins)),
    }
    if report.sufficient is None:
        doc["fourier_attack"] = None
        doc["diagnostic"] = report.diagnostic
        return doc
    fourier = fourier_attack(spectrum, rmap, report.sufficient, handle, config.attack)
    doc["fourier_attack"] = _attack_dict(fourier, handle)
    result = fourier
    if with_stft:
        stft_result = (stft_attack(signal, fourier, handle, config.frame_schedule)
                       if fourier.success else None)
        doc["stft_attack"] = _attack_dict(stft_result, handle)
        if stft_result is not None and stft_result.success:
            result = stft_result
    if args.export_wav and result.success:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for encoding in ("float32", "pcm16"):
            save_wav(result.altered, out / f"{path.stem}.attacked.{encoding}.wav",
                     encoding=encoding)
    doc["query_count_total"] = handle.query_count
    return doc


def _cmd_attack(args, with_stft: bool) -> int:
    paths = _collect_inputs(tuple(args.inputs))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    suffix = "stft.json" if with_stft else "attack.json"
    for path in paths:
        started = time.perf_counter()
        try:
            doc = _attack_one(path, args, with_stft)
        except Exception as exc:
            log.error("%s failed: %s", path.name, exc)
            failures += 1
            continue
        write_json(out_dir / f"{path.stem}.{suffix}", doc)
        attack = doc.get("stft_attack") if with_stft else doc.get("fourier_attack")
        verdict = "flip" if attack and attack["success"] else "no flip"
        print(f"{path.name}: {verdict}, {doc.get('query_count_total', 0)} queries, "
              f"{time.perf_counter() - started:.1f}s")
    return 1 if failures else 0


def _cmd_compose(args) -> int:
    paths = _collect_inputs(tuple(args.inputs))
    report_dir = Path(args.reports)
    docs = {}
    for p in sorted(report_dir.glob("*.report.json")):
        doc = json.loads(p.read_text())
        docs[doc["file"]] = doc
    if not docs:
        print(f"no reports found in {report_dir}", file=sys.stderr)
        return 2
    config = RunConfig(inputs=tuple(str(p) for p in paths), model=args.model,
                       out_dir=args.out, seed=args.seed)
    composition = _compose_batch(paths, docs, config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "composition.json", composition)
    for label, entry in composition.items():
        print(f"{label}: composed {entry['n_composed']} sufficient signals -> "
              f"{entry['result']['label']} ({'success' if entry['success'] else 'failure'})")
    return 0


def _cmd_summarize(args) -> int:
    summary = summarize(args.reports)
    write_summary_tables(summary, args.out)
    print(json.dumps(summary.to_dict(), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqcause",
        description="Causal frequency analysis and attacks for audio classifiers")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate the synthetic labeled corpus")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default="corpus")
    p.add_argument("--clips-per-class", type=int, default=25)

    p = sub.add_parser("analyze", help="full per-file analysis over a corpus")
    p.add_argument("inputs", nargs="+")
    _add_model_flags(p)
    _add_analysis_flags(p)

    for name, help_text in (("attack", "whole-spectrum mutation attack"),
                            ("stft-attack", "frame-localized mutation attack")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("inputs", nargs="+")
        _add_model_flags(p)
        _add_analysis_flags(p)

    p = sub.add_parser("compose", help="superpose per-label sufficient signals")
    p.add_argument("inputs", nargs="+", help="wav files or corpus directory")
    p.add_argument("--reports", required=True, help="directory of analyze reports")
    _add_model_flags(p)

    p = sub.add_parser("summarize", help="aggregate reports into corpus tables")
    p.add_argument("reports", help="directory of analyze reports")
    p.add_argument("--out", default=None, help="table output directory (default: reports)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    if args.command == "summarize" and args.out is None:
        args.out = args.reports
    try:
        if args.command == "gen-corpus":
            return _cmd_gen_corpus(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        if args.command == "attack":
            return _cmd_attack(args, with_stft=False)
        if args.command == "stft-attack":
            return _cmd_attack(args, with_stft=True)
        if args.command == "compose":
            return _cmd_compose(args)
        if args.command == "summarize":
            return _cmd_summarize(args)
    except (BridgeProtocolError, ConnectionError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
