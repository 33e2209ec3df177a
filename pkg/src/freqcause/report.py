"""Batch analysis harness: per-file JSON reports, exports, and aggregation.

One report file per input wav is the unit of persistence; reports embed the
full run configuration and are byte-deterministic given (corpus, config,
seed), so reruns diff clean.  Wall-clock durations are therefore logged to
stderr, never written into reports.  Aggregation (``summarize``) is a pure
function of the report directory.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .attacks import (AttackConfig, AttackResult, DEFAULT_FRAME_SCHEDULE,
                      fourier_attack, stft_attack)
from .classifier import Classification, make_classifier
from .responsibility import PartitionConfig, accumulate
from .signals import BinSet, TimeSignal, forward, inverse, load_wav, mask, save_wav
from .subsets import ExtractionConfig, SubsetReport, compose, extract, invert

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    inputs: tuple[str, ...]
    model: str = "builtin"
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    frame_schedule: tuple[int, ...] = DEFAULT_FRAME_SCHEDULE
    out_dir: str = "reports"
    seed: int = 0
    export_wav: bool = False
    jobs: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    def embedded(self) -> dict:
        """Config as embedded in reports: analysis parameters only.

        Filesystem locations and worker counts do not affect analysis content
        and would break byte-identity of reports across differently-located
        but otherwise identical runs.
        """
        doc = asdict(self)
        for key in ("inputs", "out_dir", "jobs"):
            doc.pop(key)
        return doc


def reference_config(inputs: tuple[str, ...], out_dir: str,
                     jobs: int = 1) -> RunConfig:
    """The repo's pinned desk-scale configuration for corpus runs.

    Regression baselines are recorded under this exact configuration; the
    64-bin greedy step bounds extraction queries on 12001-bin spectra, where
    accumulated scores are almost all distinct and per-cell stepping would
    degenerate to single bins.
    """
    return RunConfig(inputs=inputs, model="builtin", out_dir=out_dir, seed=7,
                     extraction=ExtractionConfig(step=64), jobs=jobs)


def _file_seed(run_seed: int, name: str) -> int:
    """Stable per-file seed: depends on the run seed and file name only."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    name_part = int.from_bytes(digest[:4], "big")
    return int(np.random.SeedSequence([run_seed, name_part]).generate_state(1)[0])


def _classification_dict(c: Classification | None) -> dict | None:
    if c is None:
        return None
    out = {"label": c.label, "score": c.score}
    if c.full_scores is not None:
        out["full_scores"] = dict(sorted(c.full_scores.items()))
    return out


def _subset_dict(bins: BinSet | None, n_bins: int) -> dict | None:
    if bins is None:
        return None
    return {
        "n_bins": len(bins),
        "fraction": len(bins) / n_bins,
        "bins": [int(b) for b in bins.indices],
    }


def _quantization_fidelity(signal: TimeSignal, expect_label: str, handle) -> dict:
    """Does each wav encoding's quantization preserve the classification?"""
    out = {}
    clipped = np.clip(signal.samples, -1.0, 1.0)
    f32 = clipped.astype(np.float32).astype(np.float64)
    pcm = np.clip(np.rint(clipped * 32768.0), -32768, 32767) / 32768.0
    for name, samples in (("float32", f32), ("pcm16", pcm)):
        c = handle.classify(TimeSignal(samples, signal.sample_rate))
        out[name] = {"label": c.label, "preserved": c.label == expect_label}
    return out


def _attack_dict(result: AttackResult | None, handle) -> dict | None:
    if result is None:
        return None
    out = {
        "success": result.success,
        "before": _classification_dict(result.before),
        "after": _classification_dict(result.after),
        "chosen_delta": result.plan.chosen_delta,
        "n_frequencies": result.plan.n_frequencies,
        "bins_modified": [int(b) for b in result.plan.bins_modified.indices],
        "deltas": list(result.plan.deltas),
        "budget": result.plan.budget,
        "query_count": result.query_count,
        "linf_delta": result.linf_delta,
        "l2_delta": result.l2_delta,
    }
    if result.frame_size_used is not None or result.frames_modified is not None:
        out["frame_size_used"] = result.frame_size_used
        out["frames_modified"] = result.frames_modified
    if result.success:
        out["quantization"] = _quantization_fidelity(result.altered,
                                                     result.after.label, handle)
    return out


def analyze_file(path: Path, config: RunConfig, handle=None) -> dict:
    """Full pipeline for one wav: responsibility, subsets, inversion, attacks."""
    if handle is None:
        handle = make_classifier(config.model)
    signal = load_wav(path)
    spectrum = forward(signal)
    n_bins = len(spectrum.bins)

    partition = replace(config.partition, seed=_file_seed(config.seed, path.name))
    q0 = handle.query_count
    rmap = accumulate(handle, spectrum, partition)
    q_resp = handle.query_count - q0

    report = extract(spectrum, rmap, handle, config.extraction)

    fourier = stft = None
    if report.sufficient is not None:
        fourier = fourier_attack(spectrum, rmap, report.sufficient, handle,
                                 config.attack)
        if fourier.success:
            stft = stft_attack(signal, fourier, handle, config.frame_schedule)

    emd_trace = [None if not np.isfinite(v) else v for v in rmap.emd_trace]
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "file": path.name,
        "config": config.embedded(),
        "signal": {
            "sample_rate": signal.sample_rate,
            "n_samples": len(signal),
            "n_bins": n_bins,
        },
        "original": _classification_dict(report.original),
        "responsibility": {
            "iterations_run": rmap.iterations_run,
            "emd_trace": emd_trace,
            "incomplete": rmap.incomplete,
            "nonzero_bins": int(np.count_nonzero(rmap.scores)),
            "query_count": q_resp,
        },
        "subsets": {
            "sufficient": _subset_dict(report.sufficient, n_bins),
            "necessary": _subset_dict(report.necessary, n_bins),
            "complete": _subset_dict(report.complete, n_bins),
            "at_sufficient": _classification_dict(report.at_sufficient),
            "at_necessary": _classification_dict(report.at_necessary),
            "at_complete": _classification_dict(report.at_complete),
            "inverse_of_necessary": _classification_dict(report.inverse_of_necessary),
            "query_count": report.query_count,
            "diagnostic": report.diagnostic,
        },
        "fourier_attack": _attack_dict(fourier, handle),
        "stft_attack": _attack_dict(stft, handle),
        "query_count_total": handle.query_count - q0,
    }
    if config.export_wav:
        doc["exports"] = _export_stages(path, config, handle, signal, spectrum,
                                        report, fourier, stft, rmap)
    return doc


def _export_stages(path, config, handle, signal, spectrum, report: SubsetReport,
                   fourier, stft, rmap) -> dict:
    """Write stage wavs + responsibility CSV; verify each wav replays its label."""
    out = Path(config.out_dir) / "export" / path.stem
    out.mkdir(parents=True, exist_ok=True)
    stages: list[tuple[str, TimeSignal, Classification]] = [
        ("original", signal, report.original)]
    for name in ("sufficient", "necessary", "complete"):
        bins = getattr(report, name)
        if bins is not None:
            stages.append((name, inverse(mask(spectrum, bins)),
                           getattr(report, f"at_{name}")))
    if report.necessary is not None:
        inv_signal, inv_c = invert(spectrum, report.necessary, handle)
        stages.append(("inverse_of_necessary", inv_signal, inv_c))
    replays = {}
    for name, stage_signal, recorded in stages:
        wav_path = out / f"{name}.wav"
        save_wav(stage_signal, wav_path, encoding="float32")
        replayed = handle.classify(load_wav(wav_path))
        replays[name] = {
            "label": replayed.label,
            "matches_recorded": replayed.label == recorded.label,
        }
    for attack_name, result in (("fourier_attack", fourier), ("stft_attack", stft)):
        if result is not None and result.success:
            for encoding in ("float32", "pcm16"):
                save_wav(result.altered, out / f"{attack_name}.{encoding}.wav",
                         encoding=encoding)
    (out / "responsibility.csv").write_text(rmap.to_csv(spectrum))
    return {"dir": str(out.relative_to(config.out_dir)), "replays": replays}


def _collect_inputs(inputs: tuple[str, ...]) -> list[Path]:
    paths: list[Path] = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.wav")))
        elif p.suffix == ".wav":
            paths.append(p)
        else:
            raise ValueError(f"input {item} is neither a wav file nor a directory")
    if not paths:
        raise ValueError("no wav inputs found")
    return paths


def _analyze_worker(args: tuple[str, RunConfig]) -> tuple[str, dict]:
    path, config = args
    return path, analyze_file(Path(path), config)


def analyze(config: RunConfig) -> dict:
    """Analyze every input wav; write per-file reports, compositions, errors.

    Per-file failures are isolated into an error manifest and do not stop the
    batch.  Returns {"reports": n, "errors": n}.
    """
    paths = _collect_inputs(config.inputs)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    docs: dict[str, dict] = {}
    errors: dict[str, str] = {}
    started = time.perf_counter()
    if config.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = {pool.submit(_analyze_worker, (str(p), config)): p for p in paths}
            for future in concurrent.futures.as_completed(futures):
                p = futures[future]
                try:
                    _, doc = future.result()
                    docs[p.name] = doc
                except Exception as exc:
                    errors[p.name] = f"{type(exc).__name__}: {exc}"
    else:
        handle = make_classifier(config.model)
        for p in paths:
            try:
                docs[p.name] = analyze_file(p, config, handle)
            except Exception as exc:
                errors[p.name] = f"{type(exc).__name__}: {exc}"
    log.info("analyzed %d files (%d errors) in %.1fs", len(docs), len(errors),
             time.perf_counter() - started)

    for name in sorted(docs):
        write_json(out_dir / f"{Path(name).stem}.report.json", docs[name])
    composition = _compose_batch(paths, docs, config)
    write_json(out_dir / "composition.json", composition)
    if errors:
        write_json(out_dir / "errors.json", errors)
    return {"reports": len(docs), "errors": len(errors)}


def _compose_batch(paths: list[Path], docs: dict[str, dict], config: RunConfig) -> dict:
    """Superpose each label's sufficient spectra and classify the mixtures."""
    by_label: dict[str, list] = {}
    path_by_name = {p.name: p for p in paths}
    for name in sorted(docs):
        doc = docs[name]
        suff = doc["subsets"]["sufficient"]
        if suff is None:
            continue
        spectrum = forward(load_wav(path_by_name[name]))
        masked = mask(spectrum, BinSet.of(suff["bins"]))
        by_label.setdefault(doc["original"]["label"], []).append(masked)
    handle = make_classifier(config.model)
    out = {}
    for label in sorted(by_label):
        spectra = by_label[label]
        _, result, success = compose(spectra, handle, label)
        out[label] = {
            "n_composed": len(spectra),
            "success": success,
            "result": _classification_dict(result),
        }
    return out


def write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# --- aggregation -------------------------------------------------------------


@dataclass(frozen=True)
class CorpusSummary:
    n_reports: int
    sufficiency_pct_by_label: dict[str, float]
    inversion_histogram: dict[str, dict[str, int]]
    completeness_shift_mean: float | None
    completeness_shift_std: float | None
    completeness_up_share: float | None
    composition_success_by_label: dict[str, bool]
    attack_attempted: int
    attack_success_share: float | None
    attack_one_freq_share: float | None
    attack_five_freq_share: float | None
    stft_attempted: int
    stft_success_by_frame: dict[str, int]

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(report_dir: str | Path) -> CorpusSummary:
    """Aggregate per-file reports into corpus statistics (pure)."""
    report_dir = Path(report_dir)
    report_paths = sorted(report_dir.glob("*.report.json"))
    if not report_paths:
        raise ValueError(f"no reports found in {report_dir}")
    docs = [json.loads(p.read_text()) for p in report_paths]

    suff_pct: dict[str, list[float]] = {}
    inv_hist: dict[str, dict[str, int]] = {}
    shifts: list[float] = []
    attack_attempted = attack_success = one_freq = five_freq = 0
    stft_attempted = 0
    stft_by_frame: dict[str, int] = {}

    for doc in docs:
        label = doc["original"]["label"]
        subsets = doc["subsets"]
        if subsets["sufficient"] is not None:
            suff_pct.setdefault(label, []).append(100.0 * subsets["sufficient"]["fraction"])
        if subsets["inverse_of_necessary"] is not None:
            inv_label = subsets["inverse_of_necessary"]["label"]
            inv_hist.setdefault(label, {})
            inv_hist[label][inv_label] = inv_hist[label].get(inv_label, 0) + 1
        if subsets["at_complete"] is not None and subsets["at_necessary"] is not None:
            shifts.append(subsets["at_complete"]["score"] - subsets["at_necessary"]["score"])
        fourier = doc["fourier_attack"]
        if fourier is not None:
            attack_attempted += 1
            if fourier["success"]:
                attack_success += 1
                if fourier["n_frequencies"] == 1:
                    one_freq += 1
                if fourier["n_frequencies"] <= 5:
                    five_freq += 1
        stft = doc["stft_attack"]
        if stft is not None:
            stft_attempted += 1
            frame = stft["frame_size_used"] if stft["success"] else "none"
            stft_by_frame[str(frame)] = stft_by_frame.get(str(frame), 0) + 1

    composition_path = report_dir / "composition.json"
    composition = {}
    if composition_path.exists():
        composition = {label: entry["success"] for label, entry
                       in json.loads(composition_path.read_text()).items()}

    shift_abs = np.abs(shifts) if shifts else None
    return CorpusSummary(
        n_reports=len(docs),
        sufficiency_pct_by_label={k: float(np.mean(v)) for k, v in sorted(suff_pct.items())},
        inversion_histogram={k: dict(sorted(v.items())) for k, v in sorted(inv_hist.items())},
        completeness_shift_mean=float(np.mean(shift_abs)) if shifts else None,
        completeness_shift_std=float(np.std(shift_abs)) if shifts else None,
        completeness_up_share=float(np.mean(np.asarray(shifts) > 0)) if shifts else None,
        composition_success_by_label=composition,
        attack_attempted=attack_attempted,
        attack_success_share=attack_success / attack_attempted if attack_attempted else None,
        attack_one_freq_share=one_freq / attack_attempted if attack_attempted else None,
        attack_five_freq_share=five_freq / attack_attempted if attack_attempted else None,
        stft_attempted=stft_attempted,
        stft_success_by_frame=dict(sorted(stft_by_frame.items())),
    )


def write_summary_tables(summary: CorpusSummary, out_dir: str | Path) -> None:
    """summary.json plus CSV tables: sufficiency, composition, attack, STFT."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "summary.json", summary.to_dict())

    lines = ["label,mean_sufficient_pct"]
    lines += [f"{k},{v:.4f}" for k, v in summary.sufficiency_pct_by_label.items()]
    (out_dir / "table_sufficiency.csv").write_text("\n".join(lines) + "\n")

    lines = ["label,success"]
    for label, success in summary.composition_success_by_label.items():
        lines.append(f"{label},{success}")
    (out_dir / "table_composition.csv").write_text("\n".join(lines) + "\n")

    lines = ["attempted,success_share,one_freq_share,five_freq_share"]
    fmt = lambda v: "" if v is None else f"{v:.4f}"
    lines.append(f"{summary.attack_attempted},{fmt(summary.attack_success_share)},"
                 f"{fmt(summary.attack_one_freq_share)},{fmt(summary.attack_five_freq_share)}")
    (out_dir / "table_attack.csv").write_text("\n".join(lines) + "\n")

    lines = ["frame_size,successes"]
    lines += [f"{k},{v}" for k, v in summary.stft_success_by_frame.items()]
    (out_dir / "table_stft.csv").write_text("\n".join(lines) + "\n")

    lines = ["original_label,inverse_label,count"]
    for label, hist in summary.inversion_histogram.items():
        lines += [f"{label},{inv},{n}" for inv, n in hist.items()]
    (out_dir / "table_inversion.csv").write_text("\n".join(lines) + "\n")
