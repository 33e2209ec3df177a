#!/usr/bin/env python3
"""Regenerate the pinned corpus regression baseline.

Runs the reference configuration over the standard 100-clip synthetic corpus
and records the aggregate summary plus attack flip counts.  The whole
pipeline is deterministic, so the acceptance tests assert exact equality
against the committed file; rerun this script only when an intentional
behaviour change moves the numbers, and commit the diff alongside it.
"""

import json
import tempfile
from pathlib import Path

from freqcause.corpus import gen_corpus
from freqcause.report import analyze, reference_config, summarize

BASELINE = Path(__file__).parent.parent / "tests" / "baselines" / "corpus_baseline.json"


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        corpus = Path(tmp) / "corpus"
        reports = Path(tmp) / "reports"
        manifest = gen_corpus(seed=7, out_dir=corpus, clips_per_class=25)
        outcome = analyze(reference_config((str(corpus),), str(reports)))
        if outcome["errors"]:
            raise RuntimeError(f"analysis errors: {outcome}")
        summary = summarize(reports)

        single_bin = 0
        for path in sorted(reports.glob("*.report.json")):
            attack = json.loads(path.read_text())["fourier_attack"]
            if attack and attack["success"] and attack["n_frequencies"] == 1:
                single_bin += 1

        baseline = {
            "corpus": {
                "seed": 7,
                "clips_per_class": 25,
                "accuracy": manifest["accuracy"],
            },
            "summary": summary.to_dict(),
            "single_bin_flips": single_bin,
        }
    BASELINE.parent.mkdir(parents=True, exist_ok=True)
    BASELINE.write_text(json.dumps(baseline, indent=2, sort_keys=True) + "\n")
    print(f"wrote {BASELINE}")
    print(json.dumps(baseline, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
