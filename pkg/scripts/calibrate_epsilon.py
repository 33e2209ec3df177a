"""Calibrate the default EMD stopping threshold on the synthetic corpus.

Runs the accumulation loop with the stop disabled (epsilon below any
observable value) and a full iteration budget, then reports per-clip EMD
traces and their minima.  The default epsilon must satisfy two pulls:

  * every corpus clip's trace must reach it within the iteration budget,
    i.e. epsilon >= max over clips of min(trace);
  * it should not fire in the first couple of iterations, or maps would be
    too noisy to rank bins (stop iteration >= 4 preferred).

The EMD here is in units of bins (unit ground distance), so the threshold
scales with spectrum size; this calibration is for 3 s of audio at 8 kHz
(12001 bins).  Run: python3 scripts/calibrate_epsilon.py [corpus_dir]
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from freqcause.corpus import gen_corpus
from freqcause.report import _file_seed
from freqcause.responsibility import PartitionConfig, accumulate
from freqcause.classifier import BuiltinClassifier
from freqcause.signals import forward, load_wav

CLIPS_PER_CLASS = 3
ITERATIONS = 20
RUN_SEED = 7


def main() -> None:
    if len(sys.argv) > 1:
        corpus_dir = Path(sys.argv[1])
    else:
        corpus_dir = Path(tempfile.mkdtemp(prefix="epsilon_corpus_"))
        gen_corpus(seed=RUN_SEED, out_dir=corpus_dir, clips_per_class=CLIPS_PER_CLASS)
    clips = sorted(corpus_dir.glob("*.wav"))
    print(f"# corpus: {corpus_dir} ({len(clips)} clips), "
          f"iterations={ITERATIONS}, stop disabled")

    minima = []
    handle = BuiltinClassifier()
    for path in clips:
        spectrum = forward(load_wav(path))
        config = PartitionConfig(iterations=ITERATIONS, epsilon=1e-12,
                                 seed=_file_seed(RUN_SEED, path.name))
        rmap = accumulate(handle, spectrum, config)
        trace = np.asarray(rmap.emd_trace[1:])  # first entry is the +inf placeholder
        minima.append(trace.min())
        print(f"{path.name}: min={trace.min():7.2f} at iter {trace.argmin() + 2:2d}  "
              f"median={np.median(trace):7.2f}  "
              f"trace={[round(float(v), 1) for v in trace]}")

    minima = np.asarray(minima)
    print(f"\n# min-trace distribution: max={minima.max():.2f} "
          f"median={np.median(minima):.2f} min={minima.min():.2f}")
    candidate = float(np.ceil(minima.max() / 5.0) * 5.0)
    print(f"# candidate epsilon (max of minima, rounded up to 5): {candidate}")

    for eps in (candidate, candidate * 1.25, candidate * 1.5):
        stops = []
        for path in clips:
            spectrum = forward(load_wav(path))
            config = PartitionConfig(iterations=ITERATIONS, epsilon=eps,
                                     seed=_file_seed(RUN_SEED, path.name))
            rmap = accumulate(handle, spectrum, config)
            stops.append(rmap.iterations_run)
        converged = sum(1 for path, s in zip(clips, stops) if s < ITERATIONS)
        print(f"# eps={eps:6.1f}: stop iterations {stops} "
              f"(converged early: {converged}/{len(clips)})")


if __name__ == "__main__":
    main()
