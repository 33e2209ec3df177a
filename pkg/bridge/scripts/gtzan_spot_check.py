"""Run the full analysis pipeline against a real pretrained checkpoint.

Serves the checkpoint over the bridge, analyzes a directory of wav clips
through the engine CLI, and writes the summary CSV tables.  Needs network
access (or a local cache) for the model weights.

    python3 scripts/gtzan_spot_check.py --audio-dir /data/gtzan_wav \
        --model hf:sanchit-gandhi/distilhubert-finetuned-gtzan --out spot_check
"""

import argparse
import subprocess
import sys
from pathlib import Path


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--audio-dir", required=True, help="directory of wav clips")
    parser.add_argument("--model", default="hf:sanchit-gandhi/distilhubert-finetuned-gtzan",
                        help="any hf:<audio-classification checkpoint>")
    parser.add_argument("--out", default="spot_check")
    parser.add_argument("--clips", type=int, default=20)
    parser.add_argument("--max-depth", type=int, default=2)
    parser.add_argument("--iterations", type=int, default=2)
    parser.add_argument("--device", default=None)
    args = parser.parse_args()

    clips = sorted(Path(args.audio_dir).glob("*.wav"))[:args.clips]
    if len(clips) < args.clips:
        print(f"error: found only {len(clips)} wav clips in {args.audio_dir}",
              file=sys.stderr)
        return 2

    endpoint = f"cmd:{sys.executable} -m model_bridge --model {args.model}"
    if args.device:
        endpoint += f" --device {args.device}"
    out = Path(args.out)
    reports, tables = out / "reports", out / "tables"

    freqcause = [sys.executable, "-m", "freqcause"]
    subprocess.run([*freqcause, "analyze", *map(str, clips), "--model", endpoint,
                    "--out", str(reports), "--seed", "7",
                    "--max-depth", str(args.max_depth),
                    "--iterations", str(args.iterations)], check=True)
    subprocess.run([*freqcause, "summarize", str(reports), "--out", str(tables)],
                   check=True)

    print(f"\nreports: {reports}")
    for table in sorted(tables.glob("table_*.csv")):
        print(f"\n== {table.name} ==")
        print(table.read_text())
    return 0


if __name__ == "__main__":
    sys.exit(main())
