#!/usr/bin/env python3
"""Run the full pipeline on the bundled fixture episodes and print a digest.

Usage: python3 scripts/run_fixture_pipeline.py [OUT_DIR]
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from convgain.config import load_config
from convgain.pipeline import run_pipeline

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "out"
    config = load_config(ROOT / "fixtures" / "run_config.yaml", out_dir=out_dir)
    manifest = run_pipeline(config)
    print(f"run {manifest.run_id} -> {out_dir}")
    for stage, entry in manifest.stages.items():
        calls = sum(entry["provider_calls"].values())
        print(f"  {stage:<12} {entry['wall_seconds']:.2f}s  {calls} provider calls")
    stats = json.loads((out_dir / "stats" / "stats.json").read_text())
    top = sorted(
        stats["correlations"].items(), key=lambda kv: -kv[1]["abs_r"]
    )[:5]
    print("top feature correlations with the human soft label:")
    for feature, cell in top:
        print(f"  {feature:<28} r={cell['r']:+.3f}")


if __name__ == "__main__":
    main()
