#!/usr/bin/env python3
"""Generate the bundled demo database and run all seven configurations.

Equivalent to `lodsig run --generate-demo`, kept as a script so the
pipeline can be stepped through or modified easily.

Usage: python scripts/run_demo.py [OUTPUT_DIR] [SEED]
"""

import sys
from pathlib import Path

from lodsig.cli import ALGORITHM_IDS, RunManifest, generate, run, summarize


def main() -> int:
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_run")
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 7

    data_dir = out / "data"
    results_dir = out / "results"
    generate(None, data_dir, demo=True, seed=seed)
    manifest = RunManifest(
        database_dir=str(data_dir),
        drugs=["drug_x", "drug_other"],
        algorithms=list(ALGORITHM_IDS),
        output_dir=str(results_dir),
        seed=seed,
        ground_truth=str(data_dir / "ground_truth.csv"))
    status = run(manifest, jobs=1)
    if status:
        return status
    summarize(results_dir)
    print(f"results in {results_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
