#!/usr/bin/env python3
"""Variance of log|det(H - E)| against region size for heavy-tailed disorder.

Writes variance.csv and variance_summary.json under --out (default runs/variance).
"""

import argparse
import json
import sys
from pathlib import Path

from striplyap.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/variance")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--samples", type=int, default=10_000)
    parser.add_argument("--workers", type=int, default=2)
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "disorder": {
            "density": "cauchy",
            "params": {"scale": 1.0, "cutoff": 1e6},
            "u_law": "adjacency",
            "u_params": {},
        },
        "geometry": {"width": 2, "bandwidth": 1, "columns": 64},
        "energy": 0.0,
        "n_samples": args.samples,
        "seed": args.seed,
        "params": {"columns": [8, 16, 32, 64], "interval": [10.0, 1000.0]},
    }
    cfg_path = out / "config.json"
    cfg_path.write_text(json.dumps(config, indent=1))
    rc = cli_main(
        ["experiment", "variance", "--config", str(cfg_path), "--workers", str(args.workers), "--out", str(out)]
    )
    if rc == 0:
        cli_main(["plot", "--table", str(out / "variance.csv"), "--kind", "fit", "--out", str(out)])
    return rc


if __name__ == "__main__":
    sys.exit(main())
