#!/usr/bin/env python3
"""Regenerate the committed golden CSV from configs/fair_coin_calibration.cfg.

Only run this after an intentional change to the golden experiment, and
review the diff before committing: the acceptance suite compares the
runner's output against the committed bytes.
"""

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from opte.config import load_config, run_experiment


def main() -> int:
    cfg = load_config(str(ROOT / "configs" / "fair_coin_calibration.cfg"))
    res = run_experiment(cfg, out_dir="/tmp/opte-golden", jobs=1)
    golden = ROOT / "tests" / "golden" / "fair_coin_calibration.csv"
    new = res.csv_path.read_bytes()
    if golden.exists() and golden.read_bytes() == new:
        print(f"{golden} is already up to date ({len(res.rows)} rows)")
        return 0
    golden.write_bytes(new)
    print(f"rewrote {golden} ({len(res.rows)} rows); review the diff before committing")
    return 0


if __name__ == "__main__":
    sys.exit(main())
