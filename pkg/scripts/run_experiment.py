"""Run every pipeline command on one config and print the text reports.

    python scripts/run_experiment.py fixtures/mixed/config.json [--override retrieval.k=32 ...]
"""

import argparse
import sys
import time
from pathlib import Path

from hybridel.cli import COMMANDS, main as cli_main
from hybridel.config import load_config

REPORTS = ("report.txt", "disambig.txt", "ablation.txt")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("config")
    ap.add_argument("--override", action="append", default=[])
    ap.add_argument("--skip", action="append", default=[], choices=COMMANDS)
    args = ap.parse_args()

    extra = [x for o in args.override for x in ("--override", o)]
    for command in COMMANDS:
        if command in args.skip:
            continue
        t0 = time.perf_counter()
        code = cli_main(["--config", args.config, "--command", command, *extra])
        print(f"{command:<15} exit {code}  {time.perf_counter() - t0:6.2f}s", file=sys.stderr)
        if code:
            return code
    out = Path(load_config(args.config, args.override).paths.output_dir)
    for name in REPORTS:
        if (out / name).exists():
            print((out / name).read_text(encoding="utf-8"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
