"""Uncoded OSIC and linear MMSE bit-error rate versus SNR, K=8 users.

    python scripts/run_fig3.py --out results/fig3 [--trials N] [--workers W]

Writes one CSV/JSON/gnuplot file per array, then prints paired comparisons
for every metric and checks the expected OSIC orderings.
"""
import argparse
from pathlib import Path

from sramimo.cli import main as cli

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "fig3.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/fig3")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--mode", choices=["exact", "sample"])
    args = ap.parse_args()

    argv = ["sweep", "--config", str(CONFIG), "--out", args.out]
    for flag in ("trials", "workers", "mode"):
        if getattr(args, flag) is not None:
            argv += [f"--{flag}", str(getattr(args, flag))]
    code = cli(argv)
    if code:
        return code
    out = Path(args.out)
    files = [str(out / f"{s}.json") for s in ("tlna-4-4", "cpa-5-2", "ula-16")]
    expect = CONFIG.with_name("fig3_expectations.json")
    return cli(["compare", *files, "--metric", "all", "--expect", str(expect)])


if __name__ == "__main__":
    raise SystemExit(main())
