"""Filter-design cost against the virtual dimension J.

    python scripts/complexity.py [--dims 20 40 80 160]

Prints the cubic operation-count model next to the measured time per
filter-bank design (one Cholesky factorization plus K solves).
"""
import argparse

from sramimo.metrics import complexity_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", type=int, nargs="+", default=[20, 40, 80, 160, 320])
    ap.add_argument("--users", type=int, default=8)
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args()

    print(f"{'J':>5} {'J^3':>10} {'model flops':>12} {'us/design':>10} {'ratio':>6}")
    prev = None
    for J in args.dims:
        # keep each batch around a few tens of milliseconds
        number = max(3, int(2e4 / J ** 1.5))
        r = complexity_report(J, K=args.users, repeats=args.repeats, number=number)
        t = r["seconds_per_design"]
        ratio = f"{t / prev:6.2f}" if prev else ""
        print(f"{J:5d} {r['cubic_term']:10d} {r['predicted_flops']:12.3g} {t * 1e6:10.1f} {ratio}")
        prev = t


if __name__ == "__main__":
    main()
