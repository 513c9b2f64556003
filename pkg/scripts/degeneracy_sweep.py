"""Tabulate the perfect-interpretation probability against concept count.

Writes a CSV with one column per error rate and, with --degeneracy, a second
table using mean degeneracy per bit instead of an error rate.
"""
import argparse
from pathlib import Path

from semantic_bell.degeneracy import DEFAULT_ERROR_RATES, DegeneracyModel, p_perfect, sweep_curves


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-max", type=int, default=30)
    ap.add_argument("--c-concept", type=float, default=5.0)
    ap.add_argument("--c-relationship", type=float, default=1.0)
    ap.add_argument("--factorial", action="store_true")
    ap.add_argument("--degeneracy", type=float, nargs="*", default=[], help="mean degeneracy values to tabulate")
    ap.add_argument("--out", default="results/degeneracy_sweep.csv")
    args = ap.parse_args()

    template = DegeneracyModel(1, args.c_concept, args.c_relationship, include_factorial=args.factorial)
    table = sweep_curves(template, range(1, args.n_max + 1), DEFAULT_ERROR_RATES)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.write(out)
    print(f"wrote {out}")
    for row in table.rows():
        print("\t".join(f"{v:.4g}" if isinstance(v, float) else str(v) for v in row))

    if args.degeneracy:
        print("\nN\t" + "\t".join(f"D={d:g}" for d in args.degeneracy))
        for n in range(1, args.n_max + 1):
            ps = [
                p_perfect(DegeneracyModel(n, args.c_concept, args.c_relationship,
                                          mean_degeneracy_per_bit=d, include_factorial=args.factorial))
                for d in args.degeneracy
            ]
            print(f"{n}\t" + "\t".join(f"{p:.4g}" for p in ps))


if __name__ == "__main__":
    main()
