"""Sweep a small grid and print the aggregate table.

The same spec dict works with the command line tool:
    gmr benchmark --spec spec.json --out results.jsonl
"""

from gmr import BenchmarkSpec, aggregate, aggregate_columns, iter_records


def main():
    spec = BenchmarkSpec.from_dict({
        "K": 2, "p": 2, "G": 10,
        "n": [100, 400],
        "sigma": [2.0, 6.0],
        "delta_beta": 8.0,
        "n_reps": 10, "restarts": 5, "seed": 123,
    })
    records = list(iter_records(spec))
    failed = sum(1 for r in records if r["error"] is not None)
    print(f"{len(records)} replications, {failed} failed")

    cols = aggregate_columns(spec)
    rows = aggregate(records)
    print(" ".join(f"{c:>10}" for c in cols))
    for row in rows:
        cells = [
            "" if row[c] is None
            else f"{row[c]:.3f}" if isinstance(row[c], float)
            else str(row[c])
            for c in cols
        ]
        print(" ".join(f"{c:>10}" for c in cells))


if __name__ == "__main__":
    main()
