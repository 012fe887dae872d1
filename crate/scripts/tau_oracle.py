#!/usr/bin/env python3
"""Brute-force Kendall tau-b for the bundled fixtures.

Writes fixtures/oracle/tau.txt (judge vs rater mean on bench20) and
fixtures/oracle/agree3.tsv (leave-one-out tau per rater on agree3.csv).
Every pair of items is visited directly; no sorting tricks.
"""
import csv
import json
import math
import sys
from pathlib import Path


def sign(v):
    return (v > 0) - (v < 0)


def tau_b(x, y):
    c = d = tx = ty = 0
    n = len(x)
    for i in range(n):
        for j in range(i + 1, n):
            sx = sign(x[i] - x[j])
            sy = sign(y[i] - y[j])
            if sx == 0 and sy == 0:
                continue
            if sx == 0:
                tx += 1
            elif sy == 0:
                ty += 1
            elif sx == sy:
                c += 1
            else:
                d += 1
    ux = c + d + ty
    uy = c + d + tx
    if ux == 0 or uy == 0:
        return None
    t = (c - d) / math.sqrt(float(ux) * float(uy))
    return min(1.0, max(-1.0, t))


def read_totals(path):
    """{(pair_id, rater_id): total count} from a native annotation CSV."""
    out = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            total = sum(int(v) for k, v in row.items() if k not in ("pair_id", "rater_id"))
            out[(row["pair_id"], row["rater_id"])] = total
    return out


def main(root):
    root = Path(root)
    plan = json.load(open(root / "bench20_plan.json"))
    ann = read_totals(root / "bench20_annotations.csv")
    pairs = sorted(p["pair_id"] for p in plan)
    judge = {p["pair_id"]: p["judge_total"] for p in plan}
    means = {}
    for pid in pairs:
        vals = [v for (p, _), v in ann.items() if p == pid]
        means[pid] = sum(vals) / len(vals)
    t = tau_b([float(judge[p]) for p in pairs], [means[p] for p in pairs])
    (root / "oracle").mkdir(exist_ok=True)
    (root / "oracle" / "tau.txt").write_text(repr(t) + "\n")

    ann = read_totals(root / "agree3.csv")
    raters = sorted({r for _, r in ann})
    cases = sorted({p for p, _ in ann})
    lines = ["rater_id\ttau"]
    for r in raters:
        mine = [float(ann[(p, r)]) for p in cases]
        rest = [sum(ann[(p, o)] for o in raters if o != r) / (len(raters) - 1) for p in cases]
        t = tau_b(mine, rest)
        lines.append(f"{r}\t{'' if t is None else repr(t)}")
    (root / "oracle" / "agree3.tsv").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fixtures")
