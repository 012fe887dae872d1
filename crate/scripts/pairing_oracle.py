#!/usr/bin/env python3
"""Exhaustive BLEU-2 top match for every report of fixtures/corpus500.jsonl.

Each report is the reference; every other report is scored as a candidate
with epsilon-smoothed BLEU-2. Ties go to the smaller id. Output:
fixtures/oracle/pairs_prune0.tsv with columns query, match, score.
"""
import json
import math
import re
import sys
from collections import Counter
from pathlib import Path

EPSILON = 1e-9
TOKEN = re.compile(r"\w+|[^\w\s]")


def tokens(text):
    return TOKEN.findall(text.lower())


def ngrams(toks, n):
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


def bleu2(cand, ref, rgrams):
    if not cand:
        return 0.0
    orders = min(2, max(len(ref), len(cand)))
    log_sum = 0.0
    for n in range(1, orders + 1):
        cg = ngrams(cand, n)
        total = sum(cg.values())
        matched = sum(min(k, rgrams[n - 1].get(g, 0)) for g, k in cg.items())
        p = matched / total if matched else EPSILON / max(total, 1)
        log_sum += math.log(p)
    geo = math.exp(log_sum / orders)
    bp = math.exp(1.0 - len(ref) / len(cand)) if len(cand) < len(ref) else 1.0
    return min(1.0, max(0.0, bp * geo))


def main(root):
    root = Path(root)
    docs = {}
    for line in open(root / "corpus500.jsonl"):
        if line.strip():
            r = json.loads(line)
            docs[r["id"]] = tokens(r["text"])
    ids = sorted(docs)
    out = ["query\tmatch\tscore"]
    for q in ids:
        ref = docs[q]
        rg = [ngrams(ref, 1), ngrams(ref, 2)]
        best, best_id = -1.0, None
        for c in ids:
            if c == q:
                continue
            s = bleu2(docs[c], ref, rg)
            if s > best:
                best, best_id = s, c
        out.append(f"{q}\t{best_id}\t{best!r}")
    (root / "oracle").mkdir(exist_ok=True)
    (root / "oracle" / "pairs_prune0.tsv").write_text("\n".join(out) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fixtures")
