"""Freeze span and scoring goldens computed by the seqeval package.

Usage: python3 tools/gen_seqeval_golden.py crates/core/tests/data
"""
import json
import random
import sys

from seqeval.metrics.sequence_labeling import precision_recall_fscore_support
from seqeval.metrics.sequence_labeling import get_entities

TYPES = ["A", "B", "C", "NAME"]


def random_seq(rng, n):
    out = []
    for _ in range(n):
        p = rng.choice("OOBII")
        out.append("O" if p == "O" else f"{p}-{rng.choice(TYPES)}")
    return out


def main(out_dir):
    rng = random.Random(20240611)
    with open(f"{out_dir}/seqeval_spans.jsonl", "w") as f:
        for _ in range(500):
            labels = random_seq(rng, rng.randint(0, 16))
            spans = sorted([s, e + 1, t] for t, s, e in get_entities(labels))
            f.write(json.dumps({"labels": labels, "spans": spans}) + "\n")

    gold, pred = [], []
    for _ in range(300):
        n = rng.randint(1, 12)
        g = random_seq(rng, n)
        p = [l if rng.random() < 0.7 else random_seq(rng, 1)[0] for l in g]
        gold.append(g)
        pred.append(p)
    labels = sorted({t for seq in gold + pred for t, _, _ in get_entities(seq)})
    p, r, f, s = precision_recall_fscore_support(gold, pred, average=None, zero_division=0)
    mp, mr, mf, _ = precision_recall_fscore_support(gold, pred, average="micro", zero_division=0)
    per_type = {
        t: {"precision": float(p[i]), "recall": float(r[i]), "f1": float(f[i]), "support": int(s[i])}
        for i, t in enumerate(labels)
    }
    with open(f"{out_dir}/seqeval_pairs.jsonl", "w") as fh:
        for i, (g, q) in enumerate(zip(gold, pred)):
            fh.write(json.dumps({"id": f"r{i}", "gold": g, "pred": q}) + "\n")
    with open(f"{out_dir}/seqeval_scores.json", "w") as fh:
        json.dump({"micro": {"precision": float(mp), "recall": float(mr), "f1": float(mf)},
                   "per_type": per_type}, fh, indent=1, sort_keys=True)
        fh.write("\n")


if __name__ == "__main__":
    main(sys.argv[1])
