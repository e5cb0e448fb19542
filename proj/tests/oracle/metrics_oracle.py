#!/usr/bin/env python3
"""Second implementation of EM@1 / BLEU-1..4 / ROUGE-L used to freeze the
aggregates of the 50-item metrics fixture.

  metrics_oracle.py          writes tests/fixtures/metrics/expected.json
  metrics_oracle.py --check  recomputes and compares with the frozen file
"""
import json
import math
import pathlib
import sys
from collections import Counter

HERE = pathlib.Path(__file__).resolve().parent
ITEMS = HERE.parent / "fixtures" / "metrics" / "items50.jsonl"
EXPECTED = HERE.parent / "fixtures" / "metrics" / "expected.json"
ROUGE_BETA = 1.2


def norm(s):
    return " ".join(s.lower().split())


def toks(s):
    return norm(s).split()


def em(pred, refs):
    return 1 if any(norm(pred) == norm(r) for r in refs) else 0


def lcs(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            table[i + 1][j + 1] = table[i][j] + 1 if x == y else max(table[i][j + 1], table[i + 1][j])
    return table[-1][-1]


def rouge_l(pred, refs):
    p = toks(pred)
    scores = [0.0]
    for r in refs:
        t = toks(r)
        if not p or not t:
            continue
        l = lcs(p, t)
        if l == 0:
            continue
        prec, rec = l / len(p), l / len(t)
        scores.append((1 + ROUGE_BETA ** 2) * prec * rec / (rec + ROUGE_BETA ** 2 * prec))
    return max(scores)


def grams(t, n):
    return Counter(tuple(t[i:i + n]) for i in range(len(t) - n + 1))


def bleu(pred, refs, n):
    if em(pred, refs):
        return 1.0
    c = toks(pred)
    rs = [toks(r) for r in refs]
    if not c:
        return 0.0
    logs = 0.0
    for k in range(1, n + 1):
        cand = grams(c, k)
        maxref = Counter()
        for r in rs:
            maxref |= grams(r, k)
        matched = sum(min(cnt, maxref[g]) for g, cnt in cand.items())
        total = sum(cand.values())
        if total == 0 or matched == 0:
            return 0.0
        logs += math.log(matched / total)
    ref_len = min((abs(len(r) - len(c)), len(r)) for r in rs)[1]
    bp = 1.0 if len(c) >= ref_len else math.exp(1 - ref_len / len(c))
    return bp * math.exp(logs / n)


def compute():
    rows = [json.loads(line) for line in ITEMS.read_text().splitlines() if line.strip()]
    per_item = []
    for row in rows:
        p, refs = row["prediction"], row["references"]
        per_item.append({"id": row["id"], "em": em(p, refs), "bleu": [bleu(p, refs, n) for n in range(1, 5)],
                         "rouge_l": rouge_l(p, refs)})
    n = len(per_item)
    agg = {"em": sum(x["em"] for x in per_item) / n,
           "bleu": [sum(x["bleu"][k] for x in per_item) / n for k in range(4)],
           "rouge_l": sum(x["rouge_l"] for x in per_item) / n}
    return {"count": n, "aggregate": agg, "items": per_item}


def main():
    doc = compute()
    if "--check" in sys.argv:
        frozen = json.loads(EXPECTED.read_text())
        a, b = doc["aggregate"], frozen["aggregate"]
        ok = (abs(a["em"] - b["em"]) < 1e-12 and abs(a["rouge_l"] - b["rouge_l"]) < 1e-12
              and all(abs(x - y) < 1e-12 for x, y in zip(a["bleu"], b["bleu"])))
        print("metrics oracle", "matches" if ok else "DIFFERS")
        return 0 if ok else 1
    EXPECTED.write_text(json.dumps(doc, indent=2) + "\n")
    print(json.dumps(doc["aggregate"], indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
