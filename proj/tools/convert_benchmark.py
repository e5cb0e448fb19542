#!/usr/bin/env python3
"""Converts public benchmark question files to the question JSONL read by
`spatial-prompt eval`:

  {"question_id", "scene_id", "situation"?, "question", "answers": [...]}

ScanQA:  convert_benchmark.py scanqa ScanQA_v1.0_val.json > val.jsonl
SQA3D:   convert_benchmark.py sqa3d v1_balanced_questions_val_scannetv2.json \
             --annotations v1_balanced_sqa_annotations_val_scannetv2.json > val.jsonl

ScanQA test splits carry no answers; those items are skipped with a count on
stderr.
"""
import argparse
import json
import sys


def scanqa_items(path):
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    for q in data:
        yield {
            "question_id": str(q["question_id"]),
            "scene_id": q["scene_id"],
            "question": q["question"],
            "answers": list(q.get("answers") or []),
        }


def sqa3d_items(questions_path, annotations_path):
    with open(questions_path, encoding="utf-8") as f:
        questions = json.load(f)["questions"]
    with open(annotations_path, encoding="utf-8") as f:
        annotations = json.load(f)["annotations"]
    answers = {a["question_id"]: [x["answer"] for x in a["answers"]] for a in annotations}
    for q in questions:
        yield {
            "question_id": str(q["question_id"]),
            "scene_id": q["scene_id"],
            "situation": q.get("situation"),
            "question": q["question"],
            "answers": answers.get(q["question_id"], []),
        }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dataset", choices=["scanqa", "sqa3d"])
    ap.add_argument("questions")
    ap.add_argument("--annotations", help="SQA3D annotation file")
    ap.add_argument("--out", help="output JSONL (default stdout)")
    args = ap.parse_args(argv)
    if args.dataset == "sqa3d" and not args.annotations:
        ap.error("sqa3d needs --annotations")

    items = scanqa_items(args.questions) if args.dataset == "scanqa" else sqa3d_items(args.questions, args.annotations)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    written = skipped = 0
    try:
        for item in items:
            if not item["answers"]:
                skipped += 1
                continue
            out.write(json.dumps(item, ensure_ascii=False) + "\n")
            written += 1
    finally:
        if args.out:
            out.close()
    print(f"{written} items written, {skipped} without answers skipped", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
