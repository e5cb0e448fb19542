#!/usr/bin/env python3
"""Builds synthetic training sets with known answer frequencies and renders the
expected few-shot annotations independently of the C++ code.

  answer_bank.py          writes tests/fixtures/answer_bank/{scanqa,sqa3d}_train.jsonl
                          and the matching *_annotation.txt goldens
  answer_bank.py --check  regenerates in memory and compares with the files
"""
import json
import pathlib
import random
import re
import sys

OUT = pathlib.Path(__file__).resolve().parent.parent / "fixtures" / "answer_bank"
TOP = 20

# (type, question templates, [(answer, count), ...])
SCANQA = [
    ("where", ["Where is the {}?", "where are the {} located?"],
     [("against wall", 9), ("on desk", 7), ("in corner", 7), ("under window", 3), ("left", 1)]),
    ("how_many", ["How many {} are there?", "how many {} are in the room?"],
     [("2", 14), ("3", 11), ("4", 8), ("1", 8), ("5", 4), ("6", 2), ("4 chairs", 1)]),
    ("what_color", ["What color is the {}?", "What is the color of the {}?"],
     [(c, n) for c, n in zip(
         ["white", "brown", "black", "blue", "grey", "red", "tan", "light brown", "gray", "beige", "green",
          "dark brown", "silver", "yellow", "orange", "black and white", "purple", "pink", "cream", "navy",
          "teal", "maroon", "olive", "gold"],
         [26, 22, 20, 18, 15, 13, 12, 12, 10, 9, 8, 7, 6, 6, 5, 4, 3, 3, 2, 2, 2, 2, 1, 1])]),
    ("what_shape", ["What shape is the {}?", "What type of {} is it?", "What kind of {} is this?"],
     [("rectangular", 6), ("rectangle", 6), ("square", 4), ("round", 2), ("oval", 1)]),
    ("what_is", ["What is on the {}?", "What is next to the {}?"],
     [("chair", 10), ("table", 8), ("trash can", 5), ("window", 5), ("desk", 2)]),
    ("others", ["Which side of the {} is the door?", "Is the {} open?", "Describe the {}."],
     [("right", 8), ("left", 8), ("table", 4), ("right side", 3), ("yes", 2)]),
]

SQA3D = [
    ("what", ["What is in front of the {}?"], [("table", 7), ("brown", 5), ("white", 5), ("chair", 2)]),
    ("is", ["Is the {} open?", "is the {} on my left?"], [("yes", 12), ("no", 11), ("even", 2)]),
    ("how", ["How many {} can I see?"], [("one", 6), ("two", 6), ("three", 3)]),
    ("can", ["Can I reach the {}?"], [("yes", 4), ("no", 4)]),
    ("which", ["Which direction is the {}?"], [("right", 5), ("left", 4), ("backward", 4), ("forward", 1)]),
    ("others", ["Do I face the {}?", "Am I near the {}?"], [("yes", 3), ("true", 2)]),
]

OBJECTS = ["chair", "sofa", "bed", "desk", "lamp", "door", "window", "cabinet", "sink", "tv"]

SCANQA_LABELS = {"where": "Where", "how_many": "How many", "what_color": "What color, What is the color",
                 "what_shape": "What shape, What type, What kind", "what_is": "What is", "others": "others"}
SQA3D_LABELS = {"what": "What", "is": "Is", "how": "How", "can": "Can", "which": "Which", "others": "Others"}


def make_items(table, dataset, seed):
    rng = random.Random(seed)
    pairs = []
    for qtype, templates, answers in table:
        for answer, count in answers:
            for _ in range(count):
                pairs.append((qtype, rng.choice(templates).format(rng.choice(OBJECTS)), answer))
    rng.shuffle(pairs)
    items = []
    for i, (_, question, answer) in enumerate(pairs):
        # sprinkle padding that must be trimmed
        ref = answer if i % 7 else "  " + answer + " "
        item = {"question_id": f"{dataset}_{i:04d}", "scene_id": f"scene{i % 5:04d}_00",
                "question": question, "answers": [ref]}
        if dataset == "sqa3d":
            item["situation"] = "I am standing by the window."
        items.append(item)
    return items


def classify(question, dataset):
    q = question.strip().lower()
    if dataset == "scanqa":
        for qtype, pattern in [("where", r"where"), ("how_many", r"how many"),
                               ("what_color", r"what color|what is the color"),
                               ("what_shape", r"what shape|what type|what kind"), ("what_is", r"what is")]:
            if re.match(pattern, q):
                return qtype
        return "others"
    first = re.match(r"[a-z]*", q).group(0)
    return first if first in ("what", "is", "how", "can", "which") else "others"


def render(items, dataset):
    labels = SCANQA_LABELS if dataset == "scanqa" else SQA3D_LABELS
    seen = {}
    order = 0
    for item in items:
        qtype = classify(item["question"], dataset)
        for ref in item["answers"]:
            a = ref.strip()
            if not a:
                continue
            count, first = seen.get((qtype, a), (0, order))
            seen[(qtype, a)] = (count + 1, first)
            order += 1
    if dataset == "scanqa":
        text = "Note that the answer for the question is as short as possible such as:"
    else:
        text = "Note that the answer for the question based on the situation is as short as possible such as:"
    for qtype, label in labels.items():
        ranked = sorted(((c, f, a) for (t, a), (c, f) in seen.items() if t == qtype), key=lambda x: (-x[0], x[1]))
        if not ranked:
            continue
        text += f"\n\nIf question is start with {label}\nExample of answers:"
        text += "".join(f" {a}," for _, _, a in ranked[:TOP])
    return text


def outputs():
    files = {}
    for dataset, table, seed in [("scanqa", SCANQA, 31), ("sqa3d", SQA3D, 32)]:
        items = make_items(table, dataset, seed)
        files[f"{dataset}_train.jsonl"] = "".join(json.dumps(i) + "\n" for i in items)
        files[f"{dataset}_annotation.txt"] = render(items, dataset)
    return files


def main():
    files = outputs()
    if "--check" in sys.argv:
        bad = [name for name, text in files.items() if (OUT / name).read_text() != text]
        for name in bad:
            print(f"mismatch: {name}")
        sys.exit(1 if bad else 0)
    OUT.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (OUT / name).write_text(text)
    print(f"wrote {len(files)} files to {OUT}")


if __name__ == "__main__":
    main()
