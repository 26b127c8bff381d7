"""Rebuild crates/core/data/yeast.csv from the KEEL imbalanced yeast binaries.

The multi-class UCI Yeast table (1484 rows, 8 features, 10 classes) is
recovered from the one-vs-rest and k-vs-m binary files shipped in the
`keel-ds` package. Classes 1, 3, 4, 5, 6 come straight from the full-size
binaries (yeast1/3/4/5/6). The rest are resolved by intersecting the class
constraints implied by every `yeast-A_vs_B` subset file, keyed on the
7 features those files keep.

    pip download keel-ds --no-deps -d /tmp/dl && unzip /tmp/dl/keel_ds-*.whl -d /tmp/dl/keel
    python scripts/rebuild_yeast.py /tmp/dl/keel/keel_ds/data/imbalanced/raw crates/core/data/yeast.csv
"""

import argparse
import collections
import os
import re
import sys

FULL_BINARIES = [("yeast1.dat", 1), ("yeast3.dat", 5), ("yeast4.dat", 4), ("yeast5.dat", 3), ("yeast6.dat", 6)]
DIRECT = {c for _, c in FULL_BINARIES}
CLASSES = 10


def read(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("@"):
                continue
            parts = [p.strip() for p in line.split(",")]
            rows.append(([float(x) for x in parts[:-1]], parts[-1]))
    return rows


def key7(v):
    return tuple(v[:5] + v[6:]) if len(v) == 8 else tuple(v)


def load_subsets(raw):
    subsets = {}
    for name in sorted(os.listdir(raw)):
        m = re.match(r"yeast-([\d-]+)_vs_([\d-]+)\.dat", name)
        if m:
            neg = set(map(int, m.group(1).split("-")))
            pos = set(map(int, m.group(2).split("-")))
            subsets[name] = (neg, pos, [(key7(v), lab) for v, lab in read(os.path.join(raw, name))])
    return subsets


def allowed_by(neg, pos, labels):
    if not labels:
        return set(range(CLASSES)) - neg - pos
    out = set()
    if "positive" in labels:
        out |= pos
    if "negative" in labels:
        out |= neg
    return out


def resolve(key, subsets):
    allowed = set(range(CLASSES))
    for neg, pos, rows in subsets.values():
        allowed &= allowed_by(neg, pos, {lab for k, lab in rows if k == key})
    allowed -= DIRECT
    if allowed:
        return allowed
    # conflicting files: keep the classes consistent with the most subsets
    score = collections.Counter()
    for neg, pos, rows in subsets.values():
        labels = {lab for k, lab in rows if k == key}
        for c in range(CLASSES):
            score[c] += c in allowed_by(neg, pos, labels)
    best = max(score.values())
    return {c for c in score if score[c] == best} - DIRECT


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("raw", help="directory holding yeast*.dat files")
    ap.add_argument("out", help="output CSV")
    args = ap.parse_args()

    full = read(os.path.join(args.raw, "yeast1.dat"))
    positives = collections.defaultdict(list)
    for name, c in FULL_BINARIES:
        for v, lab in read(os.path.join(args.raw, name)):
            if lab == "positive":
                positives[tuple(v)].append(c)
    subsets = load_subsets(args.raw)

    labels, unresolved = [], 0
    for v, _ in full:
        if positives[tuple(v)]:
            labels.append(positives[tuple(v)].pop(0))
            continue
        c = resolve(key7(v), subsets)
        if len(c) != 1:
            unresolved += 1
        labels.append(min(c))

    with open(args.out, "w") as fh:
        fh.write(",".join(f"f{i}" for i in range(8)) + ",candidates,true\n")
        for (v, _), c in zip(full, labels):
            fh.write(",".join(repr(x) for x in v) + f",{c},{c}\n")
    counts = sorted(collections.Counter(labels).items())
    print(f"wrote {len(labels)} rows, {unresolved} ambiguous, class counts {counts}", file=sys.stderr)


if __name__ == "__main__":
    main()
