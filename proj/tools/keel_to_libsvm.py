#!/usr/bin/env python3
"""Convert a KEEL .dat classification file into sparse libsvm text.

Usage: keel_to_libsvm.py INPUT.dat OUTPUT.libsvm

Non-numeric class labels are mapped to 1..L in order of first appearance.
Zero-valued features are omitted, as libsvm writers usually do.
"""
import sys


def main(src, dst):
    labels = {}
    out = []
    with open(src) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("@"):
                continue
            fields = [f.strip() for f in line.split(",")]
            raw_label = fields[-1]
            try:
                label = int(raw_label)
            except ValueError:
                label = labels.setdefault(raw_label, len(labels) + 1)
            feats = []
            for j, v in enumerate(fields[:-1], start=1):
                value = float(v)
                if value != 0.0:
                    feats.append(f"{j}:{value:g}")
            out.append(" ".join([str(label)] + feats))
    with open(dst, "w") as fh:
        fh.write("\n".join(out) + "\n")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
