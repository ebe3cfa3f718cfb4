"""Merge the per-generator oracle files into tests/data/reference_values.json.

Run from the repository root after regenerating either source file:

    python3 tests/oracles/merge_oracles.py

Keys from special_oracles.json land at the top level; the simulation
references from mc_oracles.json land under "mc".
"""

import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, os.pardir, "data")


def main():
    with open(os.path.join(DATA, "special_oracles.json")) as fh:
        merged = json.load(fh)
    with open(os.path.join(DATA, "mc_oracles.json")) as fh:
        merged["mc"] = json.load(fh)
    out = os.path.join(DATA, "reference_values.json")
    with open(out, "w") as fh:
        json.dump(merged, fh, indent=1)
        fh.write("\n")
    print("wrote", os.path.normpath(out))


if __name__ == "__main__":
    main()
