"""Regularization paths on the diabetes data with the 3-group split.

Exports scikit-learn's copy of the data to CSV plus a group config, runs
``grpkmax path`` and prints the sparsity and CV error of each method.

    python3 scripts/diabetes_path.py --out runs/diabetes
"""
import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_diabetes

from grpkmax.cli import main

COLUMNS = ["age", "sex", "bmi", "bp", "s1", "s2", "s3", "s4", "s5", "s6"]
GROUPS = {
    "response": "target",
    "groups": [
        {"name": "demographics", "columns": ["age", "sex"]},
        {"name": "body", "columns": ["bmi", "bp"]},
        {"name": "serum", "columns": COLUMNS[4:]},
    ],
}


def export(root):
    raw = load_diabetes(scaled=False)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "diabetes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS + ["target"])
        w.writerows(np.column_stack([raw.data, raw.target]).tolist())
    (root / "groups.json").write_text(json.dumps(GROUPS, indent=2))
    return root / "diabetes.csv", root / "groups.json"


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs/diabetes")
    args, extra = parser.parse_known_args()
    root = Path(args.out)
    data, groups = export(root / "data")
    code = main(["path", "--data", str(data), "--groups", str(groups), "--out", str(root / "path"), *extra])
    if code:
        sys.exit(code)
    with open(root / "path" / "path.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for method in dict.fromkeys(r["method"] for r in rows):
        sub = [r for r in rows if r["method"] == method]
        best = min(sub, key=lambda r: float(r["cv_error"] or "inf"))
        chosen = [c[5:] for c in best if c.startswith("coef:") and float(best[c]) != 0.0]
        print(f"{method:<18} nnz {sub[-1]['nnz_overall']}->{sub[0]['nnz_overall']} as lambda grows  "
              f"best CV {float(best['cv_error'] or 'nan'):.1f} at lambda {float(best['lambda']):.4g}  "
              f"selected {', '.join(chosen)}")
