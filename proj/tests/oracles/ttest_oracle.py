#!/usr/bin/env python3
"""One-tailed paired t-test reference values from scipy."""
import json
from pathlib import Path

import numpy as np
from scipy import stats

DATA = Path(__file__).resolve().parent.parent / "data"

CASES = [
    ("hand", [0, 0, 0, 0, 0], [1, 2, 3, 4, 5]),
    ("small_gain", [10.0, 12.5, 9.0, 11.0, 13.0, 8.5], [10.5, 13.0, 9.0, 12.0, 13.5, 9.5]),
    ("mixed", [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], [1.5, 1.0, 3.5, 4.5, 4.0, 7.0, 6.5, 9.0]),
    ("loss", [5.0, 6.0, 7.0, 8.0], [4.0, 4.5, 6.0, 6.5]),
]


def main():
    rng = np.random.default_rng(20240611)
    base = rng.uniform(0, 100, 60)
    cand = base + rng.normal(0.8, 3.0, 60)
    cases = CASES + [("random60", base.round(6).tolist(), cand.round(6).tolist())]
    out = []
    for name, b, c in cases:
        greater = stats.ttest_rel(c, b, alternative="greater")
        less = stats.ttest_rel(c, b, alternative="less")
        out.append({"name": name, "baseline": list(map(float, b)), "candidate": list(map(float, c)),
                    "t": float(greater.statistic), "p_greater": float(greater.pvalue),
                    "p_less": float(less.pvalue)})
    (DATA / "ttest_reference.json").write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
