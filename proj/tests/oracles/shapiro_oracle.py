"""Freezes reference Shapiro-Wilk (W, p) values for the unit and acceptance tests.

Samples come from numpy's seeded generator; W and p come from scipy.stats.shapiro
(an independent AS R94 implementation). Rerun only if the sample recipe changes:

    python3 tests/oracles/shapiro_oracle.py > tests/data/shapiro_oracle.json
"""
import json
import sys

import numpy as np
from scipy import stats


def main():
    rng = np.random.default_rng(20240611)
    cases = []
    for i in range(50):
        fixed = (3, 4, 5, 6, 7, 11, 12)
        n = fixed[i] if i < len(fixed) else int(rng.integers(3, 120))
        kind = ("uniform", "normal", "exponential")[i % 3]
        if kind == "uniform":
            x = rng.uniform(0.0, 20.0, n)
        elif kind == "normal":
            x = rng.normal(15.0, 4.0, n)
        else:
            x = rng.exponential(3.0, n)
        w, p = stats.shapiro(x)
        cases.append({"kind": kind, "values": [float(v) for v in x], "W": float(w), "p": float(p)})
    # dedicated fixture: one seeded uniform sample of size 50
    x = np.random.default_rng(50).uniform(0.0, 1.0, 50)
    w, p = stats.shapiro(x)
    uniform50 = {"values": [float(v) for v in x], "W": float(w), "p": float(p)}
    json.dump({"cases": cases, "uniform_n50": uniform50}, sys.stdout, indent=1)


if __name__ == "__main__":
    main()
