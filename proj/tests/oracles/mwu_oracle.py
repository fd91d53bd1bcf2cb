"""Freezes reference Mann-Whitney U values for the unit tests.

Exact p-values come from scipy's exact null distribution (tie-free samples
only); asymptotic p-values use scipy's tie-corrected normal approximation with
continuity correction. Regenerate with:

    python3 tests/oracles/mwu_oracle.py > tests/data/mwu_oracle.json
"""
import json
import sys

import numpy as np
from scipy import stats


def main():
    rng = np.random.default_rng(7)
    cases = []
    for i in range(40):
        na = int(rng.integers(1, 9))
        nb = int(rng.integers(1, 9))
        tied = i % 2 == 1
        if tied:
            a = rng.integers(0, 6, na).astype(float)
            b = rng.integers(0, 6, nb).astype(float)
        else:
            a = rng.normal(0.0, 1.0, na) + (0.8 if i % 4 == 0 else 0.0)
            b = rng.normal(0.0, 1.0, nb)
        if np.ptp(np.concatenate([a, b])) == 0:
            continue
        asym = stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
        case = {"a": [float(v) for v in a], "b": [float(v) for v in b], "U_a": float(asym.statistic),
                "p_normal": float(asym.pvalue)}
        if not tied:
            case["p_exact"] = float(stats.mannwhitneyu(a, b, alternative="two-sided", method="exact").pvalue)
        cases.append(case)
    json.dump({"cases": cases}, sys.stdout, indent=1)


if __name__ == "__main__":
    main()
