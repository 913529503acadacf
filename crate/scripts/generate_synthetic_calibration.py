#!/usr/bin/env python3
"""Generate the bundled synthetic solvency calibration and correlation matrix.

The proprietary net-risk sensitivities, offsets, aggregation constants and the
asset correlation matrix behind the example universe are not public. This
script produces stand-ins so the whole pipeline runs end to end. It was run
once and its output committed under data/; the build never re-runs it.

    python3 scripts/generate_synthetic_calibration.py data/

Only the standard library is used so the output is reproducible from the seed.

Net-risk rows are modelled as remaining stress buffers: row r equals
offset[r] - sum_i loss[r][i] * w[i], so larger values mean more headroom and
the solvency ratio grows with the aggregated buffer. The per-asset losses are
nominal stress factors perturbed by a seeded uniform draw. The constants
c2 and c5 are then fitted so that single-asset portfolios span roughly the
95%-227% solvency band.
"""

import math
import random
import sys
from pathlib import Path

SEED = 20_210_412

ASSETS = [
    "Real Estate Germany",
    "Real Estate Intl.",
    "Equity Intl. Large Cap",
    "Equity Germany Large Cap",
    "Equity Intl. Small Cap",
    "Emerging Markets Equities",
    "Private Equity",
    "Government Debt",
    "Corporate Debt",
    "Infrastructure Finance",
    "Fixed Income",
    "Asset Backed Securities",
    "Cash",
]

RISKS = [
    "interest_up",
    "interest_down",
    "equity_type1",
    "equity_type2",
    "property",
    "spread",
    "currency_up",
    "currency_down",
]

# nominal stress losses per unit weight, by risk type (absent = 0); negative
# entries are gains, e.g. long bonds matching liability duration
NOMINAL = {
    "Real Estate Germany": {"property": 0.25},
    "Real Estate Intl.": {"property": 0.25, "currency_up": 0.20, "currency_down": 0.15},
    "Equity Intl. Large Cap": {"equity_type1": 0.39, "currency_up": 0.20, "currency_down": 0.15},
    "Equity Germany Large Cap": {"equity_type1": 0.39},
    "Equity Intl. Small Cap": {"equity_type1": 0.39, "currency_up": 0.20, "currency_down": 0.15},
    "Emerging Markets Equities": {"equity_type2": 0.49, "currency_up": 0.25, "currency_down": 0.20},
    "Private Equity": {"equity_type2": 0.49, "currency_up": 0.08, "currency_down": 0.06},
    "Government Debt": {"interest_up": -0.06, "interest_down": -0.04},
    "Corporate Debt": {"interest_up": 0.05, "interest_down": -0.03, "spread": 0.08},
    "Infrastructure Finance": {"interest_up": 0.03, "spread": 0.10},
    "Fixed Income": {"interest_up": -0.04, "interest_down": -0.03, "spread": 0.02},
    "Asset Backed Securities": {"interest_up": 0.02, "spread": 0.06},
    "Cash": {},
}

OFFSETS = [0.20, 0.05, 0.45, 0.55, 0.30, 0.14, 0.30, 0.10]

C1 = 0.02
C3 = 0.05
C4 = 0.01

# factor loadings: equity, property, rates, credit
LOADINGS = {
    "Real Estate Germany": (0.35, 0.65, 0.0, 0.0),
    "Real Estate Intl.": (0.45, 0.60, 0.0, 0.0),
    "Equity Intl. Large Cap": (0.90, 0.0, 0.0, 0.0),
    "Equity Germany Large Cap": (0.85, 0.0, 0.0, 0.0),
    "Equity Intl. Small Cap": (0.85, 0.0, 0.0, 0.0),
    "Emerging Markets Equities": (0.75, 0.0, 0.0, 0.0),
    "Private Equity": (0.70, 0.0, 0.0, 0.0),
    "Government Debt": (-0.10, 0.0, 0.80, 0.0),
    "Corporate Debt": (0.15, 0.0, 0.55, 0.50),
    "Infrastructure Finance": (0.20, 0.0, 0.30, 0.40),
    "Fixed Income": (0.0, 0.0, 0.75, 0.20),
    "Asset Backed Securities": (0.0, 0.0, 0.40, 0.50),
    "Cash": (0.0, 0.0, 0.0, 0.0),
}

P_HALF = [
    [1.0, 0.5, 0.5, 0.5, 0.25],
    [0.5, 1.0, 0.75, 0.75, 0.25],
    [0.5, 0.75, 1.0, 0.5, 0.25],
    [0.5, 0.75, 0.5, 1.0, 0.25],
    [0.25, 0.25, 0.25, 0.25, 1.0],
]
P_ZERO = [
    [1.0, 0.0, 0.0, 0.0, 0.25],
    [0.0, 1.0, 0.75, 0.75, 0.25],
    [0.0, 0.75, 1.0, 0.5, 0.25],
    [0.0, 0.75, 0.5, 1.0, 0.25],
    [0.25, 0.25, 0.25, 0.25, 1.0],
]


def quad(p, x):
    return sum(x[i] * p[i][j] * x[j] for i in range(5) for j in range(5))


def market(matrix, offsets, w):
    x = [offsets[r] + sum(matrix[r][i] * w[i] for i in range(len(w))) for r in range(8)]
    eq = math.sqrt(max(x[2] ** 2 + 1.5 * x[2] * x[3] + x[3] ** 2, 0.0))
    agg = [max(x[0], x[1]), eq, x[4], x[5], max(x[6], x[7])]
    return math.sqrt(max(quad(P_ZERO, agg), quad(P_HALF, agg)) + C1 * C1)


def shape(m):
    return math.sqrt(m * m + C3 * m + C4)


def main(out_dir):
    rng = random.Random(SEED)
    # sensitivities = -loss, perturbed by +-20%
    matrix = [[0.0] * len(ASSETS) for _ in RISKS]
    for i, name in enumerate(ASSETS):
        for r, risk in enumerate(RISKS):
            loss = NOMINAL[name].get(risk, 0.0)
            if loss != 0.0:
                loss *= rng.uniform(0.8, 1.2)
            matrix[r][i] = -round(loss, 6)

    n = len(ASSETS)
    vertices = [[1.0 if j == i else 0.0 for j in range(n)] for i in range(n)]
    values = [shape(market(matrix, OFFSETS, v)) for v in vertices]
    lo, hi = min(values), max(values)
    c2 = (2.266 - 0.953) / (hi - lo)
    c5 = 0.953 - c2 * lo

    out = Path(out_dir)
    lines = [
        "# SYNTHETIC calibration for the bundled 13-asset example universe.",
        "# Generated by scripts/generate_synthetic_calibration.py with seed %d." % SEED,
        "# These are NOT the proprietary values of any insurer; they only make the",
        "# solvency objective runnable end to end. Net-risk rows are remaining stress",
        "# buffers (offset + sensitivities . w); rows are ordered interest_up,",
        "# interest_down, equity_type1, equity_type2, property, spread, currency_up,",
        "# currency_down.",
        'label = "synthetic-calibration"',
        'provenance = "seeded synthetic draw (seed %d); not published market data"' % SEED,
        "c1 = %r" % C1,
        "c2 = %r" % round(c2, 10),
        "c3 = %r" % C3,
        "c4 = %r" % C4,
        "c5 = %r" % round(c5, 10),
        "offsets = [%s]" % ", ".join(repr(v) for v in OFFSETS),
        "sensitivities = [",
    ]
    for r, risk in enumerate(RISKS):
        row = ", ".join(repr(v + 0.0) for v in matrix[r])
        lines.append("    [%s], # %s" % (row, risk))
    lines.append("]")
    (out / "synthetic_calibration.toml").write_text("\n".join(lines) + "\n")

    corr = [[0.0] * n for _ in range(n)]
    for i, a in enumerate(ASSETS):
        for j, b in enumerate(ASSETS):
            if i == j:
                corr[i][j] = 1.0
            else:
                corr[i][j] = round(sum(x * y for x, y in zip(LOADINGS[a], LOADINGS[b])), 4)
    rows = [",".join('"%s"' % a if "," in a else a for a in ASSETS)]
    for i in range(n):
        rows.append(",".join("%.4f" % v for v in corr[i]))
    (out / "synthetic_correlation.csv").write_text("\n".join(rows) + "\n")

    print("vertex solvency ratios:")
    for name, v in zip(ASSETS, values):
        print("  %-28s %.4f" % (name, c2 * v + c5))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data")
