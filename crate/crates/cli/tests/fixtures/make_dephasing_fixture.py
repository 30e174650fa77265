"""Writes the dephasing fixture and its golden values.

The states cos^2(t/2)|+><+| + sin^2(t/2)|-><-| commute, so the optimal
measurement is diagonal in the +/- basis and both optima are classical:
the Bayesian value by brute force over deterministic strategies, the
minimax value by a linear program.
"""
import itertools
import json
import math
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

N = 24
LENGTH = math.pi
DELTA = 0.3
HERE = Path(__file__).parent


def state(t):
    c = 0.5 * math.cos(t)
    return [[0.5, c], [c, 0.5]]


def window(n, spacing, delta):
    k = math.floor(delta / spacing + 1e-9)
    w = np.zeros((n, n))
    for l in range(n):
        for m in range(n):
            d = abs(l - m)
            if d < k:
                w[l, m] = 1.0
            elif d == k:
                w[l, m] = 0.5
    return k, w


def main():
    spacing = LENGTH / N
    grid = [(l + 0.5) * spacing for l in range(N)]
    family = {
        "domain": {"type": "interval", "T": LENGTH},
        "grid": grid,
        "states": [{"dim": 2, "re": state(t), "im": [[0.0, 0.0], [0.0, 0.0]]} for t in grid],
        "lipschitz": 1.0,
    }
    (HERE / "dephasing_family.json").write_text(json.dumps(family, indent=1) + "\n")
    zero = [[0.0, 0.0], [0.0, 0.0]]
    povm = {"effects": [{"dim": 2, "re": [[0.5, 0.5], [0.5, 0.5]], "im": zero},
                        {"dim": 2, "re": [[0.5, -0.5], [-0.5, 0.5]], "im": zero}]}
    (HERE / "plus_minus_povm.json").write_text(json.dumps(povm, indent=1) + "\n")

    k, w = window(N, spacing, DELTA)
    # p[m, x]: probability of outcome x in {+, -} at grid point m.
    p = np.array([[math.cos(t / 2) ** 2, math.sin(t / 2) ** 2] for t in grid])
    prior = np.full(N, 1.0 / N)

    best = 0.0
    for strategy in itertools.product(range(N), repeat=2):
        eta = sum(prior[m] * p[m, x] * w[m, strategy[x]] for m in range(N) for x in range(2))
        best = max(best, eta)

    # Variables q(l|x) for x in {+, -}, then s; maximize s.
    nv = 2 * N + 1
    c = np.zeros(nv)
    c[-1] = -1.0
    a_ub = np.zeros((N, nv))
    for m in range(N):
        for x in range(2):
            for l in range(N):
                a_ub[m, x * N + l] = -p[m, x] * w[m, l]
        a_ub[m, -1] = 1.0
    a_eq = np.zeros((2, nv))
    for x in range(2):
        a_eq[x, x * N:(x + 1) * N] = 1.0
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(N), A_eq=a_eq, b_eq=np.ones(2),
                  bounds=[(0, None)] * (2 * N) + [(None, None)], method="highs")
    assert res.success
    golden = {"delta": DELTA, "k": k, "bayes_uniform": float(best), "minimax": float(-res.fun)}
    (HERE / "dephasing_golden.json").write_text(json.dumps(golden, indent=1) + "\n")
    print(golden)


if __name__ == "__main__":
    main()
