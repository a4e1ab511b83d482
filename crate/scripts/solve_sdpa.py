#!/usr/bin/env python3
"""Solve an SDPA sparse-format problem with cvxpy and print the result as JSON.

Usage: solve_sdpa.py FILE [SOLVER]

Exits with status 3 if cvxpy (or the requested solver) is not available.
"""
import json
import sys


def read_sdpa(path):
    header, entries = [], []
    with open(path) as fh:
        lines = [l for l in fh if l.strip() and l.lstrip()[0] not in '"*']
    tokens = []
    it = iter(lines)
    for line in it:
        tokens += line.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " ").split()
        if len(tokens) >= 2:
            m, nblock = int(tokens[0]), int(tokens[1])
            if len(tokens) >= 2 + nblock + m:
                break
    m, nblock = int(tokens[0]), int(tokens[1])
    blocks = [int(t) for t in tokens[2:2 + nblock]]
    c = [float(t) for t in tokens[2 + nblock:2 + nblock + m]]
    for line in it:
        f = line.split()
        entries.append((int(f[0]), int(f[1]), int(f[2]), int(f[3]), float(f[4])))
    return m, blocks, c, entries


def main():
    try:
        import cvxpy as cp
        import numpy as np
        import scipy.sparse as sp
    except ImportError:
        print(json.dumps({"status": "unavailable"}))
        return 3
    path = sys.argv[1]
    solver = sys.argv[2] if len(sys.argv) > 2 else "CLARABEL"
    if solver not in cp.installed_solvers():
        print(json.dumps({"status": "unavailable", "solver": solver}))
        return 3
    m, blocks, c, entries = read_sdpa(path)
    x = cp.Variable(m)
    cons = []
    for b, size in enumerate(blocks, start=1):
        s = abs(size)
        rows, cols, vals = [], [], []
        f0 = np.zeros(s * s if size > 0 else s)
        for mat, blk, i, j, v in entries:
            if blk != b:
                continue
            idx = [(i - 1) * s + (j - 1), (j - 1) * s + (i - 1)] if size > 0 else [i - 1]
            if size > 0 and i == j:
                idx = idx[:1]
            for k in idx:
                if mat == 0:
                    f0[k] += v
                else:
                    rows.append(k)
                    cols.append(mat - 1)
                    vals.append(v)
        a = sp.csr_matrix((vals, (rows, cols)), shape=(len(f0), m))
        expr = a @ x - f0
        if size > 0:
            mat = cp.reshape(expr, (s, s), order="C")
            cons.append(0.5 * (mat + mat.T) >> 0)
        else:
            cons.append(expr >= 0)
    prob = cp.Problem(cp.Minimize(np.array(c) @ x), cons)
    prob.solve(solver=solver)
    print(json.dumps({"status": prob.status, "objective": prob.value, "solver": solver}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
