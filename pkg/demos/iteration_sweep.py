"""Iteration counts of inexact block preconditioners as the grid grows.

Each preconditioner replaces A, S and X by cheap approximations: the diagonal
of A, a tridiagonal Schur approximation and an incomplete Cholesky
preconditioned inner CG for X. The outer tolerance tightens as 10 / N^2 so
that the final error stays roughly constant. Counts should level off as p grows.

Run:  python demos/iteration_sweep.py [max_p]    (default 32; 64 takes about a minute)
"""
import sys

from dsaddle.bench import BenchConfig, run_bench

max_p = int(sys.argv[1]) if len(sys.argv) > 1 else 32
sizes = tuple(p for p in (16, 32, 64) if p <= max_p)
reference = {"qa": (30, 44, 46), "q5": (38, 57, 59), "pd": (79, 126, 132),
             "p3": (51, 83, 87), "q2": (66, 98, 100), "q4": (48, 81, 85)}

rows = run_bench(BenchConfig(problem="ex1", p_list=sizes, precond=tuple(reference), rhs="ones"))
print(f"{'precond':8s}" + "".join(f"{'p=' + str(p):>14s}" for p in sizes))
for name, ref in reference.items():
    cells = []
    for r in rows:
        if r.precond == name:
            cells.append(f"{r.its:>5d} (ref {ref[sizes.index(r.p)]:>3d})")
    print(f"{name:8s}" + "".join(f"{c:>14s}" for c in cells))

worst = max(rows, key=lambda r: r.err)
print(f"\nlargest relative error {worst.err:.1e} ({worst.precond}, p={worst.p})")
