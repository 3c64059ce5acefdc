"""
A small simulation study
========================

Bias, Monte Carlo SD, average bootstrap SE and coverage for the three
misclassification scenarios.  The analysis model is linear in time, so
scenarios 2 and 3 check robustness to a misspecified time effect.
Increase ``REPS`` and ``B`` for tighter numbers.
"""

from crrmisc import Scenario, run_study

REPS, B, N = 40, 30, 400

print("scenario  coef    bias%    MCSD    ASE     CP")
for number in (1, 2, 3):
    summary = run_study(Scenario.preset(number, -2.0), N, REPS, B_boot=B, seed=number)
    for row in summary.table():
        print(f"{number:8d}  {row['coefficient']}  {row['bias_pct']:6.2f}  "
              f"{row['mcsd']:.3f}  {row['ase']:.3f}  {row['cp']:.3f}")
