"""
Cumulative incidence curves
===========================

Cumulative incidence is the integral of all-cause survival times the
cause-specific hazard.  A constant-hazard model has a closed form to compare
against; a fitted model gives curves for any covariate value.
"""

import warnings

import numpy as np

from crrmisc import FitConfig, ParametricBaseline, Scenario, cif, fit, generate_dataset, survival
from crrmisc.predict import cif_all
from crrmisc.simulate import analysis_gamma, analysis_model

warnings.simplefilter("ignore")

const = ParametricBaseline.constant([0.5, 0.5])
print(f"F_1(1) = {cif(const, 1, [0.0], [0.0, 1.0]).values[-1]:.7f}, "
      f"closed form {0.5 * (1 - np.exp(-1)):.7f}")

scenario = Scenario.preset(1, -2.0)
data, _ = generate_dataset(scenario, 1000, seed=5)
res = fit(data, FitConfig(), analysis_model(), analysis_gamma(scenario)[0])

grid = np.linspace(0, res.tau, 6)
for z in (0.0, 2.0):
    F1, F2 = cif_all(res, [z], grid)
    S = survival(res, grid, [z])
    print(f"z = {z}:")
    for t, a, b, s in zip(grid, F1.values, F2.values, S):
        print(f"  t={t:.2f}  F1={a:.3f}  F2={b:.3f}  S={s:.3f}  sum={a + b + s:.6f}")

try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    fine = np.linspace(0, res.tau, 200)
    fig, ax = plt.subplots()
    for z in (0.0, 1.0, 2.0):
        F1, F2 = cif_all(res, [z], fine)
        ax.plot(fine, F1.values, label=f"cause 1, z={z}")
        ax.plot(fine, F2.values, "--", label=f"cause 2, z={z}")
    ax.set_xlabel("time")
    ax.set_ylabel("cumulative incidence")
    ax.legend()
    fig.savefig("cif_curves.png", dpi=100)
    print("saved cif_curves.png")
