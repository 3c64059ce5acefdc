"""
Bootstrap variance with uncertain misclassification parameters
==============================================================

Each replicate redraws gamma from N(gamma_hat, omega_hat) before resampling
subjects and refitting.  Inflating omega_hat widens the intervals; setting
it to zero gives the ordinary bootstrap.
"""

import warnings

import numpy as np

from crrmisc import FitConfig, GammaEstimate, Scenario, bootstrap_variance, fit, generate_dataset
from crrmisc.simulate import analysis_gamma, analysis_model

warnings.simplefilter("ignore")

scenario = Scenario.preset(1, -2.0)
data, _ = generate_dataset(scenario, 400, seed=3)
model = analysis_model()

# gamma_hat and its covariance from a simulated external validation study
gamma, omega = analysis_gamma(scenario, n_validation=3000, seed=4, exact=False)
print("gamma_hat:", np.round(gamma, 3))
print("se(gamma_hat):", np.round(np.sqrt(np.diag(omega)), 3))

point = fit(data, FitConfig(), model, gamma)
for scale in (0.0, 1.0, 4.0):
    est = GammaEstimate(gamma, scale * omega, model)
    boot = bootstrap_variance(data, FitConfig(), model, est, B=100, seed=1, point=point)
    lo, hi = boot.confidence_intervals()[0]
    print(f"omega x {scale:g}: se(beta_1) = {boot.se[0]:.4f}, 95% CI ({lo:.3f}, {hi:.3f})")
