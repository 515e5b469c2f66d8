"""Verifying the central limit behaviour against the exact predictions.

Replicated runs of the interacting chain produce normalized sums whose
variance and shape are compared with the exact prediction; the sums are also
split into the martingale part (against the exact per-step stationary mean
of the governing kernel) and the stationary-fluctuation part, whose
predicted variances are additive.

Desk scale here: 300 replications of 4000 steps (about half a minute).
"""

import math

import numpy as np

from imclab import ks_distance, replication_sums, total_asymptotic_variance
from imclab.reference import reference_config, reference_f

cfg = reference_config(n_steps=4000, seed=2718)
f = reference_f()
prediction = total_asymptotic_variance(cfg, f)
print("predicted variances: sigma_sq=%.5f  2*gamma_tilde_sq=%.5f  total=%.5f"
      % (prediction.sigma_sq, 2 * prediction.gamma_tilde_sq, prediction.total))

n_reps = 300
sums = replication_sums(cfg, f, n_reps, pathwise=True, threads=2)
print("\n%d replications of %d steps" % (n_reps, cfg.n_steps))

for label, values, predicted in (
    ("full sums", sums.z, prediction.total),
    ("martingale part", sums.s1, prediction.sigma_sq),
    ("fluctuation part", sums.s2, 2 * prediction.gamma_tilde_sq),
):
    empirical = np.var(values, ddof=1)
    ks = ks_distance(values / math.sqrt(predicted))
    print("  %-16s empirical %.5f predicted %.5f ratio %.3f  KS %.4f"
          % (label, empirical, predicted, empirical / predicted, ks))

print("\n1%% Kolmogorov critical value at R=%d: %.4f" % (n_reps, 1.63 / math.sqrt(n_reps)))
print("the split is exact per replication: max |z - s1 - s2| =",
      float(np.max(np.abs(sums.z - sums.s1 - sums.s2))))
