"""Kernel algebra on finite state spaces: the building blocks.

Walks through the core operations: applying and iterating a row-stochastic
kernel, computing its stationary distribution exactly, measuring functions
and signed measures in weighted norms, and fitting certified ergodicity and
drift constants from the observed convergence profile.
"""

import numpy as np

from imclab import (
    FiniteKernel,
    apply_kernel,
    fit_drift,
    fit_ergodicity_constants,
    iterate_kernel,
    stationary_distribution,
    v_distance_kernels,
    v_norm_function,
    v_norm_measure,
)

# A two-state chain with exit rates 0.1 and 0.2.  Everything about it is
# computable by hand, which makes it the running sanity check.
kernel = FiniteKernel(np.array([[0.9, 0.1], [0.2, 0.8]]))
print("kernel rows:\n", kernel.rows)

f = np.array([0.0, 1.0])
print("\none-step expectation of f = (0, 1):", apply_kernel(kernel, f))
print("two-step kernel:\n", iterate_kernel(kernel, 2).rows)

pi = stationary_distribution(kernel)
print("\nstationary distribution (closed form is 2/3, 1/3):", pi)
print("residual ||pi P - pi||_1 =", np.abs(pi @ kernel.rows - pi).sum())

# Weighted norms: the sup norm of functions relative to a weight v >= 1 and
# the dual norm for signed measures.
v = np.array([1.0, 2.0])
print("\n|f|_v for f=(2,3), v=(1,2):", v_norm_function(np.array([2.0, 3.0]), v))
print("||mu||_v for mu=(0.5,-0.5), v=(1,3):",
      v_norm_measure(np.array([0.5, -0.5]), np.array([1.0, 3.0])))
print("v-distance of the kernel to itself:", v_distance_kernels(kernel, kernel, v))

# The convergence profile d_n = ||P^n - pi|| decays geometrically at the
# second-eigenvalue rate 0.7; the fit certifies d_n <= c * rho^n at every lag.
constants = fit_ergodicity_constants(kernel, pi, np.ones(2), alpha=1.0, n_max=40)
print("\nfitted ergodicity constants: c=%.4f rho=%.4f l=%.4f" %
      (constants.c, constants.rho, constants.l))
print("(the exact decay rate is 1 - 0.1 - 0.2 = 0.7)")

# A drift certificate P v <= lam * v + b, re-verified pointwise.
v_weight = np.array([1.0, 3.0])
cert = fit_drift(kernel, v_weight)
print("\ndrift certificate: lam=%.2f b=%.4f" % (cert.lam, cert.b))
print("P v =", kernel.rows @ v_weight, "<=", cert.lam * v_weight + cert.b)
