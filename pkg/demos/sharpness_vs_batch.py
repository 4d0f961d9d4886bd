"""Sharpness of the solutions SGD finds on a small logistic regression.

Larger batches reduce the gradient noise, and the iterates settle in
regions of higher curvature. Doubling the learning rate together with the
batch size keeps ``gamma/M`` fixed and gives similar sharpness.

Run: ``python demos/sharpness_vs_batch.py`` (about 10 seconds).
"""

import numpy as np

from escapelab import minibatch

data = minibatch.make_dataset("logistic", 512, 5, 0.0, seed=11, design="mixture")
loss = minibatch.CrossEntropyLoss(0.01)
seeds = range(8)

for gamma, M in [(0.5, 4), (0.5, 16), (0.5, 64), (1.0, 8), (1.0, 32)]:
    final = [minibatch.train_with_sharpness(loss, data, minibatch.SGD(gamma, M), 2000, 500,
                                            seed=s).frobenius[-1] for s in seeds]
    print(f"gamma={gamma:3.1f} M={M:3d}  gamma/M={gamma / M:.4f}"
          f"  median ||Hess||_F = {np.median(final):.4f}")

mean, cov = minibatch.estimate_noise_moments(loss, data, np.zeros(5), 8, 5000, seed=0)
beta_hat, aniso = minibatch.isotropy_diagnostic(cov)
print(f"\nnoise covariance at w=0: average variance {beta_hat:.4f}, anisotropy {aniso:.2f}")
