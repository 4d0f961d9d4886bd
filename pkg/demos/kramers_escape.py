"""Escape from a well of the quartic double well.

The mean time to leave the left well grows like ``exp(eta * H)`` with
barrier height ``H = 1/4``. This script compares a Monte Carlo estimate
with the Eyring-Kramers prefactor formula at three inverse temperatures
and fits the exponential growth rate.

Run: ``python demos/kramers_escape.py`` (about a minute).
"""

import numpy as np

from escapelab import kramers, landscapes, sde

land = landscapes.builtin("double_well_1d")
barrier = land.saddles[0].barriers[0]
print(f"barrier height H = {barrier}")

etas = [4.0, 6.0, 8.0]
means = []
for eta in etas:
    problem = kramers.EscapeProblem.from_catalog(land, 0, 1, eta, epsilon=0.2)
    # gamma = 0.5, beta = 1 and M = eta / 4 give the requested eta = 2M / (gamma beta)
    schedule = sde.Schedule.constant(gamma=0.5, batch=eta / 4.0, beta=1.0)
    stats = kramers.mc_first_passage(problem, schedule, 1e-3, 2000, master_seed=11)
    formula = kramers.eyring_kramers_time(problem)
    means.append(stats.mean_time)
    print(f"eta={eta:4.1f}  MC mean {stats.mean_time:8.3f} +- {stats.standard_error:.3f}"
          f"   formula {formula:8.3f}   ratio {stats.mean_time / formula:.3f}")

slope = np.polyfit(etas, np.log(means), 1)[0]
print(f"fitted d log(T)/d eta = {slope:.3f}  (barrier {barrier})")
print("For eta*H between 1 and 2 the formula underestimates the mean time by roughly"
      " 10-20%; the gap closes only slowly as eta grows.")
