"""Where does SGD spend its time: flat or sharp minimum?

``two_well_2d`` has two minima at the same depth. The right one is four
times sharper across the valley, so its Hessian determinant is 8 against
2. The stationary density puts mass ``sqrt(8/2) = 2`` times larger on the
flat basin, but only once the region is large compared with the thermal
width ``1/sqrt(eta)``. Tiny balls see the density at the minimum, which is
the same at both.

Run: ``python demos/flat_minimum_preference.py`` (about 30 seconds).
"""

import numpy as np

from escapelab import asymptotics, fpe, landscapes, sde

land = landscapes.builtin("two_well_2d", c1=1.0, c2=4.0, k=10.0)
flat, sharp = land.minima
print(f"Hessian determinants: flat {flat.hessian_det:.3f}, sharp {sharp.hessian_det:.3f}")
print(f"small-temperature well ratio sqrt(det ratio) = "
      f"{asymptotics.well_probability_ratio(flat, sharp):.4f}")

eta = 8.0
grid = fpe.Grid.uniform(-3.5, 3.5, 350, dim=2)
p = fpe.stationary_density(land, eta, grid)
print(f"\nGibbs mass ratio flat/sharp in balls of radius r (eta={eta}):")
for r in (0.1, 0.25, 0.5, 0.75, 0.95):
    ratio = asymptotics.ball_mass(p, flat.location, r) / asymptotics.ball_mass(p, sharp.location, r)
    print(f"  r={r:4.2f}  ratio {ratio:.4f}")
x = grid.centers(0)
basin = p.values[x < 0].sum() / p.values[x > 0].sum()
print(f"  half planes  ratio {basin:.4f}")

# the same answer from SGD paths started on the saddle
spec = sde.SimulatorSpec(kind="sgd_sde", landscape=land, w0=(0.0, 0.0),
                         schedule=sde.Schedule.constant(0.25, 1, 1.0), dt=0.01, t_end=100.0,
                         stability_radius=1.5)
W = sde.run_ensemble(spec, 5000, master_seed=3).terminal_states
left = np.count_nonzero(W[:, 0] < 0)
print(f"\n5000 SDE paths at t=100: {left} left, {len(W) - left} right,"
      f" ratio {left / (len(W) - left):.3f}")
