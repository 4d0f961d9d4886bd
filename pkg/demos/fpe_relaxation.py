"""Relaxation of the SGD density to its Gibbs limit.

A point mass at ``w = 1`` on the quadratic loss spreads and drifts into
``exp(-eta L)``. The weighted distance to the limit decays at least as fast
as the Poincare-constant bound, whose rate ``C_P gamma beta / (2M)``
halves each time the batch size doubles. The measured rate here does not
depend on ``M``: for a quadratic the spectral gap of the Fokker-Planck
operator is the curvature itself, so the bound is far from tight.

Run: ``python demos/fpe_relaxation.py`` (a few seconds).
"""

from escapelab import asymptotics, fpe, landscapes, sde

land = landscapes.builtin("quadratic", a=1.0)
C_P = asymptotics.poincare_constant(land, fpe.Grid.uniform(-8.0, 8.0, 320))
print(f"Poincare constant of exp(-L): {C_P:.5f}")

grid = fpe.Grid.uniform(-6.0, 6.0, 240)
for M in (1, 2, 4):
    schedule = sde.Schedule.constant(gamma=0.5, batch=M, beta=1.0)
    snaps = fpe.solve_fpe(land, schedule, fpe.mollified_dirac(grid, [1.0]), 6.0, 0.002, 0.1)
    rep = asymptotics.theorem1_bound_check(land, schedule, snaps, T=0.0, C_P=C_P)
    print(f"M={M}: eta={schedule.eta_inf:4.1f}  bound rate {rep.bound_rate:.4f}"
          f"  measured rate {rep.fit.rate:.4f}  bound holds: {rep.all_satisfied}")
