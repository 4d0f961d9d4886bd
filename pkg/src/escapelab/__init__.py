"""Escape dynamics of stochastic gradient descent on non-convex landscapes.

Submodules
----------
landscapes
    Analytic loss landscapes, their stationary-point catalogues and
    structural assumption checks.
sde
    Learning-rate/batch schedules and simulators for the SGD and momentum
    SGD diffusions and their discrete counterparts.
fpe
    Grid solvers for the Fokker-Planck and kinetic (Vlasov-Fokker-Planck)
    equations and their Gibbs stationary states.
kramers
    Eyring-Kramers escape times, Monte Carlo first passage and saddle search.
asymptotics
    Poincare constants, small-ball trapping, convergence bounds and burn-in.
minibatch
    Empirical gradient-noise moments and sharpness trajectories.
cli
    The ``escape-lab`` command line.
"""

__version__ = "0.1.0"
