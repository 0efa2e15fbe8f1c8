"""minkwave: a numerical laboratory for interface dynamics of the semilinear
wave equation u_tt - Lap(u) + (2/eps^2)(u^2-1)u = 0 near timelike extremal
surfaces in 2+1 Minkowski space.

Subpackages: geometry (extremal surfaces and normal coordinates), profile
(1D interface profiles), wave (leapfrog solver), diagnostics (pullback and
weighted energies), decomposition (modulation projection), odelab (1D fiber
machinery), harness (sweeps, rates, reports).
"""

__version__ = "0.1.0"
