"""Symmetry reduction and reconstruction for Stratonovich SDEs on SO(3).

Modules:
    lie: SO(3), so(3) and so(3)* kernels.
    sde: noise paths, Stratonovich integrators and convergence tooling.
    symmetry: group actions, invariance checks and operator reduction.
    hamiltonian: stochastic Hamiltonian systems on T*SO(3).
    reconstruction: horizontal lift, phase drive and phase equation.
    models: worked systems and their verification suites.
    cli: the ``symred run`` experiment runner.
"""

__version__ = "0.1.0"
