"""Hard-core hopping lattice gas and its continuum limit.

Modules
-------
lattice      mean-field dynamics of the discrete model
oracle       exact Markov chain on tiny lattices
continuum    finite-volume solver for the density/temperature equations
thermo       entropy, thermodynamic forces, Onsager matrix
experiments  Soret, Dufour, drift and convergence studies
config, cli  run configuration and the ``simulate`` command
"""
from .errors import *  # noqa: F401,F403
from .lattice import LatticeSpec, MeanFieldState, bond_fluxes, step_mean_field, state_from_profiles
from .continuum import ContinuumState, compute_currents, pde_step

__version__ = "0.1.0"
