"""Simulation and verification lab for the (mu, lambda) EA on OneMax.

Modules
-------
core        the EA itself (packed bit strings, numba kernels)
transition  exact mutation transition laws and binomial facts
potential   exponential potential, top-level statistics, N_L detection
surrogate   reduced Markov chains and drift-theorem bound evaluators
approx      rational approximation of e
levels      current-level state machine and large-population experiments
config/cli  configuration files and the ``commalab`` command line
"""

from .rng import RngStream
from .core import (
    Individual,
    Population,
    RunResult,
    mutate,
    onemax,
    run_generation,
    run_until,
    select_next,
)

__version__ = "0.1.0"

__all__ = [
    "RngStream",
    "Individual",
    "Population",
    "RunResult",
    "mutate",
    "onemax",
    "run_generation",
    "run_until",
    "select_next",
    "__version__",
]
