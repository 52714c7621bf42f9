"""Width-reduced multiplicative-weights solvers for l-infinity regression."""

from .mwu import (ALGOS, BACKENDS, SolverParams, SolverRun, baseline_unaccelerated, run_algo, solve_auto,
                  solve_monotone, solve_nonmonotone_opt, solve_nonmonotone_robust, solve_nonmonotone_stable)
from .problem import Instance, double, generate, normalize, read_instance, write_instance

__version__ = "0.1.0"
