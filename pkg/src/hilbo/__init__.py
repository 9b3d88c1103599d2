"""Human-in-the-loop batch Bayesian optimisation.

At each iteration the utility-optimal point is paired with a knee-point set
of diverse, high-utility alternatives (found by NSGA-II on a bi-objective
batch problem); a practitioner (human or simulated) picks one, the chosen
point is evaluated, and the loop repeats. Includes a regret benchmark
harness over sampled and standard test functions and an HTTP session
service for live expert-driven runs.
"""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
