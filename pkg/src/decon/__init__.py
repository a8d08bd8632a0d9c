"""decon: simulate and certify decentralized consensus optimization.

Runs DGD, EXTRA, and NIDS over synthetic networks, validates relaxed
mixing-matrix assumptions, computes stepsize bounds and linear contraction
rates, and audits per iteration that the proved equalities, inequalities,
and Q-linear Lyapunov contraction hold on trajectories.
"""

from . import algorithms, certify, graph, harness, linalg, mixing, problem

__version__ = "0.1.0"

__all__ = ["algorithms", "certify", "graph", "harness", "linalg", "mixing", "problem",
           "__version__"]
