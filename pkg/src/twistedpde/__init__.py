"""Twisted-type Hessian operators: algebra, concavity certification, a
finite-difference Dirichlet solver, radial oracles and regularity probes."""

__version__ = "0.1.0"
