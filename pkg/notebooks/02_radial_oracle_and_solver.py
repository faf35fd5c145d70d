# coding: utf-8

# # Radial oracle against the grid solver
#
# On the unit disk with constant f the solution is the quadratic
# A (|x|^2 - 1) / 2. The stencils are exact on quadratics, so the solver
# reproduces it to rounding error. A non-quadratic manufactured solution shows
# the second-order convergence instead.

# In[1]:

import numpy as np

from twistedpde.algebra import preset_prop13
from twistedpde.grid import ConvexDomain
from twistedpde.oracle import RadialProfile, counterexample_roots, radial_coefficient
from twistedpde.solver import solve_dirichlet

spec = preset_prop13(2)
disk = ConvexDomain.disk()


# In[2]:

A = radial_coefficient(2, 3.0)
print("A =", A, "sqrt(3) =", np.sqrt(3))


# In[3]:

u, report = solve_dirichlet(spec, disk, 3.0, 0.0, 1 / 32)
xy = u.grid.xy
err = np.max(np.abs(u.nodal() - RadialProfile(2, A)(xy[:, 0], xy[:, 1])))
print(report.converged, report.final_residual, err)


# Manufactured solution u = 1.5 exp(|x|^2 / 2), whose Hessian determinant is
# 2.25 exp(|x|^2) (1 + |x|^2).

# In[4]:

def exact(x, y):
    return 1.5 * np.exp(0.5 * (x * x + y * y))


def rhs(x, y):
    r2 = x * x + y * y
    return 2.25 * np.exp(r2) * (1 + r2)


errs = []
for h in (1 / 8, 1 / 16, 1 / 32):
    u, _ = solve_dirichlet(spec, disk, rhs, exact, h)
    xy = u.grid.xy
    errs.append(np.max(np.abs(u.nodal() - exact(xy[:, 0], xy[:, 1]))))
print(errs, [a / b for a, b in zip(errs, errs[1:])])


# Below the threshold c = n - 1 the counterexample polynomial has a root with
# A > 1. At the threshold the root is the double root A = 1.

# In[5]:

for c in (0.5, 1.0, 1.5):
    rep = counterexample_roots(2, c)
    print(c, rep.roots, rep.existence, rep.tangent)
