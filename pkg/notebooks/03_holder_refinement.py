# coding: utf-8

# # Hölder seminorm of the discrete Hessian under refinement
#
# Solve with a smooth non-constant right-hand side and track the seminorm of
# the discrete Hessian on the half-size disk as the grid is refined.

# In[1]:

from twistedpde.algebra import preset_eq12
from twistedpde.expr import Expression
from twistedpde.grid import ConvexDomain
from twistedpde.probe import refinement_study


# In[2]:

table = refinement_study(preset_eq12(2), ConvexDomain.disk(), Expression("2 + x^2 + 0.5*y"),
                         0.0, [0.25, 0.5, 0.75], [1 / 8, 1 / 16, 1 / 32])
print(table.format())


# The same study from the command line, with JSON on stdout:
#
#     twistedpde probe refine --config notebooks/configs/eq12_smooth.json --h 1/8,1/16,1/32
