# coding: utf-8

# # Operators and sampled certificates
#
# Build the preset operators, evaluate them on a few matrices and run the
# sampled certificates that back the structural claims.

# In[1]:

import numpy as np

from twistedpde.algebra import cone_check, elem_sym_all, preset_eq12, preset_prop13
from twistedpde.concavity import concavity_sweep, lemma31_sweep, random_prop24, sandwich_sweep


# The symmetric polynomials of the eigenvalues, S_0 to S_n:

# In[2]:

print(elem_sym_all(np.array([1.0, 2.0, 3.0])))


# `eq12` is det M + tr M. At M = 2I in two dimensions that gives 4 + 4.

# In[3]:

spec = preset_eq12(2)
M = 2 * np.eye(2)
print(spec.value(M), cone_check(spec, M).inside)


# A matrix with a very negative eigenvalue leaves the ellipticity cone:

# In[4]:

print(cone_check(preset_prop13(2), np.diag([-3.0, 0.5])).inside)


# Certificates are seeded. Each one records its sample count, tolerance and
# worst value.

# In[5]:

for cert in [lemma31_sweep(preset_eq12(2), 2000, seed=1),
             lemma31_sweep(random_prop24(3, seed=2), 2000, seed=1),
             sandwich_sweep(2000, seed=0)]:
    print(cert.name, cert.passed, cert.max_violation)


# In[6]:

for cert in concavity_sweep((2, 3), samples=2000, seed=0):
    print(cert.name, cert.passed, cert.max_violation)
