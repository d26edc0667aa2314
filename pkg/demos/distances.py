"""
Distributional distances between two samples
============================================
"""

import numpy as np
from imputeval import ks_statistic, cm_statistic, mallows_l2, kde, kl_divergence
from imputeval import crosstab, cramers_v, kappa

rng = np.random.default_rng(0)
x = rng.normal(0.0, 1.0, 2000)
y = rng.normal(0.5, 1.0, 2000)

# sup-gap of the two edfs, and its squared-gap cousin
print(ks_statistic(x, y), cm_statistic(x, y))
print(ks_statistic(x, x), cm_statistic(x, x))

# Mallows L2 between equal-size samples is the rms gap of the sorted values;
# a pure shift of 0.5 shows up as roughly 0.5
print(mallows_l2(x, y))
print(np.sqrt(np.mean((np.sort(x) - np.sort(y)) ** 2)))

# KL of the two Gaussian kernel density estimates; theory says 0.125
p, q = kde(x), kde(y)
print(p.bandwidth, p.grid.shape)
print(kl_divergence(p, q), kl_divergence(q, p))

# no overlap at all: the divergence is infinite
print(kl_divergence(kde(x), kde(x + 50)))

# categorical association: crosstab true codes against imputed codes
true = rng.integers(0, 3, 300)
noisy = np.where(rng.uniform(size=300) < 0.2, rng.integers(0, 3, 300), true)
t = crosstab(true, noisy)
print(t.counts)
print(cramers_v(crosstab(true, true)), cramers_v(t))

# kappa: mean of |V^2 - 1|; 0 means every categorical column came back intact
print(kappa([1.0, 1.0]), kappa([cramers_v(t), 0.5]))
