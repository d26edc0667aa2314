"""
Permutation p-values for "imputed looks like true"
==================================================

Pool the true and the imputed values, reshuffle, recompute the statistic,
count how often the shuffled statistic beats the observed one.
"""

import numpy as np
from imputeval import permutation_tests, permutation_p_value

rng = np.random.default_rng(3)
true = rng.normal(size=150)

# a completion drawn from the same distribution, and one shrunk toward the mean
good = rng.normal(size=150)
shrunk = 0.3 * rng.normal(size=150)

out = permutation_tests(true, [good], perm=999, seed=1)
for stat, o in out.items():
    print(stat.value, round(o.observed_stat, 4), o.p_value)

out = permutation_tests(true, [shrunk], perm=999, seed=1)
for stat, o in out.items():
    print(stat.value, round(o.observed_stat, 4), o.p_value)

# the smallest attainable p-value is 1 / (perm + 1)
print(1 / 1000)

# several completions: the statistic is averaged over them, both for the
# observed value and inside every permutation round
completions = [rng.normal(size=150) for _ in range(5)]
o = permutation_p_value(true, completions, "ks", perm=199, seed=2)
print(o.observed_stat, o.perm, o.p_value)
print(o.permuted_stats[:5])

# same seed, same answer
again = permutation_p_value(true, completions, "ks", perm=199, seed=2)
print(np.array_equal(o.permuted_stats, again.permuted_stats))
