"""
Channel dilation
================

Each area is paired with its most similar area under every feature group,
and the partner's demand history is stacked as an extra input channel.
"""

import numpy as np

from icn.dataset import FEATURE_GROUPS, FeatureBundle, generate_synthetic
from icn.dilation import build_match_table, dilate, pearson

print("pearson([1,2,3], [1,1,2]) =", round(pearson([1, 2, 3], [1, 1, 2]), 4))

demand, features, _ = generate_synthetic(n_areas=8, hours=400, seed=3, correlation_plan=[[0, 1], [2, 3], [4, 5], [6, 7]])
table = build_match_table(features)

# demographic features were planted, so the partners are the group mates
for g in FEATURE_GROUPS:
    print(f"{g:>13}:", table.match(g).tolist())

# a 24-hour window becomes a 4-channel tensor; channel 0 is the window itself
x = demand.values[:, :24]
d = dilate(x, table)
print("dilated shape (C, N, T):", d.shape)
assert np.array_equal(d.channels[0], x)
assert np.array_equal(d.channels[1], x[table.match_d])

# standardizing columns matters when feature units differ wildly: append a
# noisy column measured in large units and raw-unit matching follows the noise
rng = np.random.default_rng(0)
noisy = np.column_stack([features.demographic, rng.normal(0, 1e3, features.n_areas)])
mixed = FeatureBundle(noisy, features.functionality, features.transport)
print("raw-unit matches:    ", build_match_table(mixed, standardize=False).match_d.tolist())
print("standardized matches:", build_match_table(mixed, standardize=True).match_d.tolist())
