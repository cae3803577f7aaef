"""
Polarisation features
=====================

Stokes parameters, the degree of polarisation and divisive normalisation
applied to the synthetic data.
"""

import numpy as np

from spikeflag.data import SyntheticConfig, generate_synthetic
from spikeflag.preprocess import (
    DnConfig,
    PreprocessConfig,
    degree_of_polarisation,
    divisive_normalise,
    features,
    stokes,
)

vis, mask = generate_synthetic(SyntheticConfig(seed=1))
v = vis.values[0]
flags = mask.flags[0]

# linear feeds: XX, XY, YX, YY
s = stokes(v[..., 0], v[..., 1], v[..., 2], v[..., 3])
dop = degree_of_polarisation(s)
print("DoP range", dop.min(), dop.max())
print("mean DoP clean %.3f, RFI %.3f" % (dop[~flags].mean(), dop[flags].mean()))

# a few hand-built pixels: unpolarised, fully X-polarised, circular
print(degree_of_polarisation(stokes(1.0, 0.0, 0.0, 1.0)))
print(degree_of_polarisation(stokes(1.0, 0.0, 0.0, 0.0)))
print(degree_of_polarisation(stokes(0.5, -0.5j, 0.5j, 0.5)))

# divisive normalisation flattens the bandpass but keeps narrow features
amp = np.abs(v[..., 0])
dn = divisive_normalise(amp, DnConfig(window=5, sigma=1.0))
print("bandpass spread before %.2f, after %.2f" % (np.ptp(np.median(amp, 1)), np.ptp(np.median(dn, 1))))

# constant field c maps to c / (1 + c)
print(divisive_normalise(np.full((8, 4), 3.0))[0, 0], 3 / 4)

# the network inputs for each mode
full = features(v, PreprocessConfig(polarisation="full"))
dopf = features(v, PreprocessConfig(polarisation="dop", divisive_normalisation=True))
print("full features", full.shape, "range", full.min(), full.max())
print("DoP features", dopf.shape)
