"""
Lattice quantizers and their second moments
===========================================

Compare the cubic lattice, the checkerboard lattice D4 and the Gosset
lattice E8 as quantizers.  A good shaping lattice has a small normalized
second moment; the cube sits at 1/12 and the sphere bound is 1/(2*pi*e).
"""
import math

import numpy as np

from latticeaf.lattice import (
    channel_error_probability,
    estimate_metrics,
    make_lattice,
    mod_lattice,
    quantize_nearest,
    source_coding_figure,
)

rng = np.random.default_rng(1)
name = {"zn": "Z", "a2": "A", "dn": "D", "e8": "E"}

# a single point and its nearest E8 neighbour
e8 = make_lattice("e8", 8)
x = rng.normal(size=8)
print("x          ", np.round(x, 3))
print("Q_E8(x)    ", quantize_nearest(e8, x))
print("x mod E8   ", np.round(mod_lattice(e8, x), 3))

# normalized second moments by Monte Carlo
print()
print(f"{'lattice':8s} {'G':>9s} {'+/-':>8s}  gain over cube (dB)")
for family, n in [("zn", 1), ("a2", 2), ("dn", 4), ("e8", 8)]:
    m = estimate_metrics(make_lattice(family, n), 200_000, rng)
    gain_db = 10 * math.log10((1 / 12) / m.normalized_second_moment)
    print(f"{name[family] + str(n):8s} {m.normalized_second_moment:9.5f} {m.nsm_std_error:8.5f}  {gain_db:5.3f}")
print(f"sphere bound 1/(2 pi e) = {1 / (2 * math.pi * math.e):.5f}")
print(f"cube loss in bits: log2(2 pi e / 12) = {source_coding_figure(1 / 12):.4f}")

# as channel codes: probability that Gaussian noise leaves the Voronoi cell,
# every lattice scaled to unit covolume
print()
for family in ("zn", "dn", "e8"):
    lat = make_lattice(family, 8)
    lat = lat.scaled(lat.covolume ** (-1 / 8))
    p, se = channel_error_probability(lat, 0.04, 100_000, rng)
    print(f"{name[family]}8  Pr[noise outside cell] = {p:.4f} +/- {se:.4f}")
