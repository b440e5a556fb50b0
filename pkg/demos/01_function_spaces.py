"""Grids, curves and quadrature inner products.

Curves are plain value vectors bound to a sampling grid; inner products
are trapezoid-weighted sums, so smooth integrals come out accurate and
everything stays numpy-friendly.
"""

import numpy as np

import movkl as mk

# a uniform grid over [0, 1] with trapezoid weights
grid = mk.Grid.uniform(0.0, 1.0, 101)
print("grid:", grid, "| total weight =", grid.weights.sum())

# the constant function integrates exactly
one = mk.Curve(grid, np.ones(grid.size))
print("<1, 1> =", mk.l2_inner(one, one), "(exact)")

# a ramp: integral of t^2 over [0,1] is 1/3
ramp = mk.Curve(grid, grid.points)
print("<t, t> =", mk.l2_inner(ramp, ramp), "vs 1/3 =", 1 / 3)

# refining the grid tightens the quadrature
fine = mk.Grid.uniform(0.0, 1.0, 1001)
fine_ramp = mk.Curve(fine, fine.points)
print("refined:", mk.l2_inner(fine_ramp, fine_ramp))

# curve vectors stack n curves over one grid; the pairing sums per curve
rng = np.random.default_rng(0)
a = mk.CurveVec(grid, rng.normal(size=(3, grid.size)))
b = mk.CurveVec(grid, rng.normal(size=(3, grid.size)))
print("vector pairing:", mk.vec_inner(a, b))
print("Cauchy-Schwarz holds:",
      mk.vec_inner(a, b) ** 2 <= mk.vec_norm_sq(a) * mk.vec_norm_sq(b) + 1e-12)

# grids with gaps: quadrature weights never bridge the gap, so each
# segment integrates independently (used for stacked channels)
stacked = mk.stacked_channel_grid(50, 3)
seg = mk.Curve(stacked, np.ones(stacked.size))
print("stacked grid total measure:", mk.l2_inner(seg, seg), "(3 channels)")
