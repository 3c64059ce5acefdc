"""
Monotone B-spline baselines
===========================

The log cumulative baseline hazard is a B-spline whose coefficients are
forced to increase.  Any unconstrained vector maps to such coefficients, so
the optimizer never has to deal with constraints.
"""

import numpy as np

from crrmisc import KnotVector, basis, constrain, make_knots
from crrmisc.splines import spline_value

# cubic splines on [0, 2] with three interior knots
kv = KnotVector((0.5, 1.0, 1.5), tau=2.0, order=4)
print("basis dimension:", kv.dim)
print("B(0.75) =", np.round(basis(kv, 0.75), 4))
print("partition of unity:", basis(kv, 0.75).sum())

# arbitrary raw vector -> strictly increasing coefficients
raw = np.array([-1.0, -3.0, 0.2, -0.5, 1.0, -2.0, 0.0])
c = constrain(raw)
print("constrained coefficients:", np.round(c, 3))

t = np.linspace(0, 2, 9)
print("phi(t) on a grid:", np.round(spline_value(kv, c, t), 3))

# knots for real data go at quantiles of the distinct event times
rng = np.random.default_rng(1)
events = rng.exponential(0.6, 300)
events = events[events < 2]
print("quantile knots:", np.round(make_knots(events, 4, 4, 2.0).interior, 3))
