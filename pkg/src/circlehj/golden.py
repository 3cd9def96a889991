"""Frozen reference values for regression checks.

The orbit entries come from the circle-sweep shooting solve rerun at
65536 steps and Richardson-extrapolated against 32768 steps; successive
refinements agree to ~1e-14, far below the 1e-7 comparison tolerance
used by the tests.
"""

# stationary orbit of H = (p+1)^2/2 - 1/2 + 0.2 cos(2 pi x) - 0.5 u
CDV_ORBIT = {
    "p0": -0.21078731748587307,
    "u0": 0.022856658241129046,
    "period": 1.021095005338232,
    "loop_integral": -1.0210950053382162,
    "min_abs_speed": 0.7883152977517367,
}
