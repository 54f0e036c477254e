"""Numerical tolerances shared across the package.

All comparisons against these constants are absolute unless the name says
otherwise. Solver feasibility uses a relative tolerance scaled by
``constraint_scale`` in :mod:`olt.selection`.
"""

# |sum(weights) - 1| allowed for a DiscreteMeasure
NORMALIZATION_TOL = 1e-12

# row/column sums of a coupling vs. the prescribed marginals
MARGINAL_TOL = 1e-9

# two grid points closer than this (coordinatewise) are duplicates
DUPLICATE_TOL = 1e-12

# constraint violation allowed, as a multiple of the instance scale
FEASIBILITY_RTOL = 1e-8

# complementary slackness allowed, as a multiple of the instance scale
COMPLEMENTARITY_RTOL = 1e-6

# default tolerance for regret-bound inequality checks
BOUND_TOL = 1e-8
