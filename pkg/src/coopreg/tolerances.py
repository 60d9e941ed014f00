"""Centralized numerical tolerances.

Every threshold used by a correctness check lives here so that conditioning
problems can be diagnosed (and, for the validation-level checks, relaxed)
from one place.  The generic relative tolerance defaults to 1e-8 and can be
overridden globally through the COOPREG_TOL environment variable or per
scenario via the ``tolerance`` field.
"""

import os

# Generic relative tolerance for validation-level checks (assumption
# certificates, gain stability margins, graph certificates).
DEFAULT_TOL = 1e-8


def global_tol() -> float:
    """Validation tolerance, honoring the COOPREG_TOL environment override."""
    raw = os.environ.get("COOPREG_TOL")
    if raw is None:
        return DEFAULT_TOL
    try:
        value = float(raw)
    except ValueError as exc:
        raise ValueError(f"COOPREG_TOL is not a number: {raw!r}") from exc
    if value <= 0:
        raise ValueError(f"COOPREG_TOL must be positive, got {value}")
    return value


# -- linear algebra kernel ---------------------------------------------------

# Pivot magnitude below PIVOT_REL * max|A| means the solve is singular.
PIVOT_REL = 1e-12
# Subdiagonal entries below QR_DEFLATE_REL * local scale are deflated to zero.
QR_DEFLATE_REL = 1e-13
# QR iteration sweep budget is QR_SWEEP_FACTOR * n.
QR_SWEEP_FACTOR = 100

# -- plant / synthesis -------------------------------------------------------

# Least-squares residual above this means the regulator equations are
# inconsistent for the agent.
REGULATOR_RESIDUAL_TOL = 1e-6
# Rank decisions in PBH tests use REL_RANK_TOL * max|entry|.
REL_RANK_TOL = 1e-9
# Eigenvalues with real part >= -PBH_BOUNDARY count as unstable/marginal,
# so marginal exosystem modes are always tested.
PBH_BOUNDARY = 1e-9

# -- graph certificates ------------------------------------------------------

# Entries of -L1^{-1} L2 may undershoot zero by at most this.
LEMMA_NONNEG_TOL = 1e-10

# -- closed loop -------------------------------------------------------------

# The raw regulated error and its error-coordinate decomposition must agree
# to this at every evaluation.
ERROR_DECOMPOSITION_TOL = 1e-9

# -- simulation --------------------------------------------------------------

# State norm beyond this aborts the run as divergent.
DIVERGENCE_LIMIT = 1e9
