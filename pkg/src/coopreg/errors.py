"""Exception hierarchy shared by all coopreg modules."""


class CoopRegError(Exception):
    """Base class for every error raised by this package."""


# -- linear algebra kernel ---------------------------------------------------

class Singular(CoopRegError):
    """A linear solve hit a pivot too small to trust."""


class NoConvergence(CoopRegError):
    """The QR eigenvalue iteration exceeded its sweep budget."""


# -- plant / synthesis -------------------------------------------------------

class Unsolvable(CoopRegError):
    """The regulator equations admit no solution (stabilizability of the
    regulation objective fails for this agent)."""


class Uncontrollable(CoopRegError):
    """Pole placement requested on an uncontrollable pair."""


# -- interconnection graph ---------------------------------------------------

class LeaderHasInEdge(CoopRegError):
    """A leader row of the adjacency matrix is nonzero."""


class ZeroInDegree(CoopRegError):
    """A follower has no incoming edges, so its normalized coupling row
    is undefined."""


# -- communication process ---------------------------------------------------

class InfeasibleBound(CoopRegError):
    """No schedule can respect the blackout bound (h* < ts + delay_min)."""


class NoDataYet(CoopRegError):
    """Prediction requested on an edge that has not delivered anything."""


class NoDelivery(CoopRegError):
    """An edge had zero successful deliveries within the audited horizon."""


# -- closed loop -------------------------------------------------------------

class RoleMismatch(CoopRegError):
    """A leader-only (or follower-only) operation was called on the wrong
    kind of agent."""


class DecompositionMismatch(CoopRegError):
    """The two independent computations of the regulated error disagree
    beyond tolerance."""


# -- simulation --------------------------------------------------------------

class Diverged(CoopRegError):
    """A state norm crossed the divergence threshold during integration."""

    def __init__(self, time: float, norm: float):
        super().__init__(f"state norm {norm:.3e} exceeded divergence "
                         f"threshold at t={time:.6g} s")
        self.time = time
        self.norm = norm


# -- scenario files / CLI ----------------------------------------------------

class ParseError(CoopRegError):
    """Scenario file is malformed."""


class DimensionError(CoopRegError):
    """Scenario matrices have mutually inconsistent dimensions."""


class OrderError(CoopRegError):
    """Agents are not listed followers-first."""


class UnknownPreset(CoopRegError):
    """Requested preset name is not one of the bundled presets."""
