"""Exception and warning types shared across the package."""


class InvalidParameter(ValueError):
    """A constructor or operation was given parameters that violate its
    existence constraints (e.g. a Slim Fly q that is not a suitable prime
    power, or a shuffle pattern size that is a power of two)."""


class RetryExhausted(RuntimeError):
    """A randomized construction failed to produce a valid instance
    (connected graph, usable layer, ...) within its retry budget."""


class PathNotFound(Exception):
    """No path satisfying the requested length window exists for a router
    pair.  Recorded per pair by layer builders; never fatal."""


class DeadlockDetected(RuntimeError):
    """The simulation event queue drained while flows were still
    unfinished.  Signals a transport bug, must never fire in tests."""


class RankDeficiencyWarning(UserWarning):
    """Two randomized runs of the rank-based connectivity estimator
    disagreed; the caller should retry with a fresh field seed."""
