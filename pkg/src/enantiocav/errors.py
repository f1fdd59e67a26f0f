"""Exception hierarchy.

Configuration problems (bad parameters, bad shapes, unrealizable requests)
derive from :class:`ConfigError`; failures discovered while integrating derive
from :class:`ComputeError`.  The CLI maps the two families onto distinct exit
codes.
"""


class EnantiocavError(Exception):
    """Base class for all package errors."""

    def to_dict(self):
        info = {"error": type(self).__name__, "message": str(self)}
        info.update(getattr(self, "details", {}) or {})
        return info


class ConfigError(EnantiocavError, ValueError):
    pass


class ComputeError(EnantiocavError, RuntimeError):
    pass


# -- parameters ----------------------------------------------------------------

class NegativeRate(ConfigError):
    def __init__(self, field, value):
        super().__init__(f"{field} must be >= 0, got {value!r}")
        self.details = {"field": field, "value": value}


class ZeroUnit(ConfigError):
    def __init__(self, field, value):
        super().__init__(f"{field} is the rate unit and must be > 0, got {value!r}")
        self.details = {"field": field, "value": value}


class InvalidCount(ConfigError):
    def __init__(self, field, value):
        super().__init__(f"{field} must be a nonnegative integer, got {value!r}")
        self.details = {"field": field, "value": value}


class UnknownKey(ConfigError):
    def __init__(self, keys):
        keys = sorted(keys)
        super().__init__(f"unknown configuration key(s): {', '.join(keys)}")
        self.details = {"keys": keys}


class MissingKey(ConfigError):
    def __init__(self, keys):
        keys = sorted(keys)
        super().__init__(f"missing configuration key(s): {', '.join(keys)}")
        self.details = {"keys": keys}


# -- Gell-Mann basis -----------------------------------------------------------

class DimensionTooSmall(ConfigError):
    pass


class LengthMismatch(ConfigError):
    pass


class NonHermitian(ConfigError):
    pass


class TraceNotOne(ConfigError):
    pass


class InvalidState(ConfigError):
    pass


# -- exact solver --------------------------------------------------------------

class CutoffTooSmall(ConfigError):
    pass


class TooManyMolecules(ConfigError):
    pass


class CutoffBreach(ComputeError):
    def __init__(self, top_population, fock_cutoff, time):
        suggested = 2 * fock_cutoff
        super().__init__(
            f"population of the top Fock state reached {top_population:.3e} at t={time:.4g} "
            f"(cutoff N_c={fock_cutoff}); rerun with a larger cutoff, e.g. N_c={suggested}"
        )
        self.details = {
            "top_population": float(top_population),
            "fock_cutoff": fock_cutoff,
            "suggested_cutoff": suggested,
            "time": float(time),
        }


class NonPhysical(ComputeError):
    pass


class NotConverged(ComputeError):
    def __init__(self, drift, threshold, window):
        super().__init__(
            f"no steady state: photon number varies by {drift:.3e} over the trailing window "
            f"{window:g} (threshold {threshold:.3e})"
        )
        self.details = {"drift": float(drift), "threshold": float(threshold), "window": float(window)}


# -- stochastic engine ---------------------------------------------------------

class BlowUp(ComputeError):
    pass


class TooManyBlowUps(ComputeError):
    pass


class JensenViolation(ComputeError):
    pass


# -- analysis ------------------------------------------------------------------

class NonRealizable(ConfigError):
    pass
