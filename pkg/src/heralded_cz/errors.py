"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or perturbation."""


class OutOfRangeError(ValueError):
    """Time requested outside the pulse interval."""


class IntegrationError(RuntimeError):
    """Propagation failed; ``t`` is where it failed."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (t = {t:.6g} us)")
        self.t = t


class UndefinedPhaseError(ValueError):
    """Phase of a vanishing overlap was requested."""


class HeraldStarvedError(ValueError):
    """Heralding probability too small for a conditional fidelity."""


class NoHeraldError(ValueError):
    """Readout model never reports a herald."""


class FitError(ValueError):
    """Not enough usable points for a scaling fit."""
