"""Exceptions and warnings raised by the link models."""


class QuadratureNotConverged(RuntimeError):
    """Adaptive quadrature exhausted its refinement budget."""


class DegenerateTurbulence(ValueError):
    """Gamma-Gamma shape parameters requested for a zero Rytov variance.

    Callers must bypass the fading model entirely in that case
    (see :func:`mrrlink.channel_model.no_fading`).
    """


class NotEstimable(ValueError):
    """The received power cannot be inverted into an offset (P <= 0)."""


class ConfigError(ValueError):
    """Invalid scenario configuration (unknown key, bad value, violated invariant)."""


class FarFieldViolation(UserWarning):
    """Receiver aperture is larger than the beam footprint; gain was clamped to 1."""


class AccuracyRegimeViolation(UserWarning):
    """Large-offset approximation used where R_i <= 5 sigma_e."""
