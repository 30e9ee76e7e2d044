"""Round-trip optical channel of a ground-station-to-MRR-array link.

Deterministic losses (slant range, Beer-Lambert attenuation, receiver
geometric gain, Gaussian-beam pointing loss), the Hufnagel-Valley turbulence
profile and its Rytov variance, and the Gamma-Gamma fading law with its
sampler and moments.

All lengths are in metres and angles in radians.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy import special

from ._numerics import quad
from .errors import DegenerateTurbulence, FarFieldViolation

WaveModel = Literal["plane", "spherical"]


@dataclass(frozen=True)
class LinkGeometry:
    H_s: float
    H_0: float
    zeta_elev: float
    d_g: float

    def __post_init__(self):
        if not self.H_s > self.H_0 >= 0.0:
            raise ValueError(f"need H_s > H_0 >= 0, got H_s={self.H_s}, H_0={self.H_0}")
        if not 0.0 < self.zeta_elev <= math.pi / 2 + 1e-15:
            raise ValueError(f"elevation must lie in (0, pi/2], got {self.zeta_elev}")
        if not self.d_g > 0.0:
            raise ValueError(f"aperture radius d_g must be positive, got {self.d_g}")

    @property
    def Z(self) -> float:
        return slant_range(self)


@dataclass(frozen=True)
class AtmosphereParams:
    scattering_coeff: float
    wavelength: float
    wind_speed: float
    cn2_ground: float

    def __post_init__(self):
        if not self.wavelength > 0.0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        for name in ("scattering_coeff", "wind_speed", "cn2_ground"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def k(self) -> float:
        """Optical wavenumber 2*pi/lambda."""
        return 2.0 * math.pi / self.wavelength


@dataclass(frozen=True)
class TurbulenceFading:
    """Gamma-Gamma fading state.

    ``alpha = beta = inf`` encodes the fading-free channel (every draw is 1).
    """

    sigma_R2: float
    alpha: float
    beta: float

    def __post_init__(self):
        if self.sigma_R2 < 0.0 or not self.alpha > 0.0 or not self.beta > 0.0:
            raise ValueError(f"invalid fading state {self}")

    @classmethod
    def from_rytov(cls, sigma_R2: float, wave: WaveModel = "plane") -> TurbulenceFading:
        if sigma_R2 == 0.0:
            return no_fading()
        alpha, beta = gg_shape_params(sigma_R2, wave)
        return cls(sigma_R2, alpha, beta)

    @property
    def is_frozen(self) -> bool:
        return math.isinf(self.alpha) and math.isinf(self.beta)


def no_fading() -> TurbulenceFading:
    return TurbulenceFading(0.0, math.inf, math.inf)


@dataclass(frozen=True)
class TransceiverParams:
    P_t: float
    responsivity: float
    noise_var: float
    A_MRR: float
    M: int

    def __post_init__(self):
        if not (self.P_t > 0 and self.responsivity > 0 and self.A_MRR > 0):
            raise ValueError("P_t, responsivity and A_MRR must be positive")
        if self.noise_var < 0:
            raise ValueError("noise_var must be >= 0")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"MRR count M must be an integer >= 1, got {self.M}")


@dataclass(frozen=True)
class BeamPhaseConfig:
    """Beam footprint for one phase; the width at the satellite is ``theta_div * Z``."""

    theta_div: float
    Z: float
    phase: Literal["sensing", "positioning"] = "sensing"

    def __post_init__(self):
        if not (self.theta_div > 0 and self.Z > 0):
            raise ValueError("theta_div and Z must be positive")
        if self.phase not in ("sensing", "positioning"):
            raise ValueError(f"unknown phase {self.phase!r}")

    @classmethod
    def from_width(cls, w_z: float, Z: float, phase="sensing") -> BeamPhaseConfig:
        return cls(w_z / Z, Z, phase)

    @property
    def w_z(self) -> float:
        return self.theta_div * self.Z


@dataclass(frozen=True)
class Link:
    """Phase-independent pieces of the round-trip channel."""

    geometry: LinkGeometry
    atmosphere: AtmosphereParams
    fading: TurbulenceFading
    transceiver: TransceiverParams

    @property
    def Z(self) -> float:
        return self.geometry.Z

    @property
    def h_L(self) -> float:
        return atmospheric_attenuation(self.Z, self.atmosphere)


# --------------------------------------------------------------------------
# deterministic losses


def slant_range(geom: LinkGeometry) -> float:
    """Link length ``H_s / sin(elevation)``; the ground-station height is ignored here."""
    return geom.H_s / math.sin(geom.zeta_elev)


def atmospheric_attenuation(Z, atm: AtmosphereParams):
    """One-way Beer-Lambert transmittance ``exp(-Z * zeta)``.

    Both directions see the same path, so the round trip contributes the square.
    """
    return np.exp(-np.asarray(Z, dtype=float) * atm.scattering_coeff)[()]


def kim_scattering_coeff(visibility_km: float, wavelength: float) -> float:
    """Kim visibility model for the aerosol extinction coefficient, in 1/m."""
    V = visibility_km
    if V > 50:
        q = 1.6
    elif V > 6:
        q = 1.3
    elif V > 1:
        q = 0.16 * V + 0.34
    elif V > 0.5:
        q = V - 0.5
    else:
        q = 0.0
    per_km = 3.91 / V * (wavelength / 550e-9) ** (-q)
    return per_km * 1e-3


def cn2_profile(Z_h, atm: AtmosphereParams):
    """Hufnagel-Valley refractive-index structure parameter at height ``Z_h`` (m^-2/3)."""
    h = np.asarray(Z_h, dtype=float)
    wind = 0.00594 * (atm.wind_speed / 27.0) ** 2 * (1e-5 * h) ** 10 * np.exp(-h / 1000.0)
    background = 2.7e-16 * np.exp(-h / 1500.0)
    ground = atm.cn2_ground * np.exp(-h / 100.0)
    return (wind + background + ground)[()]


# breakpoints at the decay lengths of the profile terms and the wind-term peak
_RYTOV_BREAKS = (100.0, 300.0, 1500.0, 5000.0, 10_000.0, 20_000.0, 40_000.0, 80_000.0)


def rytov_variance(
    geom: LinkGeometry,
    atm: AtmosphereParams,
    cn2: Callable[[float], float] | None = None,
) -> float:
    """Rytov variance of the slant path between heights ``H_0`` and ``H_s``.

    ``cn2`` replaces the Hufnagel-Valley profile when given (a callable of height).
    Raises :class:`QuadratureNotConverged` if the adaptive integration fails.
    """
    profile = cn2 if cn2 is not None else (lambda h: float(cn2_profile(h, atm)))
    H0 = geom.H_0

    def integrand(h):
        return profile(h) * (h - H0) ** (5.0 / 6.0)

    points = [H0 + b for b in _RYTOV_BREAKS]
    integral = quad(integrand, H0, geom.H_s, points=points, limit=400)
    prefactor = 2.25 * atm.k ** (7.0 / 6.0) / math.sin(geom.zeta_elev) ** (11.0 / 6.0)
    return prefactor * integral


# --------------------------------------------------------------------------
# Gamma-Gamma fading


def _shape_exponents(sigma_R2: float, wave: WaveModel) -> tuple[float, float]:
    if wave == "plane":
        s2, c_large = sigma_R2, 1.11
    elif wave == "spherical":
        s2, c_large = 0.4 * sigma_R2, 0.56
    else:
        raise ValueError(f"unknown wave model {wave!r}")
    s125 = s2 ** 1.2  # sigma^(12/5)
    large = 0.49 * s2 / (1.0 + c_large * s125) ** (7.0 / 6.0)
    small = 0.51 * s2 / (1.0 + 0.69 * s125) ** (5.0 / 6.0)
    return large, small


def gg_shape_params(sigma_R2: float, wave: WaveModel = "plane") -> tuple[float, float]:
    """Large- and small-scale eddy parameters (alpha, beta) for a Rytov variance.

    ``wave`` selects the plane-wave (default) or spherical-wave expressions,
    both for zero inner scale.
    """
    if sigma_R2 <= 0.0:
        raise DegenerateTurbulence("sigma_R2 = 0: bypass the fading model instead")
    large, small = _shape_exponents(sigma_R2, wave)
    return 1.0 / math.expm1(large), 1.0 / math.expm1(small)


def scintillation_index(sigma_R2: float, wave: WaveModel = "plane") -> float:
    large, small = _shape_exponents(sigma_R2, wave)
    return math.expm1(large + small)


def gg_density(h, alpha: float, beta: float):
    """Gamma-Gamma probability density of a unit-mean irradiance ``h``."""
    h = np.asarray(h, dtype=float)
    nu = 0.5 * (alpha + beta)
    arg = 2.0 * np.sqrt(alpha * beta * h)
    # kve(v, x) = kv(v, x) * exp(x); work in logs to survive large shapes
    log_pdf = (
        math.log(2.0)
        + nu * math.log(alpha * beta)
        - special.gammaln(alpha)
        - special.gammaln(beta)
        + (nu - 1.0) * np.log(h)
        + np.log(special.kve(alpha - beta, arg))
        - arg
    )
    return np.where(h > 0, np.exp(log_pdf), 0.0)[()]


def _gamma_ratio(x: float, n: int) -> float:
    """Gamma(x + n) / Gamma(x)."""
    return float(special.poch(x, n))


def gg_mean(fading: TurbulenceFading) -> float:
    if fading.is_frozen:
        return 1.0
    a, b = fading.alpha, fading.beta
    return _gamma_ratio(a, 1) * _gamma_ratio(b, 1) / (a * b)


def gg_second_moment(fading: TurbulenceFading) -> float:
    if fading.is_frozen:
        return 1.0
    a, b = fading.alpha, fading.beta
    return _gamma_ratio(a, 2) * _gamma_ratio(b, 2) / (a * a * b * b)


def sample_gg(fading: TurbulenceFading, rng: np.random.Generator, size=None):
    """Draw Gamma-Gamma irradiances as products of two unit-mean Gamma variates."""
    if fading.is_frozen:
        return np.ones(size) if size is not None else 1.0
    a, b = fading.alpha, fading.beta
    return rng.gamma(a, 1.0 / a, size) * rng.gamma(b, 1.0 / b, size)


# --------------------------------------------------------------------------
# geometric losses


def receiver_geometric_gain(d_g: float, w_zg: float) -> float:
    """Fraction of the returned beam caught by a ground aperture of radius ``d_g``.

    Clamped to 1 with a :class:`FarFieldViolation` warning when the aperture
    is wider than the footprint.
    """
    if not (d_g > 0 and w_zg > 0):
        raise ValueError("d_g and w_zg must be positive")
    if 2.0 * d_g > w_zg:
        warnings.warn(
            f"aperture diameter {2 * d_g:g} m exceeds beam width {w_zg:g} m",
            FarFieldViolation,
            stacklevel=2,
        )
    return min(1.0, 4.0 * d_g**2 / w_zg**2)


def pointing_peak(A_MRR: float, w_z: float) -> float:
    """Zero-offset pointing loss ``2 A_MRR / (pi w_z^2)``."""
    return 2.0 * A_MRR / (math.pi * w_z**2)


def mrr_pointing_loss(offset, beam: BeamPhaseConfig, A_MRR: float):
    """Point-aperture pointing loss of one MRR at ``offset = (x_s, y_s)``.

    Every element of the array sees the same value, so this is also the
    array average.
    """
    x, y = (np.asarray(v, dtype=float) for v in offset)
    w = beam.w_z
    return (pointing_peak(A_MRR, w) * np.exp(-2.0 * (x * x + y * y) / (w * w)))[()]


def square_aperture_pointing_loss(offset, beam: BeamPhaseConfig, side: float):
    """Exact Gaussian-beam power fraction through a square aperture of side ``side``.

    The beam intensity is separable, so the aperture integral factors into
    two error-function differences.
    """
    x, y = (np.asarray(v, dtype=float) for v in offset)
    w = beam.w_z
    s = math.sqrt(2.0) / w
    h = 0.5 * side

    def axis(c):
        return 0.5 * (special.erf(s * (c + h)) - special.erf(s * (c - h)))

    return (axis(x) * axis(y))[()]


def channel_coefficient_sample(
    link: Link, beam: BeamPhaseConfig, offset, rng: np.random.Generator, size=None
):
    """Draw the instantaneous round-trip coefficient ``h`` for a beam offset.

    The 2M fading variates (uplink and downlink for every MRR) are independent.
    """
    tx = link.transceiver
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    fades = sample_gg(link.fading, rng, shape + (tx.M,)) * sample_gg(
        link.fading, rng, shape + (tx.M,)
    )
    deterministic = (
        link.h_L**2
        * receiver_geometric_gain(link.geometry.d_g, beam.w_z)
        * mrr_pointing_loss(offset, beam, tx.A_MRR)
    )
    return deterministic * np.sum(fades, axis=-1)[()]
