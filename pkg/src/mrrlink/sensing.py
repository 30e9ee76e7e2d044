"""Acquisition (sensing) phase: received power, its moments, range estimators,
sensing probability and mean sensing time.

The received reflected power of a beam whose centre sits ``R_i`` metres from
the satellite is

    P_rsi = R P_t h_si + n_s,       n_s ~ N(0, K_c K_d N_0)
    h_si  = K_c h_L^2 h_pg sum_k h_ps[k] sum_m h_a1[k, m] h_a2[k, m]

where the FSM jitter inside ``h_ps[k]`` and the fading are redrawn every
coherence interval ``k``.  :class:`PhaseModel` carries everything needed to
evaluate that model for one beamwidth; the positioning phase reuses it with
its own beamwidth and ``K_d``.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy import special, stats
from scipy.interpolate import CubicSpline

from ._numerics import golden_section_min, quad
from .channel_model import (
    BeamPhaseConfig,
    Link,
    gg_mean,
    gg_second_moment,
    pointing_peak,
    receiver_geometric_gain,
)
from .errors import AccuracyRegimeViolation, NotEstimable

SecondMomentForm = Literal["erf", "asymptotic", "printed"]
DEFAULT_SECOND_MOMENT: SecondMomentForm = "asymptotic"


@dataclass(frozen=True)
class SensingScenario:
    """Acquisition settings. Angular scales are converted to metres at range ``Z``."""

    Z: float
    sigma_theta_ge: float
    sigma_theta_e: float
    sigma_theta_aq: float
    N_m: int
    K_c: int
    K_d: int
    T_bit: float
    R_th: float
    R_e: float

    def __post_init__(self):
        for name in ("Z", "sigma_theta_ge", "sigma_theta_aq", "T_bit", "R_th", "R_e"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sigma_theta_e < 0:
            raise ValueError("sigma_theta_e must be >= 0")
        if self.N_m < 1 or self.K_c < 1 or self.K_d < 1:
            raise ValueError("N_m, K_c and K_d must be >= 1")
        if not self.R_e < self.R_th:
            raise ValueError(f"need R_e < R_th, got R_e={self.R_e}, R_th={self.R_th}")

    @property
    def sigma_ge(self) -> float:
        return self.Z * self.sigma_theta_ge

    @property
    def sigma_e(self) -> float:
        return self.Z * self.sigma_theta_e

    @property
    def sigma_aq(self) -> float:
        return self.Z * self.sigma_theta_aq

    @property
    def K(self) -> int:
        return self.K_c * self.K_d

    @property
    def T_step(self) -> float:
        return self.K * self.T_bit

    @property
    def offset_scale(self) -> float:
        """Per-axis standard deviation of the beam-to-satellite offset ``R_i``."""
        return math.hypot(self.sigma_ge, self.sigma_aq)


@dataclass(frozen=True)
class PhaseModel:
    """Received-power model of one beam for a given beamwidth and integration length."""

    link: Link
    w_z: float
    sigma_e: float
    K_c: int
    K_d: int

    def __post_init__(self):
        if not self.w_z > 0:
            raise ValueError("w_z must be positive")
        if self.sigma_e < 0:
            raise ValueError("sigma_e must be >= 0")
        if self.K_c < 1 or self.K_d < 1:
            raise ValueError("K_c and K_d must be >= 1")

    def replace(self, **changes) -> PhaseModel:
        return replace(self, **changes)

    @property
    def beam(self) -> BeamPhaseConfig:
        return BeamPhaseConfig.from_width(self.w_z, self.link.Z)

    @property
    def h_pg(self) -> float:
        return receiver_geometric_gain(self.link.geometry.d_g, self.w_z)

    @property
    def c2(self) -> float:
        return self.K_c * self.link.h_L**2 * self.h_pg

    @property
    def peak(self) -> float:
        return pointing_peak(self.link.transceiver.A_MRR, self.w_z)

    @property
    def gain(self) -> float:
        """Detector gain ``R * P_t``."""
        tx = self.link.transceiver
        return tx.responsivity * tx.P_t

    @property
    def M(self) -> int:
        return self.link.transceiver.M

    @property
    def noise_var(self) -> float:
        """Variance of the noise accumulated over ``K_c * K_d`` samples."""
        return self.K_c * self.K_d * self.link.transceiver.noise_var


@dataclass(frozen=True)
class SensingCoefficients:
    c1: float
    c2: float
    A1: float
    A2: float
    A3: float
    A4: float
    A5: float
    A6: float
    A7: float
    AA1: float
    AA2: float
    AA3: float
    g1: float = field(repr=False)
    g2: float = field(repr=False)


def sensing_coefficients(model: PhaseModel) -> SensingCoefficients:
    """Constants of the large-offset (``R_i >> sigma_e``) moment approximations.

    ``A2`` and ``A6`` use their reduced forms ``-2/(w^2 + 4 s^2)`` and
    ``-4/(w^2 + 8 s^2)``; the textbook forms cancel catastrophically for small
    jitter.  ``AA3`` carries ``K_d (K_d - 1)``, the count of distinct
    coherence-interval pairs.
    """
    w2 = model.w_z**2
    s2 = model.sigma_e**2
    a = model.peak
    c2 = model.c2
    M = model.M
    K_d = model.K_d
    g1 = gg_mean(model.link.fading)
    g2 = gg_second_moment(model.link.fading)
    if s2 > 0:
        c1 = w2 / (4.0 * s2)
        A3 = 2.0 / w2 + 1.0 / (2.0 * s2)
        A4 = -1.0 / (2.0 * s2)
        A7 = 4.0 / w2 + 1.0 / (2.0 * s2)
    else:
        c1 = A3 = A7 = math.inf
        A4 = -math.inf
    A1 = a / math.sqrt(1.0 + 4.0 * s2 / w2)
    A2 = -2.0 / (w2 + 4.0 * s2)
    A5 = a * a / (2.0 * math.sqrt(1.0 + 8.0 * s2 / w2))
    A6 = -4.0 / (w2 + 8.0 * s2)
    AA1 = c2 * K_d * M * A1 * g1**2
    AA2 = K_d * M * c2**2 * A5 * (g2**2 + (M - 1) * g1**4)
    AA3 = c2**2 * M**2 * K_d * (K_d - 1) * A1**2 * g1**4
    return SensingCoefficients(c1, c2, A1, A2, A3, A4, A5, A6, A7, AA1, AA2, AA3, g1, g2)


# --------------------------------------------------------------------------
# beam placement


def place_acquisition_beams(scn: SensingScenario, rng: np.random.Generator) -> np.ndarray:
    """Random centres ``(x_Fi, y_Fi)`` of the ``N_m`` acquisition beams, shape ``(N_m, 2)``.

    Each centre is the commanded FSM offset plus the FSM's own pointing error.
    """
    commanded = rng.normal(0.0, 1.0, (scn.N_m, 2)) * scn.sigma_aq
    jitter = rng.normal(0.0, 1.0, (scn.N_m, 2)) * scn.sigma_e
    return commanded + jitter


def offset_distance(center, satellite):
    c = np.asarray(center, dtype=float)
    s = np.asarray(satellite, dtype=float)
    return np.hypot(c[..., 0] - s[..., 0], c[..., 1] - s[..., 1])[()]


def rician_offset_pdf(r, R_i, sigma_e: float):
    """Density of the jittered offset ``r_i`` given the mean offset ``R_i``."""
    r = np.asarray(r, dtype=float)
    s2 = sigma_e**2
    x = r * R_i / s2
    # I0(x) exp(-(r^2 + R^2)/2s^2) == i0e(x) exp(-(r - R)^2 / 2s^2)
    out = r / s2 * special.i0e(x) * np.exp(-((r - R_i) ** 2) / (2.0 * s2))
    return np.where(r >= 0, out, 0.0)[()]


# --------------------------------------------------------------------------
# simulation


def _fading_sums(model: PhaseModel, rng: np.random.Generator, shape) -> np.ndarray:
    """``sum_m h_a1[m] h_a2[m]`` for every entry of ``shape``."""
    fading = model.link.fading
    M = model.M
    if fading.is_frozen:
        return np.full(shape, float(M))
    a, b = fading.alpha, fading.beta
    full = tuple(shape) + (M,)
    prod = rng.gamma(a, 1.0 / a, full)
    prod *= rng.gamma(b, 1.0 / b, full)
    prod *= rng.gamma(a, 1.0 / a, full)
    prod *= rng.gamma(b, 1.0 / b, full)
    return prod.sum(axis=-1)


_CHUNK_ELEMENTS = 2_000_000


def simulate_h_si(R_i, model: PhaseModel, rng: np.random.Generator, n_steps: int):
    """Draw ``n_steps`` realisations of the aggregated channel ``h_si``.

    ``R_i`` may be a scalar or a 1-D array of offsets; in the array case the
    fading draws are shared between offsets while jitter is drawn per offset,
    so each offset's marginal law is exact.  Returns shape ``(n_steps,)`` or
    ``(len(R_i), n_steps)``.
    """
    R = np.atleast_1d(np.asarray(R_i, dtype=float))
    K_d, M = model.K_d, model.M
    w2 = model.w_z**2
    out = np.empty((R.size, n_steps))
    chunk = max(1, _CHUNK_ELEMENTS // (K_d * M))
    for start in range(0, n_steps, chunk):
        n = min(chunk, n_steps - start)
        fades = _fading_sums(model, rng, (n, K_d))
        for j, r in enumerate(R):
            jit = rng.normal(0.0, model.sigma_e, (2, n, K_d)) if model.sigma_e > 0 else 0.0
            if model.sigma_e > 0:
                d2 = (r + jit[0]) ** 2 + jit[1] ** 2
            else:
                d2 = np.full((n, K_d), r * r)
            h_ps = model.peak * np.exp(-2.0 * d2 / w2)
            out[j, start : start + n] = model.c2 * np.einsum("ij,ij->i", h_ps, fades)
    return out[0] if np.ndim(R_i) == 0 else out


def simulate_step_power(R_i, model: PhaseModel, rng: np.random.Generator, n_steps: int = 1):
    """Received reflected power ``P_rsi`` of one beam over ``n_steps`` acquisition steps."""
    h = simulate_h_si(R_i, model, rng, n_steps)
    noise = rng.normal(0.0, math.sqrt(model.noise_var), np.shape(h))
    return model.gain * h + noise


# --------------------------------------------------------------------------
# moments


def _pointing_moment(R: float, n: int, model: PhaseModel) -> float:
    """``E[h_ps^n | R_i]`` by quadrature over the jittered offset.

    The pointing-loss density is supported on ``(0, a)`` with
    ``a = 2 A_MRR / (pi w^2)``.  Substituting ``h = a exp(-2 r^2 / w^2)`` maps
    it back onto the Rician offset density, which is what is integrated here
    (the Bessel factor is carried scaled to avoid overflow).
    """
    w2 = model.w_z**2
    s = model.sigma_e
    if s == 0:
        return model.peak**n * math.exp(-2.0 * n * R * R / w2)

    s2 = s * s
    i0e = special.i0e

    def integrand(r):
        dens = r / s2 * float(i0e(r * R / s2)) * math.exp(-((r - R) ** 2) / (2.0 * s2))
        return math.exp(-2.0 * n * r * r / w2) * dens

    lo = max(0.0, R - 14.0 * s)
    hi = R + 14.0 * s
    points = [R - 3 * s, R, R + 3 * s] if R > 0 else [s, 3 * s]
    return model.peak**n * quad(integrand, lo, hi, points=points, epsrel=1e-10)


def pointing_moments_exact(R_i, model: PhaseModel):
    """``(E[h_ps | R_i], E[h_ps^2 | R_i])`` by quadrature."""
    R = np.asarray(R_i, dtype=float)
    m1 = np.vectorize(lambda r: _pointing_moment(float(r), 1, model))(R)
    m2 = np.vectorize(lambda r: _pointing_moment(float(r), 2, model))(R)
    return m1[()], m2[()]


def _fading_factors(model: PhaseModel):
    g1 = gg_mean(model.link.fading)
    g2 = gg_second_moment(model.link.fading)
    return g1, g2


def moments_exact(R_i, model: PhaseModel):
    """Conditional mean and second moment of ``h_si`` for a large ``K_d``.

    The pointing-loss moments come from quadrature; the cross term between
    distinct coherence intervals carries ``K_d (K_d - 1)`` pairs.
    """
    m1, m2 = pointing_moments_exact(R_i, model)
    g1, g2 = _fading_factors(model)
    K_d, M, c2 = model.K_d, model.M, model.c2
    mean = c2 * K_d * M * m1 * g1**2
    second = K_d * M * c2**2 * m2 * (g2**2 + (M - 1) * g1**4) + c2**2 * M**2 * K_d * (
        K_d - 1
    ) * m1**2 * g1**4
    return mean, second


def variance_exact(R_i, model: PhaseModel):
    """``V(h_si | R_i)`` assembled without the mean-square cancellation."""
    m1, m2 = pointing_moments_exact(R_i, model)
    g1, g2 = _fading_factors(model)
    K_d, M, c2 = model.K_d, model.M, model.c2
    v = K_d * c2**2 * M * (m2 * (g2**2 + (M - 1) * g1**4) - M * m1**2 * g1**4)
    return np.maximum(v, 0.0)[()]


def _warn_regime(R, model: PhaseModel):
    if model.sigma_e > 0 and np.any(np.asarray(R) <= 5.0 * model.sigma_e):
        warnings.warn(
            f"offset at or below 5 sigma_e = {5 * model.sigma_e:g} m; "
            "large-offset approximation is outside its accuracy regime",
            AccuracyRegimeViolation,
            stacklevel=3,
        )


def _erf_factor(R, model: PhaseModel, co: SensingCoefficients):
    """``1 - erf(A4 R / sqrt(A7))`` (tends to 2 at large offsets)."""
    R = np.asarray(R, dtype=float)
    if model.sigma_e == 0:
        return np.full(R.shape, 2.0)
    z = co.A4 * R / math.sqrt(co.A7)
    return special.erfc(z)


def _second_moment_factor(R, model, co, form: SecondMomentForm):
    if form == "erf":
        return _erf_factor(R, model, co)
    if form == "asymptotic":
        return 2.0
    if form == "printed":
        return 1.0
    raise ValueError(f"unknown second-moment form {form!r}")


def moments_approx(
    R_i,
    model: PhaseModel,
    second_moment: SecondMomentForm = DEFAULT_SECOND_MOMENT,
    *,
    warn: bool = True,
):
    """Closed-form conditional moments of ``h_si`` for ``R_i >> sigma_e``.

    ``second_moment`` picks the jitter term of ``E[h_si^2]``:

    ``"erf"``
        keeps the ``[1 - erf(A4 R / sqrt(A7))]`` factor (reference form);
    ``"asymptotic"``
        replaces that factor by its large-offset limit 2 (default fast path);
    ``"printed"``
        drops the factor altogether. Kept for comparison only: it halves the
        jitter term and can make the variance negative.
    """
    if warn:
        _warn_regime(R_i, model)
    co = sensing_coefficients(model)
    R2 = np.asarray(R_i, dtype=float) ** 2
    mean = co.AA1 * np.exp(co.A2 * R2)
    f = _second_moment_factor(R_i, model, co, second_moment)
    second = co.AA2 * f * np.exp(co.A6 * R2) + co.AA3 * np.exp(2.0 * co.A2 * R2)
    return mean[()], second[()]


def variance_approx(
    R_i,
    model: PhaseModel,
    second_moment: SecondMomentForm = DEFAULT_SECOND_MOMENT,
    *,
    warn: bool = False,
):
    """Closed-form ``V(h_si | R_i)``; the ``AA3 - AA1^2`` difference is formed exactly."""
    if warn:
        _warn_regime(R_i, model)
    co = sensing_coefficients(model)
    R2 = np.asarray(R_i, dtype=float) ** 2
    f = _second_moment_factor(R_i, model, co, second_moment)
    # AA3 - AA1^2 = -c2^2 M^2 K_d A1^2 g1^4
    cross = -(co.c2**2) * model.M**2 * model.K_d * co.A1**2 * co.g1**4
    v = co.AA2 * f * np.exp(co.A6 * R2) + cross * np.exp(2.0 * co.A2 * R2)
    if second_moment == "printed":
        return v[()]
    return np.maximum(v, 0.0)[()]


def _power_stats(R_i, model: PhaseModel, moments: str, second_moment=DEFAULT_SECOND_MOMENT):
    """Mean and variance of ``P_rsi`` given ``R_i``."""
    if moments == "approx":
        mean_h, _ = moments_approx(R_i, model, second_moment, warn=False)
        var_h = variance_approx(R_i, model, second_moment)
    elif moments == "exact":
        mean_h, _ = moments_exact(R_i, model)
        var_h = variance_exact(R_i, model)
    else:
        raise ValueError(f"moments must be 'approx' or 'exact', got {moments!r}")
    g = model.gain
    return g * mean_h, g * g * var_h + model.noise_var


def received_power_pdf(P, R_i, model: PhaseModel, moments: str = "approx"):
    """Gaussian density of ``P_rsi`` conditioned on ``R_i``."""
    mu, var = _power_stats(R_i, model, moments)
    return stats.norm.pdf(P, loc=mu, scale=np.sqrt(var))[()]


# --------------------------------------------------------------------------
# estimators


def _invert(P, amplitude: float, exponent: float, scalar: bool):
    """Solve ``P = amplitude * exp(exponent * R^2)`` for ``R >= 0``.

    Non-positive powers are not invertible (NaN, or :class:`NotEstimable` for
    scalar input); powers above ``amplitude`` clamp to ``R = 0``.
    """
    P = np.asarray(P, dtype=float)
    if scalar and not P > 0:
        raise NotEstimable(f"received power {float(P):g} <= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.log(P / amplitude)
        R2 = ratio / exponent
    R = np.sqrt(np.maximum(R2, 0.0))
    R = np.where(P > 0, R, np.nan)
    return R[()]


def ml_estimate_R_fast(P, model: PhaseModel):
    """Closed-form range estimate from the large-offset mean power model."""
    co = sensing_coefficients(model)
    return _invert(P, model.gain * co.AA1, co.A2, np.ndim(P) == 0)


def jitter_free_amplitude(model: PhaseModel) -> float:
    """Zero-offset mean power ignoring FSM jitter."""
    g1 = gg_mean(model.link.fading)
    return model.gain * model.c2 * model.K_d * model.M * model.peak * g1**2


def averaging_estimate_R(P, model: PhaseModel):
    """Low-complexity range estimate: inverts the jitter-free mean power.

    The model ``P = A exp(-2 R^2 / w^2)`` ignores the spreading caused by FSM
    jitter, so the estimate is biased low for ``sigma_e > 0``.
    """
    return _invert(P, jitter_free_amplitude(model), -2.0 / model.w_z**2, np.ndim(P) == 0)


def power_threshold(R_th: float, model: PhaseModel) -> float:
    """Power level ``P_rth`` that the mean model assigns to the distance threshold."""
    co = sensing_coefficients(model)
    return model.gain * co.AA1 * math.exp(co.A2 * R_th * R_th)


_EXACT_TABLE_NODES = 385


@functools.lru_cache(maxsize=16)
def _exact_power_table(model: PhaseModel):
    """Splines of ``ln mu`` and ``ln s^2`` over ``[0, 12 w_z]``.

    Both are close to quadratic in ``R``, so a cubic spline through a few
    hundred quadrature nodes reproduces them to well below the search tolerance.
    """
    grid = np.linspace(0.0, 12.0 * model.w_z, _EXACT_TABLE_NODES)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyRegimeViolation)
        mu, var = _power_stats(grid, model, "exact")
    tiny = np.finfo(float).tiny
    ln_mu = CubicSpline(grid, np.log(np.maximum(mu, tiny)))
    ln_var = CubicSpline(grid, np.log(np.maximum(var, tiny)))
    return grid[-1], ln_mu, ln_var


def _ml_metric_factory(P, model: PhaseModel, moments: str):
    if moments == "exact":
        R_tab, ln_mu, ln_var = _exact_power_table(model)

        def stats_at(R):
            R = np.asarray(R, dtype=float)
            inside = R <= R_tab
            Rc = np.minimum(R, R_tab)
            mu, var = np.exp(ln_mu(Rc)), np.exp(ln_var(Rc))
            if not inside.all():
                # far tail: the received mean is negligible, the approximation is fine
                mu_a, var_a = _power_stats(R, model, "approx")
                mu = np.where(inside, mu, mu_a)
                var = np.where(inside, var, var_a)
            return mu, var

    elif moments == "approx":

        def stats_at(R):
            return _power_stats(R, model, "approx")

    else:
        raise ValueError(f"moments must be 'approx' or 'exact', got {moments!r}")

    degenerate = (
        model.noise_var == 0 and model.sigma_e == 0 and model.link.fading.is_frozen
    )
    tiny = np.finfo(float).tiny

    def metric(R, Pv):
        mu, var = stats_at(R)
        if degenerate:
            # zero-variance likelihood: only an exact match is admissible
            return (Pv - mu) ** 2
        var = np.maximum(var, tiny)
        return np.log(var) + (Pv - mu) ** 2 / var

    return metric


def ml_estimate_R(
    P,
    model: PhaseModel,
    *,
    moments: str = "exact",
    search_max: float | None = None,
    tol: float = 0.01,
    bracket: float = 0.5,
    fallback_points: int = 4096,
):
    """Maximum-likelihood range estimate under the Gaussian received-power law.

    The metric ``ln(s^2(R)) + (P - mu(R))^2 / s^2(R)`` uses the quadrature
    moments by default (``moments="approx"`` swaps in the closed-form ones,
    whose mean is slightly high under jitter) and is minimised by golden
    section on ``[(1 - bracket) R0, (1 + bracket) R0]`` around the averaging
    estimate ``R0`` down to ``tol`` metres.  When the initializer is
    unavailable (``R0 = 0``) or the minimum lands on the bracket edge, a
    ``fallback_points`` grid over ``[0, search_max]`` picks the starting cell
    instead.  ``search_max`` defaults to ``10 * w_z``; acquisition callers pass
    ``6 sigma_ge``.

    Powers ``<= 0`` are not estimable: NaN for array input,
    :class:`NotEstimable` for a scalar.
    """
    scalar = np.ndim(P) == 0
    Pa = np.atleast_1d(np.asarray(P, dtype=float))
    if scalar and not Pa[0] > 0:
        raise NotEstimable(f"received power {Pa[0]:g} <= 0")
    out = np.full(Pa.shape, np.nan)
    valid = Pa > 0
    if not valid.any():
        return out[0] if scalar else out
    Pv = Pa[valid]
    metric = _ml_metric_factory(Pv, model, moments)
    R_max = float(search_max) if search_max is not None else 10.0 * model.w_z

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyRegimeViolation)
        R0 = np.asarray(averaging_estimate_R(Pv, model), dtype=float).reshape(Pv.shape)
        lo = (1.0 - bracket) * R0
        hi = np.minimum((1.0 + bracket) * R0, R_max)
        est = golden_section_min(lambda r: metric(r, Pv), lo, hi, tol)
        edge = (R0 <= 0) | (np.abs(est - lo) <= tol) | (np.abs(est - hi) <= tol)
        if edge.any():
            est[edge] = _grid_then_refine(metric, Pv[edge], R_max, fallback_points, tol)
    out[valid] = est
    return out[0] if scalar else out


def _grid_then_refine(metric, P, R_max, n_points, tol):
    grid = np.linspace(0.0, R_max, n_points)
    step = grid[1] - grid[0]
    best = np.empty(P.shape)
    for i, p in enumerate(P):
        j = int(np.argmin(metric(grid, np.full(grid.shape, p))))
        best[i] = grid[j]
    lo = np.maximum(best - step, 0.0)
    hi = np.minimum(best + step, R_max)
    return golden_section_min(lambda r: metric(r, P), lo, hi, tol)


def estimator_pdf(
    R_hat, R_i, model: PhaseModel, second_moment: SecondMomentForm = DEFAULT_SECOND_MOMENT
):
    """Density of the closed-form range estimate given the true offset ``R_i``."""
    _warn_regime(R_i, model)
    co = sensing_coefficients(model)
    var_h = variance_approx(R_i, model, second_moment)
    s = math.sqrt(model.gain**2 * var_h + model.noise_var)
    amp = model.gain * co.AA1
    x = np.asarray(R_hat, dtype=float)
    ex = np.exp(co.A2 * x * x)
    ref = math.exp(co.A2 * R_i * R_i)
    # dP/dR_hat = 2 |A2| amp R_hat exp(A2 R_hat^2)
    jac = 2.0 * abs(co.A2) * amp * x * ex
    dens = jac / (math.sqrt(2.0 * math.pi) * s) * np.exp(-((amp * (ex - ref)) ** 2) / (2 * s * s))
    return np.where(x >= 0, dens, 0.0)[()]


def estimator_cdf(
    x, R_i, model: PhaseModel, second_moment: SecondMomentForm = DEFAULT_SECOND_MOMENT
):
    """``Prob(R_hat <= x | R_i)`` for the closed-form estimate.

    Includes the atom at ``R_hat = 0`` (powers above the zero-offset mean);
    powers ``<= 0`` never produce an estimate, so the limit at infinity is
    ``Prob(P_rsi > 0)``.
    """
    co = sensing_coefficients(model)
    var_h = variance_approx(R_i, model, second_moment)
    s = math.sqrt(model.gain**2 * var_h + model.noise_var)
    amp = model.gain * co.AA1
    x = np.asarray(x, dtype=float)
    z = amp * (np.exp(co.A2 * x * x) - math.exp(co.A2 * R_i * R_i)) / s
    return np.where(x >= 0, stats.norm.sf(z), 0.0)[()]


def q_function(z):
    return stats.norm.sf(z)


# --------------------------------------------------------------------------
# detection and sensing probability


def detection_decision(R_hat, R_th: float):
    """A beam senses the satellite when its range estimate is strictly below ``R_th``."""
    R_hat = np.asarray(R_hat, dtype=float)
    return (R_hat < R_th)[()]


def conditional_sensing_prob(
    R_i, model: PhaseModel, R_th: float, R_e: float, second_moment=DEFAULT_SECOND_MOMENT
):
    """``Prob(|R_i - R_hat| < R_e, R_hat < R_th | R_i)`` from the estimator CDF."""
    R = np.atleast_1d(np.asarray(R_i, dtype=float))
    out = np.empty(R.shape)
    for i, r in enumerate(R):
        lower = r - R_e
        upper = min(r + R_e, R_th)
        if upper <= max(lower, 0.0):
            out[i] = 0.0
            continue
        F_up = estimator_cdf(upper, r, model, second_moment)
        F_lo = estimator_cdf(lower, r, model, second_moment) if lower > 0 else 0.0
        out[i] = max(F_up - F_lo, 0.0)
    return out[0] if np.ndim(R_i) == 0 else out


def conditional_sensing_prob_qform(
    R_i: float, model: PhaseModel, R_th: float, R_e: float, second_moment=DEFAULT_SECOND_MOMENT
) -> float:
    """Three-case Q-function form of the conditional sensing probability.

    Case split on ``R_i`` relative to ``R_e`` and ``R_th``; assumes
    ``R_th > 2 R_e`` so the cases do not overlap.  ``q(x)`` below is the
    estimator CDF written as a Q-function.
    """
    co = sensing_coefficients(model)
    var_h = variance_approx(R_i, model, second_moment)
    s = math.sqrt(model.gain**2 * var_h + model.noise_var)
    amp = model.gain * co.AA1
    ref = math.exp(co.A2 * R_i * R_i)

    def q(x):
        return float(q_function(amp * (math.exp(co.A2 * x * x) - ref) / s))

    def U(v):
        return 1.0 if v > 0 else 0.0

    near_threshold = (q(R_th) - q(R_i - R_e)) * U(R_e - abs(R_i - R_th))
    interior = (q(R_i + R_e) - q(R_i - R_e)) * (U(R_i - R_e) - U(R_i - R_th + R_e))
    near_centre = q(R_i + R_e) * U(R_e - R_i)
    return near_threshold + interior + near_centre


def rayleigh_offset_pdf(R, scale: float):
    R = np.asarray(R, dtype=float)
    return np.where(R >= 0, R / scale**2 * np.exp(-(R**2) / (2 * scale**2)), 0.0)[()]


def per_beam_sensing_prob(
    scn: SensingScenario, model: PhaseModel, second_moment=DEFAULT_SECOND_MOMENT
) -> float:
    """Probability that one acquisition beam senses the satellite with error below ``R_e``.

    Averages the conditional probability over the Rayleigh law of ``R_i``
    (per-axis scale ``sqrt(sigma_ge^2 + sigma_aq^2)``); the integrand vanishes
    beyond ``R_th + R_e``.
    """
    scale = scn.offset_scale
    R_th, R_e = scn.R_th, scn.R_e

    def integrand(r):
        return float(
            conditional_sensing_prob(r, model, R_th, R_e, second_moment)
        ) * float(rayleigh_offset_pdf(r, scale))

    breaks = sorted({R_e, max(R_th - R_e, 0.0), R_th})
    edges = [0.0] + [b for b in breaks if 0 < b < R_th + R_e] + [R_th + R_e]
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyRegimeViolation)
        for a, b in zip(edges[:-1], edges[1:]):
            total += quad(integrand, a, b, epsabs=1e-14, epsrel=1e-8, limit=200)
    return min(max(total, 0.0), 1.0)


def overall_sensing_prob(p_i, N_m: int):
    """Probability that at least one of ``N_m`` independent beams senses the satellite."""
    p = np.asarray(p_i, dtype=float)
    with np.errstate(divide="ignore"):
        return (-np.expm1(N_m * np.log1p(-p)))[()]


def mean_sensing_time(scn: SensingScenario, P_s_on: float) -> tuple[float, float]:
    """Mean number of acquisition steps and mean sensing time."""
    N_aq = 1.0 / P_s_on
    return N_aq, scn.K_d * scn.K_c * scn.T_bit * N_aq


def sensing_model_for(scn: SensingScenario, link: Link, w_zs: float) -> PhaseModel:
    return PhaseModel(link, w_zs, scn.sigma_e, scn.K_c, scn.K_d)


def sensing_time_curve(scn: SensingScenario, link: Link, w_grid) -> dict[str, np.ndarray]:
    """Per-beam and overall sensing probabilities and ``N_aq`` over a beamwidth grid."""
    w = np.asarray(w_grid, dtype=float)
    p_i = np.array([per_beam_sensing_prob(scn, sensing_model_for(scn, link, wz)) for wz in w])
    p_on = overall_sensing_prob(p_i, scn.N_m)
    with np.errstate(divide="ignore"):
        N_aq = np.where(p_on > 0, 1.0 / p_on, np.inf)
    return {
        "w_zs": w,
        "P_S_on_i": p_i,
        "P_s_on": np.asarray(p_on),
        "N_aq": N_aq,
        "T_s": N_aq * scn.T_step,
    }


def optimize_beamwidth_sensing(scn: SensingScenario, link: Link, w_grid):
    """Beamwidth minimising the mean number of acquisition steps on ``w_grid``.

    Returns ``(w_opt, curve)`` where ``curve`` is the table from
    :func:`sensing_time_curve`.
    """
    w = np.asarray(w_grid, dtype=float)
    if w.size < 8 or np.any(w <= 0):
        raise ValueError("need at least 8 positive beamwidths")
    curve = sensing_time_curve(scn, link, w)
    return float(w[int(np.argmin(curve["N_aq"]))]), curve


# --------------------------------------------------------------------------
# end-to-end acquisition


@dataclass
class StepOutcome:
    """One acquisition step.

    Beams whose offset is at least ``R_th + R_e`` can never satisfy the
    sensing event; when gating is on their power is not simulated
    (``P_rsi`` and ``R_hat`` are NaN, ``simulated`` is False).
    """

    R_i: np.ndarray
    P_rsi: np.ndarray
    R_hat: np.ndarray
    detected: np.ndarray
    sensed: np.ndarray
    simulated: np.ndarray

    @property
    def any_sensed(self) -> bool:
        return bool(self.sensed.any())


def acquisition_step(
    rng: np.random.Generator,
    scn: SensingScenario,
    model: PhaseModel,
    *,
    estimator: str = "fast",
    gate: bool = True,
    independent_beams: bool = False,
) -> StepOutcome:
    """Simulate one acquisition step: place beams, receive, estimate, decide.

    All beams of a step normally share one gimbal error (satellite offset).
    ``independent_beams`` draws a separate one per beam, which is the
    premise behind combining beams as ``1 - (1 - p)^N_m``.
    """
    n_sat = scn.N_m if independent_beams else 1
    sat = rng.normal(0.0, scn.sigma_ge, (n_sat, 2))
    commanded = rng.normal(0.0, scn.sigma_aq, (scn.N_m, 2))
    R = offset_distance(commanded, sat)
    R = np.atleast_1d(R)
    simulated = R < scn.R_th + scn.R_e if gate else np.ones(R.shape, bool)
    P = np.full(R.shape, np.nan)
    for i in np.flatnonzero(simulated):
        P[i] = simulate_step_power(R[i], model, rng, 1)[0]
    R_hat = np.full(R.shape, np.nan)
    if simulated.any():
        R_hat[simulated] = estimate_range(P[simulated], model, estimator, 6.0 * scn.sigma_ge)
    with np.errstate(invalid="ignore"):
        detected = np.where(np.isnan(R_hat), False, R_hat < scn.R_th)
        sensed = detected & (np.abs(R_hat - R) < scn.R_e)
    return StepOutcome(R, P, R_hat, detected, sensed, simulated)


def estimate_range(P, model: PhaseModel, estimator: str, search_max: float | None = None):
    """Dispatch to one of the range estimators by name: fast, ml, averaging."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyRegimeViolation)
        P = np.atleast_1d(np.asarray(P, dtype=float))
        if estimator == "fast":
            return np.atleast_1d(ml_estimate_R_fast(P, model))
        if estimator == "ml":
            return ml_estimate_R(P, model, search_max=search_max)
        if estimator == "averaging":
            return np.atleast_1d(averaging_estimate_R(P, model))
    raise ValueError(f"unknown estimator {estimator!r}")
