import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from mrrlink.channel_model import (
    AtmosphereParams,
    BeamPhaseConfig,
    Link,
    LinkGeometry,
    TransceiverParams,
    TurbulenceFading,
    atmospheric_attenuation,
    channel_coefficient_sample,
    cn2_profile,
    gg_density,
    gg_mean,
    gg_second_moment,
    gg_shape_params,
    mrr_pointing_loss,
    no_fading,
    receiver_geometric_gain,
    rytov_variance,
    sample_gg,
    scintillation_index,
    slant_range,
    square_aperture_pointing_loss,
)
from mrrlink.errors import DegenerateTurbulence, FarFieldViolation


def rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


GEOM = LinkGeometry(500e3, 0.0, math.pi / 2, 0.1)
ATM = AtmosphereParams(0.0, 1550e-9, 21.0, 1.7e-14)


# slant range / attenuation


def test_slant_range_zenith():
    assert slant_range(GEOM) == 500e3


def test_slant_range_thirty_degrees():
    g = LinkGeometry(500e3, 0.0, math.pi / 6, 0.1)
    assert slant_range(g) == pytest.approx(1000e3, rel=1e-15)


def test_slant_range_45_degrees_matches_high_precision():
    g = LinkGeometry(500e3, 0.0, math.pi / 4, 0.1)
    with mp.workdps(40):
        ref = mp.mpf(500e3) / mp.sin(mp.pi / 4)
    assert slant_range(g) == pytest.approx(float(ref), rel=1e-14)


def test_geometry_rejects_bad_heights():
    with pytest.raises(ValueError):
        LinkGeometry(100.0, 200.0, 1.0, 0.1)


def test_attenuation_no_scattering():
    assert atmospheric_attenuation(500e3, ATM) == 1.0


def test_attenuation_one_e_fold():
    atm = AtmosphereParams(2e-6, 1550e-9, 21.0, 1.7e-14)
    assert atmospheric_attenuation(500e3, atm) == pytest.approx(math.exp(-1), rel=1e-15)


def test_attenuation_half_power():
    atm = AtmosphereParams(math.log(2) / 1e3, 1550e-9, 21.0, 1.7e-14)
    assert atmospheric_attenuation(1e3, atm) == pytest.approx(0.5, rel=1e-14)


# turbulence profile and Rytov variance


def test_cn2_at_ground():
    atm = AtmosphereParams(0.0, 1550e-9, 27.0, 3e-15)
    assert cn2_profile(0.0, atm) == pytest.approx(2.7e-16 + 3e-15, rel=1e-15)


def test_cn2_vanishes_far_up():
    assert cn2_profile(1e7, ATM) < 1e-300


def test_cn2_at_1km_term_by_term():
    with mp.workdps(30):
        h = mp.mpf(1000)
        ref = (
            mp.mpf("0.00594") * (mp.mpf(21) / 27) ** 2 * (mp.mpf("1e-5") * h) ** 10 * mp.exp(-h / 1000)
            + mp.mpf("2.7e-16") * mp.exp(-h / 1500)
            + mp.mpf("1.7e-14") * mp.exp(-h / 100)
        )
    assert cn2_profile(1000.0, ATM) == pytest.approx(float(ref), rel=1e-13)


def test_rytov_zero_profile():
    assert rytov_variance(GEOM, ATM, cn2=lambda h: 0.0) == 0.0


def test_rytov_wavenumber_scaling():
    half = AtmosphereParams(0.0, 775e-9, 21.0, 1.7e-14)
    ratio = rytov_variance(GEOM, half) / rytov_variance(GEOM, ATM)
    assert ratio == pytest.approx(2 ** (7 / 6), rel=1e-9)


def test_rytov_elevation_scaling():
    g = LinkGeometry(500e3, 0.0, math.pi / 3, 0.1)
    ratio = rytov_variance(g, ATM) / rytov_variance(GEOM, ATM)
    assert ratio == pytest.approx(math.sin(math.pi / 3) ** (-11 / 6), rel=1e-9)


def test_rytov_default_matches_gauss_legendre():
    # piecewise fixed-order Gauss-Legendre, breakpoints on a log scale
    edges = np.concatenate([[0.0], np.geomspace(1.0, 500e3, 60)])
    x, w = np.polynomial.legendre.leggauss(200)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        h = 0.5 * (b - a) * x + 0.5 * (a + b)
        total += 0.5 * (b - a) * np.sum(w * cn2_profile(h, ATM) * h ** (5 / 6))
    ref = 2.25 * ATM.k ** (7 / 6) * total
    assert rytov_variance(GEOM, ATM) == pytest.approx(ref, rel=1e-5)


# Gamma-Gamma


def test_shape_params_plane_wave_formula():
    s = 0.25
    a, b = gg_shape_params(s)
    a_ref = 1 / math.expm1(0.49 * s / (1 + 1.11 * s ** 1.2) ** (7 / 6))
    b_ref = 1 / math.expm1(0.51 * s / (1 + 0.69 * s ** 1.2) ** (5 / 6))
    assert (a, b) == pytest.approx((a_ref, b_ref), rel=1e-14)
    assert 1 / a + 1 / b + 1 / (a * b) == pytest.approx(scintillation_index(s), rel=1e-12)


def test_shape_params_grow_as_turbulence_vanishes():
    vals = [gg_shape_params(s) for s in (1.0, 0.1, 0.01, 0.001)]
    alphas, betas = zip(*vals)
    assert all(np.diff(alphas) > 0) and all(np.diff(betas) > 0)


def test_shape_params_smaller_in_stronger_turbulence():
    a1, b1 = gg_shape_params(1.0)
    a4, b4 = gg_shape_params(4.0)
    assert a4 < a1 and b4 < b1


def test_spherical_wave_variant_differs():
    assert gg_shape_params(1.0, "spherical") != gg_shape_params(1.0, "plane")


def test_zero_rytov_is_degenerate():
    with pytest.raises(DegenerateTurbulence):
        gg_shape_params(0.0)
    assert TurbulenceFading.from_rytov(0.0).is_frozen


@given(st.floats(0.3, 50.0), st.floats(0.3, 50.0))
def test_gg_mean_is_one(a, b):
    assert gg_mean(TurbulenceFading(1.0, a, b)) == pytest.approx(1.0, rel=1e-13)


@given(st.floats(0.3, 1e4), st.floats(0.3, 1e4))
def test_gg_second_moment_reduction(a, b):
    m2 = gg_second_moment(TurbulenceFading(1.0, a, b))
    assert m2 == pytest.approx((1 + 1 / a) * (1 + 1 / b), rel=1e-12)


def test_gg_second_moment_example_and_limit():
    assert gg_second_moment(TurbulenceFading(1.0, 4.0, 2.0)) == pytest.approx(1.875, rel=1e-14)
    assert gg_second_moment(TurbulenceFading(1.0, 1e9, 1e9)) == pytest.approx(1.0, abs=1e-8)
    assert gg_second_moment(no_fading()) == 1.0


def test_gg_density_normalised():
    total, _ = integrate.quad(lambda h: gg_density(h, 4.0, 2.0), 0, np.inf, limit=200)
    mean, _ = integrate.quad(lambda h: h * gg_density(h, 4.0, 2.0), 0, np.inf, limit=200)
    assert total == pytest.approx(1.0, abs=1e-8)
    assert mean == pytest.approx(1.0, abs=1e-8)


def test_gg_density_matches_mpmath():
    a, b, h = 4.0, 2.0, 0.7
    with mp.workdps(30):
        ref = (
            2 * (a * b) ** ((a + b) / 2) / (mp.gamma(a) * mp.gamma(b))
            * mp.mpf(h) ** ((a + b) / 2 - 1) * mp.besselk(a - b, 2 * mp.sqrt(a * b * h))
        )
    assert gg_density(h, a, b) == pytest.approx(float(ref), rel=1e-12)


def test_sampler_moments():
    x = sample_gg(TurbulenceFading(1.0, 4.0, 2.0), rng(1), 1_000_000)
    assert abs(x.mean() - 1) < 0.005
    assert (x * x).mean() == pytest.approx(1.875, rel=0.02)


def test_sampler_histogram_matches_density():
    x = sample_gg(TurbulenceFading(1.0, 4.0, 2.0), rng(2), 1_000_000)
    edges = np.linspace(0.0, 4.0, 81)
    counts, _ = np.histogram(x, edges)
    emp = counts / (x.size * np.diff(edges))
    nodes, w = np.polynomial.legendre.leggauss(8)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    pts = mid[:, None] + half[:, None] * nodes
    ana = (gg_density(pts, 4.0, 2.0) * w).sum(axis=1) / 2
    assert np.max(np.abs(emp - ana)) < 0.03 * ana.max()


def test_sampler_frozen_fading():
    assert np.all(sample_gg(no_fading(), rng(), 5) == 1.0)


# geometric losses


def test_geometric_gain_examples():
    assert receiver_geometric_gain(0.1, 0.2) == pytest.approx(1.0)
    assert receiver_geometric_gain(0.1, 80.0) == pytest.approx(6.25e-6, rel=1e-14)
    assert receiver_geometric_gain(0.1, 160.0) == pytest.approx(receiver_geometric_gain(0.1, 80.0) / 4, rel=1e-14)


def test_geometric_gain_capped_with_warning():
    with pytest.warns(FarFieldViolation):
        assert receiver_geometric_gain(1.0, 0.5) == 1.0


def test_pointing_loss_peak():
    beam = BeamPhaseConfig.from_width(80.0, 500e3)
    assert mrr_pointing_loss((0.0, 0.0), beam, 1e-4) == pytest.approx(9.947e-9, rel=1e-4)


@given(st.floats(0, 2 * math.pi))
def test_pointing_loss_one_e_fold_ring(t):
    w = 80.0
    beam = BeamPhaseConfig.from_width(w, 500e3)
    r = w / math.sqrt(2)
    peak = mrr_pointing_loss((0.0, 0.0), beam, 1e-4)
    val = mrr_pointing_loss((r * math.cos(t), r * math.sin(t)), beam, 1e-4)
    assert val == pytest.approx(peak / math.e, rel=1e-12)


@given(st.floats(0, 300), st.floats(0, 300))
def test_pointing_loss_radially_decreasing(r1, r2):
    beam = BeamPhaseConfig.from_width(80.0, 500e3)
    a = mrr_pointing_loss((r1, 0.0), beam, 1e-4)
    b = mrr_pointing_loss((0.0, r2), beam, 1e-4)
    if r1 < r2:
        assert a >= b
    assert a <= mrr_pointing_loss((0.0, 0.0), beam, 1e-4)


def test_square_aperture_closed_form_matches_point_approximation():
    beam = BeamPhaseConfig.from_width(80.0, 500e3)
    for x, y in ((0.0, 0.0), (30.0, -40.0), (120.0, 10.0)):
        exact = square_aperture_pointing_loss((x, y), beam, 0.01)
        assert mrr_pointing_loss((x, y), beam, 1e-4) == pytest.approx(exact, rel=1e-6)


# instantaneous coefficient


def _link(M=9, fading=None):
    atm = AtmosphereParams(1e-7, 1550e-9, 21.0, 1.7e-14)
    fad = fading if fading is not None else TurbulenceFading.from_rytov(0.25)
    return Link(GEOM, atm, fad, TransceiverParams(1.0, 0.9, 0.0, 1e-4, M))


def test_coefficient_deterministic_when_fading_frozen():
    link = _link(M=1, fading=no_fading())
    beam = BeamPhaseConfig.from_width(80.0, GEOM.Z)
    h = channel_coefficient_sample(link, beam, (20.0, 10.0), rng())
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ref = link.h_L**2 * receiver_geometric_gain(0.1, 80.0) * mrr_pointing_loss((20.0, 10.0), beam, 1e-4)
    assert h == pytest.approx(ref, rel=1e-14)


def test_coefficient_mean_and_sign():
    link = _link()
    beam = BeamPhaseConfig.from_width(80.0, GEOM.Z)
    h = channel_coefficient_sample(link, beam, (20.0, 10.0), rng(3), 1_000_000)
    ref = link.h_L**2 * receiver_geometric_gain(0.1, 80.0) * mrr_pointing_loss((20.0, 10.0), beam, 1e-4) * 9
    assert np.all(h >= 0)
    assert h.mean() == pytest.approx(ref, rel=0.01)


def test_coefficient_variance_scales_inverse_with_M():
    beam = BeamPhaseConfig.from_width(80.0, GEOM.Z)
    v = []
    for M in (1, 4, 16):
        h = channel_coefficient_sample(_link(M), beam, (0.0, 0.0), rng(M), 200_000) / M
        v.append(h.var())
    assert v[0] / v[1] == pytest.approx(4, rel=0.05)
    assert v[1] / v[2] == pytest.approx(4, rel=0.05)
