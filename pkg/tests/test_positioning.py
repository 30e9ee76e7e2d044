import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mrrlink.config import Scenario
from mrrlink.positioning import (
    PositionEstimate,
    PositioningLayout,
    estimate_position_method1,
    estimate_position_method2,
    ideal_benchmark,
    positioning_error,
    positioning_trial,
    random_satellite,
    select_quadrant,
    simulate_positioning_powers,
    trilaterate,
)
from mrrlink.presets import FIG8_NOISE, FIG8_W_GRID, mse_curve
from mrrlink.sensing import moments_exact


def rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


def quiet(**kw):
    return Scenario(noise_var=0.0, sigma_theta_e=0.0, sigma_R2=0.0, **kw)


def fig8(**kw):
    return Scenario(noise_var=FIG8_NOISE, **kw)


def test_trilaterate_centre():
    assert trilaterate(0.0, 30.0, 30.0, 30.0) == (0.0, 0.0)


def test_trilaterate_worked_point():
    x, y = trilaterate(math.sqrt(125), math.sqrt(425), math.sqrt(725), 30.0)
    assert (x, y) == pytest.approx((10.0, 5.0), abs=1e-12)


@given(st.floats(-40, 40), st.floats(-40, 40), st.sampled_from([1, -1]), st.sampled_from([1, -1]))
def test_trilaterate_round_trip_any_quadrant(x, y, sx, sy):
    R = 40.0
    R1 = math.hypot(x, y)
    R2 = math.hypot(x - sx * R, y)
    R3 = math.hypot(x, y - sy * R)
    xe, ye = trilaterate(R1, R2, R3, R, sx, sy)
    assert math.hypot(xe - x, ye - y) < 1e-9


def test_positioning_error_examples():
    assert positioning_error((1.0, 2.0), (1.0, 2.0)) == 0.0
    assert positioning_error(PositionEstimate(3.0, 4.0, "ideal"), (0.0, 0.0)) == 5.0


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_positioning_error_matches_high_precision(x, y):
    with mp.workdps(40):
        ref = float(mp.sqrt(mp.mpf(x) ** 2 + mp.mpf(y) ** 2))
    assert positioning_error((x, y), (0.0, 0.0)) == pytest.approx(ref, rel=1e-15, abs=1e-300)


def test_random_satellite_in_quarter_disc():
    g = rng()
    pts = np.array([random_satellite(g, 30.0) for _ in range(2000)])
    assert np.all(pts >= 0) and np.all(np.hypot(*pts.T) <= 30.0)


def test_noiseless_powers_deterministic():
    scn = quiet()
    model = scn.positioning_model()
    layout = scn.layout()
    sat = np.array([10.0, 5.0])
    obs = simulate_positioning_powers(layout, sat, model, rng())
    d2 = ((layout.centers - sat) ** 2).sum(axis=1)
    expected = model.gain * model.c2 * model.M * model.peak * np.exp(-2 * d2 / model.w_z**2)
    assert np.allclose(obs.samples, expected[:, None], rtol=1e-13)


def test_mean_power_matches_exact_moment():
    scn = fig8()
    model = scn.positioning_model()
    layout = scn.layout()
    sat = np.array([12.0, 7.0])
    g = rng(1)
    sums = np.array([simulate_positioning_powers(layout, sat, model, g).sums for _ in range(3000)])
    R = np.hypot(*(layout.centers - sat).T)
    expected = [model.gain * moments_exact(r, model)[0] for r in R]
    assert sums.mean(axis=0) == pytest.approx(expected, rel=0.02)
    # beams farther from the satellite see less power
    order = np.argsort(R)
    assert np.all(np.diff(np.array(expected)[order]) < 0)


def test_all_methods_exact_without_randomness():
    scn = quiet()
    model = scn.positioning_model()
    layout = scn.layout()
    g = rng(2)
    for _ in range(20):
        sat = random_satellite(g, layout.R_emb)
        obs = simulate_positioning_powers(layout, sat, model, g)
        for est in (
            estimate_position_method1(obs.sums, layout, model),
            estimate_position_method2(obs.samples, layout, model),
            ideal_benchmark(sat, obs.jitter, layout),
        ):
            assert positioning_error(est, sat) < 1e-9


def test_ideal_benchmark_unbiased_over_jitter():
    layout = PositioningLayout(30.0, 60.0)
    sat = np.array([10.0, 5.0])
    g = rng(3)
    est = np.array(
        [
            (lambda e: (e.x_hat, e.y_hat))(ideal_benchmark(sat, g.normal(0, 5.0, (5, 50, 2)), layout))
            for _ in range(100_000)
        ]
    )
    mean = est.mean(axis=0)
    se = est.std(axis=0) / math.sqrt(len(est))
    assert np.all(np.abs(mean - sat) < 3 * se)


def test_quadrant_selection_accuracy():
    scn = fig8(K_dp=50)
    model = scn.positioning_model()
    layout = scn.layout()
    g = rng(4)
    hits = n = 0
    while n < 2000:
        sat = random_satellite(g, layout.R_emb)
        if min(sat) < 0.1 * layout.R_emb:
            continue  # strictly inside the quadrant
        obs = simulate_positioning_powers(layout, sat, model, g)
        _, _, sx, sy = select_quadrant(obs.sums)
        hits += sx == 1 and sy == 1
        n += 1
    assert hits / n >= 0.99


def test_select_quadrant_picks_stronger_side():
    assert select_quadrant([5, 1, 2, 3, 0.5]) == (3, 2, -1, 1)


def test_method1_fails_on_non_positive_sum():
    scn = fig8()
    model = scn.positioning_model()
    est = estimate_position_method1(np.array([-1.0, 1e-9, 1e-9, 1e-10, 1e-10]), scn.layout(), model)
    assert not est.ok


def test_method2_skips_and_counts_bad_samples():
    scn = Scenario(noise_var=1e-18)
    model = scn.positioning_model()
    layout = scn.layout()
    obs = simulate_positioning_powers(layout, np.array([10.0, 5.0]), model, rng(5))
    est = estimate_position_method2(obs.samples, layout, model)
    assert est.skipped > 0


def test_trial_reports_every_method():
    scn = fig8()
    out = positioning_trial(rng(6), scn.layout(), scn.positioning_model())
    assert set(out) == {"se_method1", "se_method2", "se_ideal", "skipped", "quadrant_ok"}
    assert all(v >= 0 for v in out.values())


def test_mse_grows_with_ambiguity_radius():
    # ideal MSE has no R_emb dependence; the order between R_emb = 30 and 55 m
    # flips once w_zp exceeds about 60 m, so hold w_zp at 40 m
    rows = [mse_curve(fig8(R_emb=r), 11, 1, 1000, (40.0,))[0] for r in (30.0, 55.0, 80.0)]
    for key in ("mse_method1", "mse_method2"):
        vals = [r[key] for r in rows]
        assert 0 < vals[0] < vals[1] < vals[2]


def _best(scn, trials):
    rows = mse_curve(scn, 12, 1, trials, FIG8_W_GRID)
    return {k: min(r[k] for r in rows) for k in ("mse_method1", "mse_method2", "mse_ideal")}


@pytest.mark.slow
def test_methods_close_at_small_jitter():
    # sigma_e = 2 m, R_emb = 30 m, K_d = 50: methods agree within 10% at their best beamwidths
    best = _best(fig8(sigma_theta_e=2.0 / 500e3), 4000)
    assert best["mse_method2"] == pytest.approx(best["mse_method1"], rel=0.10)


@pytest.mark.slow
def test_method2_mse_increases_with_jitter():
    best = [_best(fig8(sigma_theta_e=s / 500e3), 2000)["mse_method2"] for s in (2.0, 5.0, 8.0)]
    assert best[0] < best[1] < best[2]
