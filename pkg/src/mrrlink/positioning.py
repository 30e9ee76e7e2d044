"""Five-beam positioning inside the ambiguity circle.

One beam sits on the circle centre and four on its circumference.  Each
beam integrates ``K_d`` samples; ranges to three beams covering the
satellite's quadrant are estimated from received power and trilaterated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sensing import PhaseModel, _fading_sums, jitter_free_amplitude

METHODS = ("method1", "method2", "ideal")


@dataclass(frozen=True)
class PositioningLayout:
    R_emb: float
    w_zp: float

    def __post_init__(self):
        if not self.R_emb > 0:
            raise ValueError("R_emb must be positive")
        if not self.w_zp > 0:
            raise ValueError("w_zp must be positive")

    @property
    def centers(self) -> np.ndarray:
        r = self.R_emb
        return np.array([[0.0, 0.0], [r, 0.0], [0.0, r], [-r, 0.0], [0.0, -r]])


@dataclass(frozen=True)
class PositionEstimate:
    x_hat: float
    y_hat: float
    method: str
    skipped: int = 0

    @property
    def ok(self) -> bool:
        return math.isfinite(self.x_hat) and math.isfinite(self.y_hat)


@dataclass
class PositioningSamples:
    """Received samples ``P'_rpi[k]`` (shape ``(5, K_d)``), their sums and the jitter used."""

    samples: np.ndarray
    jitter: np.ndarray
    satellite: np.ndarray

    @property
    def sums(self) -> np.ndarray:
        return self.samples.sum(axis=1)


def trilaterate(R1, R2, R3, R_emb: float, sx: int = 1, sy: int = 1):
    """Position from ranges to the centre beam and the two circumference beams.

    ``sx`` / ``sy`` give the side of the x- and y-axis beams used
    (``+1`` for ``(R_emb, 0)`` / ``(0, R_emb)``, ``-1`` for the opposite ones).
    """
    R1 = np.asarray(R1, dtype=float)
    x = sx * (R1**2 - np.asarray(R2, dtype=float) ** 2 + R_emb**2) / (2.0 * R_emb)
    y = sy * (R1**2 - np.asarray(R3, dtype=float) ** 2 + R_emb**2) / (2.0 * R_emb)
    return x[()], y[()]


def positioning_error(est: PositionEstimate | tuple, truth) -> float:
    if isinstance(est, PositionEstimate):
        x, y = est.x_hat, est.y_hat
    else:
        x, y = est
    return math.hypot(x - truth[0], y - truth[1])


def random_satellite(rng: np.random.Generator, R_emb: float) -> np.ndarray:
    """Uniform draw over the quarter disc between beams 1, 2 and 3."""
    r = R_emb * math.sqrt(rng.random())
    t = 0.5 * math.pi * rng.random()
    return np.array([r * math.cos(t), r * math.sin(t)])


def simulate_positioning_powers(
    layout: PositioningLayout,
    satellite,
    model: PhaseModel,
    rng: np.random.Generator,
) -> PositioningSamples:
    """Per-sample received power of all five beams.

    ``P'_rpi[k] = R P_t K_c h[k] + n_p[k]`` with ``n_p ~ N(0, K_c N_0)``;
    FSM jitter and fading are redrawn for every ``k``.
    """
    sat = np.asarray(satellite, dtype=float)
    K_d = model.K_d
    jitter = rng.normal(0.0, 1.0, (5, K_d, 2)) * model.sigma_e
    fades = _fading_sums(model, rng, (5, K_d))
    rel = layout.centers[:, None, :] - sat[None, None, :] + jitter
    d2 = rel[..., 0] ** 2 + rel[..., 1] ** 2
    h_ps = model.peak * np.exp(-2.0 * d2 / model.w_z**2)
    signal = model.gain * model.c2 * h_ps * fades
    noise_sd = math.sqrt(model.K_c * model.link.transceiver.noise_var)
    samples = signal + rng.normal(0.0, 1.0, (5, K_d)) * noise_sd
    return PositioningSamples(samples, jitter, sat)


def select_quadrant(sums) -> tuple[int, int, int, int]:
    """Pick the stronger beam on each axis.

    Returns ``(ix, iy, sx, sy)``: beam indices (0-based) of the x- and y-axis
    beams and their sides.  Choosing the stronger of beams 2/4 and of 3/5 is
    the same as taking the top two of beams 2..5 when the satellite lies
    strictly inside a quadrant.
    """
    s = np.asarray(sums, dtype=float)
    ix, sx = (1, 1) if s[1] >= s[3] else (3, -1)
    iy, sy = (2, 1) if s[2] >= s[4] else (4, -1)
    return ix, iy, sx, sy


def _invert_jitter_free(P, amplitude: float, w_z: float) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        R2 = -0.5 * w_z**2 * np.log(P / amplitude)
    R = np.sqrt(np.maximum(R2, 0.0))
    return np.where(P > 0, R, np.nan)


def estimate_position_method1(sums, layout: PositioningLayout, model: PhaseModel) -> PositionEstimate:
    """Invert each beam's summed power, then trilaterate.

    The ``K_d``-fold sum is kept and ``K_d`` is folded into the mean model.
    A non-positive sum on a selected beam makes the trial fail (NaN estimate).
    """
    ix, iy, sx, sy = select_quadrant(sums)
    amp = jitter_free_amplitude(model)
    R = _invert_jitter_free(np.asarray(sums)[[0, ix, iy]], amp, model.w_z)
    x, y = trilaterate(R[0], R[1], R[2], layout.R_emb, sx, sy)
    return PositionEstimate(float(x), float(y), "method1")


def estimate_position_method2(samples, layout: PositioningLayout, model: PhaseModel) -> PositionEstimate:
    """Invert every sample, average the valid per-sample ranges, then trilaterate.

    Samples with non-positive power are skipped and counted.  A beam with no
    valid sample makes the trial fail.
    """
    samples = np.asarray(samples, dtype=float)
    ix, iy, sx, sy = select_quadrant(samples.sum(axis=1))
    amp = jitter_free_amplitude(model) / model.K_d
    R_k = _invert_jitter_free(samples[[0, ix, iy]], amp, model.w_z)
    valid = np.isfinite(R_k)
    skipped = int(valid.size - valid.sum())
    n = valid.sum(axis=1)
    with np.errstate(invalid="ignore"):
        R = np.where(n > 0, np.where(valid, R_k, 0.0).sum(axis=1) / np.maximum(n, 1), np.nan)
    x, y = trilaterate(R[0], R[1], R[2], layout.R_emb, sx, sy)
    return PositionEstimate(float(x), float(y), "method2", skipped)


def ideal_benchmark(satellite, jitter, layout: PositioningLayout) -> PositionEstimate:
    """Noise-free, mean-fading benchmark built from the true jittered offsets."""
    sat = np.asarray(satellite, dtype=float)
    sx = 1 if sat[0] >= 0 else -1
    sy = 1 if sat[1] >= 0 else -1
    ix = 1 if sx > 0 else 3
    iy = 2 if sy > 0 else 4
    rel = layout.centers[:, None, :] - sat[None, None, :] + np.asarray(jitter)
    r2 = (rel[..., 0] ** 2 + rel[..., 1] ** 2).mean(axis=1)
    R = layout.R_emb
    x = sx * (r2[0] - r2[ix] + R * R) / (2.0 * R)
    y = sy * (r2[0] - r2[iy] + R * R) / (2.0 * R)
    return PositionEstimate(float(x), float(y), "ideal")


def positioning_trial(
    rng: np.random.Generator, layout: PositioningLayout, model: PhaseModel
) -> dict[str, float]:
    """One positioning trial: squared error per method, skip count and failure flags."""
    sat = random_satellite(rng, layout.R_emb)
    obs = simulate_positioning_powers(layout, sat, model, rng)
    m1 = estimate_position_method1(obs.sums, layout, model)
    m2 = estimate_position_method2(obs.samples, layout, model)
    ideal = ideal_benchmark(sat, obs.jitter, layout)
    out = {"skipped": float(m2.skipped)}
    for est in (m1, m2, ideal):
        err = positioning_error(est, sat) if est.ok else math.nan
        out[f"se_{est.method}"] = err * err
    sel = select_quadrant(obs.sums)
    out["quadrant_ok"] = float(sel[2] == 1 and sel[3] == 1)
    return out
