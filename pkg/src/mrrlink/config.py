"""Scenario configuration: flat ``key = value`` text with symbol-named SI keys.

Lines starting with ``#`` and blank lines are ignored.  Keys under ``run.``
are run metadata (seed, preset, version...) written into manifests and are
accepted but not interpreted here.  Any other unknown key is an error.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .channel_model import (
    AtmosphereParams,
    Link,
    LinkGeometry,
    TransceiverParams,
    TurbulenceFading,
    kim_scattering_coeff,
    rytov_variance,
    slant_range,
)
from .errors import ConfigError
from .positioning import PositioningLayout
from .sensing import PhaseModel, SensingScenario

AUTO = "auto"


@dataclass(frozen=True)
class Scenario:
    """Every tunable input of the link, sensing and positioning models.

    ``scattering_coeff = auto`` spreads the Kim extinction for
    ``visibility_km`` over an ``aerosol_layer``-metre layer along the slant
    path; ``sigma_R2 = auto`` integrates the Hufnagel-Valley profile.
    """

    # geometry
    H_s: float = 500e3
    H_0: float = 0.0
    zeta_elev: float = math.pi / 2
    d_g: float = 0.1
    # atmosphere
    wavelength: float = 1550e-9
    visibility_km: float = 10.0
    aerosol_layer: float = 1000.0
    scattering_coeff: float | str = AUTO
    wind_speed: float = 21.0
    cn2_ground: float = 1.7e-14
    wave_model: str = "plane"
    sigma_R2: float | str = AUTO
    # transceiver
    P_t: float = 1.0
    responsivity: float = 0.9
    noise_var: float = 4e-28
    A_MRR: float = 1e-4
    M: int = 9
    # sensing
    sigma_theta_ge: float = 2e-3
    sigma_theta_e: float = 6e-6
    sigma_theta_aq: float = 5e-4
    N_m: int = 10
    K_c: int = 1000
    K_d: int = 500
    T_bit: float = 1e-9
    R_th: float = 150.0
    R_e: float = 10.0
    w_zs: float = 80.0
    # positioning
    R_emb: float = 30.0
    w_zp: float = 60.0
    K_dp: int = 50

    def __post_init__(self):
        try:
            self.link()
            self.sensing()
            PositioningLayout(self.R_emb, self.w_zp)
            if self.K_dp < 1:
                raise ValueError("K_dp must be >= 1")
            if not self.w_zs > 0:
                raise ValueError("w_zs must be positive")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes) -> Scenario:
        return dataclasses.replace(self, **changes)

    # model builders ---------------------------------------------------------

    def geometry(self) -> LinkGeometry:
        return LinkGeometry(self.H_s, self.H_0, self.zeta_elev, self.d_g)

    @property
    def Z(self) -> float:
        return slant_range(self.geometry())

    def atmosphere(self) -> AtmosphereParams:
        if self.scattering_coeff == AUTO:
            zeta = kim_scattering_coeff(self.visibility_km, self.wavelength)
            zeta *= self.aerosol_layer / self.Z
        else:
            zeta = float(self.scattering_coeff)
        return AtmosphereParams(zeta, self.wavelength, self.wind_speed, self.cn2_ground)

    def rytov(self) -> float:
        if self.sigma_R2 == AUTO:
            return rytov_variance(self.geometry(), self.atmosphere())
        return float(self.sigma_R2)

    def fading(self) -> TurbulenceFading:
        if self.wave_model not in ("plane", "spherical"):
            raise ConfigError(f"wave_model must be plane or spherical, got {self.wave_model!r}")
        return TurbulenceFading.from_rytov(self.rytov(), self.wave_model)

    def transceiver(self) -> TransceiverParams:
        return TransceiverParams(self.P_t, self.responsivity, self.noise_var, self.A_MRR, self.M)

    def link(self) -> Link:
        return Link(self.geometry(), self.atmosphere(), self.fading(), self.transceiver())

    def sensing(self) -> SensingScenario:
        return SensingScenario(
            self.Z,
            self.sigma_theta_ge,
            self.sigma_theta_e,
            self.sigma_theta_aq,
            self.N_m,
            self.K_c,
            self.K_d,
            self.T_bit,
            self.R_th,
            self.R_e,
        )

    def sensing_model(self, w_zs: float | None = None, K_d: int | None = None) -> PhaseModel:
        return PhaseModel(
            self.link(),
            self.w_zs if w_zs is None else w_zs,
            self.Z * self.sigma_theta_e,
            self.K_c,
            self.K_d if K_d is None else K_d,
        )

    def positioning_model(self, w_zp: float | None = None) -> PhaseModel:
        return PhaseModel(
            self.link(),
            self.w_zp if w_zp is None else w_zp,
            self.Z * self.sigma_theta_e,
            self.K_c,
            self.K_dp,
        )

    def layout(self, w_zp: float | None = None) -> PositioningLayout:
        return PositioningLayout(self.R_emb, self.w_zp if w_zp is None else w_zp)

    # serialisation ----------------------------------------------------------

    def items(self) -> list[tuple[str, str]]:
        return [(f.name, format_value(getattr(self, f.name))) for f in fields(self)]


DEFAULT = None  # populated lazily by default_scenario()


def default_scenario() -> Scenario:
    global DEFAULT
    if DEFAULT is None:
        DEFAULT = Scenario()
    return DEFAULT


def format_value(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _parse_value(name: str, raw: str):
    default = Scenario.__dataclass_fields__[name].default
    text = raw.strip()
    try:
        if isinstance(default, bool):
            raise ConfigError(f"{name}: unsupported boolean")
        if isinstance(default, int):
            v = float(text)
            if v != int(v):
                raise ValueError
            return int(v)
        if isinstance(default, str) and default == AUTO:
            return AUTO if text.lower() == AUTO else float(text)
        if isinstance(default, str):
            return text
        return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_assignments(pairs, *, source: str = "<overrides>") -> tuple[dict, dict]:
    """Split ``(key, value)`` pairs into scenario values and ``run.*`` metadata."""
    known = {f.name for f in fields(Scenario)}
    values: dict = {}
    meta: dict = {}
    for key, raw in pairs:
        key = key.strip()
        if key.startswith("run."):
            meta[key] = raw.strip()
        elif key in known:
            values[key] = _parse_value(key, raw)
        else:
            raise ConfigError(f"unknown key {key!r} in {source}")
    return values, meta


def split_assignment(text: str, source: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"expected KEY=VALUE in {source}, got {text!r}")
    key, _, value = text.partition("=")
    return key.strip(), value.strip()


def read_config_text(text: str, source: str = "<config>") -> list[tuple[str, str]]:
    pairs = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if line:
            pairs.append(split_assignment(line, f"{source}:{n}"))
    return pairs


def load_scenario(path=None, overrides=()) -> tuple[Scenario, dict]:
    """Build a scenario from an optional config file plus ``KEY=VALUE`` overrides.

    Overrides win over file values.  Returns the scenario and the ``run.*``
    metadata found in the file.
    """
    pairs: list[tuple[str, str]] = []
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
        pairs.extend(read_config_text(text, str(p)))
    pairs.extend(split_assignment(o, "--set") for o in overrides)
    values, meta = parse_assignments(pairs)
    return Scenario(**values), meta


def write_manifest(path, scenario: Scenario, run: dict) -> None:
    """Write every scenario key plus ``run.*`` entries; reloadable by :func:`load_scenario`."""
    lines = [f"{k} = {v}" for k, v in scenario.items()]
    lines += [f"run.{k} = {v}" for k, v in run.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
