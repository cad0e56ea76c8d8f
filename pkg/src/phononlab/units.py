"""Physical trap parameters, the dimensionless unit system and regime checks.

Internally hbar = 1, energies are in units of omega_x and axial lengths in units
of ``l = (q^2 / (4 pi eps0 m omega_z^2))**(1/3)``. Frequencies in config files
are ordinary frequencies (Hz) and are converted with 2 pi on load.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from scipy import constants as sc

from .equilibrium import IonChain
from .errors import ConfigurationError, FieldMissingError
from .interaction import MAXIMUM, StandingWave

X0_THRESHOLD = 1e-2
Z0_THRESHOLD = 1e-2
BETA_THRESHOLD = 0.1
ELIMINATION_THRESHOLD = 0.1
LAMB_DICKE_THRESHOLD = 0.1

COULOMB_K = 1.0 / (4.0 * math.pi * sc.epsilon_0)
_SLACK = 1.0 + 1e-12


@dataclass(frozen=True)
class TrapConfig:
    n_ions: int
    omega_x: float
    omega_y: float
    omega_z: float
    mass: float
    charge: float = sc.e
    temperature: Optional[float] = None
    beta_x: Optional[float] = None
    beta_x_source: str = "unset"
    standing_wave: Optional[StandingWave] = None

    def __post_init__(self):
        if int(self.n_ions) != self.n_ions or self.n_ions < 1:
            raise ConfigurationError(f"n_ions must be a positive integer, got {self.n_ions!r}")
        for name in ("omega_x", "omega_y", "omega_z", "mass"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if not (self.omega_x > self.omega_z and self.omega_y > self.omega_z):
            raise ConfigurationError("radial frequencies must exceed omega_z for a linear chain")
        if self.temperature is not None and self.temperature < 0:
            raise ConfigurationError("temperature must be >= 0")
        if self.beta_x is not None and not self.beta_x > 0:
            raise ConfigurationError("beta_x must be positive")
        if self.beta_x is not None and self.beta_x_source == "unset":
            object.__setattr__(self, "beta_x_source", "user")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["standing_wave"] = asdict(self.standing_wave) if self.standing_wave else None
        return d


@dataclass(frozen=True)
class RegimeReport:
    x0_over_d0: float
    z0_over_d0: Optional[float]
    beta_x: float
    lamb_dicke_ok: bool
    sw_elimination_ratio: float
    warnings: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def length_scale(config: TrapConfig) -> float:
    """Axial length unit in metres."""
    return (COULOMB_K * config.charge**2 / (config.mass * config.omega_z**2)) ** (1.0 / 3.0)


def ground_state_width(mass: float, omega: float) -> float:
    """``sqrt(hbar / (2 m omega))`` in metres."""
    return math.sqrt(sc.hbar / (2.0 * mass * omega))


def coulomb_ratio(config: TrapConfig, d0_m: float, omega: float) -> float:
    """``e^2 / (d0^3 m omega^2)`` (Gaussian e^2, i.e. q^2 / 4 pi eps0)."""
    return COULOMB_K * config.charge**2 / (d0_m**3 * config.mass * omega**2)


def thermal_axial_width(config: TrapConfig, beta_z: float) -> float:
    """Thermal axial spread ``z0`` of a long chain.

    ``z0^2 = hbar / (2 m omega_z sqrt(beta_z log beta_z)) * k_B T / (hbar omega_z)``
    """
    if config.temperature is None:
        raise FieldMissingError("temperature is required for the axial width estimate")
    if beta_z <= 1.0:
        raise ConfigurationError(f"thermal estimate needs beta_z > 1, got {beta_z:.3g}")
    kt_over_hw = sc.k * config.temperature / (sc.hbar * config.omega_z)
    z0_sq = sc.hbar / (2.0 * config.mass * config.omega_z * math.sqrt(beta_z * math.log(beta_z)))
    return math.sqrt(z0_sq * kt_over_hw)


def _check_chain(config: TrapConfig, chain: IonChain) -> None:
    if chain.n_ions != config.n_ions:
        raise ConfigurationError(
            f"chain has {chain.n_ions} ions but the config asks for {config.n_ions}"
        )
    if config.n_ions < 2:
        raise ConfigurationError("spacing-derived quantities need at least two ions")


def physical_spacing(config: TrapConfig, chain: IonChain) -> float:
    _check_chain(config, chain)
    return chain.d0 * length_scale(config)


def derive_dimensionless(config: TrapConfig, chain: IonChain) -> TrapConfig:
    """Fill ``beta_x`` from the chain spacing unless the user set it."""
    if config.beta_x_source == "user":
        return config
    d0_m = physical_spacing(config, chain)
    return replace(config, beta_x=coulomb_ratio(config, d0_m, config.omega_x), beta_x_source="derived")


def validate_regime(
    config: TrapConfig,
    chain: IonChain,
    sw: Optional[StandingWave] = None,
    require_z0: bool = False,
) -> RegimeReport:
    d0_m = physical_spacing(config, chain)
    warnings = []

    x0 = ground_state_width(config.mass, config.omega_x) / d0_m
    if x0 > X0_THRESHOLD * _SLACK:
        warnings.append("X0_OVER_D0_LARGE")

    z0 = None
    if config.temperature is None:
        if require_z0:
            raise FieldMissingError("temperature is required for z0/d0")
    else:
        beta_z = coulomb_ratio(config, d0_m, config.omega_z)
        if beta_z <= 1.0:
            warnings.append("Z0_FORMULA_INAPPLICABLE")
        else:
            z0 = thermal_axial_width(config, beta_z) / d0_m
            if z0 > Z0_THRESHOLD * _SLACK:
                warnings.append("Z0_OVER_D0_LARGE")

    beta_x = config.beta_x if config.beta_x is not None else coulomb_ratio(config, d0_m, config.omega_x)
    if beta_x > BETA_THRESHOLD * _SLACK:
        warnings.append("BETA_X_LARGE")

    sw = sw if sw is not None else config.standing_wave
    ratio = 0.0
    ld_ok = True
    if sw is not None:
        ratio = sw.f * sw.eta_sq
        if ratio > ELIMINATION_THRESHOLD * _SLACK:
            warnings.append("SW_ELIMINATION_RATIO_LARGE")
        ld_ok = sw.eta_sq <= LAMB_DICKE_THRESHOLD * _SLACK
        if not ld_ok:
            warnings.append("LAMB_DICKE_VIOLATED")

    return RegimeReport(
        x0_over_d0=x0,
        z0_over_d0=z0,
        beta_x=beta_x,
        lamb_dicke_ok=ld_ok,
        sw_elimination_ratio=ratio,
        warnings=warnings,
    )


_REQUIRED = ("n_ions", "omega_x_hz", "omega_y_hz", "omega_z_hz", "mass_amu")


def config_from_dict(data: dict) -> TrapConfig:
    missing = [k for k in _REQUIRED if k not in data]
    if missing:
        raise FieldMissingError(f"config is missing {', '.join(missing)}")
    sw = None
    if data.get("standing_wave"):
        s = data["standing_wave"]
        try:
            sw = StandingWave(
                f=float(s["f_over_omega_x"]),
                eta_sq=float(s["eta_sq"]),
                placement=s.get("placement", MAXIMUM),
            )
        except KeyError as exc:
            raise FieldMissingError(f"standing_wave is missing {exc.args[0]}") from None
    two_pi = 2.0 * math.pi
    return TrapConfig(
        n_ions=int(data["n_ions"]),
        omega_x=two_pi * float(data["omega_x_hz"]),
        omega_y=two_pi * float(data["omega_y_hz"]),
        omega_z=two_pi * float(data["omega_z_hz"]),
        mass=float(data["mass_amu"]) * sc.atomic_mass,
        charge=float(data.get("charge_e", 1.0)) * sc.e,
        temperature=data.get("temperature_k"),
        beta_x=data.get("beta_x"),
        standing_wave=sw,
    )


def load_config(path) -> TrapConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return config_from_dict(data)
