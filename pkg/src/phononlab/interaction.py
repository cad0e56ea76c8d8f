"""Standing-wave laser -> on-site Hubbard interaction.

Expanding ``F cos^2(k x)`` to fourth order in the Lamb-Dicke parameter, the
number-conserving part of ``(1/3) eta^4 (a + a^dag)^4`` contains
``2 F eta^4 a^dag^2 a^2``. The squeezing terms ``F eta^2 (a^2 + a^dag^2)``
rotate at 2 omega_x and, eliminated perturbatively, leave a shift of
``-2 (F eta^2)^2 / omega_x`` per phonon.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidParameterError

MAXIMUM = "maximum"
MINIMUM = "minimum"


@dataclass(frozen=True)
class StandingWave:
    f: float
    eta_sq: float
    placement: str = MAXIMUM

    def __post_init__(self):
        if self.f < 0:
            raise InvalidParameterError(f"standing-wave amplitude must be >= 0, got {self.f}")
        if not 0 < self.eta_sq < 1:
            raise InvalidParameterError(f"eta_sq must lie in (0, 1), got {self.eta_sq}")
        if self.placement not in (MAXIMUM, MINIMUM):
            raise InvalidParameterError(f"placement must be 'maximum' or 'minimum', got {self.placement!r}")

    @property
    def f_eta_sq(self) -> float:
        return self.f * self.eta_sq

    @classmethod
    def from_f_eta_sq(cls, f_eta_sq: float, eta_sq: float, placement: str = MAXIMUM) -> "StandingWave":
        if not 0 < eta_sq < 1:
            raise InvalidParameterError(f"eta_sq must lie in (0, 1), got {eta_sq}")
        return cls(f=f_eta_sq / eta_sq, eta_sq=eta_sq, placement=placement)


@dataclass(frozen=True)
class EffectiveInteraction:
    hubbard_u: float
    freq_shift_2nd: float
    freq_shift_elim: float
    elimination_ratio: float

    def as_dict(self) -> dict:
        return {
            "hubbard_u": self.hubbard_u,
            "freq_shift_2nd": self.freq_shift_2nd,
            "freq_shift_elim": self.freq_shift_elim,
            "elimination_ratio": self.elimination_ratio,
        }


def standing_wave_to_hubbard(sw: StandingWave) -> EffectiveInteraction:
    sign = 1.0 if sw.placement == MAXIMUM else -1.0
    f_eta2 = sw.f * sw.eta_sq
    return EffectiveInteraction(
        hubbard_u=sign * 2.0 * sw.f * sw.eta_sq**2,
        freq_shift_2nd=2.0 * f_eta2,
        freq_shift_elim=-2.0 * f_eta2**2,
        elimination_ratio=f_eta2,
    )


def target_u_to_laser(u_target: float, eta_sq: float) -> StandingWave:
    """Standing wave whose Hubbard interaction equals ``u_target``; the sign picks the placement."""
    if not 0 < eta_sq < 1:
        raise InvalidParameterError(f"eta_sq must lie in (0, 1), got {eta_sq}")
    placement = MAXIMUM if u_target >= 0 else MINIMUM
    return StandingWave(f=abs(u_target) / (2.0 * eta_sq**2), eta_sq=eta_sq, placement=placement)
