"""Model parameters shared by the exact and stochastic solvers.

All rates are dimensionless multiples of the cavity coupling ``g`` and all
times are in units of ``1/g``.
"""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass

from .errors import ConfigError, InvalidCount, MissingKey, NegativeRate, UnknownKey, ZeroUnit

TWO_PI = 2.0 * math.pi


class Chirality(str, enum.Enum):
    LEFT = "L"
    RIGHT = "R"


@dataclass(frozen=True)
class MoleculeId:
    chirality: Chirality
    index: int  # 1-based within its chirality


@dataclass(frozen=True)
class SystemParams:
    """Rates, detunings, loop phases and molecule counts of the driven cavity.

    ``eta`` is signed: flipping its sign is the same as a pi phase shift of the
    drive.  Both enantiomers share level energies and coupling magnitudes and
    differ only through ``phi_L``/``phi_R``.
    """

    omega31: float
    omega32: float
    kappa: float
    eta: float
    n_left: int
    n_right: int
    g: float = 1.0
    delta_c: float = 0.0
    delta31: float = 0.0
    delta32: float = 0.0
    phi_L: float = 0.0
    phi_R: float = math.pi

    @property
    def n_molecules(self) -> int:
        return self.n_left + self.n_right

    def replace(self, **changes) -> "SystemParams":
        return validate_params(dataclasses.replace(self, **changes))

    def molecules(self) -> list[MoleculeId]:
        """Molecules in layout order: the left-handed block, then the right-handed block."""
        left = [MoleculeId(Chirality.LEFT, i + 1) for i in range(self.n_left)]
        right = [MoleculeId(Chirality.RIGHT, i + 1) for i in range(self.n_right)]
        return left + right

    def phases(self) -> list[float]:
        """Loop phase of every molecule in layout order."""
        return [self.phi_L] * self.n_left + [self.phi_R] * self.n_right

    def max_rate(self) -> float:
        return max(
            self.kappa,
            abs(self.eta),
            abs(self.omega31),
            abs(self.omega32),
            self.g,
            abs(self.delta_c),
            abs(self.delta31),
            abs(self.delta32),
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SystemParams":
        """Build validated parameters from a config mapping; unknown keys are rejected."""
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(fields)
        if unknown:
            raise UnknownKey(unknown)
        required = {
            name for name, f in fields.items()
            if f.default is dataclasses.MISSING
        }
        missing = required - set(data)
        if missing:
            raise MissingKey(missing)
        return validate_params(cls(**data))


def validate_params(p: SystemParams) -> SystemParams:
    """Check invariants and return ``p`` with its phases folded into [0, 2*pi).

    Idempotent.  Raises :class:`NegativeRate` for ``kappa < 0`` and
    :class:`ZeroUnit` for ``g <= 0``.
    """
    if not p.g > 0:
        raise ZeroUnit("g", p.g)
    if p.kappa < 0:
        raise NegativeRate("kappa", p.kappa)
    for name in ("n_left", "n_right"):
        value = getattr(p, name)
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            if isinstance(value, float) and value.is_integer() and value >= 0:
                continue
            raise InvalidCount(name, value)
    for name in ("omega31", "omega32", "kappa", "eta", "g", "delta_c", "delta31", "delta32",
                 "phi_L", "phi_R"):
        value = getattr(p, name)
        if not math.isfinite(value):
            raise ConfigError(f"{name} must be finite, got {value!r}")
    return dataclasses.replace(
        p,
        n_left=int(p.n_left),
        n_right=int(p.n_right),
        phi_L=_wrap_phase(p.phi_L),
        phi_R=_wrap_phase(p.phi_R),
    )


def loop_phase(p: SystemParams, chirality: Chirality | str) -> float:
    """Loop phase carried by every molecule of the given handedness."""
    return p.phi_L if Chirality(chirality) is Chirality.LEFT else p.phi_R


def _wrap_phase(phi: float) -> float:
    phi = math.fmod(float(phi), TWO_PI)
    if phi < 0:
        phi += TWO_PI
    if phi >= TWO_PI:
        phi = 0.0
    return phi


def reference_params(**overrides) -> SystemParams:
    """Single-molecule reference set: Omega32=5g, Omega31=g, kappa=5g, eta=4g, resonant."""
    base = dict(omega31=1.0, omega32=5.0, kappa=5.0, eta=4.0, n_left=1, n_right=0)
    base.update(overrides)
    return validate_params(SystemParams(**base))
