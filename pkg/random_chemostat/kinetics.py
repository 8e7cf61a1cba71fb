"""
Consumption functions mu(s).

Monod     mu(s) = s / (k + s)
Haldane   mu(s) = s / (k + s + s^2 / i)

Both satisfy mu(0) = 0, mu(s) > 0 for s > 0 and mu <= 1, so no clamping is
applied. Evaluation at a negative concentration is a DomainError; the
integrator is responsible for round-off below zero.
"""
import math
from dataclasses import dataclass
from typing import Dict, Union

import numpy as np
from numba import njit

from random_chemostat.utils.exceptions import ConfigurationError, DomainError

# Returned by mu_argmax for kinetics that only reach their supremum as s -> inf
UNBOUNDED = math.inf


@njit(cache=True)
def consumption(s, k, inverse_inhibition):
    """Shared kernel, inverse_inhibition = 0 gives Monod exactly."""
    return s / (k + s + s * s * inverse_inhibition)


@dataclass(frozen=True)
class Kinetics:
    """
    Base of the consumption-function variants

    Parameters
    ----------
    k : float
        Half-saturation constant, > 0
    """
    k: float

    type_name = None

    def __post_init__(self):
        if not self.k > 0:
            raise ConfigurationError(
                f"{self.type_name} half-saturation constant k must be > 0, got {self.k}")

    @property
    def inverse_inhibition(self) -> float:
        return 0.0

    def to_dict(self) -> Dict:
        return {'type': self.type_name, 'k': self.k}

    @staticmethod
    def from_dict(data: Dict) -> 'Kinetics':
        """
        Build from {'type': 'monod', 'k': ..} or {'type': 'haldane', 'k': .., 'i': ..}

        Raises
        ------
        ConfigurationError
            Unknown type, unknown key or missing key
        """
        if not isinstance(data, dict):
            raise ConfigurationError(f"kinetics must be a mapping, got {data!r}")
        kind = str(data.get('type', '')).lower()
        if kind not in KINETICS_TYPES:
            raise ConfigurationError(
                f"kinetics.type must be one of {sorted(KINETICS_TYPES)}, got {data.get('type')!r}")
        cls = KINETICS_TYPES[kind]
        fields = {'k'} if cls is Monod else {'k', 'i'}
        unknown = set(data) - fields - {'type'}
        if unknown:
            raise ConfigurationError(
                f"unknown kinetics field(s): {', '.join('kinetics.' + u for u in sorted(unknown))}")
        missing = fields - set(data)
        if missing:
            raise ConfigurationError(
                f"missing kinetics field(s): {', '.join('kinetics.' + m for m in sorted(missing))}")
        try:
            values = {name: float(data[name]) for name in fields}
        except (TypeError, ValueError):
            raise ConfigurationError(f"kinetics fields must be numbers: {data!r}")
        return cls(**values)


@dataclass(frozen=True)
class Monod(Kinetics):
    type_name = 'monod'


@dataclass(frozen=True)
class Haldane(Kinetics):
    """
    Substrate-inhibited consumption

    Parameters
    ----------
    k : float
        Half-saturation constant, > 0
    i : float
        Inhibition constant, > 0
    """
    i: float

    type_name = 'haldane'

    def __post_init__(self):
        super().__post_init__()
        if not self.i > 0:
            raise ConfigurationError(
                f"haldane inhibition constant i must be > 0, got {self.i}")

    @property
    def inverse_inhibition(self) -> float:
        return 1.0 / self.i

    def to_dict(self) -> Dict:
        return {'type': self.type_name, 'k': self.k, 'i': self.i}


KINETICS_TYPES = {'monod': Monod, 'haldane': Haldane}


def mu(kin: Kinetics, s: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Evaluate the consumption function

    Parameters
    ----------
    kin : Kinetics
        Monod or Haldane
    s : Union[float, np.ndarray]
        Nutrient concentration(s), >= 0

    Returns
    -------
    Union[float, np.ndarray]
        mu(s), in [0, 1)

    Raises
    ------
    DomainError
        If any s < 0
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise DomainError(f"consumption function evaluated at negative s: {s!r}")
    if isinstance(kin, Haldane):
        value = s_arr / (kin.k + s_arr + s_arr * s_arr / kin.i)
    else:
        value = s_arr / (kin.k + s_arr)
    return float(value) if value.ndim == 0 else value


def mu_argmax(kin: Kinetics) -> float:
    """sqrt(k i) for Haldane; UNBOUNDED for Monod, which increases strictly."""
    if isinstance(kin, Haldane):
        return math.sqrt(kin.k * kin.i)
    return UNBOUNDED


def mu_max(kin: Kinetics) -> float:
    """Supremum of mu: 1 for Monod, 1/(1 + 2 sqrt(k/i)) for Haldane."""
    if isinstance(kin, Haldane):
        return 1.0 / (1.0 + 2.0 * math.sqrt(kin.k / kin.i))
    return 1.0
