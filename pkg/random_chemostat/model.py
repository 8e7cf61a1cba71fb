"""
Right-hand sides of the random chemostat with wall growth and competition.

Original coordinates (s, m1, m2):

    s'  = Deff (s_in - alpha s) - c mu(s) (m1 + m2) + r d m1
    m1' = m1 (-d - alpha Deff + g mu(s) - r1 m1 - r2 m2 - alpha1) + alpha2 m2
    m2' = m2 (-d + g mu(s) - r1 m1 - r2 m2 - alpha2) + alpha1 m1

Aggregate coordinates (s, m, p) with m = m1 + m2 and p = m1/m:

    s' = Deff (s_in - alpha s) - c mu(s) m + r d p m
    m' = -alpha Deff p m + g mu(s) m - d m - crowding(p) m^2
    p' = alpha Deff p^2 - (alpha Deff + alpha1 + alpha2) p + alpha2

where Deff = D + psi(xi). The printed crowding term is r1 + r2 (1 - p); the
form obtained by differentiating the original system is r1 p + r2 (1 - p).
Both are available through the `competition` argument; 'printed' is the
default and `transformed_residual` measures the gap.
"""
import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Dict, Union

import numpy as np
from numba import njit

from random_chemostat.kinetics import Kinetics, consumption
from random_chemostat.noise import effective_dilution
from random_chemostat.utils.exceptions import ConfigurationError, DomainError

# Layout of the packed parameter vector handed to the numba kernels
S_IN, DIL, AMP, ALPHA, CONS, GROW, RECY, DEATH, ALPHA1, ALPHA2, R1, R2, HALF_SAT, INV_INHIB = range(14)

COMPETITION_FORMS = ('printed', 'consistent')


@dataclass(frozen=True)
class ChemostatParams:
    """
    Model constants, validated at construction

    Parameters
    ----------
    s_in : float
        Input nutrient concentration, > 0
    D : float
        Nominal dilution rate (per unit time), > a
    alpha : float
        Output/input flow ratio, > 0
    c : float
        Maximal consumption rate, > 0
    g : float
        Growth yield rate, 0 < g <= c
    r : float
        Recycled fraction of dead biomass, in (0, 1)
    d : float
        Death rate, > 0
    alpha1 : float
        Wall-attachment rate, >= 0
    alpha2 : float
        Wall-detachment rate, >= 0
    r1 : float
        Competition intensity in the liquid, >= 0
    r2 : float
        Competition intensity on the wall, >= 0
    kinetics : Kinetics
        Monod or Haldane consumption
    a : float, optional
        Noise amplitude, 0 is the deterministic model, by default 0
    """
    s_in: float
    D: float
    alpha: float
    c: float
    g: float
    r: float
    d: float
    alpha1: float
    alpha2: float
    r1: float
    r2: float
    kinetics: Kinetics
    a: float = 0.0

    def __post_init__(self):
        if not isinstance(self.kinetics, Kinetics):
            raise ConfigurationError(
                f"kinetics must be Monod or Haldane, got {self.kinetics!r}")
        for name in NUMERIC_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) \
                    or not math.isfinite(value):
                raise ConfigurationError(f"{name} must be a finite number, got {value!r}")
        checks = (
            ('s_in', self.s_in > 0, '> 0'),
            ('D', self.D > 0, '> 0'),
            ('a', self.a >= 0, '>= 0'),
            ('alpha', self.alpha > 0, '> 0'),
            ('c', self.c > 0, '> 0'),
            ('g', 0 < self.g <= self.c, 'in (0, c]'),
            ('r', 0 < self.r < 1, 'in (0, 1)'),
            ('d', self.d > 0, '> 0'),
            ('alpha1', self.alpha1 >= 0, '>= 0'),
            ('alpha2', self.alpha2 >= 0, '>= 0'),
            ('r1', self.r1 >= 0, '>= 0'),
            ('r2', self.r2 >= 0, '>= 0'),
        )
        for name, ok, rule in checks:
            if not ok:
                raise ConfigurationError(f"{name} must be {rule}, got {getattr(self, name)}")
        if not self.D - self.a > 0:
            raise ConfigurationError(
                f"D - a must be > 0 (D={self.D}, a={self.a})")

    @property
    def d_min(self) -> float:
        return self.D - self.a

    @property
    def d_max(self) -> float:
        return self.D + self.a

    @property
    def is_deterministic(self) -> bool:
        return self.a == 0

    def replace(self, **changes) -> 'ChemostatParams':
        return replace(self, **changes)

    def pack(self) -> np.ndarray:
        """Flat float vector in the S_IN..INV_INHIB layout for the kernels."""
        return np.array([self.s_in, self.D, self.a, self.alpha, self.c, self.g,
                         self.r, self.d, self.alpha1, self.alpha2, self.r1,
                         self.r2, self.kinetics.k,
                         self.kinetics.inverse_inhibition], dtype=np.float64)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['kinetics'] = self.kinetics.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> 'ChemostatParams':
        """
        Build from a config mapping; every field is mandatory except 'a'.

        Raises
        ------
        ConfigurationError
            Naming the unknown, missing or invalid field
        """
        if not isinstance(data, dict):
            raise ConfigurationError(f"params must be a mapping, got {data!r}")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown parameter field(s): {', '.join(unknown)}")
        missing = sorted(known - set(data) - {'a'})
        if missing:
            raise ConfigurationError(f"missing parameter field(s): {', '.join(missing)}")
        values = {}
        for name in NUMERIC_FIELDS:
            if name not in data:
                continue
            try:
                values[name] = float(data[name])
            except (TypeError, ValueError):
                raise ConfigurationError(f"{name} must be a number, got {data[name]!r}")
        values['kinetics'] = Kinetics.from_dict(data['kinetics'])
        return cls(**values)

    def digest(self) -> str:
        """sha256 of the canonical JSON form, stored on trajectories."""
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()


NUMERIC_FIELDS = tuple(f.name for f in fields(ChemostatParams) if f.name != 'kinetics')


def _check_component(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise DomainError(f"{name} must be finite and >= 0, got {value}")
    return value


@dataclass(frozen=True)
class State:
    """Nutrient s, floating biomass m1 and wall biomass m2, all >= 0."""
    s: float
    m1: float
    m2: float

    def __post_init__(self):
        for name in ('s', 'm1', 'm2'):
            object.__setattr__(self, name, _check_component(name, getattr(self, name)))

    @property
    def m(self) -> float:
        return self.m1 + self.m2

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.m1, self.m2])

    @classmethod
    def from_array(cls, values) -> 'State':
        s, m1, m2 = values
        return cls(s, m1, m2)


@dataclass(frozen=True)
class AggregateState:
    """Nutrient s, total biomass m >= 0 and floating fraction p in [0, 1]."""
    s: float
    m: float
    p: float

    def __post_init__(self):
        for name in ('s', 'm', 'p'):
            object.__setattr__(self, name, _check_component(name, getattr(self, name)))
        if self.p > 1:
            raise DomainError(f"p must be in [0, 1], got {self.p}")

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.m, self.p])

    @classmethod
    def from_array(cls, values) -> 'AggregateState':
        s, m, p = values
        return cls(s, m, p)


@njit(cache=True)
def original_field(s, m1, m2, deff, prm):
    mu = consumption(s, prm[HALF_SAT], prm[INV_INHIB])
    g_mu = prm[GROW] * mu
    crowd = prm[R1] * m1 + prm[R2] * m2
    ds = deff * (prm[S_IN] - prm[ALPHA] * s) - prm[CONS] * mu * (m1 + m2) \
        + prm[RECY] * prm[DEATH] * m1
    dm1 = m1 * (-prm[DEATH] - prm[ALPHA] * deff + g_mu - crowd - prm[ALPHA1]) \
        + prm[ALPHA2] * m2
    dm2 = m2 * (-prm[DEATH] + g_mu - crowd - prm[ALPHA2]) + prm[ALPHA1] * m1
    return ds, dm1, dm2


@njit(cache=True)
def transformed_field(s, m, p, deff, prm, consistent):
    mu = consumption(s, prm[HALF_SAT], prm[INV_INHIB])
    washout = prm[ALPHA] * deff
    if consistent:
        crowd = prm[R1] * p + prm[R2] * (1.0 - p)
    else:
        crowd = prm[R1] + prm[R2] * (1.0 - p)
    ds = deff * (prm[S_IN] - prm[ALPHA] * s) - prm[CONS] * mu * m \
        + prm[RECY] * prm[DEATH] * p * m
    dm = -washout * p * m + prm[GROW] * mu * m - prm[DEATH] * m - crowd * m * m
    dp = washout * p * p - (washout + prm[ALPHA1] + prm[ALPHA2]) * p + prm[ALPHA2]
    return ds, dm, dp


def _dilution(params: ChemostatParams, xi: float) -> float:
    if not math.isfinite(xi):
        raise DomainError(f"noise value must be finite, got {xi}")
    return float(effective_dilution(params.D, params.a, xi))


def _check_competition(competition: str) -> bool:
    if competition not in COMPETITION_FORMS:
        raise ConfigurationError(
            f"competition must be one of {COMPETITION_FORMS}, got {competition!r}")
    return competition == 'consistent'


def rhs_original(params: ChemostatParams, state: State, xi: float) -> np.ndarray:
    """
    Rates (s', m1', m2') of the original system

    Parameters
    ----------
    params : ChemostatParams
        Model constants
    state : State
        Current (s, m1, m2)
    xi : float
        OU value, ignored when params.a == 0

    Returns
    -------
    np.ndarray
        Derivative vector, components may be negative
    """
    deff = _dilution(params, xi)
    return np.array(original_field(state.s, state.m1, state.m2, deff, params.pack()))


def rhs_transformed(params: ChemostatParams,
                    state: AggregateState,
                    xi: float,
                    competition: str = 'printed') -> np.ndarray:
    """
    Rates (s', m', p') of the aggregate system

    Parameters
    ----------
    params : ChemostatParams
        Model constants
    state : AggregateState
        Current (s, m, p)
    xi : float
        OU value, ignored when params.a == 0
    competition : str, optional
        'printed' uses r1 m^2 + r2 (1 - p) m^2, 'consistent' uses
        (r1 p + r2 (1 - p)) m^2, by default 'printed'

    Returns
    -------
    np.ndarray
        Derivative vector
    """
    consistent = _check_competition(competition)
    deff = _dilution(params, xi)
    return np.array(transformed_field(state.s, state.m, state.p, deff,
                                      params.pack(), consistent))


def neutral_fraction(params: ChemostatParams) -> float:
    """Floating fraction assigned to a biomass-free state."""
    total = params.alpha1 + params.alpha2
    return params.alpha2 / total if total > 0 else 0.0


def to_aggregate(state: State, params: ChemostatParams = None) -> AggregateState:
    """
    (s, m1, m2) -> (s, m1 + m2, m1 / m)

    With m = 0 the fraction is alpha2 / (alpha1 + alpha2), which needs the
    params; without them 0 biomass raises DomainError.
    """
    m = state.m1 + state.m2
    if m > 0:
        p = min(state.m1 / m, 1.0)
    elif params is not None:
        p = neutral_fraction(params)
    else:
        raise DomainError("p is undefined at m = 0 unless params are given")
    return AggregateState(state.s, m, p)


def from_aggregate(state: AggregateState) -> State:
    """(s, m, p) -> (s, p m, (1 - p) m)"""
    return State(state.s, state.p * state.m, (1.0 - state.p) * state.m)


def pushforward(state: State, rates: np.ndarray) -> np.ndarray:
    """
    Push original-coordinate rates through the Jacobian of (s, m, p).

    m' = m1' + m2' and p' = (m1' m2 - m1 m2') / m^2.

    Raises
    ------
    DomainError
        If m = 0 (p is not differentiable there)
    """
    m = state.m1 + state.m2
    if not m > 0:
        raise DomainError("the change of variables is singular at m = 0")
    ds, dm1, dm2 = rates
    return np.array([ds, dm1 + dm2, (dm1 * state.m2 - state.m1 * dm2) / (m * m)])


def transformed_residual(params: ChemostatParams,
                         state: State,
                         xi: float,
                         competition: str = 'printed') -> np.ndarray:
    """
    rhs_transformed minus the Jacobian image of rhs_original at one state.

    For the printed crowding term the residual is (0, -r1 (1 - p) m^2, 0);
    for the consistent one it vanishes up to round-off.
    """
    aggregate = to_aggregate(state)
    return rhs_transformed(params, aggregate, xi, competition) \
        - pushforward(state, rhs_original(params, state, xi))


def absorbing_functional(params: ChemostatParams,
                         state: Union[State, np.ndarray]) -> Union[float, np.ndarray]:
    """z = g s + c (m1 + m2) for one State or an (n, 3) array of them."""
    if isinstance(state, State):
        return params.g * state.s + params.c * (state.m1 + state.m2)
    values = np.asarray(state, dtype=float)
    return params.g * values[..., 0] + params.c * (values[..., 1] + values[..., 2])


def z_rate(params: ChemostatParams, state: State, xi: float) -> float:
    """Closed form of z' along the original system."""
    deff = _dilution(params, xi)
    s, m1, m2 = state.s, state.m1, state.m2
    g, c = params.g, params.c
    return (g * deff * params.s_in - g * params.alpha * deff * s
            + g * params.r * params.d * m1 - c * params.alpha * deff * m1
            - c * params.d * (m1 + m2)
            - c * (params.r1 * m1 + params.r2 * m2) * (m1 + m2))

