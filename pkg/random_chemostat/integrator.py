"""
Fixed-step RK4 against a frozen noise path.

The noise is linearly interpolated at the stage times t, t + dt/2 and t + dt.
After every step a component in (-CLAMP_TOLERANCE, 0) is set to 0 (and the
floating fraction p is pulled back from (1, 1 + CLAMP_TOLERANCE) to 1); any
larger excursion or a non-finite value aborts the run with
IntegrationBlowupError, since the exact solution never leaves the
nonnegative orthant.
"""
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
import pandas as pd
from numba import njit

from random_chemostat.model import (DIL, AMP, AggregateState, ChemostatParams,
                                    State, _check_competition, original_field,
                                    transformed_field)
from random_chemostat.noise import CSV_FLOAT_FORMAT, NoisePath, psi
from random_chemostat.utils.exceptions import ConfigurationError, IntegrationBlowupError
from random_chemostat.utils.logger import logger

logger = logger()

CLAMP_TOLERANCE = 1e-10
DEFAULT_DT = 1e-3
DEFAULT_RECORD_EVERY = 100

ORIGINAL, TRANSFORMED_PRINTED, TRANSFORMED_CONSISTENT = 0, 1, 2
STATUS_OK, STATUS_NEGATIVE, STATUS_NONFINITE = 0, 1, 2

COLUMNS = {
    'original': ['t', 's', 'm1', 'm2', 'psi'],
    'transformed': ['t', 's', 'm', 'p', 'psi'],
}


@dataclass(frozen=True)
class SimConfig:
    """
    Stepping configuration of one integration

    Parameters
    ----------
    t_end : float
        Final time, <= the noise path's last time
    initial : Union[State, AggregateState]
        Initial condition; its type selects the coordinate system
    dt : float, optional
        RK4 step, equal to or an integer divisor of the noise grid spacing,
        by default 1e-3
    record_every : int, optional
        Store every n-th step, by default 100
    competition : str, optional
        Crowding term of the aggregate system, 'printed' or 'consistent',
        by default 'printed'
    """
    t_end: float
    initial: Union[State, AggregateState]
    dt: float = DEFAULT_DT
    record_every: int = DEFAULT_RECORD_EVERY
    competition: str = 'printed'

    def __post_init__(self):
        if not self.t_end > 0:
            raise ConfigurationError(f"t_end must be > 0, got {self.t_end}")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if isinstance(self.record_every, bool) or not isinstance(self.record_every, int) \
                or self.record_every < 1:
            raise ConfigurationError(
                f"record_every must be a positive integer, got {self.record_every!r}")
        if not isinstance(self.initial, (State, AggregateState)):
            raise ConfigurationError(
                f"initial must be a State or an AggregateState, got {self.initial!r}")
        _check_competition(self.competition)

    @property
    def system(self) -> str:
        return 'original' if isinstance(self.initial, State) else 'transformed'

    @property
    def n_steps(self) -> int:
        steps = int(round(self.t_end / self.dt))
        if abs(steps * self.dt - self.t_end) > 1e-9 * max(self.t_end, 1.0):
            raise ConfigurationError(
                f"t_end={self.t_end} is not a whole number of steps dt={self.dt}")
        return steps

    def substeps(self, noise_dt: float) -> int:
        """How many RK4 steps fit in one noise grid cell."""
        ratio = int(round(noise_dt / self.dt))
        if ratio < 1 or abs(ratio * self.dt - noise_dt) > 1e-9 * noise_dt:
            raise ConfigurationError(
                f"dt={self.dt} must equal the noise spacing {noise_dt} or divide it exactly")
        return ratio


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Recorded solution of one integration

    Parameters
    ----------
    times : np.ndarray
        Recorded times
    states : np.ndarray
        (n, 3) array, rows (s, m1, m2) or (s, m, p)
    noise_used : np.ndarray
        psi values at the recorded times (0 for the deterministic model)
    params_hash : str
        ChemostatParams.digest() of the parameters
    seed : int
        Seed of the noise path
    system : str
        'original' or 'transformed'
    n_clamped : int
        Number of components reset to the boundary
    max_clamp : float
        Largest magnitude that was clamped away
    """
    times: np.ndarray
    states: np.ndarray
    noise_used: np.ndarray
    params_hash: str
    seed: int
    system: str = 'original'
    n_clamped: int = 0
    max_clamp: float = 0.0

    def __post_init__(self):
        if not (len(self.times) == len(self.states) == len(self.noise_used)):
            raise ConfigurationError("trajectory arrays must have equal length")
        for array in (self.times, self.states, self.noise_used):
            array.flags.writeable = False

    def __len__(self):
        return len(self.times)

    @property
    def columns(self):
        return COLUMNS[self.system]

    def column(self, name: str) -> np.ndarray:
        """One of s, m1, m2 (original) or s, m, p (transformed)."""
        idx = self.columns.index(name) - 1
        if not 0 <= idx < 3:
            raise KeyError(name)
        return self.states[:, idx]

    @property
    def total_biomass(self) -> np.ndarray:
        if self.system == 'original':
            return self.states[:, 1] + self.states[:, 2]
        return self.states[:, 1]

    def final_state(self) -> Union[State, AggregateState]:
        cls = State if self.system == 'original' else AggregateState
        return cls.from_array(self.states[-1])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.states, columns=self.columns[1:4])
        frame.insert(0, 't', self.times)
        frame['psi'] = self.noise_used
        return frame

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)


@njit(cache=True)
def _xi_at(xi, position):
    """Linear interpolation at a fractional grid index."""
    last = xi.shape[0] - 1
    idx = int(position)
    if idx >= last:
        return xi[last]
    weight = position - idx
    if weight == 0.0:
        return xi[idx]
    return xi[idx] + weight * (xi[idx + 1] - xi[idx])


@njit(cache=True)
def _dilution(D, a, xi):
    if a > 0.0:
        return D + (2.0 * a / math.pi) * math.atan(xi)
    return D


@njit(cache=True)
def _field(system, y0, y1, y2, deff, prm):
    if system == ORIGINAL:
        return original_field(y0, y1, y2, deff, prm)
    return transformed_field(y0, y1, y2, deff, prm, system == TRANSFORMED_CONSISTENT)


@njit(cache=True)
def _guard(value, upper):
    """Returns (value, status, clamped magnitude)."""
    if not math.isfinite(value):
        return value, STATUS_NONFINITE, 0.0
    if value < 0.0:
        if value > -CLAMP_TOLERANCE:
            return 0.0, STATUS_OK, -value
        return value, STATUS_NEGATIVE, 0.0
    if value > upper:
        if value < upper + CLAMP_TOLERANCE:
            return upper, STATUS_OK, value - upper
        return value, STATUS_NEGATIVE, 0.0
    return value, STATUS_OK, 0.0


@njit(cache=True)
def _rk4_kernel(initial, xi, substeps, dt, n_steps, record_every, prm, system):
    n_records = n_steps // record_every + 1
    if n_steps % record_every != 0:
        n_records += 1
    out = np.empty((n_records, 3))
    out_xi = np.empty(n_records)
    out_step = np.empty(n_records, dtype=np.int64)

    D, a = prm[DIL], prm[AMP]
    upper_last = 1.0 if system != ORIGINAL else np.inf
    y0, y1, y2 = initial[0], initial[1], initial[2]
    out[0, 0], out[0, 1], out[0, 2] = y0, y1, y2
    out_xi[0] = xi[0]
    out_step[0] = 0
    rec = 1
    n_clamped = 0
    max_clamp = 0.0
    fail = np.zeros(3)

    for j in range(n_steps):
        xi_start = _xi_at(xi, j / substeps)
        xi_end = _xi_at(xi, (j + 1) / substeps)
        d1 = _dilution(D, a, xi_start)
        d2 = _dilution(D, a, _xi_at(xi, (j + 0.5) / substeps))
        d3 = _dilution(D, a, xi_end)

        k1 = _field(system, y0, y1, y2, d1, prm)
        k2 = _field(system, y0 + 0.5 * dt * k1[0], y1 + 0.5 * dt * k1[1],
                    y2 + 0.5 * dt * k1[2], d2, prm)
        k3 = _field(system, y0 + 0.5 * dt * k2[0], y1 + 0.5 * dt * k2[1],
                    y2 + 0.5 * dt * k2[2], d2, prm)
        k4 = _field(system, y0 + dt * k3[0], y1 + dt * k3[1], y2 + dt * k3[2], d3, prm)

        y0 = y0 + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        y1 = y1 + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        y2 = y2 + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])

        y0, st0, c0 = _guard(y0, np.inf)
        y1, st1, c1 = _guard(y1, np.inf)
        y2, st2, c2 = _guard(y2, upper_last)
        status = max(st0, st1, st2)
        if status != STATUS_OK:
            fail[0], fail[1], fail[2] = y0, y1, y2
            return out[:rec], out_xi[:rec], out_step[:rec], status, j + 1, fail, n_clamped, max_clamp
        for clamp in (c0, c1, c2):
            if clamp > 0.0:
                n_clamped += 1
                if clamp > max_clamp:
                    max_clamp = clamp

        if (j + 1) % record_every == 0 or j + 1 == n_steps:
            out[rec, 0], out[rec, 1], out[rec, 2] = y0, y1, y2
            out_xi[rec] = xi_end
            out_step[rec] = j + 1
            rec += 1

    return out[:rec], out_xi[:rec], out_step[:rec], STATUS_OK, n_steps, fail, n_clamped, max_clamp


def integrate(params: ChemostatParams,
              noise: NoisePath,
              cfg: SimConfig) -> Trajectory:
    """
    Integrate the original or the aggregate system with classical RK4

    Parameters
    ----------
    params : ChemostatParams
        Model constants
    noise : NoisePath
        Frozen OU realization covering [0, cfg.t_end]
    cfg : SimConfig
        Step, horizon, recording and initial condition

    Returns
    -------
    Trajectory
        Deterministic given (params, noise seed, cfg)

    Raises
    ------
    ConfigurationError
        If the step does not fit the noise grid or the horizon exceeds the path
    IntegrationBlowupError
        On a negative excursion beyond CLAMP_TOLERANCE or a non-finite value
    """
    substeps = cfg.substeps(noise.dt)
    n_steps = cfg.n_steps
    if cfg.t_end > noise.t_end * (1 + 1e-12):
        raise ConfigurationError(
            f"t_end={cfg.t_end} exceeds the noise path horizon {noise.t_end}")

    if cfg.system == 'original':
        system = ORIGINAL
    elif cfg.competition == 'consistent':
        system = TRANSFORMED_CONSISTENT
    else:
        system = TRANSFORMED_PRINTED

    out, out_xi, out_step, status, last_step, fail, n_clamped, max_clamp = _rk4_kernel(
        cfg.initial.as_array(), noise.xi, substeps, float(cfg.dt), n_steps,
        cfg.record_every, params.pack(), system)

    if status != STATUS_OK:
        raise IntegrationBlowupError(last_step * cfg.dt, fail, noise.seed)
    if n_clamped:
        logger.debug(f"seed {noise.seed}: {n_clamped} component(s) clamped to the "
                     f"boundary, largest magnitude {max_clamp:.3e}")

    noise_used = psi(out_xi, params.a) if params.a > 0 else np.zeros(len(out_xi))
    return Trajectory(times=out_step * cfg.dt, states=out, noise_used=noise_used,
                      params_hash=params.digest(), seed=noise.seed,
                      system=cfg.system, n_clamped=int(n_clamped),
                      max_clamp=float(max_clamp))
