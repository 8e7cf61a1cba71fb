"""
Bounded Ornstein-Uhlenbeck noise on the dilution rate.

The unit-rate OU process d(xi) = -xi dt + dW is sampled on a uniform grid with
its exact Gaussian transition and pushed through the bounding map
psi(xi) = (2a/pi) arctan(xi), so that D + psi(xi) stays in [D - a, D + a].

Random numbers come from numpy's PCG64 bit generator seeded through
SeedSequence(seed). Each path owns exactly one stream: the path of seed k
consumes, in order, one stationary draw followed by one standard normal per
grid step (burn-in steps first). Ensembles use distinct integer seeds.
"""
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from random_chemostat.utils.exceptions import ConfigurationError
from random_chemostat.utils.formula_helpers import trapezoid_average
from random_chemostat.utils.logger import logger

logger = logger()

# Unit mean-reversion rate and unit diffusion, not exposed as parameters
STATIONARY_VARIANCE = 0.5
GENERATOR = 'PCG64'
CSV_FLOAT_FORMAT = '%.17g'


def make_generator(seed: int) -> np.random.Generator:
    """One independent PCG64 stream per seed."""
    if seed < 0:
        raise ConfigurationError(f"seed must be a non-negative integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def grid_size(t_end: float, dt: float) -> int:
    """floor(t_end/dt) + 1, tolerant to representation error in t_end/dt."""
    return int(math.floor(t_end / dt + 1e-9)) + 1


@dataclass(frozen=True)
class NoiseConfig:
    """
    Discretization of one OU realization

    Parameters
    ----------
    seed : int
        Seed of the PCG64 stream
    t_end : float
        Last grid time
    dt : float, optional
        Grid spacing, by default 1e-3
    burn_in : float, optional
        Pre-roll discarded before t = 0, by default 10
    """
    seed: int
    t_end: float
    dt: float = 1e-3
    burn_in: float = 10.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if not self.t_end > 0:
            raise ConfigurationError(f"t_end must be > 0, got {self.t_end}")
        if not self.burn_in >= 0:
            raise ConfigurationError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be >= 0, got {self.seed}")
        if self.n_points > np.iinfo(np.intp).max // 8:
            raise ConfigurationError(
                f"{self.n_points} grid points do not fit in memory")

    @property
    def n_points(self) -> int:
        return grid_size(self.t_end, self.dt)

    @property
    def n_burn_in(self) -> int:
        return int(math.floor(self.burn_in / self.dt + 1e-9))


@dataclass(frozen=True, eq=False)
class NoisePath:
    """
    Grid-sampled realization of the OU process, immutable once built.

    Parameters
    ----------
    times : np.ndarray
        Uniform grid 0, dt, 2dt, ...
    xi : np.ndarray
        OU values on the grid
    seed : int
        Seed the path was drawn with
    dt : float
        Grid spacing
    """
    times: np.ndarray
    xi: np.ndarray
    seed: int
    dt: float

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        xi = np.array(self.xi, dtype=float)
        if times.shape != xi.shape or times.ndim != 1 or len(times) < 2:
            raise ConfigurationError(
                "times and xi must be 1-d arrays of equal length >= 2")
        if not np.all(np.isfinite(xi)):
            raise ConfigurationError("noise path contains non-finite values")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        # the integrator indexes the path by t / dt
        offset = np.abs(times - np.arange(len(times)) * self.dt).max()
        if offset > 1e-9 * max(1.0, abs(times[-1])):
            raise ConfigurationError(
                f"noise times must form the uniform grid 0, dt, 2dt, ... with dt={self.dt}; "
                f"largest deviation {offset:.3g}")
        times.flags.writeable = False
        xi.flags.writeable = False
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'xi', xi)

    def __len__(self):
        return len(self.xi)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @classmethod
    def zeros(cls, t_end: float, dt: float) -> 'NoisePath':
        """Path with xi = 0 everywhere, used by deterministic runs."""
        n = grid_size(t_end, dt)
        return cls(times=np.arange(n) * dt, xi=np.zeros(n), seed=0, dt=dt)

    def value_at(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """Linear interpolation of xi between grid points."""
        return np.interp(t, self.times, self.xi)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'t': self.times, 'xi': self.xi})

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)

    @classmethod
    def from_csv(cls, path: str, seed: int = 0) -> 'NoisePath':
        frame = pd.read_csv(path, float_precision='round_trip')
        if list(frame.columns) != ['t', 'xi']:
            raise ConfigurationError(
                f"{path}: expected header 't,xi', got {','.join(frame.columns)}")
        times = frame['t'].to_numpy()
        return cls(times=times, xi=frame['xi'].to_numpy(), seed=seed,
                   dt=float(times[1] - times[0]))


def sample_ou_path(cfg: NoiseConfig) -> NoisePath:
    """
    Sample the stationary unit-rate OU process on [0, t_end].

    xi(-burn_in) is drawn from Normal(0, 1/2); every step applies the exact
    transition xi_{j+1} = xi_j exp(-dt) + Normal(0, (1 - exp(-2dt))/2).
    The burn-in steps are then discarded.

    Parameters
    ----------
    cfg : NoiseConfig
        Seed and grid

    Returns
    -------
    NoisePath
        Bit-identical for identical cfg
    """
    n_burn, n_points = cfg.n_burn_in, cfg.n_points
    decay = math.exp(-cfg.dt)
    step_std = math.sqrt(-math.expm1(-2.0 * cfg.dt) / 2.0)

    rng = make_generator(cfg.seed)
    shocks = rng.standard_normal(n_burn + n_points)
    shocks[0] *= math.sqrt(STATIONARY_VARIANCE)
    shocks[1:] *= step_std
    # AR(1) recursion xi_j = decay * xi_{j-1} + shock_j
    xi = lfilter([1.0], [1.0, -decay], shocks)[n_burn:]

    logger.debug(f"OU path seed={cfg.seed}: {n_points} points, "
                 f"{n_burn} burn-in steps discarded")
    return NoisePath(times=np.arange(n_points) * cfg.dt, xi=xi,
                     seed=cfg.seed, dt=cfg.dt)


def psi(xi: Union[float, np.ndarray], a: float) -> Union[float, np.ndarray]:
    """
    Bounding map (2a/pi) arctan(xi), values in (-a, a).

    Raises
    ------
    ConfigurationError
        If a <= 0
    """
    if not a > 0:
        raise ConfigurationError(f"noise amplitude a must be > 0, got {a}")
    return (2.0 * a / math.pi) * np.arctan(xi)


def effective_dilution(D: float,
                       a: float,
                       xi: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Perturbed dilution rate D + psi(xi), inside [D - a, D + a].

    a = 0 is the deterministic model and returns D whatever xi is.

    Raises
    ------
    ConfigurationError
        If a < 0 or D <= a (the lower rate D - a must stay positive)
    """
    if a < 0:
        raise ConfigurationError(f"noise amplitude a must be >= 0, got {a}")
    if not D > a:
        raise ConfigurationError(
            f"dilution rate D={D} must exceed the noise amplitude a={a}")
    if a == 0:
        return np.full(np.shape(xi), D, dtype=float) if np.ndim(xi) else D
    return D + psi(xi, a)


def time_average_psi(path: NoisePath, a: float) -> float:
    """Trapezoidal (1/T) integral of psi(xi(s)) over the whole path."""
    return trapezoid_average(psi(path.xi, a), path.times)


def autocorrelation(path: NoisePath, lag: float) -> float:
    """Sample correlation of xi(t) and xi(t + lag) along one path."""
    shift = int(round(lag / path.dt))
    if shift <= 0 or shift >= len(path) - 1:
        raise ConfigurationError(f"lag {lag} is outside the path")
    return float(np.corrcoef(path.xi[:-shift], path.xi[shift:])[0, 1])
