from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import bisect

ROOT_RTOL = 1e-10
SCAN_POINTS = 20001


def smallest_root(func: Callable,
                  lower: float,
                  upper: float,
                  n_grid: int = SCAN_POINTS,
                  rtol: float = ROOT_RTOL) -> Tuple[float, bool]:
    """
    Smallest root of a function that is positive at 'lower'.

    The interval is scanned on a uniform grid for the first point where the
    function stops being positive, then the bracket is refined by bisection.

    Parameters
    ----------
    func : Callable
        Vectorized function, accepts scalars and numpy arrays
    lower : float
        Left end, func(lower) must be > 0
    upper : float
        Right end of the scan
    n_grid : int, optional
        Number of scan points, by default 20001
    rtol : float, optional
        Relative tolerance of the bisection, by default 1e-10

    Returns
    -------
    Tuple[float, bool]
        (root, True) when a sign change was bracketed,
        (upper, False) when func stays positive on the scan grid
    """
    grid = np.linspace(lower, upper, n_grid)
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        values = np.asarray(func(grid), dtype=float)
    # nan counts as "not positive" so it stops the scan
    non_positive = np.flatnonzero(~(values > 0.0))
    if non_positive.size == 0:
        return float(upper), False
    idx = int(non_positive[0])
    if idx == 0:
        raise ValueError(f"function is not positive at the left end {lower!r}")
    if values[idx] == 0.0:
        return float(grid[idx]), True

    def scalar(x):
        return float(func(np.float64(x)))

    root = bisect(scalar, grid[idx - 1], grid[idx],
                  xtol=np.finfo(float).tiny, rtol=rtol, maxiter=500)
    return float(root), True


def trapezoid_average(values: np.ndarray, times: np.ndarray) -> float:
    """(1/T) times the trapezoidal integral of values over times."""
    span = float(times[-1] - times[0])
    return float(trapezoid(values, times)) / span


def tail_slope(times: np.ndarray, values: np.ndarray) -> float:
    """Least-squares slope of log(values) against time."""
    return float(np.polyfit(times, np.log(values), 1)[0])


def first_entry_time(times: np.ndarray,
                     values: np.ndarray,
                     bound: float) -> Optional[float]:
    """
    Earliest recorded time from which every later value stays <= bound.

    Returns None if the last value is still above the bound.
    """
    outside = np.flatnonzero(values > bound)
    if outside.size == 0:
        return float(times[0])
    last = int(outside[-1])
    if last == len(values) - 1:
        return None
    return float(times[last + 1])
