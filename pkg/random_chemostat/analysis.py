"""
Closed-form quantities and sufficient conditions of the random chemostat.

Everything here is a pure function of ChemostatParams: the absorbing-set
rate vartheta, the nutrient floor s*, the extinction condition, the Monod and
Haldane persistence conditions, the band of the floating fraction p, the
biomass floor m* and the floors it induces on m1 and m2.

The persistence conditions come in two variants. 'printed' evaluates them
exactly as they are usually stated (l = min{s*, D_max/k} for Monod, no yield
factor g on the Haldane right-hand side). With strict_proof_consistent=True
the Monod cap becomes D_max s_in / vartheta, the bound the absorbing set
actually provides, and the Haldane right-hand side is multiplied by g.
"""
import json
import math
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from random_chemostat.kinetics import Haldane, Monod, mu
from random_chemostat.model import ChemostatParams
from random_chemostat.utils.exceptions import AnalysisError, DomainError, UsageError
from random_chemostat.utils.formula_helpers import smallest_root
from random_chemostat.utils.logger import logger

logger = logger()

# Default margins, relative to D_min s_in (s*) and to the condition gap (m*)
S_STAR_EPSILON = 1e-3
M_STAR_EPSILON = 1e-3
# Steps needed for p to enter its band from anywhere in [0, 1], in units of 1/(alpha1 + alpha2)
P_BAND_DECADES = math.log(1e3)


@dataclass(frozen=True)
class RootResult:
    """
    Outcome of a bracketing root scan

    Parameters
    ----------
    value : float
        The root, or the scan bound when no sign change was found
    bracketed : bool
        False marks "no root below the scan bound"
    scan_bound : float
        Right end of the scanned interval
    """
    value: float
    bracketed: bool
    scan_bound: float

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class ConditionResult:
    """
    One inequality lhs (< or >) rhs with its verdict

    Parameters
    ----------
    holds : bool
        Verdict of the strict inequality
    lhs : float
        Left-hand side
    rhs : float
        Right-hand side
    s_star : float, optional
        Nutrient floor used (persistence only)
    l : float, optional
        Capped nutrient level in the Monod denominator
    variant : str, optional
        'printed' or 'proof_consistent'
    """
    holds: bool
    lhs: float
    rhs: float
    s_star: Optional[float] = None
    l: Optional[float] = None
    variant: str = 'printed'

    @property
    def gap(self) -> float:
        """rhs - lhs, positive when a persistence condition holds."""
        return self.rhs - self.lhs

    def to_dict(self) -> Dict:
        return {key: value for key, value in asdict(self).items() if value is not None}


@dataclass(frozen=True)
class PBand:
    """Limits of the floating fraction p and the time needed to enter them."""
    lower: float
    upper: float
    transient: float


@dataclass(frozen=True)
class MStar:
    """
    Total-biomass floor from the persistence proofs

    Parameters
    ----------
    value : float
        Smallest positive root of the growth function, or the scan bound
    bracketed : bool
        Whether a root was found
    scan_bound : float
        Right end of the scan
    epsilon : float
        Margin used in P_eps, p_eps and the nutrient cap
    slope : float
        Coefficient of m in the growth function; >= 0 means no root is expected
    form : str
        'linear', 'saturating' (Monod with the nutrient cap) or 'haldane'
    """
    value: float
    bracketed: bool
    scan_bound: float
    epsilon: float
    slope: float
    form: str


@dataclass(frozen=True)
class Floors:
    m1_floor: float
    m2_floor: float


def compute_vartheta(params: ChemostatParams) -> float:
    """
    Contraction rate of z = g s + c m

    vartheta = min{D_min alpha, d + alpha D_min - g r d / c, d}

    Raises
    ------
    AnalysisError
        If the minimum is not positive
    """
    vartheta = min(params.d_min * params.alpha,
                   params.d + params.alpha * params.d_min - params.g * params.r * params.d / params.c,
                   params.d)
    if not vartheta > 0:
        raise AnalysisError(f"absorbing-set bound unavailable: vartheta = {vartheta}")
    return vartheta


def absorbing_bound(params: ChemostatParams) -> float:
    """g D_max s_in / vartheta, the radius of the absorbing set in z."""
    return params.g * params.d_max * params.s_in / compute_vartheta(params)


def absorbing_envelope(params: ChemostatParams,
                       z0: float,
                       t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Gronwall bound z(t) <= z0 e^{-vartheta t} + B (1 - e^{-vartheta t})

    Parameters
    ----------
    params : ChemostatParams
        Model constants
    z0 : float
        g s(0) + c m(0)
    t : Union[float, np.ndarray]
        Time(s) >= 0

    Returns
    -------
    Union[float, np.ndarray]
        Upper envelope every trajectory respects
    """
    vartheta = compute_vartheta(params)
    decay = np.exp(-vartheta * np.asarray(t, dtype=float))
    envelope = z0 * decay + absorbing_bound(params) * (1.0 - decay)
    return float(envelope) if np.ndim(envelope) == 0 else envelope


def p_band(params: ChemostatParams) -> PBand:
    """
    Eventual band [alpha2/(alpha1 + alpha2 + alpha D_max), alpha2/(alpha1 + alpha2)] of p.

    transient = ln(1e3)/(alpha1 + alpha2) is the time after which p is in
    the band up to 1e-3 of its initial distance (infinite without exchange).
    """
    exchange = params.alpha1 + params.alpha2
    if exchange == 0:
        return PBand(lower=0.0, upper=0.0, transient=math.inf)
    return PBand(lower=params.alpha2 / (exchange + params.alpha * params.d_max),
                 upper=params.alpha2 / exchange,
                 transient=P_BAND_DECADES / exchange)


def check_extinction(params: ChemostatParams, conservative: bool = False) -> ConditionResult:
    """
    Sufficient condition for the washout of both populations

    lhs = D alpha alpha2 / (alpha1 + alpha2 + alpha D_max) + d, rhs = g,
    holds when lhs > rhs. The kinetics play no role.

    Parameters
    ----------
    params : ChemostatParams
        Model constants
    conservative : bool, optional
        Use D_min instead of D in front, the stronger form; when it holds
        the default form holds too, by default False

    Returns
    -------
    ConditionResult
        Verdict with both sides
    """
    rate = params.d_min if conservative else params.D
    lhs = rate * params.alpha * p_band(params).lower + params.d
    return ConditionResult(holds=bool(lhs > params.g), lhs=lhs, rhs=params.g,
                           variant='conservative' if conservative else 'printed')


def extinction_rate(params: ChemostatParams) -> float:
    """alpha D p_lower - g + d, the exponential rate at which m decays when positive."""
    return params.alpha * params.D * p_band(params).lower - params.g + params.d


def _s_star_coefficient(params: ChemostatParams,
                        epsilon: float,
                        paper_verbatim_f: bool) -> float:
    s_in_factor = 1.0 if paper_verbatim_f else params.s_in
    return params.g * params.d_max * s_in_factor / compute_vartheta(params) + epsilon


def compute_s_star(params: ChemostatParams,
                   epsilon: Optional[float] = None,
                   coefficient: Optional[float] = None,
                   paper_verbatim_f: bool = False,
                   verbosity: int = 1) -> RootResult:
    """
    Nutrient floor s*: smallest positive root of

        f(s) = D_min s_in - alpha D_max s - mu(s) (g D_max s_in / vartheta + eps)

    f(0) = D_min s_in > 0, so s* > 0 whenever it exists. The root is
    bracketed on [0, 10 s_in / alpha] and refined by bisection.

    Parameters
    ----------
    params : ChemostatParams
        Model constants
    epsilon : float, optional
        Margin eps > 0, by default 1e-3 D_min s_in
    coefficient : float, optional
        Replace the whole mu coefficient (g D_max s_in / vartheta + eps);
        0 gives the closed form D_min s_in / (alpha D_max)
    paper_verbatim_f : bool, optional
        Drop s_in from the coefficient, by default False
    verbosity : int, optional
        Log the root when > 0, by default 1

    Returns
    -------
    RootResult
        s* and whether a sign change was bracketed

    Raises
    ------
    DomainError
        If epsilon or coefficient is negative
    """
    if epsilon is None:
        epsilon = S_STAR_EPSILON * params.d_min * params.s_in
    if not epsilon > 0:
        raise DomainError(f"epsilon must be > 0, got {epsilon}")
    if coefficient is None:
        coefficient = _s_star_coefficient(params, epsilon, paper_verbatim_f)
    if coefficient < 0:
        raise DomainError(f"coefficient must be >= 0, got {coefficient}")

    upper = 10.0 * params.s_in / params.alpha
    if coefficient == 0:
        root = params.d_min * params.s_in / (params.alpha * params.d_max)
        return RootResult(value=root, bracketed=True, scan_bound=upper)

    def f(s):
        return params.d_min * params.s_in - params.alpha * params.d_max * s \
            - mu(params.kinetics, s) * coefficient

    root, bracketed = smallest_root(f, 0.0, upper)
    if not bracketed:
        logger.warning(f"s*: f stays positive on [0, {upper:.6g}], returning the scan bound")
    elif verbosity > 0:
        logger.debug(f"s* = {root:.10g} (mu coefficient {coefficient:.6g})")
    return RootResult(value=root, bracketed=bracketed, scan_bound=upper)


def _persistence_lhs(params: ChemostatParams) -> float:
    return params.alpha * params.d_max * p_band(params).upper + params.d


def _monod_cap(params: ChemostatParams, strict_proof_consistent: bool) -> float:
    if strict_proof_consistent:
        return params.d_max * params.s_in / compute_vartheta(params)
    return params.d_max / params.kinetics.k


def _haldane_denominator(params: ChemostatParams, margin: float = 0.0) -> float:
    kin = params.kinetics
    level = params.d_max * params.s_in / kin.k + margin
    return kin.k + level + level * level / kin.i


def check_persistence_monod(params: ChemostatParams,
                            strict_proof_consistent: bool = False,
                            epsilon: Optional[float] = None,
                            paper_verbatim_f: bool = False) -> ConditionResult:
    """
    Sufficient condition for the survival of both populations, Monod kinetics

    lhs = alpha D_max alpha2/(alpha1 + alpha2) + d, rhs = g s*/(k + l),
    l = min{s*, D_max/k} (D_max s_in/vartheta in the proof-consistent
    variant); holds when lhs < rhs.

    Raises
    ------
    UsageError
        If the kinetics are not Monod
    """
    if not isinstance(params.kinetics, Monod):
        raise UsageError("check_persistence_monod needs Monod kinetics, "
                         f"got {params.kinetics.type_name}")
    s_star = compute_s_star(params, epsilon, paper_verbatim_f=paper_verbatim_f,
                            verbosity=0).value
    cap = min(s_star, _monod_cap(params, strict_proof_consistent))
    lhs = _persistence_lhs(params)
    rhs = params.g * s_star / (params.kinetics.k + cap)
    return ConditionResult(holds=bool(lhs < rhs), lhs=lhs, rhs=rhs, s_star=s_star, l=cap,
                           variant='proof_consistent' if strict_proof_consistent else 'printed')


def check_persistence_haldane(params: ChemostatParams,
                              strict_proof_consistent: bool = False,
                              epsilon: Optional[float] = None,
                              paper_verbatim_f: bool = False) -> ConditionResult:
    """
    Sufficient condition for the survival of both populations, Haldane kinetics

    lhs = alpha D_max alpha2/(alpha1 + alpha2) + d,
    rhs = s*/(k + D_max s_in/k + D_max^2 s_in^2/(i k^2)), multiplied by g in
    the proof-consistent variant; holds when lhs < rhs.

    Raises
    ------
    UsageError
        If the kinetics are not Haldane
    """
    if not isinstance(params.kinetics, Haldane):
        raise UsageError("check_persistence_haldane needs Haldane kinetics, "
                         f"got {params.kinetics.type_name}")
    s_star = compute_s_star(params, epsilon, paper_verbatim_f=paper_verbatim_f,
                            verbosity=0).value
    lhs = _persistence_lhs(params)
    rhs = s_star / _haldane_denominator(params)
    if strict_proof_consistent:
        rhs *= params.g
    return ConditionResult(holds=bool(lhs < rhs), lhs=lhs, rhs=rhs, s_star=s_star,
                           variant='proof_consistent' if strict_proof_consistent else 'printed')


def check_persistence(params: ChemostatParams, **kwargs) -> ConditionResult:
    """The persistence condition that applies to params.kinetics."""
    if isinstance(params.kinetics, Haldane):
        return check_persistence_haldane(params, **kwargs)
    return check_persistence_monod(params, **kwargs)


def compute_m_star(params: ChemostatParams,
                   strict_proof_consistent: bool = False,
                   epsilon: Optional[float] = None,
                   paper_verbatim_f: bool = False,
                   verbosity: int = 1) -> MStar:
    """
    Total-biomass floor m*: smallest positive root of the per-capita growth
    function that bounds m'/m from below once p is in its band.

    With eps = 1e-3 of the condition gap, P_eps = p_upper + eps and
    p_eps = p_lower - eps:

    * Monod, s* <= cap (always the case in the proof-consistent variant)::

          g(m) = -alpha D_max P_eps + g s*/(k + s*) - d - (r1 P_eps + r2 p_eps - r2) m

      scanned on [0, 10 B / c], B the absorbing bound.
    * Monod, s* > cap::

          h(m) = -alpha D_max P_eps + g s*/(k + cap + eps/g - c m/g) - d
                 - (r1 P_eps + r2 p_eps - r2) m

      scanned on [0, H), H = g (k + cap + eps/g) / c.
    * Haldane::

          c(m) = rhs(eps) - alpha D_max P_eps - d + (p_eps - r1 - r2) m

      where rhs(eps) is the condition's right-hand side with D_max s_in/k
      replaced by D_max s_in/k + eps; scanned on [0, 10 B / c].

    A nonnegative slope means the growth function need not vanish; the scan
    bound is returned with bracketed=False.

    Raises
    ------
    UsageError
        If the persistence condition of this variant does not hold
    AnalysisError
        If the growth function is not positive at m = 0
    """
    condition = check_persistence(params, strict_proof_consistent=strict_proof_consistent,
                                  epsilon=epsilon, paper_verbatim_f=paper_verbatim_f)
    if not condition.holds:
        raise UsageError(
            f"m* needs the persistence condition to hold (lhs {condition.lhs:.6g} "
            f">= rhs {condition.rhs:.6g})")

    band = p_band(params)
    margin = M_STAR_EPSILON * condition.gap
    upper_p = band.upper + margin
    lower_p = band.lower - margin
    s_star = condition.s_star
    decay = params.alpha * params.d_max * upper_p + params.d
    scan_bound = 10.0 * absorbing_bound(params) / params.c

    if isinstance(params.kinetics, Haldane):
        form = 'haldane'
        slope = lower_p - params.r1 - params.r2
        gain = s_star / _haldane_denominator(params, margin)
        if strict_proof_consistent:
            gain *= params.g
        base = gain - decay

        def growth(m):
            return base + slope * m
    else:
        k = params.kinetics.k
        cap = _monod_cap(params, strict_proof_consistent)
        slope = -(params.r1 * upper_p + params.r2 * lower_p - params.r2)
        if s_star <= cap:
            form = 'linear'
            base = params.g * s_star / (k + s_star) - decay

            def growth(m):
                return base + slope * m
        else:
            form = 'saturating'
            level = k + cap + margin / params.g
            scan_bound = params.g * level / params.c
            # stop short of the pole at H
            scan_bound *= 1.0 - 1e-9

            def growth(m):
                return params.g * s_star / (level - params.c * m / params.g) - decay + slope * m

    if not float(growth(0.0)) > 0:
        raise AnalysisError(
            f"growth function is not positive at m = 0 ({float(growth(0.0)):.6g}); "
            f"the condition gap {condition.gap:.3g} is too small for the margin")

    value, bracketed = smallest_root(growth, 0.0, scan_bound)
    if not bracketed:
        logger.warning(f"m*: growth function stays positive on [0, {scan_bound:.6g}] "
                       f"(slope {slope:.3g}), returning the scan bound")
    elif verbosity > 0:
        logger.debug(f"m* = {value:.10g} ({form}, eps = {margin:.3g})")
    return MStar(value=value, bracketed=bracketed, scan_bound=scan_bound,
                 epsilon=margin, slope=slope, form=form)


def persistence_floors(params: ChemostatParams, m_star: float) -> Floors:
    """
    Eventual lower bounds of the two populations

    m1_floor = p_lower m*, m2_floor = p_lower p_upper m*

    Raises
    ------
    DomainError
        If m_star < 0
    """
    if not m_star >= 0:
        raise DomainError(f"m_star must be >= 0, got {m_star}")
    band = p_band(params)
    return Floors(m1_floor=band.lower * m_star,
                  m2_floor=band.lower * band.upper * m_star)


@dataclass(frozen=True)
class AnalysisReport:
    """
    Every closed-form quantity for one parameter set

    Parameters
    ----------
    kinetics : str
        'monod' or 'haldane'
    d_min, d_max : float
        Range of the perturbed dilution rate
    vartheta : float
        Contraction rate of the absorbing set
    absorbing_bound : float
        g D_max s_in / vartheta
    s_star : float, optional
        Nutrient floor, None when no root was bracketed
    epsilon : float
        Margin used for s*
    p_lower, p_upper : float
        Band of the floating fraction
    p_transient : float
        Time for p to reach its band
    extinction : ConditionResult
        Extinction condition
    extinction_conservative : ConditionResult
        Its D_min form
    persistence_monod, persistence_haldane : ConditionResult, optional
        The one matching the kinetics
    m_star : MStar, optional
        Present when the persistence condition holds
    floors : Floors, optional
        Present when m* was bracketed
    mutually_exclusive : bool
        False when extinction and persistence both hold
    paper_verbatim_f, strict_proof_consistent : bool
        Variant flags the report was built with
    """
    kinetics: str
    d_min: float
    d_max: float
    vartheta: float
    absorbing_bound: float
    s_star: Optional[float]
    epsilon: float
    p_lower: float
    p_upper: float
    p_transient: float
    extinction: ConditionResult
    extinction_conservative: ConditionResult
    persistence_monod: Optional[ConditionResult] = None
    persistence_haldane: Optional[ConditionResult] = None
    m_star: Optional[MStar] = None
    floors: Optional[Floors] = None
    mutually_exclusive: bool = True
    paper_verbatim_f: bool = False
    strict_proof_consistent: bool = False

    @property
    def persistence(self) -> ConditionResult:
        return self.persistence_haldane if self.kinetics == 'haldane' else self.persistence_monod

    def to_dict(self) -> Dict:
        data = asdict(self)
        for name in ('extinction', 'extinction_conservative',
                     'persistence_monod', 'persistence_haldane'):
            condition = getattr(self, name)
            if condition is None:
                data.pop(name)
            else:
                data[name] = condition.to_dict()
        for name in ('m_star', 'floors'):
            if data[name] is None:
                data.pop(name)
        if math.isinf(data['p_transient']):
            data['p_transient'] = None
        return data

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def to_frame(self) -> pd.DataFrame:
        """Two-column (quantity, value) table, conditions flattened."""
        rows = []
        for key, value in self.to_dict().items():
            if isinstance(value, dict):
                rows.extend((f"{key}.{sub}", item) for sub, item in value.items())
            else:
                rows.append((key, value))
        return pd.DataFrame(rows, columns=['quantity', 'value'])

    def to_table(self) -> str:
        return self.to_frame().to_string(index=False)


def report(params: ChemostatParams,
           epsilon: Optional[float] = None,
           paper_verbatim_f: bool = False,
           strict_proof_consistent: bool = False,
           verbosity: int = 1) -> AnalysisReport:
    """
    Assemble the AnalysisReport of one parameter set

    Evaluates both condition families and checks that they do not hold
    together; a conflict is recorded in mutually_exclusive and logged as a
    warning rather than raised.

    Parameters
    ----------
    params : ChemostatParams
        Model constants
    epsilon : float, optional
        Margin of s*, by default 1e-3 D_min s_in
    paper_verbatim_f : bool, optional
        Evaluate s* without s_in in the mu coefficient, by default False
    strict_proof_consistent : bool, optional
        Use the proof-consistent persistence variant, by default False
    verbosity : int, optional
        Log intermediate results when > 0, by default 1

    Returns
    -------
    AnalysisReport
    """
    if epsilon is None:
        epsilon = S_STAR_EPSILON * params.d_min * params.s_in
    vartheta = compute_vartheta(params)
    s_star = compute_s_star(params, epsilon, paper_verbatim_f=paper_verbatim_f,
                            verbosity=verbosity)
    band = p_band(params)
    extinction = check_extinction(params)
    options = dict(strict_proof_consistent=strict_proof_consistent, epsilon=epsilon,
                   paper_verbatim_f=paper_verbatim_f)
    persistence = check_persistence(params, **options)

    m_star = floors = None
    if persistence.holds:
        try:
            m_star = compute_m_star(params, verbosity=verbosity, **options)
        except AnalysisError as error:
            logger.warning(f"m* unavailable: {error}")
        if m_star is not None and m_star.bracketed:
            floors = persistence_floors(params, m_star.value)

    mutually_exclusive = not (extinction.holds and persistence.holds)
    if not mutually_exclusive:
        logger.warning(
            f"extinction (lhs {extinction.lhs:.6g} > g {extinction.rhs:.6g}) and "
            f"{params.kinetics.type_name} persistence (rhs {persistence.rhs:.6g} > "
            f"lhs {persistence.lhs:.6g}) both hold; persistence rhs exceeds g")

    haldane = isinstance(params.kinetics, Haldane)
    result = AnalysisReport(
        kinetics=params.kinetics.type_name,
        d_min=params.d_min, d_max=params.d_max, vartheta=vartheta,
        absorbing_bound=absorbing_bound(params),
        s_star=s_star.value if s_star.bracketed else None,
        epsilon=epsilon, p_lower=band.lower, p_upper=band.upper,
        p_transient=band.transient,
        extinction=extinction,
        extinction_conservative=check_extinction(params, conservative=True),
        persistence_monod=None if haldane else persistence,
        persistence_haldane=persistence if haldane else None,
        m_star=m_star, floors=floors,
        mutually_exclusive=mutually_exclusive,
        paper_verbatim_f=paper_verbatim_f,
        strict_proof_consistent=strict_proof_consistent)

    if verbosity > 0:
        logger.info(f"analysis ({result.kinetics}): extinction "
                    f"{'holds' if extinction.holds else 'does not hold'}, persistence "
                    f"{'holds' if persistence.holds else 'does not hold'}")
    return result
