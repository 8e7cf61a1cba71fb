import multiprocessing
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from random_chemostat.analysis import (AnalysisReport, absorbing_bound, absorbing_envelope,
                                       extinction_rate, p_band, report)
from random_chemostat.integrator import SimConfig, Trajectory, integrate
from random_chemostat.kinetics import Haldane, Monod
from random_chemostat.model import ChemostatParams, State, absorbing_functional
from random_chemostat.noise import NoiseConfig, NoisePath, sample_ou_path
from random_chemostat.utils.exceptions import ConfigurationError, IntegrationBlowupError
from random_chemostat.utils.formula_helpers import first_entry_time, tail_slope
from random_chemostat.utils.helpers import RunConfig, threads_from_env, write_json
from random_chemostat.utils.logger import logger

logger = logger()

EXTINCT, PERSISTENT, INCONCLUSIVE = 'extinct', 'persistent', 'inconclusive'
# Relative slack on the absorbing bound, the floors and the decay envelope
BOUND_SLACK = 0.01
FLOOR_SLACK = 0.05
DECAY_SLACK = 0.05
# Tolerance on the band of p and the biomass below which p is not defined
P_BAND_SLACK = 1e-3
P_BAND_MIN_BIOMASS = 1e-8

_FIG_1_2 = dict(c=4.8, g=0.6, s_in=17.0, alpha=0.5, r=0.4, d=0.4, alpha1=0.5,
                alpha2=0.7, D=1.9, a=0.25, r1=0.1, r2=0.5)

PRESETS: Dict[str, Tuple[ChemostatParams, Tuple[float, float, float]]] = {
    'fig1': (ChemostatParams(kinetics=Monod(k=4.7), **_FIG_1_2), (20.0, 14.0, 10.0)),
    'fig2': (ChemostatParams(kinetics=Haldane(k=4.7, i=5.0), **_FIG_1_2), (20.0, 14.0, 10.0)),
    'fig3': (ChemostatParams(c=4.0, g=3.8, s_in=17.0, alpha=0.5, r=0.4, d=0.01,
                             alpha1=0.5, alpha2=0.7, D=0.47, a=0.4, r1=0.4, r2=0.6,
                             kinetics=Monod(k=1.4)),
             (20.0, 14.0, 10.0)),
    'fig4': (ChemostatParams(c=7.0, g=6.8, s_in=19.0, alpha=0.5, r=0.7, d=0.01,
                             alpha1=0.55, alpha2=0.65, D=0.61, a=0.16, r1=0.4, r2=0.2,
                             kinetics=Haldane(k=7.0, i=7.6)),
             (20.0, 14.0, 17.0)),
}


@dataclass(frozen=True)
class RunResult:
    """
    One integrated trajectory with its tail statistics and checks

    Parameters
    ----------
    label : str
        'det' for the deterministic reference, else 'seed<k>'
    seed : int, optional
        Noise seed, None for the reference
    trajectory : Trajectory
        Recorded solution
    tail : pd.DataFrame
        min/mean/max of s, m1, m2 and m over t >= t_end/2
    classification : str
        extinct, persistent or inconclusive
    diagnostics : Dict
        Absorbing entry time, envelope and band checks, decay slope, floors
    """
    label: str
    seed: Optional[int]
    trajectory: Trajectory
    tail: pd.DataFrame
    classification: str
    diagnostics: Dict = field(default_factory=dict)

    @property
    def final_state(self) -> State:
        return self.trajectory.final_state()

    def to_dict(self) -> Dict:
        final = self.final_state
        return {'label': self.label, 'seed': self.seed,
                'final_state': {'s': final.s, 'm1': final.m1, 'm2': final.m2},
                'tail': {column: self.tail[column].to_dict() for column in self.tail.columns},
                'classification': self.classification,
                'diagnostics': self.diagnostics}


@dataclass(frozen=True)
class EnsembleSummary:
    """
    Deterministic reference plus noisy runs, classified together

    classification is the common verdict of the noisy runs (of the reference
    when there are none), inconclusive when they disagree.
    theory_consistent and floors_respected gather the per-run checks of the
    reference and the noisy runs; None when no sufficient condition holds or
    no floors exist. reference_analysis is the report at a = 0 the reference
    is checked against.
    """
    name: str
    params: ChemostatParams
    seeds: List[int]
    deterministic: RunResult
    runs: List[RunResult]
    classification: str
    analysis: AnalysisReport
    theory_consistent: Optional[bool] = None
    floors_respected: Optional[bool] = None
    reference_analysis: Optional[AnalysisReport] = None

    def to_dict(self) -> Dict:
        return {'name': self.name, 'params': self.params.to_dict(), 'seeds': self.seeds,
                'classification': self.classification,
                'theory_consistent': self.theory_consistent,
                'floors_respected': self.floors_respected,
                'deterministic': self.deterministic.to_dict(),
                'runs': [run.to_dict() for run in self.runs]}

    def to_frame(self) -> pd.DataFrame:
        """One row per trajectory: terminal state, tail extremes and verdict."""
        rows = []
        for run in [self.deterministic] + self.runs:
            final = run.final_state
            rows.append({'run': run.label, 's': final.s, 'm1': final.m1, 'm2': final.m2,
                         'tail_min_m1': run.tail.loc['min', 'm1'],
                         'tail_min_m2': run.tail.loc['min', 'm2'],
                         'tail_max_m': run.tail.loc['max', 'm'],
                         'classification': run.classification})
        return pd.DataFrame(rows)


def tail_statistics(trajectory: Trajectory, t_end: float) -> pd.DataFrame:
    """min/mean/max of s, m1, m2, m = m1 + m2 over the recorded t >= t_end/2."""
    mask = trajectory.times >= 0.5 * t_end - 1e-12
    states = trajectory.states[mask]
    frame = pd.DataFrame({'s': states[:, 0], 'm1': states[:, 1], 'm2': states[:, 2],
                          'm': states[:, 1] + states[:, 2]})
    return frame.agg(['min', 'mean', 'max'])


def classify(tail: pd.DataFrame,
             extinction_threshold: float = 1e-2,
             persistence_threshold: float = 1e-2) -> str:
    if tail.loc['max', 'm'] < extinction_threshold:
        return EXTINCT
    if tail.loc['min', 'm1'] > persistence_threshold and tail.loc['min', 'm2'] > persistence_threshold:
        return PERSISTENT
    return INCONCLUSIVE


def _gather(runs: List[RunResult], key: str) -> Optional[bool]:
    """all() over the runs whose check `key` was evaluated, None if none was."""
    checks = [run.diagnostics[key] for run in runs if run.diagnostics[key] is not None]
    return all(checks) if checks else None


@dataclass
class ExperimentPreset:
    """
    Ensemble of noisy runs plus a deterministic reference

    Parameters
    ----------
    name : str
        fig1..fig4 or 'custom'
    params : ChemostatParams
        Model constants (a > 0 for the noisy runs)
    initial : State
        (s, m1, m2) at t = 0
    n_seeds : int, optional
        Number of noisy runs when seeds is None, by default 5
    seeds : List[int], optional
        Explicit seeds, by default 1..n_seeds
    t_end : float, optional
        Horizon, by default 100
    dt : float, optional
        Step of the integrator and of the noise grid, by default 1e-3
    record_every : int, optional
        Recording stride, by default 100
    burn_in : float, optional
        OU pre-roll, by default 10
    extinction_threshold : float, optional
        by default 1e-2
    persistence_threshold : float, optional
        by default 1e-2

    Eg:
    >>>from random_chemostat.experiment import ExperimentPreset
    >>>summary = ExperimentPreset.from_name('fig3').run(export_path='./out/fig3')
    """
    name: str
    params: ChemostatParams
    initial: State
    n_seeds: int = 5
    seeds: Optional[List[int]] = None
    t_end: float = 100.0
    dt: float = 1e-3
    record_every: int = 100
    burn_in: float = 10.0
    extinction_threshold: float = 1e-2
    persistence_threshold: float = 1e-2

    def __post_init__(self):
        if not isinstance(self.params, ChemostatParams):
            raise ConfigurationError(f"params must be ChemostatParams, got {self.params!r}")
        if not isinstance(self.initial, State):
            self.initial = State(*self.initial)
        if self.seeds is None:
            if isinstance(self.n_seeds, bool) or not isinstance(self.n_seeds, int) or self.n_seeds < 0:
                raise ConfigurationError(f"n_seeds must be an integer >= 0, got {self.n_seeds!r}")
            self.seeds = list(range(1, self.n_seeds + 1))
        else:
            self.seeds = [int(seed) for seed in self.seeds]
            if len(set(self.seeds)) != len(self.seeds):
                raise ConfigurationError(f"seeds must be distinct, got {self.seeds}")
            self.n_seeds = len(self.seeds)
        # validated up front instead of inside the workers
        self._sim_config()

    @classmethod
    def from_name(cls, name: str, **kwargs) -> 'ExperimentPreset':
        """One of the four published parameter sets, fig1..fig4."""
        if name not in PRESETS:
            raise ConfigurationError(f"unknown preset {name!r}, choose from {', '.join(PRESETS)}")
        params, initial = PRESETS[name]
        return cls(name=name, params=params, initial=State(*initial), **kwargs)

    @classmethod
    def from_config(cls, cfg: RunConfig) -> 'ExperimentPreset':
        sim = cfg.simulation
        return cls(name=sim.name, params=cfg.params, initial=sim.initial_state,
                   seeds=sim.seed_list, t_end=sim.t_end, dt=sim.dt,
                   record_every=sim.record_every, burn_in=sim.burn_in,
                   extinction_threshold=sim.extinction_threshold,
                   persistence_threshold=sim.persistence_threshold)

    def _sim_config(self) -> SimConfig:
        return SimConfig(t_end=self.t_end, initial=self.initial, dt=self.dt,
                         record_every=self.record_every)

    def run(self,
            export_path: Optional[str] = None,
            processes: Optional[int] = None,
            paper_verbatim_f: bool = False,
            strict_proof_consistent: bool = False,
            verbosity: int = 1) -> EnsembleSummary:
        """
        Integrate the reference and every seed, classify and optionally save

        Parameters
        ----------
        export_path : str, optional
            Directory for summary.json, analysis.json, traj_det.csv and
            traj_seed<k>.csv; nothing is written if None, by default None
        processes : int, optional
            Worker processes, by default CHEMOSTAT_THREADS or the cpu count
        paper_verbatim_f : bool, optional
            Passed to the analysis report, by default False
        strict_proof_consistent : bool, optional
            Passed to the analysis report, by default False
        verbosity : int, optional
            Level of detail logging, by default 1

        Returns
        -------
        EnsembleSummary

        Raises
        ------
        IntegrationBlowupError
            Carrying the seed of the failing run
        """
        options = dict(paper_verbatim_f=paper_verbatim_f,
                       strict_proof_consistent=strict_proof_consistent)
        analysis = report(self.params, verbosity=verbosity, **options)
        if self.params.is_deterministic:
            reference_analysis = analysis
        else:
            reference_analysis = report(self.params.replace(a=0.0), verbosity=0, **options)
        deterministic = self._parallel_seed(None, reference_analysis, verbosity)

        workers = min(threads_from_env(processes), max(len(self.seeds), 1))
        if workers > 1:
            with multiprocessing.Pool(workers) as pool:
                runs = pool.starmap(self._parallel_seed,
                                    [(seed, analysis, verbosity) for seed in self.seeds])
        else:
            runs = [self._parallel_seed(seed, analysis, verbosity) for seed in self.seeds]

        verdicts = {run.classification for run in runs} or {deterministic.classification}
        classification = verdicts.pop() if len(verdicts) == 1 else INCONCLUSIVE

        every_run = [deterministic] + runs
        theory_consistent = _gather(every_run, 'theory_consistent')
        if theory_consistent is False:
            failing = [run.label for run in every_run
                       if run.diagnostics['theory_consistent'] is False]
            logger.warning(f"{self.name}: simulation disagrees with a sufficient condition "
                           f"that holds ({', '.join(failing)})")
        floors_respected = _gather(every_run, 'floors_respected')

        summary = EnsembleSummary(name=self.name, params=self.params, seeds=list(self.seeds),
                                  deterministic=deterministic, runs=runs,
                                  classification=classification, analysis=analysis,
                                  theory_consistent=theory_consistent,
                                  floors_respected=floors_respected,
                                  reference_analysis=reference_analysis)
        if verbosity > 0:
            logger.info(f"{self.name}: {len(runs)} noisy run(s), classification {classification}")
            logger.debug(f"Sample output:\n{summary.to_frame()}")
        if export_path is not None:
            self.save(summary, export_path, verbosity=verbosity)
        return summary

    def save(self, summary: EnsembleSummary, export_path: str, verbosity: int = 1) -> None:
        os.makedirs(export_path, exist_ok=True)
        summary.deterministic.trajectory.to_csv(os.path.join(export_path, 'traj_det.csv'))
        for run in summary.runs:
            run.trajectory.to_csv(os.path.join(export_path, f"traj_seed{run.seed}.csv"))
        write_json(summary.to_dict(), os.path.join(export_path, 'summary.json'))
        write_json(summary.analysis.to_dict(), os.path.join(export_path, 'analysis.json'))
        if verbosity > 0:
            logger.debug(f"Saved at {export_path}")

    def _parallel_seed(self,
                       seed: Optional[int],
                       analysis: AnalysisReport,
                       verbosity: int = 1) -> RunResult:
        if seed is None:
            params = self.params.replace(a=0.0)
            noise = NoisePath.zeros(self.t_end, self.dt)
            label = 'det'
        else:
            params = self.params
            noise = sample_ou_path(NoiseConfig(seed=seed, t_end=self.t_end, dt=self.dt,
                                               burn_in=self.burn_in))
            label = f"seed{seed}"
        try:
            trajectory = integrate(params, noise, self._sim_config())
        except IntegrationBlowupError as error:
            raise error.with_seed(seed)

        tail = tail_statistics(trajectory, self.t_end)
        classification = classify(tail, self.extinction_threshold, self.persistence_threshold)
        diagnostics = self._diagnostics(params, trajectory, tail, classification, analysis)
        if verbosity > 0:
            logger.debug(f"{self.name} {label}: {classification}, "
                         f"tail max m = {tail.loc['max', 'm']:.3e}")
        return RunResult(label=label, seed=seed, trajectory=trajectory, tail=tail,
                         classification=classification, diagnostics=diagnostics)

    def _diagnostics(self,
                     params: ChemostatParams,
                     trajectory: Trajectory,
                     tail: pd.DataFrame,
                     classification: str,
                     analysis: AnalysisReport) -> Dict:
        times = trajectory.times
        z = absorbing_functional(params, trajectory.states)
        bound = absorbing_bound(params)
        envelope = absorbing_envelope(params, float(z[0]), times)
        dilution = params.D + trajectory.noise_used
        diagnostics = {
            'absorbing_bound': bound,
            'absorbing_entry_time': first_entry_time(times, z, bound * (1.0 + BOUND_SLACK)),
            'envelope_respected': bool(np.all(z <= envelope * (1.0 + 1e-6) + 1e-9)),
            'noise_band_respected': bool(np.all((dilution >= params.d_min - 1e-12)
                                                & (dilution <= params.d_max + 1e-12))),
            'p_in_band': self._p_in_band(params, trajectory),
            'n_clamped': trajectory.n_clamped,
            'max_clamp': trajectory.max_clamp,
            'decay_slope': None,
            'floors_respected': None,
            'theory_consistent': None,
        }

        mask = times >= 0.5 * self.t_end - 1e-12
        total = trajectory.total_biomass[mask]
        if classification == EXTINCT and np.all(total > 0):
            diagnostics['decay_slope'] = tail_slope(times[mask], total)

        expected = None
        if analysis.extinction.holds:
            expected = EXTINCT
            if diagnostics['decay_slope'] is not None:
                decay_bound = -extinction_rate(params) + DECAY_SLACK
                diagnostics['decay_bound'] = decay_bound
                diagnostics['decay_respected'] = diagnostics['decay_slope'] <= decay_bound
        elif analysis.persistence.holds:
            expected = PERSISTENT
        if expected is not None:
            diagnostics['theory_consistent'] = classification == expected
        if analysis.floors is not None:
            floors = analysis.floors
            diagnostics['floors_respected'] = bool(
                tail.loc['min', 'm1'] >= (1.0 - FLOOR_SLACK) * floors.m1_floor
                and tail.loc['min', 'm2'] >= (1.0 - FLOOR_SLACK) * floors.m2_floor)
            if not diagnostics['floors_respected']:
                logger.warning(f"{self.name}: tail minima ({tail.loc['min', 'm1']:.4g}, "
                               f"{tail.loc['min', 'm2']:.4g}) below the persistence floors "
                               f"({floors.m1_floor:.4g}, {floors.m2_floor:.4g})")
        return diagnostics

    @staticmethod
    def _p_in_band(params: ChemostatParams, trajectory: Trajectory) -> Optional[bool]:
        """p = m1/(m1 + m2) inside the band, widened by P_BAND_SLACK, after the transient."""
        band = p_band(params)
        total = trajectory.total_biomass
        mask = (trajectory.times >= band.transient) & (total > P_BAND_MIN_BIOMASS)
        if not np.any(mask):
            return None
        p = trajectory.states[mask, 1] / total[mask]
        return bool(np.all((p >= band.lower - P_BAND_SLACK) & (p <= band.upper + P_BAND_SLACK)))


def run_preset(preset: ExperimentPreset,
               export_path: Optional[str] = None,
               **kwargs) -> EnsembleSummary:
    """
    Run a preset and save its CSVs and JSON summaries

    Parameters
    ----------
    preset : ExperimentPreset
        What to run
    export_path : str, optional
        Output directory, by default ./out/<preset name>
    **kwargs
        Passed to ExperimentPreset.run

    Returns
    -------
    EnsembleSummary
    """
    if export_path is None:
        export_path = default_export_path(preset.name)
    return preset.run(export_path=export_path, **kwargs)


def default_export_path(name: str) -> str:
    return os.path.join('.', 'out', name)


def run_custom(params: ChemostatParams,
               initial: State,
               n_seeds: int = 5,
               t_end: float = 100.0,
               dt: float = 1e-3,
               seeds: Optional[List[int]] = None,
               **kwargs) -> EnsembleSummary:
    """
    Ensemble for user-supplied values; n_seeds = 0 runs only the reference.

    Keyword arguments go to ExperimentPreset.run.
    """
    preset = ExperimentPreset(name='custom', params=params, initial=initial,
                              n_seeds=n_seeds, seeds=seeds, t_end=t_end, dt=dt)
    return preset.run(**kwargs)
