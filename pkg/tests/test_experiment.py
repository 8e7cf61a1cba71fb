import json
import os

import numpy as np
import pytest

from random_chemostat.analysis import report
from random_chemostat.experiment import (EXTINCT, INCONCLUSIVE, PERSISTENT, PRESETS,
                                         ExperimentPreset, classify, default_export_path,
                                         run_custom, run_preset, tail_statistics)
from random_chemostat.kinetics import Haldane, Monod
from random_chemostat.model import ChemostatParams, State, absorbing_functional
from random_chemostat.utils.exceptions import ConfigurationError, IntegrationBlowupError

persistent_monod = ChemostatParams(s_in=100.0, D=1.0, a=0.1, alpha=1.0, c=1.0, g=0.8, r=0.5,
                                   d=0.5, alpha1=1.0, alpha2=0.05, r1=0.05, r2=0.05,
                                   kinetics=Monod(k=10.0))
# printed Haldane persistence holds, the simulated biomass stays below its floors
persistent_haldane = ChemostatParams(s_in=1000.0, D=5.0, a=0.5, alpha=0.1, c=1.0, g=0.55,
                                     r=0.5, d=0.5, alpha1=1.0, alpha2=0.05, r1=0.1, r2=0.1,
                                     kinetics=Haldane(k=70.0, i=1e6))

summaries = {}


def summary_of(name):
    if name not in summaries:
        summaries[name] = ExperimentPreset.from_name(name).run(processes=1, verbosity=0)
    return summaries[name]


def all_runs(summary):
    return [summary.deterministic] + summary.runs


@pytest.mark.parametrize('name', ['fig1', 'fig2'])
def test_extinction_figures(name):
    summary = summary_of(name)
    assert summary.seeds == [1, 2, 3, 4, 5]
    assert summary.classification == EXTINCT
    for run in all_runs(summary):
        final = run.final_state
        assert final.m1 + final.m2 < 1e-2, f'{run.label} did not wash out'
    assert summary.analysis.extinction.holds
    assert summary.analysis.extinction.lhs == pytest.approx(0.6923, abs=1e-4)
    assert summary.theory_consistent is True
    for run in summary.runs:
        assert run.diagnostics['decay_respected'], f'{run.label} decays slower than the bound'
        assert run.diagnostics['decay_slope'] < -0.1


@pytest.mark.parametrize('name', ['fig3', 'fig4'])
def test_persistence_figures(name):
    summary = summary_of(name)
    assert summary.classification == PERSISTENT
    for run in all_runs(summary):
        assert run.tail.loc['min', 'm1'] > 1e-2, f'{run.label}: floating biomass vanished'
        assert run.tail.loc['min', 'm2'] > 1e-2, f'{run.label}: wall biomass vanished'
    # neither sufficient condition holds for the published values, so no floors exist
    assert summary.analysis.floors is None
    assert summary.theory_consistent is None


@pytest.mark.parametrize('name', ['fig1', 'fig2', 'fig3', 'fig4'])
def test_positivity_band_and_absorbing_set(name):
    summary = summary_of(name)
    for run in all_runs(summary):
        assert run.trajectory.max_clamp <= 1e-10
        assert np.all(run.trajectory.states >= 0)
        diagnostics = run.diagnostics
        assert diagnostics['noise_band_respected']
        assert diagnostics['envelope_respected']
        assert diagnostics['absorbing_entry_time'] is not None
        assert diagnostics['absorbing_entry_time'] <= 100
        assert diagnostics['p_in_band'] is True, f'{run.label}: p left its band'


def test_absorbing_set_on_random_parameters():
    rng = np.random.default_rng(7)
    for index in range(20):
        D = rng.uniform(0.5, 2.0)
        c = rng.uniform(0.5, 5.0)
        g = rng.uniform(0.1, 1.0) * c
        s_in = rng.uniform(1.0, 20.0)
        kinetics = (Monod(k=rng.uniform(1.0, 20.0)) if index % 2 == 0
                    else Haldane(k=rng.uniform(1.0, 20.0), i=rng.uniform(1.0, 20.0)))
        params = ChemostatParams(s_in=s_in, D=D, a=rng.uniform(0.0, 0.5) * D,
                                 alpha=rng.uniform(0.2, 1.0), c=c, g=g, r=rng.uniform(0.05, 0.95),
                                 d=rng.uniform(0.1, 1.0), alpha1=rng.uniform(0.0, 2.0),
                                 alpha2=rng.uniform(0.0, 2.0), r1=rng.uniform(0.1, 1.0),
                                 r2=rng.uniform(0.1, 1.0), kinetics=kinetics)
        # z(0) = 2 g s_in, at most twice the bound
        initial = State(s_in, g * s_in / (2 * c), g * s_in / (2 * c))
        summary = run_custom(params, initial, seeds=[index + 1], t_end=100.0,
                             processes=1, verbosity=0)
        for run in all_runs(summary):
            entry = run.diagnostics['absorbing_entry_time']
            assert entry is not None and entry <= 100, f'set {index} never entered the absorbing set'
            assert run.diagnostics['envelope_respected'], f'set {index} left the Gronwall envelope'


def test_small_inflow_absorbing_set_is_invariant():
    data_path = os.path.join(os.path.dirname(__file__), '..', 'data', 'small_sin.json')
    from random_chemostat.utils.helpers import load_config
    preset = ExperimentPreset.from_config(load_config(data_path))
    summary = preset.run(processes=1, verbosity=0)
    bound = summary.analysis.absorbing_bound
    for run in all_runs(summary):
        z = absorbing_functional(summary.params, run.trajectory.states)
        assert z[0] <= bound
        assert np.all(z <= bound * (1 + 1e-9)), 'trajectory left an absorbing set it started in'


def test_theory_and_simulation_agree_for_persistent_set():
    summary = run_custom(persistent_monod, State(20.0, 14.0, 10.0), n_seeds=3, t_end=100.0,
                         processes=1, verbosity=0)
    assert summary.analysis.persistence_monod.holds
    assert summary.classification == PERSISTENT
    assert summary.theory_consistent is True


def test_raised_yield_is_reported_consistently():
    params = PRESETS['fig1'][0].replace(g=1.5)
    summary = run_custom(params, State(20.0, 14.0, 10.0), n_seeds=2, t_end=50.0,
                         processes=1, verbosity=0)
    assert not summary.analysis.extinction.holds
    assert summary.classification in (EXTINCT, PERSISTENT, INCONCLUSIVE)
    assert summary.theory_consistent is not False


def test_reference_only():
    summary = run_custom(PRESETS['fig3'][0], State(20.0, 14.0, 10.0), n_seeds=0, t_end=10.0,
                         processes=1, verbosity=0)
    assert summary.runs == []
    assert summary.classification == summary.deterministic.classification
    assert summary.deterministic.seed is None
    assert not np.any(summary.deterministic.trajectory.noise_used)


def test_same_seeds_same_summary():
    kwargs = dict(seeds=[3, 5], t_end=10.0, verbosity=0)
    first = run_custom(PRESETS['fig3'][0], State(20.0, 14.0, 10.0), processes=1, **kwargs)
    second = run_custom(PRESETS['fig3'][0], State(20.0, 14.0, 10.0), processes=2, **kwargs)
    assert first.to_dict() == second.to_dict()


def test_outputs(tmp_path):
    preset = ExperimentPreset.from_name('fig1', seeds=[2, 4], t_end=5.0)
    summary = preset.run(export_path=str(tmp_path), processes=1, verbosity=0)
    assert sorted(os.listdir(tmp_path)) == ['analysis.json', 'summary.json', 'traj_det.csv',
                                            'traj_seed2.csv', 'traj_seed4.csv']
    with open(tmp_path / 'summary.json') as f:
        data = json.load(f)
    assert data['classification'] == summary.classification
    assert [run['seed'] for run in data['runs']] == [2, 4]
    with open(tmp_path / 'analysis.json') as f:
        assert json.load(f)['extinction']['holds'] is True
    assert (tmp_path / 'traj_seed2.csv').read_text().splitlines()[0] == 't,s,m1,m2,psi'
    frame = summary.to_frame()
    assert list(frame['run']) == ['det', 'seed2', 'seed4']


def test_classify():
    trajectory = run_custom(PRESETS['fig1'][0], State(20.0, 14.0, 10.0), n_seeds=0, t_end=2.0,
                            processes=1, verbosity=0).deterministic.trajectory
    tail = tail_statistics(trajectory, 2.0)
    assert list(tail.index) == ['min', 'mean', 'max']
    assert set(tail.columns) == {'s', 'm1', 'm2', 'm'}
    assert classify(tail, 1e-2, 1e-2) == PERSISTENT
    assert classify(tail, 1e3, 1e-2) == EXTINCT
    assert classify(tail, 1e-2, 1e3) == INCONCLUSIVE


def test_blowup_carries_seed():
    crowded = ExperimentPreset(name='custom', params=PRESETS['fig3'][0],
                               initial=State(20.0, 100.0, 100.0), seeds=[3], t_end=10.0,
                               dt=2.0, record_every=1, burn_in=0.0)
    with pytest.raises(IntegrationBlowupError) as info:
        crowded._parallel_seed(3, report(crowded.params, verbosity=0))
    assert info.value.seed == 3


@pytest.mark.parametrize('kwargs', [
    dict(seeds=[1, 1]),
    dict(n_seeds=-1),
    dict(t_end=1.0005),
])
def test_preset_validation(kwargs):
    with pytest.raises(ConfigurationError):
        ExperimentPreset(name='custom', params=PRESETS['fig3'][0],
                         initial=State(20.0, 14.0, 10.0), **kwargs)


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        ExperimentPreset.from_name('fig5')


def test_floors_checked_on_every_run():
    summary = run_custom(persistent_haldane, State(20.0, 14.0, 10.0), seeds=[1, 2], t_end=100.0,
                         processes=1, verbosity=0)
    assert summary.analysis.persistence_haldane.holds
    assert summary.analysis.floors is not None
    assert summary.reference_analysis is not None and summary.reference_analysis.floors is not None
    for run in all_runs(summary):
        floors = (summary.reference_analysis if run.seed is None else summary.analysis).floors
        assert run.tail.loc['min', 'm1'] < floors.m1_floor
        assert run.diagnostics['floors_respected'] is False, f'{run.label} hid a floor violation'
        assert run.diagnostics['theory_consistent'] is False
    assert summary.floors_respected is False
    assert summary.theory_consistent is False
    assert summary.to_dict()['floors_respected'] is False

    strict = run_custom(persistent_haldane, State(20.0, 14.0, 10.0), seeds=[1], t_end=100.0,
                        processes=1, verbosity=0, strict_proof_consistent=True)
    assert not strict.analysis.persistence_haldane.holds
    assert strict.analysis.floors is None
    assert strict.runs[0].diagnostics['floors_respected'] is None
    assert strict.runs[0].diagnostics['theory_consistent'] is None


def test_run_preset_writes_to_default_directory(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    preset = ExperimentPreset.from_name('fig1', seeds=[2], t_end=5.0)
    run_preset(preset, processes=1, verbosity=0)
    out = tmp_path / 'out' / 'fig1'
    assert default_export_path('fig1') == os.path.join('.', 'out', 'fig1')
    assert sorted(os.listdir(out)) == ['analysis.json', 'summary.json', 'traj_det.csv',
                                       'traj_seed2.csv']

    other = tmp_path / 'elsewhere'
    run_preset(preset, export_path=str(other), processes=1, verbosity=0)
    assert (other / 'summary.json').is_file()
