import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from random_chemostat.analysis import compute_vartheta
from random_chemostat.experiment import PRESETS
from random_chemostat.kinetics import Monod, mu
from random_chemostat.model import (AggregateState, ChemostatParams, State, absorbing_functional,
                                    from_aggregate, neutral_fraction, pushforward, rhs_original,
                                    rhs_transformed, to_aggregate, transformed_residual, z_rate)
from random_chemostat.noise import effective_dilution
from random_chemostat.utils.exceptions import ConfigurationError, DomainError

from strategies import admissible_params, noise_values, states

fig1 = PRESETS['fig1'][0]
fig3 = PRESETS['fig3'][0]
state = State(20.0, 14.0, 10.0)


def test_rhs_original_by_hand():
    xi = 0.7
    deff = 1.9 + (2 * 0.25 / np.pi) * np.arctan(xi)
    u = 20.0 / (4.7 + 20.0)
    expected = [
        deff * (17.0 - 0.5 * 20.0) - 4.8 * u * 24.0 + 0.4 * 0.4 * 14.0,
        14.0 * (-0.4 - 0.5 * deff + 0.6 * u - 0.1 * 14.0 - 0.5 * 10.0 - 0.5) + 0.7 * 10.0,
        10.0 * (-0.4 + 0.6 * u - 0.1 * 14.0 - 0.5 * 10.0 - 0.7) + 0.5 * 14.0,
    ]
    np.testing.assert_allclose(rhs_original(fig1, state, xi), expected, rtol=1e-12)


def test_deterministic_model_ignores_noise():
    params = fig1.replace(a=0.0)
    np.testing.assert_array_equal(rhs_original(params, state, -3.0), rhs_original(params, state, 8.0))


def test_nonfinite_noise_is_rejected():
    with pytest.raises(DomainError):
        rhs_original(fig1, state, float('nan'))


@settings(max_examples=200, deadline=None)
@given(params=admissible_params(), state=states, xi=noise_values)
def test_change_of_variables(params, state, xi):
    m = state.m1 + state.m2
    p = state.m1 / m
    scale = 1.0 + np.abs(rhs_original(params, state, xi)).max() + params.r1 * m * m
    consistent = transformed_residual(params, state, xi, competition='consistent')
    np.testing.assert_allclose(consistent, 0.0, atol=1e-9 * scale)

    printed = transformed_residual(params, state, xi, competition='printed')
    np.testing.assert_allclose(printed, [0.0, -params.r1 * (1 - p) * m * m, 0.0], atol=1e-9 * scale)


def test_printed_crowding_term():
    aggregate = AggregateState(20.0, 24.0, 14.0 / 24.0)
    printed = rhs_transformed(fig3, aggregate, 0.0)
    consistent = rhs_transformed(fig3, aggregate, 0.0, competition='consistent')
    gap = -fig3.r1 * (1 - aggregate.p) * aggregate.m ** 2
    assert printed[1] - consistent[1] == pytest.approx(gap)
    assert printed[0] == consistent[0] and printed[2] == consistent[2]
    with pytest.raises(ConfigurationError):
        rhs_transformed(fig3, aggregate, 0.0, competition='other')


@settings(max_examples=100, deadline=None)
@given(state=states)
def test_aggregate_round_trip(state):
    back = from_aggregate(to_aggregate(state))
    assert back.s == state.s
    assert back.m1 == pytest.approx(state.m1, rel=1e-12)
    assert back.m2 == pytest.approx(state.m2, rel=1e-12, abs=1e-12)


def test_aggregate_at_zero_biomass():
    washed_out = State(5.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        to_aggregate(washed_out)
    assert to_aggregate(washed_out, fig1).p == pytest.approx(0.7 / 1.2)
    assert neutral_fraction(fig1.replace(alpha1=0.0, alpha2=0.0)) == 0.0
    with pytest.raises(DomainError):
        pushforward(washed_out, np.zeros(3))


def test_p_is_invariant_on_unit_interval():
    # p' >= 0 at p = 0 and p' <= 0 at p = 1
    for xi in (-4.0, 0.0, 4.0):
        assert rhs_transformed(fig3, AggregateState(1.0, 1.0, 0.0), xi)[2] >= 0
        assert rhs_transformed(fig3, AggregateState(1.0, 1.0, 1.0), xi)[2] <= 0


@settings(max_examples=200, deadline=None)
@given(params=admissible_params(), state=states, xi=noise_values)
def test_z_rate(params, state, xi):
    rates = rhs_original(params, state, xi)
    direct = params.g * rates[0] + params.c * (rates[1] + rates[2])
    closed = z_rate(params, state, xi)
    assert closed == pytest.approx(direct, rel=1e-9, abs=1e-9 * (1 + abs(direct)))

    deff = effective_dilution(params.D, params.a, xi)
    z = absorbing_functional(params, state)
    bound = params.g * deff * params.s_in - compute_vartheta(params) * z
    assert closed <= bound + 1e-9 * (1 + abs(bound) + abs(closed))


def test_absorbing_functional_on_arrays():
    rows = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    np.testing.assert_allclose(absorbing_functional(fig1, rows), [0.6 + 4.8 * 5.0, 0.0])
    assert absorbing_functional(fig1, state) == pytest.approx(0.6 * 20 + 4.8 * 24)


def test_mu_is_used_in_rhs():
    s_rate = rhs_original(fig3.replace(a=0.0), State(3.0, 1.0, 0.0), 0.0)[0]
    expected = 0.47 * (17 - 1.5) - 4.0 * mu(Monod(k=1.4), 3.0) + 0.4 * 0.01
    assert s_rate == pytest.approx(expected)


@pytest.mark.parametrize('field, value', [
    ('s_in', 0.0), ('D', -1.0), ('alpha', 0.0), ('c', 0.0), ('g', 5.0),
    ('r', 1.0), ('r', 0.0), ('d', 0.0), ('alpha1', -0.1), ('r2', -1.0), ('a', 1.9),
])
def test_invalid_params(field, value):
    with pytest.raises(ConfigurationError, match=field):
        fig1.replace(**{field: value})


def test_states_are_nonnegative():
    with pytest.raises(DomainError):
        State(-1e-3, 1.0, 1.0)
    with pytest.raises(DomainError):
        AggregateState(1.0, 1.0, 1.2)
    with pytest.raises(DomainError):
        State(1.0, float('inf'), 0.0)


def test_dict_round_trip_and_digest():
    data = fig3.to_dict()
    assert ChemostatParams.from_dict(data) == fig3
    assert data['kinetics'] == {'type': 'monod', 'k': 1.4}
    assert fig3.digest() == ChemostatParams.from_dict(data).digest()
    assert fig3.digest() != fig3.replace(a=0.39).digest()
    del data['a']
    assert ChemostatParams.from_dict(data).a == 0.0
    data['D'] = 'fast'
    with pytest.raises(ConfigurationError, match='D'):
        ChemostatParams.from_dict(data)


def test_pack_layout():
    packed = fig3.pack()
    assert packed.shape == (14,)
    assert packed[0] == fig3.s_in and packed[-2] == 1.4 and packed[-1] == 0.0


@given(st.floats(0.0, 0.46))
def test_bounds_of_dilution(a):
    params = fig3.replace(a=a)
    assert params.d_min == pytest.approx(0.47 - a)
    assert params.d_max == pytest.approx(0.47 + a)
