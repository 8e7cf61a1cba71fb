import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from random_chemostat.kinetics import (UNBOUNDED, Haldane, Kinetics, Monod, consumption, mu,
                                       mu_argmax, mu_max)
from random_chemostat.utils.exceptions import ConfigurationError, DomainError

monod = Monod(k=4.7)
haldane = Haldane(k=4.7, i=5.0)


def test_values():
    assert mu(monod, 0.0) == 0.0
    assert mu(monod, 4.7) == pytest.approx(0.5)
    assert mu(haldane, 2.0) == pytest.approx(2.0 / (4.7 + 2.0 + 0.8))
    assert isinstance(mu(monod, 1.0), float)
    np.testing.assert_allclose(mu(monod, np.array([0.0, 4.7])), [0.0, 0.5])


@settings(max_examples=200, deadline=None)
@given(s=st.floats(0, 1e6), k=st.floats(1e-3, 1e3), i=st.floats(1e-3, 1e3))
def test_bounds(s, k, i):
    for kin in (Monod(k=k), Haldane(k=k, i=i)):
        value = mu(kin, s)
        assert 0.0 <= value < 1.0
        assert value <= mu_max(kin) + 1e-12
        if s > 0:
            assert value > 0


def test_monod_is_increasing():
    grid = np.linspace(0, 100, 1001)
    assert np.all(np.diff(mu(monod, grid)) > 0)
    assert mu_argmax(monod) == UNBOUNDED
    assert mu_max(monod) == 1.0


def test_haldane_peak():
    peak = mu_argmax(haldane)
    assert peak == pytest.approx(math.sqrt(4.7 * 5.0))
    assert mu(haldane, peak) == pytest.approx(mu_max(haldane))
    assert mu(haldane, peak) > mu(haldane, 0.9 * peak)
    assert mu(haldane, peak) > mu(haldane, 1.1 * peak)


def test_kernel_agrees_with_mu():
    for s in (0.0, 0.3, 7.0, 120.0):
        assert consumption(s, haldane.k, haldane.inverse_inhibition) == pytest.approx(mu(haldane, s))
        assert consumption(s, monod.k, monod.inverse_inhibition) == pytest.approx(mu(monod, s))


def test_negative_concentration():
    with pytest.raises(DomainError):
        mu(monod, -1e-3)
    with pytest.raises(DomainError):
        mu(haldane, np.array([1.0, -2.0]))


@pytest.mark.parametrize('build', [
    lambda: Monod(k=0.0),
    lambda: Haldane(k=1.0, i=0.0),
    lambda: Haldane(k=-1.0, i=2.0),
])
def test_invalid_constants(build):
    with pytest.raises(ConfigurationError):
        build()


def test_from_dict():
    assert Kinetics.from_dict({'type': 'monod', 'k': 1.4}) == Monod(k=1.4)
    assert Kinetics.from_dict({'type': 'Haldane', 'k': 7, 'i': 7.6}) == Haldane(k=7.0, i=7.6)
    assert Kinetics.from_dict(haldane.to_dict()) == haldane
    with pytest.raises(ConfigurationError, match='kinetics.i'):
        Kinetics.from_dict({'type': 'haldane', 'k': 1.0})
    with pytest.raises(ConfigurationError, match='kinetics.i'):
        Kinetics.from_dict({'type': 'monod', 'k': 1.0, 'i': 2.0})
    with pytest.raises(ConfigurationError, match='type'):
        Kinetics.from_dict({'type': 'contois', 'k': 1.0})


def test_haldane_tends_to_monod_for_weak_inhibition():
    grid = np.linspace(0.0, 100.0, 2001)
    weak = Haldane(k=4.7, i=1e8)
    # mu_monod / mu_haldane = 1 + s^2 / (i (k + s)) <= 1 + 1e-6 on this grid
    np.testing.assert_allclose(mu(weak, grid), mu(monod, grid), rtol=2e-6, atol=0.0)


def test_haldane_peak_by_grid_search():
    fig4 = Haldane(k=7.0, i=7.6)
    grid = np.linspace(0.0, 50.0, 500_001)
    values = mu(fig4, grid)
    assert values.max() == pytest.approx(0.34253, abs=1e-5)
    assert grid[values.argmax()] == pytest.approx(math.sqrt(7.0 * 7.6), abs=1e-3)
    assert mu_max(fig4) == pytest.approx(values.max(), abs=1e-9)


@pytest.mark.parametrize('kin', [haldane, Haldane(k=7.0, i=7.6), Haldane(k=0.5, i=30.0)])
def test_haldane_rises_then_falls(kin):
    peak = mu_argmax(kin)
    below = np.linspace(0.0, peak, 1001)[:-1]
    above = np.linspace(peak, 20 * peak, 1001)[1:]
    assert np.all(np.diff(mu(kin, below)) > 0), 'mu must increase below sqrt(k i)'
    assert np.all(np.diff(mu(kin, above)) < 0), 'mu must decrease above sqrt(k i)'
