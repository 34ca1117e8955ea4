import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hetdrain.power import (PowerAllocation, StreamCondition, modified_waterfill, stream_rate,
                            waterfill)


def rate(gains, powers, noise=1.0):
    return float(np.sum(np.log2(1 + np.asarray(gains) * np.asarray(powers) / noise)))


def test_single_stream_takes_budget():
    a = waterfill([0.3], 1e-3, 2.5)
    np.testing.assert_allclose(a.powers, [2.5])


def test_equal_gains_split_evenly():
    a = waterfill([2.0] * 4, 0.5, 1.0)
    np.testing.assert_allclose(a.powers, 0.25)


def test_two_stream_grid_oracle():
    a = waterfill([1.0, 0.1], 1.0, 1.0)
    p = np.linspace(0, 1, 10_001)
    grid = np.log2(1 + p) + np.log2(1 + 0.1 * (1 - p))
    assert rate([1.0, 0.1], a.powers) >= grid.max() - 1e-3 * grid.max()
    assert a.powers[0] == pytest.approx(p[grid.argmax()], abs=1e-4)


def test_all_zero_gains_are_flagged():
    a = waterfill([0.0, 0.0], 1.0, 1.0)
    assert a.silent and a.total == 0.0


def test_zero_gain_stream_gets_nothing():
    a = waterfill([1.0, 0.0, 2.0], 0.1, 1.0)
    assert a.powers[1] == 0.0 and a.total == pytest.approx(1.0)


@pytest.mark.parametrize("gains, noise, budget", [([], 1, 1), ([1, -1], 1, 1), ([1], 1, 0),
                                                  ([1], 0, 1)])
def test_waterfill_rejects_bad_input(gains, noise, budget):
    with pytest.raises(ValueError):
        waterfill(gains, noise, budget)


@settings(max_examples=60, deadline=None)
@given(gains=st.lists(st.floats(1e-4, 1e3), min_size=1, max_size=6),
       noise=st.floats(1e-3, 10.0), budget=st.floats(1e-3, 1e2))
def test_waterfill_kkt(gains, noise, budget):
    a = waterfill(gains, noise, budget)
    g = np.asarray(gains)
    assert a.total == pytest.approx(budget, rel=1e-12)
    assert np.all(a.powers >= 0)
    level = a.powers + noise / g
    on = a.powers > 0
    # one shared water level on active streams, and nothing below it is left dry
    np.testing.assert_allclose(level[on], level[on][0], rtol=1e-9)
    assert np.all(noise / g[~on] >= level[on][0] * (1 - 1e-9))


def conds(sirs, gains=None, inn=None):
    n = len(sirs)
    gains = gains or [1.0] * n
    inn = inn or [1.0] * n
    return [StreamCondition(i, g, x, s) for i, (g, x, s) in enumerate(zip(gains, inn, sirs))]


def test_modified_no_trigger_is_plain_waterfill():
    c = conds([100.0, 200.0], gains=[2.0, 1.0])
    alloc, released = modified_waterfill(c, 1.0, 10.0, 2)
    assert released == []
    ref = waterfill([2.0 / 2, 1.0 / 2], 1.0, 1.0)
    np.testing.assert_allclose(alloc.powers, ref.powers)


def test_modified_releases_swamped_stream():
    c = conds([1e-3, 1e3], inn=[1e6, 1.0])
    alloc, released = modified_waterfill(c, 1.0, 10.0, 2)
    assert released == [0]
    assert alloc.streams == (1,)
    np.testing.assert_allclose(alloc.powers, [1.0])
    both = stream_rate(c, waterfill([1 / 2e6, 1 / 2], 1.0, 1.0).powers)
    assert stream_rate([c[1]], alloc.powers) > both


def test_modified_four_streams_two_releases():
    c = conds([1e-3, 2e-3, 1e3, 1e3], gains=[1, 1, 2, 2], inn=[1e6, 1e6, 1, 1])
    alloc, released = modified_waterfill(c, 4.0, 10.0, 4)
    assert sorted(released) == [0, 1]
    assert alloc.powers.size == 2 and alloc.total == pytest.approx(4.0)
    # interference-blind allocation over all four streams
    classic = waterfill([1, 1, 2, 2], 1.0, 4.0).powers
    assert np.all(alloc.powers >= classic[2:] - 1e-12)


def test_modified_survivors_gain_power_in_total():
    # unequal survivors: the total they carry grows even if one of them gets less
    c = conds([1e-3, 2e-3, 1e3, 1e3], gains=[1, 1, 3, 2], inn=[1e6, 1e6, 1, 1])
    alloc, released = modified_waterfill(c, 4.0, 10.0, 4)
    classic = waterfill([1, 1, 3, 2], 1.0, 4.0).powers
    assert alloc.total >= classic[2:].sum()
    assert stream_rate(c[2:], alloc.powers) > stream_rate(c, classic)


def test_modified_keeps_one_stream():
    c = conds([1e-3, 1e-3], inn=[1e6, 1e6])
    alloc, released = modified_waterfill(c, 1.0, 10.0, 2)
    assert len(alloc.streams) == 1 and len(released) == 1


@settings(max_examples=80, deadline=None)
@given(data=st.data(), d=st.integers(1, 4))
def test_modified_never_loses(data, d):
    sirs = data.draw(st.lists(st.floats(1e-4, 1e4), min_size=d, max_size=d))
    gains = data.draw(st.lists(st.floats(1e-3, 1e3), min_size=d, max_size=d))
    inn = data.draw(st.lists(st.floats(1e-2, 1e6), min_size=d, max_size=d))
    c = conds(sirs, gains, inn)
    alloc, released = modified_waterfill(c, 1.0, 15.85, d)
    kept = [x for x in c if x.stream in alloc.streams]
    assert stream_rate(kept, alloc.powers) >= stream_rate(c, PowerAllocation.uniform(1.0, d).powers) - 1e-12
    assert set(released).isdisjoint(alloc.streams)
    assert set(released) <= {x.stream for x in c if x.sir < 15.85 / d}


def test_modified_rejects_bad_input():
    with pytest.raises(ValueError):
        modified_waterfill([], 1.0, 1.0, 1)
    with pytest.raises(ValueError):
        modified_waterfill(conds([1.0]), 1.0, 0.0, 1)


@settings(max_examples=60, deadline=None)
@given(gains=st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=5),
       alpha=st.floats(1e-6, 1e6))
def test_waterfill_scale_consistent(gains, alpha):
    a = waterfill(gains, 0.5, 2.0)
    b = waterfill([alpha * g for g in gains], 0.5 * alpha, 2.0)
    np.testing.assert_allclose(a.powers, b.powers, rtol=1e-9, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(data=st.data(), d=st.integers(2, 4), factor=st.floats(1.0, 1e3))
def test_more_interference_on_worst_stream_never_keeps_more(data, d, factor):
    gains = data.draw(st.lists(st.floats(1e-2, 1e2), min_size=d, max_size=d))
    intf = data.draw(st.lists(st.floats(1e-3, 1e3), min_size=d, max_size=d, unique=True))

    def kept(levels):
        c = [StreamCondition(k, g, 1.0 + i * g, (1.0 / d) / i)
             for k, (g, i) in enumerate(zip(gains, levels))]
        return len(modified_waterfill(c, 1.0, 15.85, d)[0].streams)

    worst = int(np.argmax(intf))
    louder = list(intf)
    louder[worst] *= factor
    assert kept(louder) <= kept(intf)
