import pytest
from hypothesis import given, strategies as st

from mmroute.engine import MS, SECOND, Engine, EventKind, SchedulingError, rng_stream, seconds


def test_schedule_at_now_fires_first():
    eng = Engine()
    seen = []
    eng.at(0, EventKind.TIMER, 1, lambda ev: seen.append("a"))
    eng.at(1, EventKind.TIMER, 1, lambda ev: seen.append("b"))
    eng.run_until(1)
    assert seen == ["a", "b"]


def test_same_time_keeps_insertion_order():
    eng = Engine()
    seen = []
    for i in range(5):
        eng.at(7, EventKind.TIMER, i, lambda ev: seen.append(ev.target))
    eng.run_until(10)
    assert seen == [0, 1, 2, 3, 4]


def test_cancelled_event_never_fires():
    eng = Engine()
    seen = []
    h = eng.at(5 * SECOND, EventKind.TIMER, 1, lambda ev: seen.append(1))
    eng.run_until(SECOND)
    eng.cancel(h)
    assert eng.run_until(10 * SECOND) == 0
    assert seen == []


def test_past_scheduling_rejected():
    eng = Engine()
    eng.run_until(10)
    with pytest.raises(SchedulingError):
        eng.at(5, EventKind.TIMER, None, lambda ev: None)


def test_empty_run_advances_clock():
    eng = Engine()
    assert eng.run_until(10 * SECOND) == 0
    assert eng.now == 10 * SECOND


def test_single_event_run():
    eng = Engine()
    eng.at(5 * SECOND, EventKind.TIMER, None, lambda ev: None)
    assert eng.run_until(10 * SECOND) == 1


def test_registered_handler_and_missing_handler():
    eng = Engine()
    got = []
    eng.register(3, EventKind.FRAME, lambda ev: got.append(ev.payload))
    eng.at(1, EventKind.FRAME, 3, payload="x")
    eng.run_until(2)
    assert got == ["x"]
    eng.at(3, EventKind.FRAME, 4)
    with pytest.raises(LookupError):
        eng.run_until(5)


def test_events_scheduled_during_dispatch():
    eng = Engine(record_trace=True)

    def chain(ev):
        if ev.payload < 3:
            eng.after(MS, EventKind.TIMER, None, chain, ev.payload + 1)

    eng.at(0, EventKind.TIMER, None, chain, 0)
    eng.run_until(SECOND)
    assert [t for t, _, _ in eng.trace] == [0, MS, 2 * MS, 3 * MS]


@given(st.lists(st.integers(min_value=0, max_value=1000), min_size=1, max_size=60))
def test_dispatch_order_is_sorted_and_stable(times):
    eng = Engine()
    seen = []
    for i, t in enumerate(times):
        eng.at(t, EventKind.TIMER, i, lambda ev: seen.append((ev.fire_at, ev.target)))
    eng.run_until(1000)
    assert seen == sorted(seen)
    assert len(seen) == len(times)


def test_rng_streams_independent_and_reproducible():
    a = rng_stream(7, "node1").random(4)
    b = rng_stream(7, "node1").random(4)
    c = rng_stream(7, "node2").random(4)
    assert (a == b).all()
    assert not (a == c).all()


def test_seconds_conversion():
    assert seconds(5.2) == 5_200_000_000
    assert seconds(0.1) == 100 * MS
