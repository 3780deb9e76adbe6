import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmplab.metrics import (
    ACCEL, CRUISE, DECEL, DEFAULT_FUEL, IDLE, AccumulationSeries, ParetoPoint, TripRecord,
    dominates, fuel_rate, pareto_front, stability_classify, travel_time_stats, trip_fuel, trip_record,
)
from cmplab.network import FREE_FLOW_SPEED
from cmplab.sim import Trip

VF = FREE_FLOW_SPEED


def raw_trip(duration, stops=0, stopped=0.0, wait=0.0, corridor=False, direction="EB", vid=0):
    return Trip(vid, "E0", "E4", 0.0, wait, wait + duration, stops, stopped, VF, corridor, direction)


# -- fuel -----------------------------------------------------------------------------------------


def test_idle_rate_exact():
    assert fuel_rate(IDLE) == 0.333
    assert fuel_rate(DECEL, 10.0, -3.0) == 0.333
    assert 10 * fuel_rate(IDLE) == pytest.approx(3.33)


def test_cruise_zero_speed_limit():
    assert fuel_rate(CRUISE, 0.0) == 0.0991


def test_accel_hand_value():
    # 0.260 + 0.420 * 10 * 2 in SI units
    assert fuel_rate(ACCEL, 10.0, 2.0) == pytest.approx(8.66)


def test_cruise_reference_speed():
    assert fuel_rate(CRUISE, VF) == pytest.approx(0.0991 + 0.008743 * (50 / 3.6) ** 2)
    assert DEFAULT_FUEL.reference_speed == pytest.approx(50 / 3.6)


def test_negative_speed_rejected():
    with pytest.raises(ValueError):
        fuel_rate(CRUISE, -1.0)
    with pytest.raises(ValueError):
        fuel_rate("coast", 1.0)


def test_nonstop_trip_fuel():
    L = 900.0
    rec = trip_record(raw_trip(L / VF))
    assert trip_fuel(rec) == pytest.approx(fuel_rate(CRUISE, VF) * L / VF)


def test_accel_episode_integral():
    # integral of c1 + c2 * (a t) * a over t in [0, v_f / a]
    a = DEFAULT_FUEL.accel
    T = VF / a
    ts = np.linspace(0.0, T, 200_001)
    numeric = np.trapezoid(0.260 + 0.420 * (a * ts) * a, ts)
    assert DEFAULT_FUEL.accel_episode(VF)[1] == pytest.approx(numeric, rel=1e-9)


def test_one_stop_adds_fuel():
    moving = 900.0 / VF
    base = trip_fuel(trip_record(raw_trip(moving)))
    stopped = trip_fuel(trip_record(raw_trip(moving + 30.0, stops=1, stopped=30.0)))
    assert stopped > base


def test_durations_sum_to_trip_time():
    rec = trip_record(raw_trip(150.0, stops=3, stopped=40.0, wait=5.0))
    assert math.fsum(rec.durations.values()) == pytest.approx(rec.exit - rec.entry)
    assert rec.travel_time == pytest.approx(155.0)
    no_wait = trip_record(raw_trip(150.0, stops=3, stopped=40.0, wait=5.0), include_entry_queue=False)
    assert no_wait.travel_time == pytest.approx(150.0)


def test_stop_counts_two_vs_five():
    a = trip_fuel(trip_record(raw_trip(200.0, stops=2, stopped=60.0)))
    b = trip_fuel(trip_record(raw_trip(200.0, stops=5, stopped=60.0)))
    assert b > a


@settings(max_examples=300, deadline=None)
@given(moving=st.floats(60.0, 600.0), stopped=st.floats(0.0, 600.0), stops=st.integers(0, 4),
       wait=st.floats(0.0, 100.0))
def test_fuel_strictly_increasing_in_stops(moving, stopped, stops, wait):
    # the extra stop's decel/accel episodes fit inside the trip (moving >= 5 episodes)
    f1 = trip_fuel(trip_record(raw_trip(moving + stopped, stops, stopped, wait)))
    f2 = trip_fuel(trip_record(raw_trip(moving + stopped, stops + 1, stopped, wait)))
    assert f2 > f1


# -- travel time ------------------------------------------------------------------------------------


def test_identical_trips_total():
    recs = [trip_record(raw_trip(100.0, vid=i)) for i in range(7)]
    s = travel_time_stats(recs)
    assert s.total_tt == pytest.approx(700.0) and s.mean_tt == pytest.approx(100.0) and not s.empty


def test_empty_corridor_flagged():
    recs = [trip_record(raw_trip(100.0))]
    s = travel_time_stats(recs, "corridor_EB")
    assert s.empty and s.n == 0 and s.total_tt == 0.0


def test_mixed_set_against_rescan():
    rng = random.Random(4)
    recs = [trip_record(raw_trip(rng.uniform(50, 400), rng.randint(0, 4), rng.uniform(0, 40),
                                 corridor=rng.random() < 0.5, direction=rng.choice("EW") + "B", vid=i))
            for i in range(300)]
    for which, keep in [("all", lambda r: True), ("corridor_both", lambda r: r.corridor_through),
                        ("corridor_EB", lambda r: r.corridor_through and r.direction == "EB"),
                        ("corridor_WB", lambda r: r.corridor_through and r.direction == "WB")]:
        total, n, stops = 0.0, 0, 0
        for r in recs:
            if keep(r):
                total += r.exit - r.entry
                n += 1
                stops += r.stops
        s = travel_time_stats(recs, which)
        assert s.n == n and s.stops == stops
        assert s.total_tt == pytest.approx(total, rel=1e-12)


def test_unknown_filter():
    with pytest.raises(ValueError):
        travel_time_stats([], "corridor_NB")


# -- stability -------------------------------------------------------------------------------------


def series(t, y):
    return AccumulationSeries(np.asarray(t, float), np.asarray(y, float))


def test_constant_is_stable():
    t = np.arange(0, 3600, 6.0)
    r = stability_classify(series(t, np.full_like(t, 40)))
    assert r.stable and r.slope == 0.0


def test_growth_is_unstable():
    t = np.arange(0, 3600, 6.0)
    r = stability_classify(series(t, t * 1.0))
    assert not r.stable and r.slope == pytest.approx(1.0)


def test_noisy_bounded_is_stable():
    rng = np.random.default_rng(11)
    t = np.arange(0, 3600, 6.0)
    y = 200 + 30 * np.sin(t / 300) + rng.normal(0, 10, size=t.size)
    r = stability_classify(series(t, np.clip(y, 0, None)))
    assert r.stable and abs(r.slope) < 0.05


def test_slope_matches_polyfit():
    rng = np.random.default_rng(2)
    t = np.arange(0, 1200, 6.0)
    y = rng.integers(0, 100, size=t.size)
    half = t >= 600
    assert stability_classify(series(t, y)).slope == pytest.approx(np.polyfit(t[half], y[half], 1)[0])


@settings(max_examples=50, deadline=None)
@given(shift=st.floats(-1e4, 1e4), seed=st.integers(0, 1000))
def test_time_shift_invariance(shift, seed):
    rng = np.random.default_rng(seed)
    t = np.arange(0, 1800, 6.0)
    y = np.cumsum(rng.integers(-2, 3, size=t.size)) + 100
    a = stability_classify(series(t, y)).slope
    b = stability_classify(series(t + shift, y)).slope
    assert a == pytest.approx(b, abs=1e-9)


def test_too_short():
    with pytest.raises(ValueError, match="too short"):
        stability_classify(series([0, 6], [1, 2]))
    with pytest.raises(ValueError, match="too short"):
        stability_classify(series(np.arange(0, 600, 6.0), np.zeros(100)), warmup=430.0)


# -- Pareto ----------------------------------------------------------------------------------------


def brute_front(points):
    return [p for p in points if not any(dominates(q, p) for q in points)]


def test_textbook_front():
    pts = [ParetoPoint("a", 1, 2), ParetoPoint("b", 2, 1), ParetoPoint("c", 2, 2)]
    assert [p.label for p in pareto_front(pts)] == ["a", "b"]


def test_single_point():
    p = ParetoPoint("only", 3.0, 4.0)
    assert pareto_front([p]) == [p]


def test_duplicates_kept():
    pts = [ParetoPoint("a", 1, 1), ParetoPoint("b", 1, 1), ParetoPoint("c", 2, 2)]
    assert [p.label for p in pareto_front(pts)] == ["a", "b"]


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        ParetoPoint("bad", math.nan, 1.0)


@pytest.mark.parametrize("seed", range(20))
def test_front_matches_brute_force(seed):
    rng = random.Random(seed)
    pts = [ParetoPoint(str(i), rng.randint(0, 30), rng.randint(0, 30)) for i in range(100)]
    assert pareto_front(pts) == brute_front(pts)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=60))
def test_front_properties(coords):
    pts = [ParetoPoint(str(i), a, b) for i, (a, b) in enumerate(coords)]
    front = pareto_front(pts)
    for p in front:
        assert not any(dominates(q, p) for q in front)
    for p in pts:
        if p not in front:
            assert any(dominates(q, p) for q in front)
