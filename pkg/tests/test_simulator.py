import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locksynth.lang import parse_program
from locksynth.simulator import Workload, measure_tl, measure_tl_curve, profile, simulate

TWO_COUNTERS = """\
decl shared c
decl local t
decl lock m

thread T1 {
  L1: while (*) {
    lock(m)
    a1: t := c
    a2: c := t + 1
    unlock(m)
    a3: t := t + 1
  }
}

thread T2 {
  L2: while (*) {
    lock(m)
    b1: t := c
    b2: c := t + 1
    unlock(m)
    b3: t := t + 1
  }
}
"""


def test_locked_counter_schedule(corpus):
    """Hand-computed: T1 takes the lock at once, T2 queues until T1 releases it."""
    tr = simulate(corpus("locked_counter.lsy"), Workload())
    assert tr.finish == [2.5, 5.0]
    assert tr.busy == [2.5, 2.5]
    assert tr.acquisitions == 2
    waits = [(s.thread, s.start, s.end) for s in tr.segments if s.kind == "wait"]
    assert waits == [(1, 0.0, 2.5)]
    assert not tr.deadlock


def test_single_thread_time_is_sum_of_costs():
    p = parse_program("decl shared x\nthread A {\n  a: x := 1\n  b: x := 2\n  c: yield\n"
                      "  d: skip\n}\n")
    tr = simulate(p, Workload(costs={"a": 1.5, "b": 2.0}))
    assert tr.makespan == pytest.approx(3.5)


def test_loop_counts_are_exact():
    p = parse_program(TWO_COUNTERS)
    tr = simulate(p, Workload(loop_counts={"L1": 7, "L2": 3}))
    assert tr.counts[0]["a1"] == 7 and tr.counts[1]["b1"] == 3
    assert tr.acquisitions == 10


def test_copies_multiply_threads():
    p = parse_program(TWO_COUNTERS)
    tr = simulate(p, Workload(loop_counts={"L1": 2, "L2": 2}, copies=3))
    assert tr.threads == 6 and tr.acquisitions == 12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.floats(0.1, 3.0))
def test_lock_excludes_overlap(seed, copies, cost):
    p = parse_program(TWO_COUNTERS)
    wl = Workload(costs={"a1": cost, "b2": 2 * cost}, branch_prob={"L1": 0.8, "L2": 0.8},
                  copies=copies)
    tr = simulate(p, wl, seed)
    inside = sorted((s.start, s.end) for s in tr.segments
                    if s.loc in ("a1", "a2", "b1", "b2") and s.end > s.start)
    for (s1, e1), (s2, e2) in zip(inside, inside[1:]):
        assert s2 >= e1 - 1e-9
    assert simulate(p, wl, seed).finish == tr.finish


def test_deadlock_is_reported():
    p = parse_program("decl shared x\ndecl lock m, n\nthread A {\n  lock(m)\n  a: x := 1\n"
                      "  lock(n)\n  unlock(n)\n  unlock(m)\n}\nthread B {\n  lock(n)\n"
                      "  b: x := 2\n  lock(m)\n  unlock(m)\n  unlock(n)\n}\n")
    tr = simulate(p, Workload())
    assert tr.deadlock
    assert tr.blocked_at == ("A.2", "B.2")


def test_wait_blocks_until_set():
    p = parse_program("decl shared x\ndecl cond ready\nthread A {\n  wait(ready)\n  a: x := 1\n}\n"
                      "thread B {\n  b: x := 2\n  notify(ready)\n}\n")
    tr = simulate(p, Workload(costs={"b": 4.0}))
    start_a = next(s.start for s in tr.segments if s.loc == "a")
    assert start_a == pytest.approx(5.0)
    assert not tr.deadlock


def test_occupancy():
    p = parse_program("decl shared x\nthread A {\n  a: x := 1\n}\nthread B {\n  b: x := 2\n"
                      "  c: x := 3\n}\n")
    tr = simulate(p, Workload())
    # both threads for one time unit, then one thread
    assert tr.occupancy({"a", "b", "c"}) == pytest.approx(1.5)
    assert tr.occupancy({"z"}) == 1.0


def test_tl_measurements():
    assert measure_tl(1) == pytest.approx(0.5)
    assert measure_tl(2) == pytest.approx(0.5)
    assert measure_tl(3) == pytest.approx(0.9933333333333333)
    assert measure_tl(4) == pytest.approx(1.4875)
    curve = measure_tl_curve(3)
    assert [k for k, _ in curve.points] == [1.0, 2.0, 3.0]
    with pytest.raises(ValueError):
        measure_tl(0)


def test_profile_locked_counter(corpus):
    crit = ["T1.2", "T1.3", "T2.2", "T2.3"]
    p = profile(corpus("locked_counter.lsy"), Workload(), crit, blocks={"B": tuple(crit)})
    # each thread runs its two unit statements once under one acquisition
    assert p.tc == pytest.approx(2.0)
    assert p.nu == pytest.approx(1.0)
    assert p.kappa == pytest.approx(1.5)
    assert p.outside == 0.0
    assert p.nu_max == pytest.approx(2.0)


def test_workload_round_trip():
    wl = Workload(costs={"a": 2.0}, branch_prob={"b": 0.25}, loop_counts={"L": 4}, copies=2)
    assert Workload.from_dict(wl.to_dict()) == wl
    assert Workload.from_dict({}) == Workload()
