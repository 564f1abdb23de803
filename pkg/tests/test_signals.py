import pytest
from hypothesis import given, strategies as st

from corridor_rl.net import CorridorSpec, build_corridor
from corridor_rl.signals import (AMBER_S, ControlDecision, Mode, PhaseId,
                                 SignalState, advance_signal, apply_decision,
                                 max_pressure_decide, phase_pressures)

DT = 0.5


def march(state, seconds):
    """Advance in DT ticks, returning (t_offset, phase, mode) samples."""
    samples = []
    for k in range(int(seconds / DT)):
        samples.append((k * DT, state.current_phase, state.mode))
        advance_signal(state, DT)
    return samples


def test_keep_holds_green():
    s = SignalState(1, PhaseId.WE_GREEN)
    apply_decision(s, ControlDecision.KEEP, 17.0)
    for _, phase, mode in march(s, 17.0):
        assert phase is PhaseId.WE_GREEN and mode is Mode.GREEN


def test_switch_amber_then_green():
    s = SignalState(1, PhaseId.WE_GREEN)
    apply_decision(s, ControlDecision.SWITCH, 17.0)
    samples = march(s, 17.0)
    for off, phase, mode in samples:
        if off < AMBER_S:
            assert mode is Mode.AMBER and phase is PhaseId.WE_GREEN
        else:
            assert mode is Mode.GREEN and phase is PhaseId.NS_GREEN
    amber_ticks = sum(1 for _, _, m in samples if m is Mode.AMBER)
    assert amber_ticks * DT == AMBER_S


def test_double_switch_returns_to_original():
    s = SignalState(1, PhaseId.WE_GREEN)
    apply_decision(s, ControlDecision.SWITCH, 17.0)
    march(s, 17.0)
    apply_decision(s, ControlDecision.SWITCH, 34.0)
    march(s, 17.0)
    assert s.current_phase is PhaseId.WE_GREEN
    assert s.mode is Mode.GREEN


def test_off_grid_decision_rejected():
    s = SignalState(1)
    with pytest.raises(ValueError):
        apply_decision(s, ControlDecision.SWITCH, 20.0)


@given(st.lists(st.sampled_from(ControlDecision), min_size=1, max_size=12))
def test_window_always_17s(decisions):
    """Every decision window is 17 s: either all green or 2 s amber + 15 s green."""
    s = SignalState(1)
    t = 17.0
    for d in decisions:
        apply_decision(s, d, t)
        greens = ambers = 0
        for _ in range(int(17.0 / DT)):
            if s.mode is Mode.AMBER:
                ambers += 1
            else:
                greens += 1
            advance_signal(s, DT)
        if d is ControlDecision.KEEP:
            assert (greens, ambers) == (34, 0)
        else:
            assert (ambers * DT, greens * DT) == (AMBER_S, 17.0 - AMBER_S)
        t += 17.0


@pytest.fixture
def net3():
    return build_corridor(CorridorSpec(3, 700))


def queues_at(net, j, w=0, e=0, n=0, s=0):
    ap = net.approaches[j]
    return {ap["W"]: w, ap["E"]: e, ap["N"]: n, ap["S"]: s}


def test_max_pressure_switches_to_heavier_phase(net3):
    q = queues_at(net3, 2, w=5, e=3, n=2, s=1)
    assert max_pressure_decide(net3, 2, q, PhaseId.NS_GREEN) is ControlDecision.SWITCH
    assert max_pressure_decide(net3, 2, q, PhaseId.WE_GREEN) is ControlDecision.KEEP


def test_max_pressure_tie_keeps(net3):
    assert max_pressure_decide(net3, 1, {}, PhaseId.WE_GREEN) is ControlDecision.KEEP
    assert max_pressure_decide(net3, 1, {}, PhaseId.NS_GREEN) is ControlDecision.KEEP


def test_max_pressure_ns_heavy(net3):
    q = queues_at(net3, 2, w=1, e=1, n=4, s=4)
    assert max_pressure_decide(net3, 2, q, PhaseId.WE_GREEN) is ControlDecision.SWITCH


def test_downstream_subtracts(net3):
    # queue downstream of the WE movement reduces WE pressure at an interior junction
    q = queues_at(net3, 2, w=5)
    q[net3.downstream[(2, "W")]] = 5
    p = phase_pressures(net3, 2, q)
    assert p[PhaseId.WE_GREEN] == 0


@given(st.integers(min_value=0, max_value=30),
       st.lists(st.integers(min_value=0, max_value=20), min_size=8, max_size=8))
def test_pressure_invariant_under_constant_shift(c, qs):
    """Adding c to every upstream and downstream queue leaves a movement's
    pressure unchanged wherever the downstream is a real lane; exit-link
    downstreams are pinned to 0, so side-road pressure shifts by exactly c."""
    net = build_corridor(CorridorSpec(3, 700))
    j = 2  # interior junction: both horizontal downstream links are internal
    links = [net.approaches[j][a] for a in "WENS"] + \
            [net.downstream[(j, a)] for a in "WE"]
    base = dict(zip(links, qs[:6]))
    shifted = {k: v + c for k, v in base.items()}
    p0 = phase_pressures(net, j, base)
    p1 = phase_pressures(net, j, shifted)
    assert p1[PhaseId.WE_GREEN] == p0[PhaseId.WE_GREEN]
    assert p1[PhaseId.NS_GREEN] == p0[PhaseId.NS_GREEN] + 2 * c


def test_saturated_approach_wins_within_one_decision(net3):
    q = queues_at(net3, 2, n=100)
    assert max_pressure_decide(net3, 2, q, PhaseId.WE_GREEN) is ControlDecision.SWITCH
