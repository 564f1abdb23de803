"""Two-phase junction signals on a fixed decision cadence, plus the MaxPressure rule."""

import enum
from dataclasses import dataclass

DECISION_PERIOD_S = 17.0
AMBER_S = 2.0


class PhaseId(enum.Enum):
    WE_GREEN = "WE_GREEN"  # serves WE and EW
    NS_GREEN = "NS_GREEN"  # serves NS and SN

    @property
    def other(self):
        return PhaseId.NS_GREEN if self is PhaseId.WE_GREEN else PhaseId.WE_GREEN


class Mode(enum.Enum):
    GREEN = "GREEN"
    AMBER = "AMBER"


class ControlDecision(enum.Enum):
    KEEP = 0
    SWITCH = 1


@dataclass
class SignalState:
    junction_id: int
    current_phase: PhaseId = PhaseId.WE_GREEN
    mode: Mode = Mode.GREEN
    mode_elapsed_s: float = 0.0
    pending_phase: PhaseId = None

    def is_green_for(self, direction_tag) -> bool:
        from .net import PHASE_OF_DIRECTION
        return (self.mode is Mode.GREEN
                and self.current_phase.name == PHASE_OF_DIRECTION[direction_tag])


def apply_decision(state: SignalState, decision: ControlDecision, t_s: float):
    """Accept a decision at a cadence instant; SWITCH starts the amber interval."""
    if t_s % DECISION_PERIOD_S != 0:
        raise ValueError(f"decision at t={t_s} is off the {DECISION_PERIOD_S}s grid")
    if decision is ControlDecision.SWITCH:
        state.mode = Mode.AMBER
        state.mode_elapsed_s = 0.0
        state.pending_phase = state.current_phase.other


def advance_signal(state: SignalState, dt_s: float):
    """Advance the state machine by one tick; amber lasts exactly AMBER_S."""
    state.mode_elapsed_s += dt_s
    if state.mode is Mode.AMBER and state.mode_elapsed_s >= AMBER_S - 1e-9:
        state.current_phase = state.pending_phase
        state.pending_phase = None
        state.mode = Mode.GREEN
        state.mode_elapsed_s = 0.0


def phase_pressures(net, junction_id, queue_of_link):
    """Pressure per phase: sum over served movements of (upstream - downstream queue).

    queue_of_link maps link id -> queue count; exit links contribute 0 downstream.
    """
    pressures = {}
    for phase, approach_letters in ((PhaseId.WE_GREEN, ("W", "E")),
                                    (PhaseId.NS_GREEN, ("N", "S"))):
        p = 0.0
        for letter in approach_letters:
            up = net.approaches[junction_id][letter]
            down = net.downstream[(junction_id, letter)]
            p += queue_of_link.get(up, 0)
            if net.links[down].kind != "exit":
                p -= queue_of_link.get(down, 0)
        pressures[phase] = p
    return pressures


def max_pressure_decide(net, junction_id, queue_of_link, current_phase: PhaseId) -> ControlDecision:
    """SWITCH iff the competing phase has strictly larger pressure (ties keep)."""
    pressures = phase_pressures(net, junction_id, queue_of_link)
    if pressures[current_phase.other] > pressures[current_phase]:
        return ControlDecision.SWITCH
    return ControlDecision.KEEP
