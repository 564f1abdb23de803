"""Non-learned controllers implementing the decide(t, snapshot, signals) protocol."""

from .signals import ControlDecision, max_pressure_decide


class AlwaysKeepController:
    """Never switches; every junction stays in its initial phase."""

    def decide(self, t, snapshot, signals):
        return {j: ControlDecision.KEEP for j in signals}


class FixedCycleController:
    """Alternates phase at every decision instant (15 s green / 2 s amber cycle)."""

    def decide(self, t, snapshot, signals):
        return {j: ControlDecision.SWITCH for j in signals}


class MaxPressureController:
    """Greedy pressure rule evaluated independently at each junction."""

    def __init__(self, net):
        self.net = net

    def decide(self, t, snapshot, signals):
        return {j: max_pressure_decide(self.net, j, snapshot.queues,
                                       signals[j].current_phase)
                for j in signals}
