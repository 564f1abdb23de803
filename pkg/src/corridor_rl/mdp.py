"""Observation, reward, and action mapping between the simulator and the RL agents."""

import enum

import numpy as np

from .net import APPROACHES
from .signals import ControlDecision, PhaseId


class ArchitectureKind(enum.Enum):
    CENTRALIZED = "centralized"
    FULLY_DECENTRALIZED = "fd"
    PARAMETER_SHARING = "ps"
    MAXPRESSURE = "maxpressure"


RL_ARCHITECTURES = (ArchitectureKind.CENTRALIZED,
                    ArchitectureKind.FULLY_DECENTRALIZED,
                    ArchitectureKind.PARAMETER_SHARING)


def local_obs_len(include_phase: bool) -> int:
    return 6 if include_phase else 4


def observe_local(net, snapshot, signals, junction_id, include_phase=False):
    """Densities of the 4 incoming lanes (W, E, N, S), each clamped to [0, 1];
    optionally followed by a one-hot of the current phase."""
    vals = [snapshot.density(net.approaches[junction_id][a]) for a in APPROACHES]
    if include_phase:
        phase = signals[junction_id].current_phase
        vals += [1.0 if phase is PhaseId.WE_GREEN else 0.0,
                 1.0 if phase is PhaseId.NS_GREEN else 0.0]
    return np.array(vals)


def observe_global(net, snapshot, signals, include_phase=False):
    """Concatenation of local observations over junctions J1..Jn."""
    return np.concatenate([observe_local(net, snapshot, signals, j, include_phase)
                           for j in net.junction_ids])


def reward_local(net, snapshot, junction_id) -> float:
    """Negative sum of queue counts on the junction's 4 incoming lanes."""
    return -float(sum(snapshot.junction_queues(net, junction_id)))


def reward_global(net, snapshot) -> float:
    return sum(reward_local(net, snapshot, j) for j in net.junction_ids)


def apply_actions(action_bits, junction_ids):
    """Map action bits (0=KEEP, 1=SWITCH) to per-junction decisions."""
    bits = np.atleast_1d(np.asarray(action_bits))
    if len(bits) != len(junction_ids):
        raise ValueError(f"expected {len(junction_ids)} action bits, got {len(bits)}")
    return {j: (ControlDecision.SWITCH if b else ControlDecision.KEEP)
            for j, b in zip(junction_ids, bits)}
