"""Discrete-time microscopic corridor simulation.

Vehicles follow the Intelligent Driver Model on single-lane routes, obey the
two-phase signals, and overflow into unbounded backup queues at the entries.
Everything is deterministic given (network, demand, config, controller, seed).
"""

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .net import CorridorNetwork, DemandConfig
from .signals import (AMBER_S, DECISION_PERIOD_S, ControlDecision, Mode,
                      SignalState, advance_signal, apply_decision)


class SimInvariantError(RuntimeError):
    """Internal consistency violation (overlap, red-light crossing, conservation)."""


@dataclass(frozen=True)
class SimConfig:
    dt_s: float = 0.5
    duration_s: float = 10000.0
    warmup_s: float = 1000.0
    seed: int = 0
    # car following (IDM, ballistic update)
    v0_mps: float = 13.89
    headway_s: float = 1.1
    a_max: float = 2.0
    b_comf: float = 3.0
    s0_m: float = 2.0
    vehicle_length_m: float = 5.0
    # bookkeeping thresholds
    queue_speed_threshold_mps: float = 0.5
    stop_speed_threshold_mps: float = 0.5
    stop_rearm_speed_mps: float = 2.0
    backup_sample_period_s: float = 100.0
    min_insert_clear_m: float = 7.0  # vehicle length + s0
    check_invariants: bool = True
    mirror_streams: bool = False  # seed entries with mirror-partner streams

    def validate(self):
        if self.dt_s <= 0:
            raise ValueError("dt_s must be positive")
        if not self.warmup_s < self.duration_s:
            raise ValueError("warmup_s must be below duration_s")
        steps = DECISION_PERIOD_S / self.dt_s
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("dt_s must divide the decision period")


def sample_arrivals(demand: DemandConfig, entry_links, net: CorridorNetwork,
                    duration_s, seed, mirror_streams=False):
    """Poisson event times per entry link, independent streams split from seed.

    Returns {entry link id: sorted float array of event times in (0, duration]}.
    mirror_streams seeds each entry with its W<->E mirror partner's stream, for
    exact mirror-symmetry comparisons.
    """
    demand.validate()
    ordered = sorted(entry_links)
    slots = {lid: ss for lid, ss in
             zip(ordered, np.random.SeedSequence(seed).spawn(len(ordered)))}
    out = {}
    for link_id in ordered:
        ss = slots[net.mirror_entry(link_id)] if mirror_streams else slots[link_id]
        lam = demand.rate_for(net.links[link_id].direction_tag)
        if lam <= 0:
            out[link_id] = np.empty(0)
            continue
        mean_gap = 3600.0 / lam
        rng = np.random.default_rng(ss)
        times = []
        t = 0.0
        chunk = max(64, int(1.2 * duration_s / mean_gap))
        while t <= duration_s:
            gaps = rng.exponential(mean_gap, size=chunk)
            ts = t + np.cumsum(gaps)
            times.append(ts)
            t = ts[-1]
        all_t = np.concatenate(times)
        out[link_id] = all_t[all_t <= duration_s]
    return out


def idm_accel(v, v_lead, gap_m, cfg: SimConfig):
    """IDM acceleration; gap is bumper-to-bumper. Scalar or ndarray inputs."""
    if np.any(np.asarray(gap_m) <= 0):
        raise ValueError("gap must be positive")
    s_star = cfg.s0_m + v * cfg.headway_s + v * (v - v_lead) / (2.0 * math.sqrt(cfg.a_max * cfg.b_comf))
    s_star = np.maximum(s_star, 0.0)
    with np.errstate(invalid="ignore"):
        interaction = np.where(np.isinf(gap_m), 0.0, (s_star / gap_m) ** 2)
    return cfg.a_max * (1.0 - (v / cfg.v0_mps) ** 4 - interaction)


class RouteLane:
    """Vehicles on one route, ordered front (largest position) first."""

    __slots__ = ("route", "length_m", "link_len", "n_links", "n_lines",
                 "pos", "v", "committed", "armed", "stops", "vid", "junctions")

    def __init__(self, route, link_len):
        self.route = route
        self.link_len = link_len
        self.n_links = route.num_links
        self.length_m = route.num_links * link_len
        self.n_lines = route.num_links - 1  # one stop line per crossed junction
        self.junctions = route.junctions
        self.pos = np.empty(0)
        self.v = np.empty(0)
        self.committed = np.empty(0, dtype=np.int64)  # stop-line index (1-based), -1 none
        self.armed = np.empty(0, dtype=bool)
        self.stops = np.empty(0, dtype=np.int64)
        self.vid = np.empty(0, dtype=np.int64)

    @property
    def count(self):
        return len(self.pos)

    def append_rear(self, vid, pos, speed, armed):
        self.pos = np.append(self.pos, pos)
        self.v = np.append(self.v, speed)
        self.committed = np.append(self.committed, -1)
        self.armed = np.append(self.armed, armed)
        self.stops = np.append(self.stops, 0)
        self.vid = np.append(self.vid, vid)

    def pop_front(self, k):
        front = self.vid[:k], self.stops[:k]
        for name in ("pos", "v", "committed", "armed", "stops", "vid"):
            setattr(self, name, getattr(self, name)[k:])
        return front

    def link_indices(self):
        return np.minimum((self.pos / self.link_len).astype(np.int64), self.n_links - 1)


@dataclass
class SimResult:
    config: SimConfig
    demand: DemandConfig
    # rows [vid, route_id, generated_at, entered_at (nan), exited_at (nan), stops]
    vehicles: list
    backup_series_t: np.ndarray
    backup_series_total: np.ndarray
    lane_series: list          # rows (t, link_id, count, queue, density)
    decision_log: list         # rows (t, junction, decision name, phase after)
    generated: int
    exited: int

    def completed(self, warmup_s=None, duration_s=None, route_prefix=None):
        """Vehicle rows that finished their route, optionally windowed on exit time."""
        lo = -math.inf if warmup_s is None else warmup_s
        hi = math.inf if duration_s is None else duration_s
        rows = [r for r in self.vehicles
                if not math.isnan(r[4]) and lo <= r[4] <= hi]
        if route_prefix is not None:
            rows = [r for r in rows if r[1].startswith(route_prefix)]
        return rows

    def mean_travel_time(self, warmup_s=None, duration_s=None):
        """ATT from Poisson generation instant to route completion."""
        rows = self.completed(warmup_s, duration_s)
        if not rows:
            return math.nan
        return float(np.mean([r[4] - r[2] for r in rows]))


class LaneSnapshot:
    """Per-link vehicle counts and queue counts at one instant."""

    def __init__(self, counts, queues, storage):
        self.counts = counts    # link id -> int
        self.queues = queues    # link id -> int
        self.storage = storage  # vehicles that fit on one link

    def density(self, link_id):
        return min(1.0, self.counts.get(link_id, 0) / self.storage)

    def junction_queues(self, net, junction_id):
        """Queue counts on the 4 approaches, ordered (W, E, N, S)."""
        return [self.queues.get(net.approaches[junction_id][a], 0)
                for a in ("W", "E", "N", "S")]

    def total_queue(self):
        return sum(self.queues.values())


class SimState:
    """Mutable world state; owned by a single run() invocation."""

    def __init__(self, net: CorridorNetwork, demand: DemandConfig, cfg: SimConfig):
        cfg.validate()
        demand.validate()
        self.net = net
        self.demand = demand
        self.cfg = cfg
        self.clock_s = 0.0
        self.lanes = {rid: RouteLane(r, net.link_length_m)
                      for rid, r in net.routes.items()}
        self.signals = {j: SignalState(j) for j in net.junction_ids}
        self.arrivals = sample_arrivals(demand, net.entry_links, net,
                                        cfg.duration_s, cfg.seed,
                                        cfg.mirror_streams)
        self.arrival_ptr = {lid: 0 for lid in self.arrivals}
        self.backup = {lid: deque() for lid in net.entry_links}  # (vid, gen time)
        self.entry_order = sorted(net.entry_links)
        self.entry_route = {lid: net.route_of_entry(lid) for lid in net.entry_links}
        self.vehicle_rows = []  # indexed by vid
        self.generated = 0
        self.exited = 0
        self.in_network = 0
        self.storage = max(1, int(net.link_length_m // 7.0))

    # ---- statistics ----------------------------------------------------

    def backup_total(self):
        return sum(len(q) for q in self.backup.values())

    def snapshot(self) -> LaneSnapshot:
        thr = self.cfg.queue_speed_threshold_mps
        counts, queues = {}, {}
        for lane in self.lanes.values():
            if lane.count == 0:
                continue
            idx = lane.link_indices()
            c = np.bincount(idx, minlength=lane.n_links)
            q = np.bincount(idx[lane.v < thr], minlength=lane.n_links)
            for i, link_id in enumerate(lane.route.links):
                if c[i]:
                    counts[link_id] = counts.get(link_id, 0) + int(c[i])
                    queues[link_id] = queues.get(link_id, 0) + int(q[i])
        return LaneSnapshot(counts, queues, self.storage)

    # ---- signal control ------------------------------------------------

    def apply_decisions(self, decisions, t, decision_log):
        for j in self.net.junction_ids:
            d = decisions.get(j, ControlDecision.KEEP)
            sig = self.signals[j]
            phase_after = sig.current_phase.other if d is ControlDecision.SWITCH \
                else sig.current_phase
            apply_decision(sig, d, t)
            if d is ControlDecision.SWITCH:
                self._commit_dilemma_zone(j)
            decision_log.append((t, j, d.name, phase_after.name))

    def _commit_dilemma_zone(self, junction_id):
        """At amber onset, vehicles that cannot stop at decel b commit to crossing."""
        cfg = self.cfg
        sig = self.signals[junction_id]
        ending = sig.current_phase  # phase that was green, now amber
        from .net import PHASE_OF_DIRECTION
        for lane in self.lanes.values():
            if lane.count == 0:
                continue
            if PHASE_OF_DIRECTION[lane.route.direction_tag] != ending.name:
                continue
            try:
                line = lane.junctions.index(junction_id) + 1
            except ValueError:
                continue
            s_line = line * lane.link_len
            dist = s_line - lane.pos
            approaching = (dist > 0) & ((lane.pos / lane.link_len).astype(np.int64) + 1 == line)
            cannot_stop = lane.v ** 2 / (2.0 * cfg.b_comf) > dist
            mask = approaching & cannot_stop & (lane.committed < 0)
            lane.committed = np.where(mask, line, lane.committed)

    def _green_by_line(self, lane: RouteLane):
        tag = lane.route.direction_tag
        return np.array([self.signals[j].is_green_for(tag) for j in lane.junctions],
                        dtype=bool) if lane.n_lines else np.empty(0, dtype=bool)

    # ---- dynamics ------------------------------------------------------

    def _advance_lane(self, lane: RouteLane):
        cfg = self.cfg
        m = lane.count
        if m == 0:
            return
        dt, l = cfg.dt_s, lane.link_len
        pos, v = lane.pos, lane.v

        gap = np.empty(m)
        v_lead = np.empty(m)
        gap[0] = np.inf
        v_lead[0] = 0.0
        if m > 1:
            gap[1:] = pos[:-1] - cfg.vehicle_length_m - pos[1:]
            v_lead[1:] = v[:-1]

        # signal wall at the next stop line unless green or committed
        line = (pos / l).astype(np.int64) + 1
        has_line = line <= lane.n_lines
        if lane.n_lines:
            green = self._green_by_line(lane)
            line_green = np.where(has_line, green[np.minimum(line, lane.n_lines) - 1], True)
        else:
            line_green = np.ones(m, dtype=bool)
        wall = has_line & ~line_green & (lane.committed != line)
        s_line = line * l
        wall_gap = np.where(wall, s_line - pos, np.inf)
        closer = wall_gap < gap
        eff_gap = np.where(closer, wall_gap, gap)
        eff_vlead = np.where(closer, 0.0, v_lead)

        eff_gap = np.maximum(eff_gap, 1e-3)
        acc = idm_accel(v, eff_vlead, eff_gap, cfg)
        v_new = np.maximum(v + acc * dt, 0.0)
        pos_new = pos + 0.5 * (v + v_new) * dt

        # hard guards: never pass a red stop line, never overlap the old
        # position of the leader (leaders only move forward)
        limit = np.where(wall, s_line - 0.01, np.inf)
        if m > 1:
            limit[1:] = np.minimum(limit[1:], pos[:-1] - cfg.vehicle_length_m - 0.01)
        clamped = pos_new > limit
        if np.any(clamped):
            pos_new = np.minimum(pos_new, limit)
            v_new = np.where(clamped,
                             np.maximum(2.0 * (pos_new - pos) / dt - v, 0.0),
                             v_new)

        if cfg.check_invariants:
            crossed = (pos_new >= s_line) & has_line & (pos < s_line)
            bad = crossed & ~line_green & (lane.committed != line)
            if np.any(bad):
                raise SimInvariantError(
                    f"red-light crossing on route {lane.route.id} at t={self.clock_s}, "
                    f"vids={lane.vid[bad].tolist()}")
            if m > 1 and np.any(pos_new[:-1] - pos_new[1:] < cfg.vehicle_length_m - 1e-9):
                raise SimInvariantError(
                    f"vehicle overlap on route {lane.route.id} at t={self.clock_s}")

        # stop accounting with hysteresis
        stopped_now = lane.armed & (v_new < cfg.stop_speed_threshold_mps)
        lane.stops += stopped_now
        lane.armed = (lane.armed & ~stopped_now) | (v_new >= cfg.stop_rearm_speed_mps)

        # a committed vehicle that came to rest before the line can stop after all
        lane.committed = np.where(stopped_now & (pos_new < lane.committed * l),
                                  -1, lane.committed)
        lane.committed = np.where(pos_new >= lane.committed * l, -1, lane.committed)

        lane.pos = pos_new
        lane.v = v_new

    def _absorb_exits(self, lane: RouteLane, t_next):
        k = int(np.searchsorted(-lane.pos, -lane.length_m, side="right"))
        if k == 0:
            return
        vids, stops = lane.pop_front(k)
        for vid, s in zip(vids, stops):
            row = self.vehicle_rows[vid]
            row[4] = t_next
            row[5] = int(s)
        self.exited += k
        self.in_network -= k

    def _arrivals_and_insertions(self, t_next):
        cfg = self.cfg
        for link_id in self.entry_order:
            events = self.arrivals[link_id]
            ptr = self.arrival_ptr[link_id]
            while ptr < len(events) and events[ptr] <= t_next:
                vid = self.generated
                self.generated += 1
                route = self.entry_route[link_id]
                self.vehicle_rows.append([vid, route.id, float(events[ptr]),
                                          math.nan, math.nan, 0])
                self.backup[link_id].append((vid, float(events[ptr])))
                ptr += 1
            self.arrival_ptr[link_id] = ptr

            q = self.backup[link_id]
            if not q:
                continue
            route = self.entry_route[link_id]
            lane = self.lanes[route.id]
            if lane.count == 0:
                v_ins = cfg.v0_mps
            else:
                gap = lane.pos[-1] - cfg.vehicle_length_m
                if gap < cfg.min_insert_clear_m:
                    continue
                # fastest speed that can still stop within the standing gap
                v_ins = min(cfg.v0_mps, math.sqrt(
                    2.0 * cfg.b_comf * max(0.0, gap - cfg.s0_m)))
            vid, _gen = q.popleft()
            lane.append_rear(vid, 0.0, v_ins, v_ins >= cfg.stop_rearm_speed_mps)
            self.vehicle_rows[vid][3] = t_next
            self.in_network += 1

    def _check_conservation(self):
        if self.generated != self.backup_total() + self.in_network + self.exited:
            raise SimInvariantError(
                f"conservation broken at t={self.clock_s}: generated={self.generated} "
                f"backup={self.backup_total()} in_net={self.in_network} exited={self.exited}")

    # ---- one tick ------------------------------------------------------

    def step(self, decisions=None, decision_log=None):
        """Advance by dt: apply decisions (cadence instants only), move vehicles,
        advance signals, absorb exits, admit arrivals."""
        cfg = self.cfg
        t = self.clock_s
        t_next = t + cfg.dt_s
        if decisions is not None:
            self.apply_decisions(decisions, t, decision_log if decision_log is not None else [])
        for lane in self.lanes.values():
            self._advance_lane(lane)
        for sig in self.signals.values():
            advance_signal(sig, cfg.dt_s)
        for lane in self.lanes.values():
            self._absorb_exits(lane, t_next)
        self._arrivals_and_insertions(t_next)
        if cfg.check_invariants:
            self._check_conservation()
        self.clock_s = t_next


def run(net: CorridorNetwork, demand: DemandConfig, cfg: SimConfig,
        controller=None) -> SimResult:
    """Run a full simulation; controller.decide is called every 17 s."""
    state = SimState(net, demand, cfg)
    decision_every = round(DECISION_PERIOD_S / cfg.dt_s)
    sample_every = max(1, round(cfg.backup_sample_period_s / cfg.dt_s))
    total_steps = round(cfg.duration_s / cfg.dt_s)

    backup_t, backup_total = [0.0], [0]
    lane_series = []
    decision_log = []

    for k in range(total_steps):
        decisions = None
        if controller is not None and k > 0 and k % decision_every == 0:
            snap = state.snapshot()
            decisions = controller.decide(state.clock_s, snap, state.signals)
        state.step(decisions, decision_log)
        if k % sample_every == sample_every - 1:
            t = state.clock_s
            backup_t.append(t)
            backup_total.append(state.backup_total())
            snap = state.snapshot()
            for link_id in sorted(snap.counts):
                lane_series.append((t, link_id, snap.counts[link_id],
                                    snap.queues[link_id], snap.density(link_id)))

    if controller is not None and hasattr(controller, "on_finish"):
        controller.on_finish(state.clock_s, state.snapshot(), state.signals)

    return SimResult(config=cfg, demand=demand,
                     vehicles=state.vehicle_rows,
                     backup_series_t=np.array(backup_t),
                     backup_series_total=np.array(backup_total, dtype=float),
                     lane_series=lane_series,
                     decision_log=decision_log,
                     generated=state.generated, exited=state.exited)


# ---- CSV export --------------------------------------------------------

VEHICLE_CSV_HEADER = "id,route,generated_at,entered_at,exited_at,stop_count"
LANE_CSV_HEADER = "t_s,link,count,queue,density"
BACKUP_CSV_HEADER = "t_s,total_backup"
DECISION_CSV_HEADER = "t_s,junction,decision,phase_after"


def _fmt(x):
    if isinstance(x, float):
        return "" if math.isnan(x) else f"{x:.6g}"
    return str(x)


def write_vehicle_csv(result: SimResult, path):
    with open(path, "w") as f:
        f.write(VEHICLE_CSV_HEADER + "\n")
        for row in result.vehicles:
            f.write(",".join(_fmt(x) for x in row) + "\n")


def write_lane_csv(result: SimResult, path):
    with open(path, "w") as f:
        f.write(LANE_CSV_HEADER + "\n")
        for row in result.lane_series:
            f.write(",".join(_fmt(x) for x in row) + "\n")


def write_backup_csv(result: SimResult, path):
    with open(path, "w") as f:
        f.write(BACKUP_CSV_HEADER + "\n")
        for t, s in zip(result.backup_series_t, result.backup_series_total):
            f.write(f"{_fmt(float(t))},{_fmt(float(s))}\n")


def write_decision_csv(result: SimResult, path):
    with open(path, "w") as f:
        f.write(DECISION_CSV_HEADER + "\n")
        for row in result.decision_log:
            f.write(",".join(_fmt(x) for x in row) + "\n")
