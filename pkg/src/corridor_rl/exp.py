"""Experiment harness: capacity-region sweeps, ATT evaluation, green-wave study."""

import math
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from .net import CorridorSpec, DemandConfig, build_corridor
from .sim import SimConfig, run
from .svg import line_svg, scatter_svg

SLOPE_THRESHOLD_VEH_PER_S = 0.01
FINAL_BACKUP_MAX = 50.0
DEFAULT_SEEDS_PER_POINT = 5
DEFAULT_GRID = tuple(range(100, 1501, 100))


def stability_verdict(ts, totals, slope_threshold=SLOPE_THRESHOLD_VEH_PER_S,
                      final_max=FINAL_BACKUP_MAX):
    """(slope over the second half, final size, stable flag) for one backup series."""
    ts = np.asarray(ts, dtype=float)
    totals = np.asarray(totals, dtype=float)
    if len(ts) < 2:
        raise ValueError("backup series needs at least 2 samples")
    half = ts >= ts[-1] / 2.0
    if half.sum() < 2:
        raise ValueError("not enough samples in the second half")
    slope = float(np.polyfit(ts[half], totals[half], 1)[0])
    final = float(totals[-1])
    return slope, final, slope <= slope_threshold and final <= final_max


@dataclass
class CapacityVerdict:
    lambda_ns: float
    lambda_we: float
    records: list  # (seed, slope, final_backup, stable)
    stable: bool = field(init=False)

    def __post_init__(self):
        votes = sum(1 for r in self.records if r[3])
        self.stable = votes >= math.ceil(len(self.records) / 2)


def symmetric_demand(lambda_ns, lambda_we):
    """The paper's two-dimensional demand space: WE=EW and NS=SN."""
    return DemandConfig(lambda_we=lambda_we, lambda_ew=lambda_we,
                        lambda_ns=lambda_ns, lambda_sn=lambda_ns)


def capacity_point(controller_factory, net, lambda_ns, lambda_we, seeds,
                   sim_cfg: SimConfig, early_majority=False) -> CapacityVerdict:
    """Stability verdict for one demand point, majority over the seed list.

    early_majority stops simulating once the vote is decided (same verdict,
    fewer records).
    """
    demand = symmetric_demand(lambda_ns, lambda_we)
    records = []
    need = math.ceil(len(seeds) / 2)
    stable_votes = unstable_votes = 0
    for seed in seeds:
        res = run(net, demand, replace(sim_cfg, seed=seed),
                  controller_factory(net))
        slope, final, stable = stability_verdict(res.backup_series_t,
                                                 res.backup_series_total)
        records.append((seed, slope, final, stable))
        stable_votes += stable
        unstable_votes += not stable
        if early_majority and (stable_votes >= need or unstable_votes >= need):
            break
    return CapacityVerdict(lambda_ns, lambda_we, records)


def capacity_sweep(controller_factory, net, grid_ns, grid_we, seeds,
                   sim_cfg: SimConfig, progress=None):
    """Verdict for every (lambda_ns, lambda_we) grid point; warns (stderr) on
    violations of downward closure along either axis."""
    verdicts = {}
    for lns in grid_ns:
        for lwe in grid_we:
            verdicts[(lns, lwe)] = capacity_point(controller_factory, net,
                                                  lns, lwe, seeds, sim_cfg)
            if progress:
                progress(lns, lwe, verdicts[(lns, lwe)].stable)
    step_ns = grid_ns[1] - grid_ns[0] if len(grid_ns) > 1 else None
    step_we = grid_we[1] - grid_we[0] if len(grid_we) > 1 else None
    for (lns, lwe), v in verdicts.items():
        if not v.stable:
            continue
        for lower in ((lns - step_ns, lwe) if step_ns else None,
                      (lns, lwe - step_we) if step_we else None):
            if lower in verdicts and not verdicts[lower].stable:
                print(f"warning: stable point ({lns},{lwe}) above unstable "
                      f"{lower}; boundary is noisy", file=sys.stderr)
    return verdicts


CAPACITY_CSV_HEADER = "lambda_ns,lambda_we,seed,slope,final_backup,stable"


def write_capacity_csv(verdicts, path):
    with open(path, "w") as f:
        f.write(CAPACITY_CSV_HEADER + "\n")
        for (lns, lwe) in sorted(verdicts):
            for seed, slope, final, stable in verdicts[(lns, lwe)].records:
                f.write(f"{lns:g},{lwe:g},{seed},{slope:.6g},{final:.6g},"
                        f"{int(stable)}\n")


def write_capacity_svg(verdicts, path, title="Capacity region"):
    pts = [(lwe, lns, v.stable) for (lns, lwe), v in sorted(verdicts.items())]
    with open(path, "w") as f:
        f.write(scatter_svg(pts, title, "lambda_WE (veh/h)", "lambda_NS (veh/h)"))


# ---- travel times -------------------------------------------------------

@dataclass
class AttRecord:
    lambda_we: float
    lambda_ns: float
    architecture: str
    att_s: float
    vehicle_count: int


ATT_LINE = tuple((we, 1400 - we) for we in range(100, 1301, 100))


def att_eval(controllers, net, points, seeds, sim_cfg: SimConfig):
    """Mean travel time per (demand point, architecture), averaged over seeds.

    controllers: {architecture name: factory(net) -> controller}.
    ATT runs from the Poisson generation instant to route completion and is
    taken over vehicles finishing within [warmup, duration].
    """
    records = []
    for lwe, lns in points:
        demand = symmetric_demand(lns, lwe)
        for name, factory in controllers.items():
            tts, count = [], 0
            for seed in seeds:
                res = run(net, demand, replace(sim_cfg, seed=seed), factory(net))
                rows = res.completed(sim_cfg.warmup_s, sim_cfg.duration_s)
                tts.extend(r[4] - r[2] for r in rows)
                count += len(rows)
            att = float(np.mean(tts)) if tts else math.nan
            records.append(AttRecord(lwe, lns, name, att, count))
    return records


ATT_CSV_HEADER = "lambda_we,lambda_ns,architecture,att_s,vehicle_count"


def write_att_csv(records, path):
    with open(path, "w") as f:
        f.write(ATT_CSV_HEADER + "\n")
        for r in sorted(records, key=lambda r: (r.lambda_we, r.architecture)):
            f.write(f"{r.lambda_we:g},{r.lambda_ns:g},{r.architecture},"
                    f"{r.att_s:.6g},{r.vehicle_count}\n")


# ---- green waves --------------------------------------------------------

@dataclass
class GreenWaveRecord:
    link_length_m: float
    zero_stop_ratio: float
    sample_size: int


GREEN_WAVE_DEMAND = DemandConfig(lambda_we=800.0, lambda_ew=0.0,
                                 lambda_ns=100.0, lambda_sn=100.0)


def zero_stop_ratio(result, warmup_s=None, duration_s=None, route_id="WE"):
    """Fraction of completed WE vehicles that never stopped inside the network."""
    rows = [r for r in result.completed(warmup_s, duration_s) if r[1] == route_id]
    if not rows:
        raise ValueError("no completed vehicles on the route")
    return sum(1 for r in rows if r[5] == 0) / len(rows), len(rows)


def green_wave_study(controller_factory, l_values, seeds, sim_cfg: SimConfig,
                     n=13, demand=GREEN_WAVE_DEMAND, progress=None):
    """Zero-stop ratio of the full WE corridor for each inter-junction distance."""
    records = []
    for l in l_values:
        net = build_corridor(CorridorSpec(n=n, link_length_m=l))
        zero, total = 0, 0
        for seed in seeds:
            res = run(net, demand, replace(sim_cfg, seed=seed),
                      controller_factory(net))
            rows = [r for r in res.completed(sim_cfg.warmup_s, sim_cfg.duration_s)
                    if r[1] == "WE"]
            zero += sum(1 for r in rows if r[5] == 0)
            total += len(rows)
        ratio = zero / total if total else math.nan
        records.append(GreenWaveRecord(l, ratio, total))
        if progress:
            progress(l, ratio, total)
    return records


GREENWAVE_CSV_HEADER = "link_length_m,zero_stop_ratio,sample_size"


def write_greenwave_csv(records, path):
    with open(path, "w") as f:
        f.write(GREENWAVE_CSV_HEADER + "\n")
        for r in sorted(records, key=lambda r: r.link_length_m):
            f.write(f"{r.link_length_m:g},{r.zero_stop_ratio:.6g},{r.sample_size}\n")


def write_greenwave_svg(records, path, title="Zero-stop ratio vs link length"):
    rs = sorted(records, key=lambda r: r.link_length_m)
    with open(path, "w") as f:
        f.write(line_svg([r.link_length_m for r in rs],
                         [r.zero_stop_ratio for r in rs],
                         title, "link length (m)", "zero-stop ratio"))
