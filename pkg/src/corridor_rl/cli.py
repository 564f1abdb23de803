"""Command-line entry point: train, capacity, att, greenwave, simulate."""

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import exp, ppo, sim
from .controllers import MaxPressureController
from .mdp import ArchitectureKind
from .net import CorridorSpec, DemandConfig, build_corridor
from .ppo import PolicyController, PpoConfig, load_checkpoint, save_checkpoint
from .sim import SimConfig

OUT_ENV_VAR = "CORRIDOR_RL_OUT"

ARCH_BY_FLAG = {
    "maxpressure": ArchitectureKind.MAXPRESSURE,
    "centralized": ArchitectureKind.CENTRALIZED,
    "fd": ArchitectureKind.FULLY_DECENTRALIZED,
    "ps": ArchitectureKind.PARAMETER_SHARING,
}


class ConfigError(Exception):
    pass


def _add_shared(p):
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--link-length", type=float, default=None)
    p.add_argument("--demand-ns", type=float, default=None)
    p.add_argument("--demand-sn", type=float, default=None)
    p.add_argument("--demand-we", type=float, default=None)
    p.add_argument("--demand-ew", type=float, default=None)
    p.add_argument("--arch", choices=sorted(ARCH_BY_FLAG), default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--seeds", type=int, default=None, help="number of seeds")
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--config", default=None,
                   help="YAML/JSON run configuration; flags override it")


def build_parser():
    ap = argparse.ArgumentParser(prog="corridor-rl",
                                 description="Corridor signal-control laboratory")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("train", "train a PPO controller"),
                        ("capacity", "capacity-region sweep"),
                        ("att", "average travel times on the demand line"),
                        ("greenwave", "zero-stop ratio vs link length"),
                        ("simulate", "single simulation with CSV dumps")):
        p = sub.add_parser(name, help=help_)
        _add_shared(p)
        if name == "train":
            p.add_argument("--episodes", type=int, default=None)
            p.add_argument("--include-phase", action="store_true", default=None)
        if name == "capacity":
            p.add_argument("--grid-min", type=float, default=None)
            p.add_argument("--grid-max", type=float, default=None)
            p.add_argument("--grid-step", type=float, default=None)
        if name == "greenwave":
            p.add_argument("--l-values", default=None,
                           help="comma-separated link lengths in meters")
    return ap


def _load_config_file(path):
    try:
        with open(path) as f:
            doc = yaml.safe_load(f) or {}
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}")
    if not isinstance(doc, dict):
        raise ConfigError("config file must be a mapping")
    return doc


def _merged(args):
    """File values fill in flags left at None; flags win."""
    merged = dict(vars(args))
    if args.config:
        doc = _load_config_file(args.config)
        for key, val in doc.items():
            k = key.replace("-", "_")
            if k not in merged:
                raise ConfigError(f"unknown config key {key!r}")
            if merged[k] is None:
                merged[k] = val
    return merged


def _get(m, key, default):
    v = m.get(key)
    return default if v is None else v


def _outdir(m):
    out = m.get("out") or os.environ.get(OUT_ENV_VAR) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _network(m, default_n=3, default_l=700.0):
    try:
        return build_corridor(CorridorSpec(n=int(_get(m, "n", default_n)),
                                           link_length_m=_get(m, "link_length", default_l)))
    except ValueError as e:
        raise ConfigError(str(e))


def _demand(m, default=700.0):
    return DemandConfig(lambda_we=_get(m, "demand_we", default),
                        lambda_ew=_get(m, "demand_ew", default),
                        lambda_ns=_get(m, "demand_ns", default),
                        lambda_sn=_get(m, "demand_sn", default))


def _controller_factory(m, net):
    arch_flag = _get(m, "arch", "maxpressure")
    arch = ARCH_BY_FLAG[arch_flag]
    if arch is ArchitectureKind.MAXPRESSURE:
        return arch, lambda net_: MaxPressureController(net_)
    ckpt_path = m.get("checkpoint")
    if not ckpt_path:
        raise ConfigError(f"--arch {arch_flag} requires --checkpoint")
    try:
        ckpt = load_checkpoint(ckpt_path)
    except (OSError, ValueError, KeyError) as e:
        raise ConfigError(f"cannot load checkpoint: {e}")
    if ckpt.architecture is not arch:
        raise ConfigError(f"checkpoint is {ckpt.architecture.value}, "
                          f"requested {arch_flag}")
    try:
        PolicyController(ckpt, net)  # n-compatibility check up front
    except ValueError as e:
        raise ConfigError(str(e))
    # stochastic policy with a seeded stream: runs stay reproducible
    base_seed = int(_get(m, "seed", 0))
    return arch, lambda net_: PolicyController(
        ckpt, net_, rng=np.random.default_rng([base_seed, 23]))


def _sim_config(m, default_duration=10000.0):
    dur = _get(m, "duration", default_duration)
    return SimConfig(duration_s=dur, warmup_s=min(1000.0, dur / 10),
                     seed=int(_get(m, "seed", 0)))


def _seed_list(m):
    base = int(_get(m, "seed", 0))
    count = int(_get(m, "seeds", exp.DEFAULT_SEEDS_PER_POINT))
    return [base + i for i in range(count)]


# ---- subcommands --------------------------------------------------------

def cmd_train(m):
    arch_flag = _get(m, "arch", "ps")
    arch = ARCH_BY_FLAG[arch_flag]
    if arch is ArchitectureKind.MAXPRESSURE:
        raise ConfigError("maxpressure needs no training")
    net = _network(m)
    demand = _demand(m)
    cfg = PpoConfig(episodes=int(_get(m, "episodes", 500)),
                    episode_duration_s=_get(m, "duration", 10000.0),
                    train_seed=int(_get(m, "seed", 0)),
                    include_phase=bool(_get(m, "include_phase", False)),
                    lambda_we=demand.lambda_we, lambda_ew=demand.lambda_ew,
                    lambda_ns=demand.lambda_ns, lambda_sn=demand.lambda_sn)
    out = _outdir(m)
    best, log = ppo.train(net, arch, cfg)
    ppo.write_train_log(log, out / "train_log.csv")
    ckpt_path = out / f"checkpoint_{arch_flag}.json"
    save_checkpoint(best, ckpt_path)
    print(f"best checkpoint (episode {best.episode}, eval return "
          f"{best.eval_return:.1f}) -> {ckpt_path}")
    return 0


def cmd_capacity(m):
    net = _network(m)
    _, factory = _controller_factory(m, net)
    lo = _get(m, "grid_min", 100.0)
    hi = _get(m, "grid_max", 1500.0)
    step = _get(m, "grid_step", 100.0)
    grid = [lo + i * step for i in range(int((hi - lo) / step) + 1)]
    sim_cfg = _sim_config(m)
    out = _outdir(m)
    verdicts = exp.capacity_sweep(
        factory, net, grid, grid, _seed_list(m), sim_cfg,
        progress=lambda lns, lwe, st: print(
            f"({lns:g},{lwe:g}) -> {'stable' if st else 'unstable'}", flush=True))
    exp.write_capacity_csv(verdicts, out / "capacity.csv")
    exp.write_capacity_svg(verdicts, out / "capacity.svg",
                           title=f"Capacity region ({_get(m, 'arch', 'maxpressure')})")
    return 0


def cmd_att(m):
    net = _network(m)
    name = _get(m, "arch", "maxpressure")
    _, factory = _controller_factory(m, net)
    sim_cfg = _sim_config(m)
    out = _outdir(m)
    records = exp.att_eval({name: factory}, net, exp.ATT_LINE,
                           _seed_list(m), sim_cfg)
    exp.write_att_csv(records, out / "att.csv")
    return 0


def cmd_greenwave(m):
    n = int(_get(m, "n", 13))
    name = _get(m, "arch", "maxpressure")
    # factory rebuilds per-l networks; validate the checkpoint against n once
    probe = build_corridor(CorridorSpec(n=n, link_length_m=700.0))
    _, factory = _controller_factory(m, probe)
    lv = m.get("l_values")
    l_values = [float(x) for x in lv.split(",")] if lv \
        else [200.0 + 200.0 * i for i in range(10)]
    sim_cfg = _sim_config(m)
    out = _outdir(m)
    records = exp.green_wave_study(
        factory, l_values, _seed_list(m), sim_cfg, n=n,
        progress=lambda l, r, c: print(f"l={l:g} ratio={r:.3f} n={c}", flush=True))
    exp.write_greenwave_csv(records, out / "greenwave.csv")
    exp.write_greenwave_svg(records, out / "greenwave.svg",
                            title=f"Zero-stop ratio ({name}, n={n})")
    return 0


def cmd_simulate(m):
    net = _network(m)
    _, factory = _controller_factory(m, net)
    sim_cfg = _sim_config(m)
    out = _outdir(m)
    result = sim.run(net, _demand(m), sim_cfg, factory(net))
    sim.write_vehicle_csv(result, out / "vehicles.csv")
    sim.write_lane_csv(result, out / "lanes.csv")
    sim.write_backup_csv(result, out / "backup.csv")
    sim.write_decision_csv(result, out / "decisions.csv")
    att = result.mean_travel_time(sim_cfg.warmup_s, sim_cfg.duration_s)
    print(f"generated={result.generated} exited={result.exited} att={att:.1f}s")
    return 0


COMMANDS = {"train": cmd_train, "capacity": cmd_capacity, "att": cmd_att,
            "greenwave": cmd_greenwave, "simulate": cmd_simulate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        m = _merged(args)
        return COMMANDS[args.command](m)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
