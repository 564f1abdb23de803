"""PPO training for the corridor: GAE, clipped surrogate, and the three
controller architectures (centralized, fully decentralized, parameter sharing)."""

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import mdp
from .mdp import ArchitectureKind
from .net import DemandConfig
from .nn import AdamState, Mlp, adam_step
from .sim import SimConfig, run


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs_per_update: int = 4
    minibatch_size: int = 256
    lr: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    # rewards are sums of queue counts (tens of vehicles); scale them before
    # GAE so critic targets stay O(1) and the value loss is well conditioned
    reward_scale: float = 0.01
    episodes: int = 500
    episode_duration_s: float = 10000.0
    eval_every: int = 10
    train_seed: int = 0
    eval_seed: int = 990001
    # checkpoint selection metric: "return" (undiscounted global reward) or
    # "att" (negated mean travel time on the evaluation episode)
    eval_metric: str = "return"
    hidden: tuple = (64, 64)
    include_phase: bool = False
    lambda_we: float = 700.0
    lambda_ew: float = 700.0
    lambda_ns: float = 700.0
    lambda_sn: float = 700.0
    # per-episode demand randomization: episodes draw equally among
    # axis-dominant (WE scaled by 1+j, NS by 1-j), side-dominant (reversed),
    # and balanced demand; 0 disables. Exposes the policy to strongly
    # asymmetric loads so phase-holding is learned for both phases.
    demand_jitter: float = 0.0

    def validate(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must be in [0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.eval_metric not in ("return", "att"):
            raise ValueError("eval_metric must be 'return' or 'att'")
        if not 0 <= self.demand_jitter < 1:
            raise ValueError("demand_jitter must be in [0, 1)")

    def demand(self):
        return DemandConfig(self.lambda_we, self.lambda_ew,
                            self.lambda_ns, self.lambda_sn)


# ---- advantage estimation ----------------------------------------------

def compute_gae(rewards, values, bootstrap_value, gamma, lam):
    """Backward GAE recursion; returns (advantages, returns)."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(rewards) != len(values):
        raise ValueError("rewards and values must have equal length")
    n = len(rewards)
    adv = np.zeros(n)
    last = 0.0
    next_v = bootstrap_value
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + gamma * next_v - values[t]
        last = delta + gamma * lam * last
        adv[t] = last
        next_v = values[t]
    return adv, adv + values


# ---- Bernoulli policy head ---------------------------------------------

def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def bernoulli_logp(logits, actions):
    """Joint log-probability of independent action bits, summed per sample."""
    return (actions * logits - _softplus(logits)).sum(axis=-1)


def bernoulli_entropy(logits):
    return (_softplus(logits) - logits * _sigmoid(logits)).sum(axis=-1)


# ---- loss ---------------------------------------------------------------

def ppo_loss_and_grad(actor: Mlp, critic: Mlp, batch, cfg: PpoConfig):
    """Clipped-surrogate loss and flat gradients for actor and critic.

    batch: dict with obs (B,D), actions (B,K), logp_old (B,), adv (B,)
    (already normalized), returns (B,).
    """
    obs = batch["obs"]
    acts = batch["actions"]
    adv = batch["adv"]
    rets = batch["returns"]
    B = len(obs)

    logits = actor.forward(obs)
    p = _sigmoid(logits)
    logp = bernoulli_logp(logits, acts)
    ratio = np.exp(logp - batch["logp_old"])
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    surr1 = ratio * adv
    surr2 = clipped * adv
    policy_loss = -np.minimum(surr1, surr2).mean()
    entropy = bernoulli_entropy(logits).mean()

    v = critic.forward(obs)[:, 0]
    value_loss = np.mean((v - rets) ** 2)

    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

    # d(policy)/d(logits): zero where the clipped branch is active
    active = (surr1 <= surr2).astype(float)
    dlogits = -(active * ratio * adv)[:, None] * (acts - p) / B
    # entropy bonus: dH/dx = -x p (1-p)
    dlogits += cfg.entropy_coef * logits * p * (1.0 - p) / B
    dWs, dbs = actor.backward(dlogits)
    actor_grad = Mlp.flatten_grads(dWs, dbs)

    dv = cfg.value_coef * 2.0 * (v - rets)[:, None] / B
    dWs, dbs = critic.backward(dv)
    critic_grad = Mlp.flatten_grads(dWs, dbs)

    return float(loss), actor_grad, critic_grad


def ppo_loss(actor, critic, batch, cfg):
    loss, _, _ = ppo_loss_and_grad(actor, critic, batch, cfg)
    return loss


# ---- policies -----------------------------------------------------------

class ActorCritic:
    def __init__(self, obs_len, action_bits, hidden, rng):
        dims = [obs_len, *hidden]
        self.actor = Mlp(dims + [action_bits], rng=rng, out_gain=0.01)
        self.critic = Mlp(dims + [1], rng=rng, out_gain=1.0)
        self.obs_len = obs_len
        self.action_bits = action_bits

    def act(self, obs, rng=None):
        """Sample bits (or take the mode when rng is None)."""
        logits = np.atleast_1d(self.actor.forward(obs))
        p = _sigmoid(logits)
        if rng is None:
            bits = (logits > 0).astype(int)
        else:
            bits = (rng.random(len(logits)) < p).astype(int)
        logp = float(bernoulli_logp(logits, bits))
        value = float(np.atleast_1d(self.critic.forward(obs))[0])
        return bits, logp, value

    def copy(self):
        c = ActorCritic.__new__(ActorCritic)
        c.actor = self.actor.copy()
        c.critic = self.critic.copy()
        c.obs_len = self.obs_len
        c.action_bits = self.action_bits
        return c


# ---- checkpoints --------------------------------------------------------

CHECKPOINT_VERSION = 1


@dataclass
class PolicyCheckpoint:
    architecture: ArchitectureKind
    n: int
    obs_len: int
    action_bits: int
    hidden: tuple
    include_phase: bool
    # one (actor flat, critic flat) pair; n pairs for FULLY_DECENTRALIZED
    policies: list
    hyperparameters: dict
    episode: int
    eval_return: float
    train_seed: int
    format_version: int = CHECKPOINT_VERSION

    def build_policies(self):
        out = []
        rng = np.random.default_rng(0)
        for actor_flat, critic_flat in self.policies:
            ac = ActorCritic(self.obs_len, self.action_bits, self.hidden, rng)
            ac.actor.set_flat(np.asarray(actor_flat))
            ac.critic.set_flat(np.asarray(critic_flat))
            out.append(ac)
        return out


def save_checkpoint(ckpt: PolicyCheckpoint, path):
    doc = {
        "format_version": ckpt.format_version,
        "architecture": ckpt.architecture.value,
        "n": ckpt.n,
        "obs_len": ckpt.obs_len,
        "action_bits": ckpt.action_bits,
        "hidden": list(ckpt.hidden),
        "include_phase": ckpt.include_phase,
        "policies": [[a.tolist() if hasattr(a, "tolist") else list(a),
                      c.tolist() if hasattr(c, "tolist") else list(c)]
                     for a, c in ckpt.policies],
        "hyperparameters": ckpt.hyperparameters,
        "episode": ckpt.episode,
        "eval_return": ckpt.eval_return,
        "train_seed": ckpt.train_seed,
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path) -> PolicyCheckpoint:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('format_version')}")
    ckpt = PolicyCheckpoint(
        architecture=ArchitectureKind(doc["architecture"]),
        n=doc["n"], obs_len=doc["obs_len"], action_bits=doc["action_bits"],
        hidden=tuple(doc["hidden"]), include_phase=doc["include_phase"],
        policies=[(np.array(a), np.array(c)) for a, c in doc["policies"]],
        hyperparameters=doc["hyperparameters"], episode=doc["episode"],
        eval_return=doc["eval_return"], train_seed=doc["train_seed"])
    for a, c in ckpt.policies:
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(c))):
            raise ValueError("checkpoint contains non-finite weights")
    return ckpt


class PolicyController:
    """Runs a trained policy inside the simulator's controller protocol."""

    def __init__(self, ckpt: PolicyCheckpoint, net, rng=None):
        arch = ckpt.architecture
        if arch in (ArchitectureKind.CENTRALIZED, ArchitectureKind.FULLY_DECENTRALIZED) \
                and ckpt.n != net.n:
            raise ValueError(
                f"{arch.value} checkpoint was trained for n={ckpt.n}, "
                f"cannot deploy on n={net.n}")
        self.ckpt = ckpt
        self.net = net
        self.rng = rng  # None -> deterministic mode
        self.policies = ckpt.build_policies()

    def decide(self, t, snapshot, signals):
        arch = self.ckpt.architecture
        inc = self.ckpt.include_phase
        if arch is ArchitectureKind.CENTRALIZED:
            obs = mdp.observe_global(self.net, snapshot, signals, inc)
            bits, _, _ = self.policies[0].act(obs, self.rng)
            return mdp.apply_actions(bits, self.net.junction_ids)
        bits = []
        for idx, j in enumerate(self.net.junction_ids):
            pol = self.policies[0] if arch is ArchitectureKind.PARAMETER_SHARING \
                else self.policies[idx]
            obs = mdp.observe_local(self.net, snapshot, signals, j, inc)
            b, _, _ = pol.act(obs, self.rng)
            bits.append(int(b[0]))
        return mdp.apply_actions(bits, self.net.junction_ids)


# ---- rollout collection -------------------------------------------------

class _AgentBuffer:
    def __init__(self):
        self.obs = []
        self.actions = []
        self.logp = []
        self.values = []
        self.rewards = []
        self.final_obs = None

    def __len__(self):
        return len(self.obs)


class RolloutController:
    """Training-time controller: samples actions and records transitions."""

    def __init__(self, net, arch, policies, cfg: PpoConfig, rng):
        self.net = net
        self.arch = arch
        self.policies = policies
        self.cfg = cfg
        self.rng = rng
        n_agents = 1 if arch is ArchitectureKind.CENTRALIZED else net.n
        self.buffers = [_AgentBuffer() for _ in range(n_agents)]
        self.reward_sum = 0.0

    def _policy_for(self, agent_idx):
        if self.arch is ArchitectureKind.PARAMETER_SHARING:
            return self.policies[0]
        return self.policies[agent_idx]

    def _record_rewards(self, snapshot):
        locals_ = [mdp.reward_local(self.net, snapshot, j)
                   for j in self.net.junction_ids]
        glob = mdp.reward_global(self.net, snapshot)
        assert glob == sum(locals_)
        if self.arch is ArchitectureKind.CENTRALIZED:
            if len(self.buffers[0]) > len(self.buffers[0].rewards):
                self.buffers[0].rewards.append(glob)
                self.reward_sum += glob
        else:
            pending = False
            for buf, r in zip(self.buffers, locals_):
                if len(buf) > len(buf.rewards):
                    buf.rewards.append(r)
                    pending = True
            if pending:
                self.reward_sum += glob

    def decide(self, t, snapshot, signals):
        self._record_rewards(snapshot)
        inc = self.cfg.include_phase
        if self.arch is ArchitectureKind.CENTRALIZED:
            obs = mdp.observe_global(self.net, snapshot, signals, inc)
            bits, logp, value = self.policies[0].act(obs, self.rng)
            buf = self.buffers[0]
            buf.obs.append(obs)
            buf.actions.append(bits)
            buf.logp.append(logp)
            buf.values.append(value)
            return mdp.apply_actions(bits, self.net.junction_ids)
        all_bits = []
        for idx, j in enumerate(self.net.junction_ids):
            obs = mdp.observe_local(self.net, snapshot, signals, j, inc)
            bits, logp, value = self._policy_for(idx).act(obs, self.rng)
            buf = self.buffers[idx]
            buf.obs.append(obs)
            buf.actions.append(bits)
            buf.logp.append(logp)
            buf.values.append(value)
            all_bits.append(int(bits[0]))
        return mdp.apply_actions(all_bits, self.net.junction_ids)

    def on_finish(self, t, snapshot, signals):
        self._record_rewards(snapshot)
        inc = self.cfg.include_phase
        if self.arch is ArchitectureKind.CENTRALIZED:
            self.buffers[0].final_obs = mdp.observe_global(self.net, snapshot,
                                                           signals, inc)
        else:
            for idx, j in enumerate(self.net.junction_ids):
                self.buffers[idx].final_obs = mdp.observe_local(
                    self.net, snapshot, signals, j, inc)


# ---- training loop ------------------------------------------------------

class _ReturnRecorder:
    """Wraps a controller and accumulates the undiscounted global return."""

    def __init__(self, inner, net):
        self.inner = inner
        self.net = net
        self.total = 0.0

    def decide(self, t, snapshot, signals):
        self.total += mdp.reward_global(self.net, snapshot)
        return self.inner.decide(t, snapshot, signals)


def evaluate_policy(ckpt: PolicyCheckpoint, net, sim_cfg: SimConfig,
                    demand: DemandConfig, rng=None):
    """Policy rollout (stochastic when rng given, else the argmax policy);
    returns (global return, SimResult)."""
    rec = _ReturnRecorder(PolicyController(ckpt, net, rng=rng), net)
    result = run(net, demand, sim_cfg, rec)
    return rec.total, result


def _make_checkpoint(arch, net, policies, cfg: PpoConfig, episode, eval_return):
    if arch is ArchitectureKind.FULLY_DECENTRALIZED:
        pairs = [(p.actor.get_flat(), p.critic.get_flat()) for p in policies]
    else:
        pairs = [(policies[0].actor.get_flat(), policies[0].critic.get_flat())]
    return PolicyCheckpoint(
        architecture=arch, n=net.n, obs_len=policies[0].obs_len,
        action_bits=policies[0].action_bits, hidden=cfg.hidden,
        include_phase=cfg.include_phase, policies=pairs,
        hyperparameters=asdict(cfg), episode=episode,
        eval_return=eval_return, train_seed=cfg.train_seed)


def _update_group(acs, buffers, cfg, adam_actor, adam_critic, rng):
    """One PPO update for one parameter group from its member-agent buffers."""
    obs, acts, logp, adv, rets = [], [], [], [], []
    for buf in buffers:
        a, r = compute_gae(np.asarray(buf.rewards) * cfg.reward_scale, buf.values,
                           float(np.atleast_1d(acs.critic.forward(buf.final_obs))[0]),
                           cfg.gamma, cfg.gae_lambda)
        obs.append(np.array(buf.obs))
        acts.append(np.array(buf.actions, dtype=float))
        logp.append(np.array(buf.logp))
        adv.append(a)
        rets.append(r)
    obs = np.concatenate(obs)
    acts = np.concatenate(acts)
    logp = np.concatenate(logp)
    adv = np.concatenate(adv)
    rets = np.concatenate(rets)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    n = len(obs)
    last_loss = math.nan
    for _ in range(cfg.epochs_per_update):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            sel = perm[start:start + cfg.minibatch_size]
            batch = {"obs": obs[sel], "actions": acts[sel],
                     "logp_old": logp[sel], "adv": adv[sel], "returns": rets[sel]}
            loss, ga, gc = ppo_loss_and_grad(acs.actor, acs.critic, batch, cfg)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss {loss}")
            acs.actor.set_flat(adam_step(acs.actor.get_flat(), ga, adam_actor))
            acs.critic.set_flat(adam_step(acs.critic.get_flat(), gc, adam_critic))
            last_loss = loss
    return last_loss


def train(net, arch: ArchitectureKind, cfg: PpoConfig, sim_cfg: SimConfig = None):
    """Episode-based PPO training; returns (best checkpoint, log rows).

    Log rows: (episode, mean_reward, loss, eval_return or nan, wall_s).
    """
    cfg.validate()
    if arch not in mdp.RL_ARCHITECTURES:
        raise ValueError(f"cannot train architecture {arch}")
    if sim_cfg is None:
        sim_cfg = SimConfig(duration_s=cfg.episode_duration_s,
                            warmup_s=min(1000.0, cfg.episode_duration_s / 10))
    demand = cfg.demand()

    obs_len = (mdp.local_obs_len(cfg.include_phase) * net.n
               if arch is ArchitectureKind.CENTRALIZED
               else mdp.local_obs_len(cfg.include_phase))
    bits = net.n if arch is ArchitectureKind.CENTRALIZED else 1
    n_groups = net.n if arch is ArchitectureKind.FULLY_DECENTRALIZED else 1

    init_rng = np.random.default_rng(np.random.SeedSequence([cfg.train_seed, 7]))
    groups = [ActorCritic(obs_len, bits, cfg.hidden, init_rng)
              for _ in range(n_groups)]
    adams = [(AdamState(g.actor.get_flat().size, lr=cfg.lr),
              AdamState(g.critic.get_flat().size, lr=cfg.lr)) for g in groups]

    eval_cfg = SimConfig(**{**sim_cfg.__dict__, "seed": cfg.eval_seed})
    log = []
    best = None
    t0 = time.time()

    for ep in range(1, cfg.episodes + 1):
        act_rng = np.random.default_rng(np.random.SeedSequence([cfg.train_seed, 11, ep]))
        ep_cfg = SimConfig(**{**sim_cfg.__dict__,
                              "seed": cfg.train_seed * 100003 + ep})
        policies = groups if arch is ArchitectureKind.FULLY_DECENTRALIZED \
            else [groups[0]]
        roller = RolloutController(net, arch, policies, cfg, act_rng)
        ep_demand = demand
        if cfg.demand_jitter > 0:
            j = cfg.demand_jitter
            # deterministic cycle so both dominant regimes appear from the
            # first episodes (random draws let one phase-holding rule saturate
            # before the other regime is ever seen)
            s_axis, s_side = ((1 + j, 1 - j), (1 - j, 1 + j),
                              (1.0, 1.0))[ep % 3]
            ep_demand = DemandConfig(demand.lambda_we * s_axis,
                                     demand.lambda_ew * s_axis,
                                     demand.lambda_ns * s_side,
                                     demand.lambda_sn * s_side)
        run(net, ep_demand, ep_cfg, roller)

        loss = math.nan
        for gi, (acs, (aa, ac)) in enumerate(zip(groups, adams)):
            upd_rng = np.random.default_rng(
                np.random.SeedSequence([cfg.train_seed, 13, ep, gi]))
            bufs = [roller.buffers[gi]] if arch is ArchitectureKind.FULLY_DECENTRALIZED \
                else roller.buffers
            loss = _update_group(acs, bufs, cfg, aa, ac, upd_rng)

        n_decisions = len(roller.buffers[0].rewards)
        mean_reward = roller.reward_sum / max(1, n_decisions)
        eval_return = math.nan
        if ep % cfg.eval_every == 0 or ep == cfg.episodes:
            ckpt = _make_checkpoint(arch, net, groups, cfg, ep, math.nan)
            # stochastic evaluation: the Bernoulli policy is the trained object
            # (its argmax collapses to a constant action in saturated states)
            eval_rng = np.random.default_rng(
                np.random.SeedSequence([cfg.train_seed, 17, ep]))
            eval_return, eval_res = evaluate_policy(ckpt, net, eval_cfg, demand,
                                                    eval_rng)
            if cfg.eval_metric == "att":
                eval_return = -eval_res.mean_travel_time(eval_cfg.warmup_s,
                                                         eval_cfg.duration_s)
            ckpt.eval_return = eval_return
            if best is None or eval_return > best.eval_return:
                best = ckpt
        log.append((ep, mean_reward, loss, eval_return, time.time() - t0))

    return best, log


TRAIN_LOG_HEADER = "episode,mean_reward,loss,eval_return,wall_s"


def write_train_log(log, path):
    with open(path, "w") as f:
        f.write(TRAIN_LOG_HEADER + "\n")
        for ep, mr, loss, ev, wall in log:
            ev_s = "" if math.isnan(ev) else f"{ev:.6g}"
            f.write(f"{ep},{mr:.6g},{loss:.6g},{ev_s},{wall:.3f}\n")
