"""PPO with GAE over parallel simulator instances, plus the evaluation harness.

Policy: diagonal Gaussian in a normalized action space u in R^23 with
tanh-squashed state-dependent means and a state-independent log-std vector
(clamped to [-5, 2]). The environment mapper scales u linearly into the
per-dimension command ranges (base velocity limits and joint limits),
clipping the unbounded Gaussian tails at the range edges.

Observation layout (58): qpos_arm(5), qpos_hand(16), v(2), pos_obj(3,
wrist-camera frame), dis_obj(1), contact flags(9), guidance(22, base frame).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import nets
from .errors import NumericalError, ShapeError, TrainingDiverged
from .reward import RewardWeights, TERM_NAMES, compute_reward
from .simenv import ACTION_DIM, CONTROL_DT, OBS_DIM, Action, Env

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class PpoConfig:
    actor_hidden: tuple = (256, 256)
    critic_hidden: tuple = (256, 256)
    log_std_init: float = -0.5
    n_envs: int = 8
    horizon: int = 256            # control steps per env per iteration
    iterations: int = 200
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    minibatch: int = 64
    lr: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5    # 0 disables clipping
    reward_weights: RewardWeights = field(default_factory=RewardWeights)
    rot_metric: str = "geodesic"
    action_mode: str = "magnitude"
    # optional early stop: evaluate every `eval_every` iterations (0 = never)
    eval_every: int = 0
    eval_trials: int = 20
    target_success_rate: float = 1.1  # >1 disables early stop
    max_control_steps: int = 0        # 0 = no cap besides iterations


class Policy:
    """Actor-critic parameter container with numpy fast paths."""

    def __init__(self, cfg: PpoConfig, rng: np.random.Generator,
                 obs_dim: int = OBS_DIM, action_dim: int = ACTION_DIM):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.actor = nets.Mlp.create([obs_dim, *cfg.actor_hidden, action_dim], rng,
                                     hidden="tanh", output_scale=0.01)
        self.critic = nets.Mlp.create([obs_dim, *cfg.critic_hidden, 1], rng,
                                      hidden="tanh")
        self.log_std = np.full(action_dim, cfg.log_std_init)

    # parameters: [actor arrays..., critic arrays..., log_std]
    def param_arrays(self) -> list[np.ndarray]:
        return self.actor.param_arrays() + self.critic.param_arrays() + [self.log_std]

    def set_param_arrays(self, arrays: list[np.ndarray]) -> None:
        n_a = 2 * len(self.actor.weights)
        n_c = 2 * len(self.critic.weights)
        self.actor.set_param_arrays(arrays[:n_a])
        self.critic.set_param_arrays(arrays[n_a:n_a + n_c])
        self.log_std = np.asarray(arrays[-1], dtype=np.float64)

    def split_params(self, params: list):
        n_a = 2 * len(self.actor.weights)
        n_c = 2 * len(self.critic.weights)
        return params[:n_a], params[n_a:n_a + n_c], params[-1]

    def arch(self) -> dict:
        return {"kind": "policy", "obs_dim": self.obs_dim, "action_dim": self.action_dim,
                "actor_sizes": self.actor.sizes, "critic_sizes": self.critic.sizes}

    def mean_std(self, obs: np.ndarray):
        means = np.tanh(self.actor.forward(obs))
        std = np.exp(np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX))
        return means, std

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        """(u, log_prob) for a batch of observations."""
        means, std = self.mean_std(obs)
        eps = rng.standard_normal(means.shape)
        u = means + std * eps
        logp = self.log_prob(u, means, std)
        return u, logp

    def log_prob(self, u: np.ndarray, means: np.ndarray, std: np.ndarray) -> np.ndarray:
        z = (u - means) / std
        return (-0.5 * np.sum(z * z, axis=-1)
                - np.sum(np.log(std)) - 0.5 * self.action_dim * _LOG_2PI)

    def value(self, obs: np.ndarray) -> np.ndarray:
        v = self.critic.forward(obs)
        return v[..., 0]


def save_policy(path, policy: Policy) -> None:
    nets.save_checkpoint(path, policy.arch(), policy.param_arrays())


def load_policy(path, cfg: PpoConfig | None = None) -> Policy:
    arch, arrays = nets.load_checkpoint(path, expect_kind="policy")
    cfg = cfg or PpoConfig()
    cfg.actor_hidden = tuple(arch["actor_sizes"][1:-1])
    cfg.critic_hidden = tuple(arch["critic_sizes"][1:-1])
    policy = Policy(cfg, nets.rng_for(0, "policy-load"),
                    obs_dim=arch["obs_dim"], action_dim=arch["action_dim"])
    policy.set_param_arrays(arrays)
    return policy


class ActionMapper:
    """Linear map between the normalized policy space and env commands."""

    def __init__(self, model):
        lims = np.vstack([
            [[-model.v_forward_max, model.v_forward_max],
             [-model.v_yaw_max, model.v_yaw_max]],
            model.arm.joint_limits,
            model.hand.joint_limits,
        ])
        self.center = (lims[:, 0] + lims[:, 1]) / 2.0
        self.half = (lims[:, 1] - lims[:, 0]) / 2.0

    def to_env(self, u: np.ndarray) -> Action:
        cmd = self.center + np.clip(u, -1.0, 1.0) * self.half
        return Action.from_vector(cmd)


# ---------------------------------------------------------------------------
# GAE
# ---------------------------------------------------------------------------


def gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
        gamma: float, lam: float):
    """Generalized advantage estimation over one env's trajectory.

    `values` must have length T+1 (bootstrap value last); `dones[t]` cuts the
    recursion after step t. Returns (advantages, returns), unnormalized.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    t_len = rewards.shape[0]
    if values.shape[0] != t_len + 1 or dones.shape[0] != t_len:
        raise ShapeError("gae: rewards (T,), values (T+1,), dones (T,) required")
    adv = np.zeros(t_len)
    acc = 0.0
    for t in range(t_len - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * values[t + 1] * nonterminal - values[t]
        acc = delta + gamma * lam * nonterminal * acc
        adv[t] = acc
    return adv, adv + values[:t_len]


# ---------------------------------------------------------------------------
# PPO loss (autodiff graph) and diagnostics
# ---------------------------------------------------------------------------


@dataclass
class PpoDiagnostics:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    approx_kl: float


def ppo_loss_graph(policy: Policy, params: list, obs: np.ndarray, actions: np.ndarray,
                   advantages: np.ndarray, returns: np.ndarray,
                   old_log_probs: np.ndarray, clip_eps: float,
                   value_coef: float, entropy_coef: float):
    """Clipped-surrogate + value MSE - entropy bonus as a Tensor graph."""
    actor_p, critic_p, log_std_p = policy.split_params(params)
    d = policy.action_dim

    obs_t = nets.Tensor(obs)
    means = nets.tanh(policy.actor.apply(obs_t, actor_p))
    log_std = nets.clip(log_std_p, LOG_STD_MIN, LOG_STD_MAX)
    inv_std = nets.exp(nets.mul(log_std, -1.0))
    z = nets.mul(nets.sub(nets.Tensor(actions), means), inv_std)
    logp = nets.sub(nets.mul(nets.tsum(nets.square(z), axis=1), -0.5),
                    nets.add(nets.tsum(log_std), 0.5 * d * _LOG_2PI))
    ratio = nets.exp(nets.sub(logp, nets.Tensor(old_log_probs)))
    if not np.all(np.isfinite(ratio.data)):
        raise NumericalError("non-finite probability ratio")
    adv_t = nets.Tensor(advantages)
    surr = nets.minimum(nets.mul(ratio, adv_t),
                        nets.mul(nets.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps), adv_t))
    policy_term = nets.mul(nets.tmean(surr), -1.0)

    values = nets.slice_cols(policy.critic.apply(obs_t, critic_p), 0, 1)
    v_err = nets.sub(values, nets.Tensor(returns[:, None]))
    value_term = nets.tmean(nets.square(v_err))

    entropy = nets.add(nets.tsum(log_std), 0.5 * d * (1.0 + _LOG_2PI))

    loss = nets.add(nets.add(policy_term, nets.mul(value_term, value_coef)),
                    nets.mul(entropy, -entropy_coef))

    ratio_v = ratio.data
    diag = PpoDiagnostics(
        policy_loss=float(policy_term.data),
        value_loss=float(value_term.data),
        entropy=float(entropy.data),
        clip_fraction=float(np.mean(np.abs(ratio_v - 1.0) > clip_eps)),
        approx_kl=float(np.mean((ratio_v - 1.0) - np.log(ratio_v))),
    )
    return loss, diag


def ppo_loss(policy: Policy, batch: dict, clip_eps: float = 0.2,
             value_coef: float = 0.5, entropy_coef: float = 0.0):
    """(loss value, diagnostics) without touching parameters; test surface."""
    params = nets.param_tensors(policy.param_arrays())
    loss, diag = ppo_loss_graph(policy, params, batch["obs"], batch["actions"],
                                batch["advantages"], batch["returns"],
                                batch["old_log_probs"], clip_eps, value_coef,
                                entropy_coef)
    return float(loss.data), diag


# ---------------------------------------------------------------------------
# Rollout collection
# ---------------------------------------------------------------------------


@dataclass
class RolloutBuffer:
    obs: np.ndarray            # (n_envs, T, obs_dim)
    actions: np.ndarray        # (n_envs, T, action_dim)
    log_probs: np.ndarray      # (n_envs, T)
    values: np.ndarray         # (n_envs, T+1) incl. bootstrap
    rewards: np.ndarray        # (n_envs, T)
    dones: np.ndarray          # (n_envs, T)
    term_reasons: list         # finished-episode reasons this rollout
    episode_rewards: list      # finished-episode reward totals
    term_means: dict           # reward-term name -> mean over steps

    @property
    def n_transitions(self) -> int:
        return self.obs.shape[0] * self.obs.shape[1]


class RolloutWorkers:
    """Keeps the live state of each env between collection calls."""

    def __init__(self, envs: list[Env], weights: RewardWeights,
                 rot_metric: str = "geodesic", action_mode: str = "magnitude"):
        self.envs = envs
        self.weights = weights
        self.rot_metric = rot_metric
        self.action_mode = action_mode
        self.states = [env.reset() for env in envs]
        self.prev_actions = [None for _ in envs]
        self.episode_reward = np.zeros(len(envs))

    def observe_all(self) -> np.ndarray:
        return np.stack([env.observe(s) for env, s in zip(self.envs, self.states)])

    def collect(self, policy: Policy, mapper: ActionMapper, horizon: int,
                rng: np.random.Generator) -> RolloutBuffer:
        n = len(self.envs)
        obs = np.empty((n, horizon, policy.obs_dim))
        actions = np.empty((n, horizon, policy.action_dim))
        log_probs = np.empty((n, horizon))
        values = np.empty((n, horizon + 1))
        rewards = np.empty((n, horizon))
        dones = np.zeros((n, horizon), dtype=bool)
        term_reasons: list[str] = []
        episode_rewards: list[float] = []
        term_sums = {k: 0.0 for k in TERM_NAMES}

        for t in range(horizon):
            obs_t = self.observe_all()
            u, logp = policy.sample(obs_t, rng)
            vals = policy.value(obs_t)
            obs[:, t] = obs_t
            actions[:, t] = u
            log_probs[:, t] = logp
            values[:, t] = vals
            for i, env in enumerate(self.envs):
                act = mapper.to_env(u[i])
                state, events = env.step(self.states[i], act)
                breakdown = compute_reward(state, act, state.guidance, self.weights,
                                           rot_metric=self.rot_metric,
                                           action_mode=self.action_mode,
                                           prev_action=self.prev_actions[i])
                for k in TERM_NAMES:
                    term_sums[k] += getattr(breakdown, k)
                rewards[i, t] = breakdown.total
                self.episode_reward[i] += breakdown.total
                self.prev_actions[i] = act
                dones[i, t] = events.terminal
                if events.terminal:
                    term_reasons.append(state.term_reason)
                    episode_rewards.append(float(self.episode_reward[i]))
                    self.episode_reward[i] = 0.0
                    self.states[i] = env.reset()
                    self.prev_actions[i] = None
                else:
                    self.states[i] = state
        values[:, horizon] = policy.value(self.observe_all())
        n_steps = n * horizon
        return RolloutBuffer(obs, actions, log_probs, values, rewards, dones,
                             term_reasons, episode_rewards,
                             {k: v / n_steps for k, v in term_sums.items()})


def collect_rollouts(envs: list[Env], policy: Policy, mapper: ActionMapper,
                     weights: RewardWeights, horizon: int,
                     rng: np.random.Generator) -> RolloutBuffer:
    """One-shot collection helper (fresh resets); training reuses workers."""
    return RolloutWorkers(envs, weights).collect(policy, mapper, horizon, rng)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def train_policy(cfg: PpoConfig, envs: list[Env], seed: int,
                 eval_env_factory=None):
    """PPO training loop; returns (policy, log rows).

    Each log row records the iteration, cumulative control steps, mean
    episode reward, per-term reward means, and optimizer diagnostics. If
    `eval_env_factory` is given and cfg.eval_every > 0, a deterministic
    evaluation runs periodically and training stops early once
    cfg.target_success_rate is reached.
    """
    policy = Policy(cfg, nets.rng_for(seed, "policy-init"))
    mapper = ActionMapper(envs[0].config.robot)
    sample_rng = nets.rng_for(seed, "rollout-sample")
    batch_rng = nets.rng_for(seed, "minibatch")
    workers = RolloutWorkers(envs, cfg.reward_weights, cfg.rot_metric, cfg.action_mode)

    flat = nets.pack(policy.param_arrays())
    like = policy.param_arrays()
    state = nets.AdamState.for_size(flat.size)
    log: list[dict] = []
    total_steps = 0
    t_start = time.time()

    for it in range(cfg.iterations):
        buf = workers.collect(policy, mapper, cfg.horizon, sample_rng)
        total_steps += buf.n_transitions

        adv_rows, ret_rows = [], []
        for i in range(len(envs)):
            a, r = gae(buf.rewards[i], buf.values[i], buf.dones[i], cfg.gamma, cfg.lam)
            adv_rows.append(a)
            ret_rows.append(r)
        advantages = np.concatenate(adv_rows)
        returns = np.concatenate(ret_rows)
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

        obs = buf.obs.reshape(-1, policy.obs_dim)
        actions = buf.actions.reshape(-1, policy.action_dim)
        old_logp = buf.log_probs.reshape(-1)

        diag = None
        for _ in range(cfg.epochs):
            order = batch_rng.permutation(obs.shape[0])
            for start in range(0, obs.shape[0], cfg.minibatch):
                idx = order[start:start + cfg.minibatch]
                params = nets.param_tensors(nets.unpack(flat, like))
                loss, diag = ppo_loss_graph(
                    policy, params, obs[idx], actions[idx], advantages[idx],
                    returns[idx], old_logp[idx], cfg.clip_eps, cfg.value_coef,
                    cfg.entropy_coef)
                if not np.isfinite(float(loss.data)):
                    raise TrainingDiverged(f"loss non-finite at iteration {it}", epoch=it)
                loss.backward()
                grads = nets.pack([p.grad if p.grad is not None else np.zeros_like(p.data)
                                   for p in params])
                if cfg.max_grad_norm > 0:
                    norm = float(np.linalg.norm(grads))
                    if norm > cfg.max_grad_norm:
                        grads *= cfg.max_grad_norm / norm
                flat = nets.adam_step(flat, grads, state, lr=cfg.lr)
                policy.set_param_arrays(nets.unpack(flat, like))

        row = {
            "iteration": it,
            "control_steps": total_steps,
            "mean_episode_reward": (float(np.mean(buf.episode_rewards))
                                    if buf.episode_rewards else float("nan")),
            "episodes": len(buf.episode_rewards),
            "hold_completes": sum(1 for r in buf.term_reasons if r == "hold_complete"),
            "wall_time": time.time() - t_start,
        }
        row.update({f"reward_{k}": v for k, v in buf.term_means.items()})
        if diag is not None:
            row.update({"policy_loss": diag.policy_loss, "value_loss": diag.value_loss,
                        "clip_fraction": diag.clip_fraction, "approx_kl": diag.approx_kl})
        if (cfg.eval_every > 0 and eval_env_factory is not None
                and (it + 1) % cfg.eval_every == 0):
            metrics = evaluate(policy, eval_env_factory(), cfg.eval_trials)
            row["eval_success_rate"] = metrics.success_rate
            if metrics.success_rate >= cfg.target_success_rate:
                log.append(row)
                break
        log.append(row)
        if cfg.max_control_steps and total_steps >= cfg.max_control_steps:
            break
    return policy, log


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class ObjectEvalRow:
    object_id: str
    difficulty: str
    trials: int
    successes: int
    hod_cm: list  # per contact-reaching trial

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    @property
    def hod_mean_cm(self) -> float | None:
        return float(np.mean(self.hod_cm)) if self.hod_cm else None


@dataclass
class EvalMetrics:
    success_rate: float
    hod_mean_cm: float | None
    trial_count: int
    per_object: list


def run_episode(env: Env, act_fn, max_steps: int | None = None):
    """One episode driven by act_fn(obs, state) -> Action; returns the state."""
    state = env.reset()
    limit = max_steps or env.config.horizon_steps + 1
    for _ in range(limit):
        action = act_fn(env.observe(state), state)
        state, events = env.step(state, action)
        if events.terminal:
            break
    return state


def summarize_trials(rows: list) -> EvalMetrics:
    trials = sum(r.trials for r in rows)
    successes = sum(r.successes for r in rows)
    hods = [h for r in rows for h in r.hod_cm]
    return EvalMetrics(
        success_rate=successes / trials if trials else 0.0,
        hod_mean_cm=float(np.mean(hods)) if hods else None,
        trial_count=trials,
        per_object=rows,
    )


def evaluate(policy: Policy, env: Env, n_trials: int) -> EvalMetrics:
    """Deterministic-policy evaluation: success and hand-object drift (cm).

    Success means the episode ended by completing the hold horizon without
    a drop; drift is the slip accumulator, reported only over trials that
    reached hand-object contact.
    """
    mapper = ActionMapper(env.config.robot)

    def act(obs, _state):
        u = np.tanh(policy.actor.forward(obs))
        return mapper.to_env(u)

    table: dict[str, ObjectEvalRow] = {}
    for _ in range(n_trials):
        state = run_episode(env, act)
        row = table.setdefault(
            state.obj.object_id,
            ObjectEvalRow(state.obj.object_id, state.obj.difficulty, 0, 0, []))
        row.trials += 1
        if state.term_reason == "hold_complete":
            row.successes += 1
        if state.had_contact:
            row.hod_cm.append(state.slip * 100.0)
    return summarize_trials(sorted(table.values(), key=lambda r: r.object_id))
