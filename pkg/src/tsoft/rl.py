"""Online actor-critic with a target network on the critic.

One transition at a time: the critic regresses ``V(s; theta)`` onto
``r + gamma * V(s'; phi)``, the actor follows the likelihood-ratio gradient
scaled by the TD advantage, and finally the target ``phi`` is moved toward
``theta`` with the configured update rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import CongruenceError, ParameterError
from .nn import Mlp, SgdConfig, clip_by_norm, mlp_init, sgd_step
from .params import ParamSet, mean_abs_diff
from .target_update import TargetUpdater, TSoftDiagnostics, UpdateRule

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0


class Transition(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    terminal: bool


def td_target(r, v_next_target, gamma, terminal):
    if not 0.0 <= gamma < 1.0:
        raise ParameterError(f"gamma must lie in [0, 1), got {gamma}")
    if terminal:
        return float(r)
    return float(r + gamma * v_next_target)


def critic_loss(v_s, target):
    return float((target - v_s) ** 2)


def critic_loss_grad(v_s, target):
    """d loss / d v_s; the target is a constant."""
    return -2.0 * (target - v_s)


def advantage(r, v_next_target, v_s, gamma, terminal):
    return td_target(r, v_next_target, gamma, terminal) - v_s


class GaussianPolicy:
    """Diagonal Gaussian policy: state-dependent mean, learnable log-std."""

    def __init__(self, mean_net: Mlp, log_std):
        self.mean_net = mean_net
        self.log_std = np.clip(np.array(log_std, dtype=np.float64).reshape(-1),
                               LOG_STD_MIN, LOG_STD_MAX)
        if self.log_std.size != mean_net.layer_sizes[-1]:
            raise CongruenceError("log_std size must match the action dimension")
        self._grad = mean_net.params.zeros_like()

    @classmethod
    def create(cls, obs_dim, action_dim, hidden=(32, 32), activation="tanh", seed=0,
               init_std=0.5):
        net = mlp_init((obs_dim, *hidden, action_dim), activation, seed, out_scale=0.1)
        return cls(net, np.full(action_dim, math.log(init_std)))

    @property
    def std(self):
        return np.exp(self.log_std)

    def mean(self, s):
        return self.mean_net.forward(s)

    def sample(self, s, rng):
        return self.mean(s) + self.std * rng.standard_normal(self.log_std.size)

    def log_prob(self, s, a):
        mu = self.mean(s)
        z = (np.asarray(a) - mu) / self.std
        return float(-0.5 * np.dot(z, z) - np.sum(self.log_std)
                     - 0.5 * z.size * math.log(2.0 * math.pi))


def actor_step(policy: GaussianPolicy, s, a, adv, alpha, clip_norm=None) -> GaussianPolicy:
    """Ascend ``adv * grad log pi(a|s)`` in place; returns ``policy``."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != policy.log_std.shape:
        raise CongruenceError(f"action of shape {a.shape}, expected {policy.log_std.shape}")
    if adv == 0.0:
        return policy
    mu, cache = policy.mean_net.forward_cached(s)
    inv_var = np.exp(-2.0 * policy.log_std)
    diff = a - mu
    # descend on -adv * log pi
    grads = policy.mean_net.backward(cache, -adv * diff * inv_var, out=policy._grad)
    sgd_step(policy.mean_net, grads, SgdConfig(alpha, clip_norm))
    g_log_std = adv * (diff * diff * inv_var - 1.0)
    policy.log_std = np.clip(policy.log_std + alpha * clip_by_norm(g_log_std, clip_norm),
                             LOG_STD_MIN, LOG_STD_MAX)
    return policy


class StepDiagnostics(NamedTuple):
    v_s: float
    target: float
    advantage: float
    tsoft: Optional[TSoftDiagnostics]


class Agent:
    """Critic ``theta``, its target ``phi``, a Gaussian policy and an update rule."""

    def __init__(self, critic: Mlp, policy: GaussianPolicy, rule: UpdateRule, gamma=0.99,
                 critic_cfg=SgdConfig(), actor_cfg=SgdConfig()):
        if critic.layer_sizes[-1] != 1:
            raise ParameterError("critic must output a scalar")
        if not 0.0 <= gamma < 1.0:
            raise ParameterError("gamma must lie in [0, 1)")
        self.critic = critic
        self.policy = policy
        self.rule = rule
        self.gamma = gamma
        self.critic_cfg = critic_cfg
        self.actor_cfg = actor_cfg
        self.updater = TargetUpdater(rule, critic.params)
        self.target: ParamSet = self.updater.make_target(critic.params)
        self.target_net = critic if self.target is critic.params else critic.bind(self.target)
        self._grad = critic.params.zeros_like()

    @classmethod
    def create(cls, obs_dim, action_dim, rule, seed=0, hidden=(32, 32), activation="tanh",
               gamma=0.99, learning_rate=5e-4, clip_norm=None):
        critic_seed, actor_seed = np.random.SeedSequence(seed).generate_state(2)
        critic = mlp_init((obs_dim, *hidden, 1), activation, int(critic_seed))
        policy = GaussianPolicy.create(obs_dim, action_dim, hidden, activation, int(actor_seed))
        cfg = SgdConfig(learning_rate, clip_norm)
        return cls(critic, policy, rule, gamma, cfg, cfg)

    @property
    def tsoft_state(self):
        return self.updater.state

    def value(self, s, target=False) -> float:
        return float((self.target_net if target else self.critic).forward(s)[0])

    def act(self, s, rng=None):
        """Sampled action, or the mean action when ``rng`` is None."""
        return self.policy.mean(s) if rng is None else self.policy.sample(s, rng)

    def target_gap(self) -> float:
        return mean_abs_diff(self.critic.params, self.target)


def agent_step(agent: Agent, tr: Transition) -> StepDiagnostics:
    """One online update from a single transition (agent is modified in place)."""
    v_out, cache = agent.critic.forward_cached(tr.s)
    v_s = float(v_out[0])
    v_next = 0.0 if tr.terminal else float(agent.target_net.forward(tr.s_next)[0])
    target = td_target(tr.r, v_next, agent.gamma, tr.terminal)
    adv = target - v_s

    grads = agent.critic.backward(cache, np.array([critic_loss_grad(v_s, target)]),
                                  out=agent._grad)
    sgd_step(agent.critic, grads, agent.critic_cfg)
    actor_step(agent.policy, tr.s, tr.a, adv, agent.actor_cfg.learning_rate,
               agent.actor_cfg.clip_norm)
    diag = agent.updater(agent.critic.params, agent.target)
    return StepDiagnostics(v_s, target, adv, diag)
