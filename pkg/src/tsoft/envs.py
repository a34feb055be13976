"""Seedable classic-control tasks integrated with semi-implicit Euler.

``balance``: cart-pole that must keep the pole upright (+1 per step, ends when
the pole tilts past 0.2 rad or the cart leaves +-2.4 m).

``swingup``: torque-limited pendulum starting near the hanging position;
reward is ``cos(angle)`` with angle 0 upright, no early termination.

Actions are normalized to [-1, 1] and scaled by the task's force/torque
limit.  Each environment works on a physical state vector and exposes
``observe(state)`` for the features the agent sees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError

DT = 0.02


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    obs_dim: int
    action_dim: int
    max_steps: int


@dataclass
class StepResult:
    s_next: np.ndarray
    r: float
    terminal: bool
    truncated: bool


def _action_value(action) -> float:
    a = float(np.asarray(action, dtype=np.float64).reshape(-1)[0])
    if not math.isfinite(a):
        raise DomainError(f"non-finite action {a!r}")
    return min(1.0, max(-1.0, a))


class _Env:
    spec: EnvSpec

    def __init__(self, max_steps=None):
        if max_steps is not None:
            if max_steps < 1:
                raise ParameterError("max_steps must be >= 1")
            self.spec = EnvSpec(self.spec.name, self.spec.state_dim, self.spec.obs_dim,
                                self.spec.action_dim, int(max_steps))
        self.state = None
        self.t = 0

    def reset(self, seed) -> np.ndarray:
        """Start an episode; the initial state is a pure function of ``seed``."""
        self.state = self.initial_state(seed)
        self.t = 0
        return self.state.copy()

    def set_state(self, state) -> np.ndarray:
        self.state = np.array(state, dtype=np.float64)
        self.t = 0
        return self.state.copy()

    def step(self, action) -> StepResult:
        if self.state is None:
            raise ParameterError("call reset() before step()")
        if self.t >= self.spec.max_steps:
            raise ParameterError("episode already finished")
        s, r, terminal = self.dynamics(self.state, _action_value(action))
        self.state = s
        self.t += 1
        truncated = not terminal and self.t >= self.spec.max_steps
        return StepResult(s.copy(), r, terminal, truncated)


class CartPoleBalance(_Env):
    """Cart-pole balance; state is ``[x, x_dot, angle, angle_dot]``."""

    spec = EnvSpec("balance", 4, 4, 1, 200)
    gravity = 9.8
    mass_cart = 1.0
    mass_pole = 0.1
    half_length = 0.5
    force_max = 10.0
    angle_limit = 0.2
    x_limit = 2.4

    def initial_state(self, seed):
        return np.random.default_rng(seed).uniform(-0.05, 0.05, size=4)

    def dynamics(self, state, a):
        x, x_dot, th, th_dot = (float(v) for v in state)
        force = a * self.force_max
        total = self.mass_cart + self.mass_pole
        pml = self.mass_pole * self.half_length
        cos, sin = math.cos(th), math.sin(th)
        tmp = (force + pml * th_dot * th_dot * sin) / total
        th_acc = (self.gravity * sin - cos * tmp) / (
            self.half_length * (4.0 / 3.0 - self.mass_pole * cos * cos / total))
        x_acc = tmp - pml * th_acc * cos / total
        x_dot += DT * x_acc
        x += DT * x_dot
        th_dot += DT * th_acc
        th += DT * th_dot
        terminal = abs(th) > self.angle_limit or abs(x) > self.x_limit
        return np.array([x, x_dot, th, th_dot]), 1.0, terminal

    def observe(self, state):
        return np.asarray(state, dtype=np.float64)


class PendulumSwingup(_Env):
    """Torque-driven pendulum; state is ``[angle, angle_dot]``, angle 0 upright.

    The angle is kept in (-pi, pi].  ``substeps`` Euler steps are taken per
    control step to keep energy error small.
    """

    spec = EnvSpec("swingup", 2, 3, 1, 300)
    gravity = 9.8
    mass = 1.0
    length = 1.0
    torque_max = 8.0
    damping = 0.0
    substeps = 20

    def initial_state(self, seed):
        rng = np.random.default_rng(seed)
        th = math.remainder(math.pi + rng.uniform(-0.05, 0.05), 2.0 * math.pi)
        return np.array([math.pi if th == -math.pi else th, rng.uniform(-0.05, 0.05)])

    def dynamics(self, state, a):
        th, th_dot = float(state[0]), float(state[1])
        ml2 = self.mass * self.length ** 2
        g_l = self.gravity / self.length
        u = a * self.torque_max / ml2
        c = self.damping / ml2
        h = DT / self.substeps
        for _ in range(self.substeps):
            th_dot += h * (g_l * math.sin(th) - c * th_dot + u)
            th += h * th_dot
        th = math.remainder(th, 2.0 * math.pi)
        if th == -math.pi:
            th = math.pi
        return np.array([th, th_dot]), math.cos(th), False

    def energy(self, state):
        th, th_dot = float(state[0]), float(state[1])
        return (0.5 * self.mass * self.length ** 2 * th_dot ** 2
                + self.mass * self.gravity * self.length * math.cos(th))

    def observe(self, state):
        th, th_dot = float(state[0]), float(state[1])
        return np.array([math.cos(th), math.sin(th), th_dot / 8.0])


ENVS = {"balance": CartPoleBalance, "swingup": PendulumSwingup}


def make_env(name, **kw):
    try:
        return ENVS[name](**kw)
    except KeyError:
        raise ParameterError(f"unknown environment {name!r}; choose from {sorted(ENVS)}") from None


# functional forms

def pendulum_balance_reset(seed):
    return CartPoleBalance().initial_state(seed)


def pendulum_balance_step(state, action):
    s, r, terminal = CartPoleBalance().dynamics(state, _action_value(action))
    return StepResult(s, r, terminal, False)


def pendulum_swingup_reset(seed):
    return PendulumSwingup().initial_state(seed)


def pendulum_swingup_step(state, action):
    s, r, terminal = PendulumSwingup().dynamics(state, _action_value(action))
    return StepResult(s, r, terminal, False)
