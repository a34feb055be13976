"""Target-network update rules: hard copy, soft (EMA) and t-soft.

The t-soft rule replaces the fixed interpolation ratio of the soft update by
a per-subset ratio derived from a student-t weight.  Each subset ``i`` keeps a
scalar scale ``sigma_sq[i]``; at every call::

    delta_sq_i = mean((theta_i - phi_i) ** 2)
    w_i        = (nu + 1) / (nu + delta_sq_i / sigma_sq_i)
    tau_i      = w_i / (W + w_i),           W = (1 - tau) / tau
    sigma_sq_i = (1 - tau) * sigma_sq_i + tau * delta_sq_i
    phi_i      = (1 - tau_i) * phi_i + tau_i * theta_i

A subset whose main parameters jump far from the target (relative to the
scale) gets a small ``w_i`` and is barely copied; with ``nu = inf`` every
``w_i`` is 1 and the rule is exactly the soft update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConvergenceError, DomainError, ParameterError
from .params import ParamSet, check_congruent, lerp

INF = math.inf
DEFAULT_SIGMA_SQ_INIT = 1e8
DEFAULT_HARD_PERIOD = 100
SIGMA_SQ_FLOOR = 1e-30

SIGMA_RULES = ("nominal", "tau_i", "fixed")


def _check_tau(tau):
    if not (isinstance(tau, (int, float)) and 0.0 < tau <= 1.0):
        raise ParameterError(f"tau must lie in (0, 1], got {tau!r}")


def _check_nu(nu):
    if not (nu > 0) or math.isnan(nu):
        raise ParameterError(f"nu must be > 0 or inf, got {nu!r}")


@dataclass
class TSoftState:
    """Persistent state of the t-soft rule for one target network.

    ``sigma_rule`` selects how the scale is refreshed: ``"nominal"`` blends
    with the fixed tau (default), ``"tau_i"`` with the per-subset ratio, and
    ``"fixed"`` never changes it.
    """

    tau: float
    nu: float
    W: float
    sigma_sq: np.ndarray
    sigma_rule: str = "nominal"

    def copy(self) -> "TSoftState":
        return replace(self, sigma_sq=self.sigma_sq.copy())


def make_tsoft_state(tau, nu, sigma_sq_init=DEFAULT_SIGMA_SQ_INIT, n_subsets=1,
                     sigma_rule="nominal") -> TSoftState:
    _check_tau(tau)
    _check_nu(nu)
    if not (sigma_sq_init > 0 and math.isfinite(sigma_sq_init)):
        raise ParameterError(f"sigma_sq_init must be finite and > 0, got {sigma_sq_init!r}")
    if int(n_subsets) < 1:
        raise ParameterError("n_subsets must be >= 1")
    if sigma_rule not in SIGMA_RULES:
        raise ParameterError(f"sigma_rule must be one of {SIGMA_RULES}")
    W = (1.0 - tau) / tau
    return TSoftState(float(tau), float(nu), W, np.full(int(n_subsets), float(sigma_sq_init)),
                      sigma_rule)


def tsoft_weight(delta_sq, sigma_sq, nu):
    """Student-t weight ``(nu + 1) / (nu + delta_sq / sigma_sq)``.

    Works on scalars or arrays.  ``nu = inf`` returns exactly 1.
    """
    if np.any(np.asarray(sigma_sq) <= 0):
        raise ParameterError("sigma_sq must be > 0")
    if nu == INF:
        return np.ones_like(delta_sq, dtype=np.float64) if np.ndim(delta_sq) else 1.0
    return (nu + 1.0) / (nu + delta_sq / sigma_sq)


def tsoft_gate(w, W):
    """Per-subset interpolation ratio ``w / (W + w)``."""
    return w / (W + w)


class TSoftDiagnostics(NamedTuple):
    delta_sq: np.ndarray
    w: np.ndarray
    tau_i: np.ndarray
    sigma_sq: np.ndarray  # scale used for the weight, before this call's refresh


def tsoft_update(state: TSoftState, theta: ParamSet, phi: ParamSet, inplace=False):
    """One t-soft step of ``phi`` toward ``theta``.

    Returns ``(phi_new, state_new, diagnostics)``.  With ``inplace=True`` the
    given ``phi`` and ``state`` are modified and returned; otherwise both are
    copied first.
    """
    check_congruent(theta, phi)
    if state.sigma_sq.shape != (len(theta),):
        raise ParameterError(
            f"state has {state.sigma_sq.size} scales for {len(theta)} subsets")
    if not inplace:
        phi, state = phi.copy(), state.copy()

    lengths = np.asarray(theta.lengths)
    d = theta.flat - phi.flat
    delta_sq = np.add.reduceat(d * d, theta.offsets) / lengths
    if not np.all(np.isfinite(delta_sq)):
        raise DomainError("non-finite parameter values")

    # weight uses the scale from before this call
    sigma_sq = state.sigma_sq
    w = tsoft_weight(delta_sq, sigma_sq, state.nu)
    if state.nu == INF:
        # exact reversion: the scalar tau goes through the same lerp as soft_update
        tau_i = np.full(len(lengths), state.tau)
        tau_flat = state.tau
    else:
        tau_i = tsoft_gate(w, state.W)
        tau_flat = np.repeat(tau_i, lengths)

    if state.sigma_rule == "nominal":
        state.sigma_sq = (1.0 - state.tau) * state.sigma_sq + state.tau * delta_sq
    elif state.sigma_rule == "tau_i":
        state.sigma_sq = (1.0 - tau_i) * state.sigma_sq + tau_i * delta_sq
    np.maximum(state.sigma_sq, SIGMA_SQ_FLOOR, out=state.sigma_sq)

    phi.flat[:] = lerp(phi.flat, theta.flat, tau_flat)
    return phi, state, TSoftDiagnostics(delta_sq, w, tau_i, sigma_sq)


def soft_update(phi: ParamSet, theta: ParamSet, tau: float, inplace=False) -> ParamSet:
    """Exponential moving average step ``phi <- (1 - tau) phi + tau theta``."""
    check_congruent(theta, phi)
    _check_tau(tau)
    out = phi if inplace else phi.copy()
    out.flat[:] = lerp(phi.flat, theta.flat, tau)
    return out


def hard_update(phi: ParamSet, theta: ParamSet, inplace=False) -> ParamSet:
    """Copy ``theta`` into ``phi``."""
    check_congruent(theta, phi)
    out = phi if inplace else phi.copy()
    out.flat[:] = theta.flat
    return out


# -- rule selection --------------------------------------------------------

RULE_KINDS = ("none", "hard", "soft", "tsoft")


@dataclass(frozen=True)
class UpdateRule:
    """Which target update to apply.  Build with the class methods."""

    kind: str
    tau: float = 1.0
    nu: float = INF
    sigma_sq_init: float = DEFAULT_SIGMA_SQ_INIT
    period: int = DEFAULT_HARD_PERIOD
    sigma_rule: str = "nominal"

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ParameterError(f"unknown rule {self.kind!r}; expected one of {RULE_KINDS}")
        _check_tau(self.tau)
        _check_nu(self.nu)
        if not (self.sigma_sq_init > 0 and math.isfinite(self.sigma_sq_init)):
            raise ParameterError("sigma_sq_init must be finite and > 0")
        if int(self.period) != self.period or self.period < 1:
            raise ParameterError("hard-update period must be a positive integer")
        if self.sigma_rule not in SIGMA_RULES:
            raise ParameterError(f"sigma_rule must be one of {SIGMA_RULES}")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def hard(cls, period=DEFAULT_HARD_PERIOD):
        return cls("hard", period=period)

    @classmethod
    def soft(cls, tau):
        return cls("soft", tau=tau)

    @classmethod
    def tsoft(cls, tau, nu, sigma_sq_init=DEFAULT_SIGMA_SQ_INIT, sigma_rule="nominal"):
        return cls("tsoft", tau=tau, nu=nu, sigma_sq_init=sigma_sq_init, sigma_rule=sigma_rule)

    @property
    def label(self) -> str:
        """Short, comma-free name for CSV files."""
        if self.kind == "none":
            return "none"
        if self.kind == "hard":
            return f"hard_p{self.period}"
        if self.kind == "soft":
            return f"soft_tau{self.tau:g}"
        return f"tsoft_tau{self.tau:g}_nu{self.nu:g}"


class TargetUpdater:
    """Applies an :class:`UpdateRule` to a (main, target) pair step by step.

    With rule ``none`` the target *is* the main ParamSet, so callers should
    obtain the target through :meth:`make_target`.
    """

    def __init__(self, rule: UpdateRule, theta: ParamSet):
        self.rule = rule
        self.steps = 0
        self.state = None
        if rule.kind == "tsoft":
            self.state = make_tsoft_state(rule.tau, rule.nu, rule.sigma_sq_init, len(theta),
                                          rule.sigma_rule)

    def make_target(self, theta: ParamSet) -> ParamSet:
        return theta if self.rule.kind == "none" else theta.copy()

    def __call__(self, theta: ParamSet, phi: ParamSet):
        """Update ``phi`` in place; returns t-soft diagnostics or None."""
        self.steps += 1
        kind = self.rule.kind
        if kind == "soft":
            soft_update(phi, theta, self.rule.tau, inplace=True)
        elif kind == "tsoft":
            _, _, diag = tsoft_update(self.state, theta, phi, inplace=True)
            return diag
        elif kind == "hard":
            if self.steps % self.rule.period == 0:
                hard_update(phi, theta, inplace=True)
        elif phi is not theta:
            raise ParameterError("rule 'none' requires the target to alias the main parameters")
        return None


def track(stream: Sequence[float], rule: UpdateRule) -> np.ndarray:
    """Run a one-parameter target through ``rule`` while the main value follows ``stream``.

    The target starts equal to the first sample.  Returns the target value
    after each sample (the first entry is the first sample itself).
    """
    xs = np.asarray(stream, dtype=np.float64)
    if xs.ndim != 1 or xs.size < 1:
        raise ParameterError("stream must be a non-empty 1-d sequence")
    theta = ParamSet(["x"], [1], xs[:1])
    updater = TargetUpdater(rule, theta)
    phi = updater.make_target(theta)
    out = np.empty_like(xs)
    out[0] = phi.flat[0]
    for t in range(1, xs.size):
        theta.flat[0] = xs[t]
        updater(theta, phi)
        out[t] = phi.flat[0]
    return out


def student_t_location_mle(samples, nu, sigma, mu_init=None, tol=1e-12, max_iters=10_000):
    """Location MLE of a 1-d student-t with known scale, by fixed-point iteration.

    Iterates ``mu <- sum(w x) / sum(w)`` with
    ``w = (nu + 1) / (nu + (x - mu)**2 / sigma**2)`` until the step is below
    ``tol``.  Starts from the sample mean unless ``mu_init`` is given.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 1:
        raise ParameterError("need at least one sample")
    if not np.all(np.isfinite(x)):
        raise DomainError("samples must be finite")
    _check_nu(nu)
    if not sigma > 0:
        raise ParameterError("sigma must be > 0")
    mu = float(np.mean(x)) if mu_init is None else float(mu_init)
    s2 = float(sigma) ** 2
    for _ in range(int(max_iters)):
        w = tsoft_weight((x - mu) ** 2, s2, nu)
        new = float(np.dot(w, x) / np.sum(w))
        if abs(new - mu) < tol:
            return new
        mu = new
    raise ConvergenceError(f"no convergence in {max_iters} iterations (last mu={mu!r})", last=mu)
