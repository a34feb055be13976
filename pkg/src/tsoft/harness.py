"""Experiment runner: seeded RL trials, the synthetic stream benchmark, reports.

Everything is written as CSV.  A trial for seed ``s`` draws all of its
randomness from ``numpy.random.SeedSequence(s)``, so trials are independent
of each other and of which other seeds or conditions run alongside.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .envs import ENVS, make_env
from .errors import ParameterError
from .rl import Agent, Transition, agent_step
from .target_update import INF, SIGMA_RULES, UpdateRule, track

DEFAULT_EPISODES = {"balance": 150, "swingup": 300}

SUMMARY_HEADER = ("condition", "seed", "score", "final_diff")
CURVE_HEADER = ("episode", "return", "steps", "mean_abs_diff")
DIAG_HEADER = ("step", "subset", "delta_sq", "w", "tau_i")


def fmt(x) -> str:
    """Shortest round-trip decimal form, so CSVs are reproducible byte for byte."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def parse_seeds(text: str) -> tuple:
    """``"0..19"`` (inclusive) or ``"1,2,5"``."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            seeds = tuple(range(int(lo), int(hi) + 1))
        else:
            seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ParameterError(f"cannot parse seeds {text!r}; use a..b or a,b,c") from None
    if not seeds:
        raise ParameterError(f"empty seed list {text!r}")
    return seeds


def format_seeds(seeds: Sequence[int]) -> str:
    seeds = tuple(seeds)
    if len(seeds) > 1 and seeds == tuple(range(seeds[0], seeds[-1] + 1)):
        return f"{seeds[0]}..{seeds[-1]}"
    return ",".join(str(s) for s in seeds)


def parse_float(text: str) -> float:
    if text.strip().lower() in ("inf", "infinity", "+inf"):
        return INF
    return float(text)


@dataclass
class ExperimentConfig:
    env: str = "balance"
    rule: str = "tsoft"
    tau: float = 0.3
    nu: float = 1.0
    sigma_init: float = 1e8
    period: int = 100
    gamma: float = 0.99
    alpha: float = 5e-4
    episodes: Optional[int] = None  # None: per-environment default
    seeds: tuple = tuple(range(20))
    out: str = "runs"
    hidden: tuple = (32, 32)
    activation: str = "tanh"
    eval_episodes: int = 50
    eval_stochastic: bool = False
    sigma_update: str = "nominal"
    clip_norm: Optional[float] = None
    diag_every: int = 100

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self):
        if self.env not in ENVS:
            raise ParameterError(f"unknown env {self.env!r}; choose from {sorted(ENVS)}")
        if not self.seeds:
            raise ParameterError("seeds must be non-empty")
        if self.episodes is not None and self.episodes < 1:
            raise ParameterError("episodes must be >= 1")
        if self.eval_episodes < 1:
            raise ParameterError("eval_episodes must be >= 1")
        if self.diag_every < 1:
            raise ParameterError("diag_every must be >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ParameterError("gamma must lie in [0, 1)")
        if self.sigma_update not in SIGMA_RULES:
            raise ParameterError(f"sigma_update must be one of {SIGMA_RULES}")
        self.update_rule  # validates the rule parameters

    @property
    def update_rule(self) -> UpdateRule:
        if self.rule == "none":
            return UpdateRule.none()
        if self.rule == "hard":
            return UpdateRule.hard(self.period)
        if self.rule == "soft":
            return UpdateRule.soft(self.tau)
        if self.rule == "tsoft":
            return UpdateRule.tsoft(self.tau, self.nu, self.sigma_init, self.sigma_update)
        raise ParameterError(f"unknown rule {self.rule!r}")

    @property
    def n_episodes(self) -> int:
        return self.episodes if self.episodes is not None else DEFAULT_EPISODES[self.env]

    @property
    def condition(self) -> str:
        return f"{self.env}_{self.update_rule.label}"

    # flat key=value text format
    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                s = "none"
            elif f.name == "seeds":
                s = format_seeds(v)
            elif f.name == "hidden":
                s = ",".join(str(h) for h in v)
            elif isinstance(v, bool):
                s = str(v).lower()
            elif isinstance(v, float):
                s = repr(v)
            else:
                s = str(v)
            lines.append(f"{f.name}={s}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        types = {f.name: f for f in dataclasses.fields(cls)}
        kw = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if not sep or key not in types:
                raise ParameterError(f"config line {n}: unknown or malformed entry {line!r}")
            kw[key] = _parse_field(key, val)
        return cls(**kw)

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())


def _parse_field(key, val):
    try:
        if key in ("episodes", "clip_norm") and val.lower() == "none":
            return None
        if key == "seeds":
            return parse_seeds(val)
        if key == "hidden":
            return tuple(int(h) for h in val.split(",") if h.strip())
        if key == "eval_stochastic":
            if val.lower() not in ("true", "false"):
                raise ValueError(val)
            return val.lower() == "true"
        if key in ("period", "episodes", "eval_episodes", "diag_every"):
            return int(val)
        if key in ("tau", "nu", "sigma_init", "gamma", "alpha", "clip_norm"):
            return parse_float(val)
        return val
    except ValueError:
        raise ParameterError(f"bad value for {key}: {val!r}") from None


@dataclass
class RunRecord:
    condition: str
    seed: int
    returns: List[float]
    steps: List[int]
    diffs: List[float]
    eval_returns: List[float]
    score: float
    final_diff: float
    diagnostics: list = field(default_factory=list)  # (step, subset, delta_sq, w, tau_i)
    fast_track_violations: int = 0

    def summary_row(self):
        return (self.condition, self.seed, self.score, self.final_diff)


def _run_episode(env, agent, reset_seed, rng=None, learn=True, on_step=None):
    s = env.reset(reset_seed)
    obs = env.observe(s)
    total, n = 0.0, 0
    while True:
        a = agent.act(obs, rng)
        res = env.step(a)
        obs_next = env.observe(res.s_next)
        if learn:
            diag = agent_step(agent, Transition(obs, a, res.r, obs_next, res.terminal))
            if on_step is not None:
                on_step(diag)
        total += res.r
        n += 1
        obs = obs_next
        if res.terminal or res.truncated:
            return total, n


def run_seed(config: ExperimentConfig, seed: int) -> RunRecord:
    """Train one trial, then evaluate it; nothing is written to disk."""
    env = make_env(config.env)
    agent_ss, explore_ss, reset_ss, eval_ss = np.random.SeedSequence(seed).spawn(4)
    agent = Agent.create(env.spec.obs_dim, env.spec.action_dim, config.update_rule,
                         seed=int(agent_ss.generate_state(1)[0]), hidden=config.hidden,
                         activation=config.activation, gamma=config.gamma,
                         learning_rate=config.alpha, clip_norm=config.clip_norm)
    explore = np.random.default_rng(explore_ss)
    resets = np.random.default_rng(reset_ss)
    names = agent.critic.params.names

    record = RunRecord(config.condition, seed, [], [], [], [], math.nan, math.nan)
    step = 0

    def on_step(diag):
        nonlocal step
        step += 1
        d = diag.tsoft
        if d is None:
            return
        # fast tracking: a step within the scale is never slower than soft update
        inside = d.delta_sq <= d.sigma_sq
        record.fast_track_violations += int(np.count_nonzero(inside & (d.tau_i < agent.rule.tau)))
        if step % config.diag_every == 0:
            for i, name in enumerate(names):
                record.diagnostics.append((step, name, float(d.delta_sq[i]), float(d.w[i]),
                                           float(d.tau_i[i])))

    for _ in range(config.n_episodes):
        ret, n = _run_episode(env, agent, int(resets.integers(2 ** 31)), explore, True, on_step)
        record.returns.append(ret)
        record.steps.append(n)
        record.diffs.append(agent.target_gap())

    eval_rng = np.random.default_rng(eval_ss)
    act_rng = eval_rng if config.eval_stochastic else None
    for _ in range(config.eval_episodes):
        ret, _ = _run_episode(env, agent, int(eval_rng.integers(2 ** 31)), act_rng, learn=False)
        record.eval_returns.append(ret)
    record.score = float(statistics.median(record.eval_returns))
    record.final_diff = agent.target_gap()
    return record


def write_csv(path_or_file, header, rows) -> None:
    """Write rows with :func:`fmt` formatting to a path or an open text file."""
    if hasattr(path_or_file, "write"):
        w = csv.writer(path_or_file, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([r if isinstance(r, str) else fmt(r) for r in row])
        return
    with open(path_or_file, "w", newline="") as f:
        write_csv(f, header, rows)


def write_record(record: RunRecord, out_dir) -> None:
    out_dir = Path(out_dir)
    write_csv(out_dir / f"curves_{record.seed}.csv", CURVE_HEADER,
               zip(range(len(record.returns)), record.returns, record.steps, record.diffs))
    write_csv(out_dir / f"diag_{record.seed}.csv", DIAG_HEADER, record.diagnostics)


def write_summary(records: Iterable[RunRecord], path) -> None:
    write_csv(path, SUMMARY_HEADER, (r.summary_row() for r in records))


def _run_seed_star(args):
    return run_seed(*args)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> List[RunRecord]:
    """Run every seed of ``config`` and write its CSV files under ``config.out``.

    Files: ``config.txt``, ``curves_<seed>.csv``, ``diag_<seed>.csv`` and
    ``summary.csv``.  Records come back in seed order regardless of
    ``workers``.
    """
    config.validate()
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    config.save(out / "config.txt")
    jobs = [(config, s) for s in config.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_seed_star, jobs))
    else:
        records = [run_seed(*job) for job in jobs]
    for rec in records:
        write_record(rec, out)
    write_summary(records, out / "summary.csv")
    return records


# -- synthetic stream benchmark -------------------------------------------

@dataclass(frozen=True)
class StreamSpec:
    """Slow ramp plus Gaussian noise, with a fraction of steps replaced by spikes.

    Spikes have magnitude ``outlier_scale * noise`` and random sign.
    """

    slope: float = 0.01
    noise: float = 1.0
    outlier_rate: float = 0.01
    outlier_scale: float = 50.0
    length: int = 2000

    def __post_init__(self):
        if self.length < 1:
            raise ParameterError("length must be >= 1")
        if self.noise < 0 or self.outlier_scale < 0:
            raise ParameterError("noise and outlier_scale must be >= 0")
        if not 0.0 <= self.outlier_rate <= 1.0:
            raise ParameterError("outlier_rate must lie in [0, 1]")
        if not all(math.isfinite(v) for v in (self.slope, self.noise, self.outlier_scale)):
            raise ParameterError("stream parameters must be finite")


def make_stream(spec: StreamSpec, seed: int):
    """Return ``(signal, observed)`` arrays for one seed."""
    rng = np.random.default_rng(seed)
    signal = spec.slope * np.arange(spec.length, dtype=np.float64)
    eps = spec.noise * rng.standard_normal(spec.length)
    spikes = rng.random(spec.length) < spec.outlier_rate
    signs = rng.choice((-1.0, 1.0), size=spec.length)
    eps[spikes] = spec.outlier_scale * spec.noise * signs[spikes]
    return signal, signal + eps


def tracking_error(spec: StreamSpec, rule: UpdateRule, seed: int) -> float:
    signal, observed = make_stream(spec, seed)
    return float(np.mean(np.abs(track(observed, rule) - signal)))


def synthetic_benchmark(spec: StreamSpec, rules: Sequence[UpdateRule], seeds: Sequence[int]):
    """Time-averaged ``|phi_t - signal_t|`` for every rule and seed.

    Returns rows ``(rule_label, seed, error)``, rules outer, seeds inner.
    """
    if not rules or not seeds:
        raise ParameterError("need at least one rule and one seed")
    return [(rule.label, int(s), tracking_error(spec, rule, s)) for rule in rules for s in seeds]


BENCH_HEADER = ("rule", "seed", "error")


def write_benchmark(rows, path_or_file) -> None:
    write_csv(path_or_file, BENCH_HEADER, rows)


# -- reports ---------------------------------------------------------------

REPORT_HEADER = ("condition", "n", "mean_final_diff", "std_final_diff", "median_score")


def read_summary(path) -> list:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != SUMMARY_HEADER:
            raise ParameterError(f"{path}: unexpected summary header {reader.fieldnames}")
        return [(r["condition"], int(r["seed"]), float(r["score"]), float(r["final_diff"]))
                for r in reader]


def diff_report(rows) -> list:
    """Per-condition mean/spread of final target gaps and median score.

    ``rows`` are RunRecords or ``(condition, seed, score, final_diff)`` tuples.
    Conditions keep first-seen order.
    """
    groups = {}
    for r in rows:
        cond, _, score, diff = r.summary_row() if isinstance(r, RunRecord) else r
        groups.setdefault(cond, []).append((score, diff))
    if not groups:
        raise ParameterError("no records to report")
    out = []
    for cond, vals in groups.items():
        scores = [v[0] for v in vals]
        diffs = np.array([v[1] for v in vals])
        out.append((cond, len(vals), float(diffs.mean()), float(diffs.std()),
                    float(statistics.median(scores))))
    return out


def report_dir(path) -> list:
    files = sorted(Path(path).rglob("summary.csv"))
    if not files:
        raise ParameterError(f"no summary.csv under {path}")
    rows = []
    for f in files:
        rows.extend(read_summary(f))
    return diff_report(rows)


def write_report(rows, path_or_file) -> None:
    write_csv(path_or_file, REPORT_HEADER, rows)
