"""Augmented Random Search for linear policies.

Each iteration evaluates ``n_directions`` symmetric perturbations ``M +- noise*delta``
and steps along the return-weighted directions, scaled by the spread of the
returns. Optional top-b direction selection and observation normalization.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from co2net.errors import TrainingAbort
from co2net.integrate import SimulationTrace

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-8
LATE_FRACTION = 0.25
EVAL_SEED_BASE = 1_000_003


@dataclass
class LinearPolicy:
    M: np.ndarray
    obs_mean: np.ndarray
    obs_var: np.ndarray
    normalize: bool = False
    count: float = 0.0

    def __post_init__(self):
        self.M = np.atleast_2d(np.asarray(self.M, dtype=float))
        self.obs_mean = np.asarray(self.obs_mean, dtype=float).reshape(-1)
        self.obs_var = np.asarray(self.obs_var, dtype=float).reshape(-1)
        if self.M.shape[1] != len(self.obs_mean) or len(self.obs_mean) != len(self.obs_var):
            raise ValueError("policy matrix and normalization statistics disagree in dimension")
        if not (np.all(np.isfinite(self.M)) and np.all(np.isfinite(self.obs_mean))
                and np.all(np.isfinite(self.obs_var))):
            raise ValueError("policy entries must be finite")
        if np.any(self.obs_var < 0):
            raise ValueError("obs_var must be non-negative")

    @classmethod
    def zeros(cls, obs_dim, action_dim=1, normalize=False):
        return cls(np.zeros((action_dim, obs_dim)), np.zeros(obs_dim), np.ones(obs_dim), normalize)

    @property
    def shape(self):
        return self.M.shape

    def with_matrix(self, M):
        return replace(self, M=np.array(M, dtype=float))

    def features(self, obs):
        obs = np.asarray(obs, dtype=float)
        if not self.normalize:
            return obs
        std = np.sqrt(self.obs_var)
        return (obs - self.obs_mean) / np.where(std > 1e-8, std, 1.0)

    def act(self, obs):
        return self.M @ self.features(obs)

    __call__ = act

    def observe(self, batch):
        """Merge a batch of raw observations into the running mean/variance."""
        batch = np.atleast_2d(np.asarray(batch, dtype=float))
        n = len(batch)
        if n == 0:
            return
        bm = batch.mean(axis=0)
        bv = batch.var(axis=0)
        total = self.count + n
        d = bm - self.obs_mean
        if self.count == 0:
            mean, var = bm, bv
        else:
            mean = self.obs_mean + d * n / total
            var = (self.count * self.obs_var + n * bv + d * d * self.count * n / total) / total
        self.obs_mean, self.obs_var, self.count = mean, var, total

    def dumps(self) -> str:
        fmt = lambda v: " ".join(repr(float(x)) for x in np.ravel(v))
        return "\n".join([
            "# linear policy: action = M @ features(obs)",
            f"normalize = {str(self.normalize).lower()}",
            f"shape = {self.M.shape[0]} {self.M.shape[1]}",
            f"M = {fmt(self.M)}",
            f"obs_mean = {fmt(self.obs_mean)}",
            f"obs_var = {fmt(self.obs_var)}",
            f"count = {float(self.count)!r}",
            "",
        ])

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text):
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                k, v = line.split("=", 1)
                kv[k.strip()] = v.strip()
        try:
            rows, cols = (int(s) for s in kv["shape"].split())
            vec = lambda k: np.array([float(s) for s in kv[k].split()])
            return cls(vec("M").reshape(rows, cols), vec("obs_mean"), vec("obs_var"),
                       kv["normalize"] == "true", float(kv["count"]))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"malformed policy file: {exc}") from exc

    @classmethod
    def load(cls, path):
        return cls.loads(Path(path).read_text())


@dataclass(frozen=True)
class ArsConfig:
    n_directions: int = 8
    learning_rate: float = 0.02
    noise: float = 0.05
    episodes_per_candidate: int = 1
    top_directions: int | None = None
    alive_bonus_offset: float = 0.0
    total_steps: int = 200_000
    seed: int = 0
    normalize: bool = False
    eval_episodes: int = 10
    eval_seed: int = EVAL_SEED_BASE
    max_seconds: float | None = None

    def __post_init__(self):
        if self.n_directions < 1:
            raise ValueError("n_directions must be >= 1")
        if self.top_directions is None:
            object.__setattr__(self, "top_directions", self.n_directions)
        if not 1 <= self.top_directions <= self.n_directions:
            raise ValueError("require 1 <= top_directions <= n_directions")
        if not self.noise > 0:
            raise ValueError("noise must be positive")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.episodes_per_candidate < 1 or self.eval_episodes < 1:
            raise ValueError("episode counts must be >= 1")
        if self.total_steps < 0:
            raise ValueError("total_steps must be non-negative")


@dataclass
class LearningCurve:
    """Evaluation after 0, 1, 2, ... iterations."""
    iterations: list = field(default_factory=list)
    train_steps: list = field(default_factory=list)
    eval_steps: list = field(default_factory=list)
    returns: list = field(default_factory=list)
    return_std: list = field(default_factory=list)
    late_action: list = field(default_factory=list)
    aborted: bool = False

    def record(self, it, train_steps, eval_steps, mean, std, late):
        for name, v in zip(("iterations", "train_steps", "eval_steps", "returns", "return_std", "late_action"),
                           (it, train_steps, eval_steps, mean, std, late)):
            getattr(self, name).append(v)

    @property
    def r_s(self):
        return self.returns[0] if self.returns else None

    @property
    def r_e(self):
        return self.returns[-1] if self.returns else None

    @property
    def delta(self):
        """``r_e - r_s``; ``None`` when no training iteration ran."""
        return self.returns[-1] - self.returns[0] if len(self.returns) > 1 else None

    def trace(self) -> SimulationTrace:
        return SimulationTrace(
            times=np.array(self.iterations, dtype=float),
            states=np.column_stack([self.returns, self.return_std, self.late_action]),
            state_names=("return_mean", "return_std", "late_action"),
            flows=np.column_stack([self.train_steps, self.eval_steps]),
            flow_names=("train_steps", "eval_steps"),
        )

    def to_csv(self, path):
        self.trace().to_csv(path)


def perturb(policy: LinearPolicy, noise, rng):
    if not noise > 0:
        raise ValueError("noise must be positive")
    delta = rng.standard_normal(policy.M.shape)
    return policy.with_matrix(policy.M + noise * delta), policy.with_matrix(policy.M - noise * delta), delta


def update(policy: LinearPolicy, results, config: ArsConfig) -> LinearPolicy:
    """One ARS step from ``(r_plus, r_minus, delta)`` triples."""
    if not results:
        raise ValueError("at least one direction must be evaluated")
    rp = np.array([r[0] for r in results], dtype=float)
    rm = np.array([r[1] for r in results], dtype=float)
    if not (np.all(np.isfinite(rp)) and np.all(np.isfinite(rm))):
        raise TrainingAbort("non-finite rollout return", {"r_plus": rp.tolist(), "r_minus": rm.tolist()})
    deltas = np.stack([np.asarray(r[2], dtype=float) for r in results])
    sigma = float(np.std(np.concatenate([rp, rm])))
    if sigma < SIGMA_FLOOR:
        return policy
    b = min(config.top_directions, len(results))
    order = np.argsort(-np.maximum(rp, rm), kind="stable")[:b]
    step = np.tensordot(rp[order] - rm[order], deltas[order], axes=1)
    return policy.with_matrix(policy.M + config.learning_rate / (b * sigma) * step)


def rollout(policy, env, seed, offset=0.0):
    """Return ``(shifted return, observations, actions, steps)`` of one episode."""
    obs = env.reset(seed)
    total, n = 0.0, 0
    seen, actions = [obs], []
    done = False
    while not done:
        a = env.clamp(policy.act(obs))
        tr = env.step(a)
        total += tr.reward - offset
        n += 1
        actions.append(a)
        obs, done = tr.observation, tr.episode_done
        seen.append(obs)
    return total, np.array(seen), np.array(actions), n


def evaluate(policy, env, config: ArsConfig):
    """Mean/std return and late-episode mean action over fixed evaluation seeds."""
    returns, late, steps = [], [], 0
    for i in range(config.eval_episodes):
        r, _, acts, n = rollout(policy, env, config.eval_seed + i)
        returns.append(r)
        k = max(1, int(round(LATE_FRACTION * len(acts))))
        late.append(float(np.mean(acts[-k:])))
        steps += n
    return float(np.mean(returns)), float(np.std(returns)), float(np.mean(late)), steps


def train(env_factory, config: ArsConfig, policy: LinearPolicy | None = None):
    """Train a zero-initialised linear policy; returns ``(policy, LearningCurve)``.

    All candidates of one iteration share the same initial conditions (common
    random numbers), so return differences reflect the perturbation rather than
    the initial-state draw.
    """
    env = env_factory()
    eval_env = env_factory()
    if policy is None:
        policy = LinearPolicy.zeros(env.observation_dim, env.action_dim, config.normalize)
    rng = np.random.default_rng(config.seed)
    curve = LearningCurve()
    train_steps = eval_steps = 0
    mean, std, late, n = evaluate(policy, eval_env, config)
    eval_steps += n
    curve.record(0, 0, eval_steps, mean, std, late)
    start = time.monotonic()
    it = 0
    while train_steps < config.total_steps:
        if config.max_seconds is not None and time.monotonic() - start > config.max_seconds:
            log.warning("wall-clock budget exhausted after %d iterations", it)
            curve.aborted = True
            break
        seeds = rng.integers(0, 2**32, size=config.episodes_per_candidate)
        results, batch = [], []
        for _ in range(config.n_directions):
            plus, minus, delta = perturb(policy, config.noise, rng)
            pair = []
            for cand in (plus, minus):
                total = 0.0
                for s in seeds:
                    r, seen, _, n = rollout(cand, env, int(s), config.alive_bonus_offset)
                    total += r
                    train_steps += n
                    batch.append(seen)
                pair.append(total / len(seeds))
            results.append((pair[0], pair[1], delta))
        policy = update(policy, results, config)
        if policy.normalize:
            policy.observe(np.vstack(batch))
        it += 1
        mean, std, late, n = evaluate(policy, eval_env, config)
        eval_steps += n
        curve.record(it, train_steps, eval_steps, mean, std, late)
        log.debug("iter %d steps %d return %.6g late action %.6g", it, train_steps, mean, late)
    return policy, curve
