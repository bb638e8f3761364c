"""Reset/step environment for light control of the microalgae cultivation.

Observation ``(X_ALG, S)``, action light intensity ``I``, reward the CO2 uptake
evaluated at the pre-step state with the applied light. Episodes last a fixed
number of steps and never terminate early.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from co2net.errors import EpisodeFinishedError
from co2net.integrate import SimulationTrace
from co2net.microalgae import MonodParams, advance, carbon_uptake, optimal_light


@dataclass(frozen=True)
class EnvConfig:
    max_episode_steps: int = 200
    action_low: float = 0.0
    action_high: float = 1.0
    init_ranges: tuple = ((0.5, 1.5), (0.5, 1.5))
    env_dt: float = 0.1
    substep_dt: float = 5e-5
    seed: int | None = None

    def __post_init__(self):
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be >= 1")
        if not 0 <= self.action_low < self.action_high:
            raise ValueError("require 0 <= action_low < action_high")
        for lo, hi in self.init_ranges:
            if not 0 < lo <= hi:
                raise ValueError("initial-condition ranges must be positive with low <= high")
        if not self.env_dt >= self.substep_dt > 0:
            raise ValueError("require env_dt >= substep_dt > 0")
        n = self.env_dt / self.substep_dt
        if abs(n - round(n)) > 1e-9 * n:
            raise ValueError("env_dt must be an integer multiple of substep_dt")

    @property
    def substeps(self) -> int:
        return int(round(self.env_dt / self.substep_dt))

    @classmethod
    def around(cls, params: MonodParams, x_alg_0, s_0, init_low=0.5, init_high=1.5, **kw):
        """Defaults centred on a reference state, light bounds ``[0, 2 I*]``."""
        kw.setdefault("action_low", 0.0)
        kw.setdefault("action_high", 2.0 * optimal_light(params))
        ranges = ((init_low * x_alg_0, init_high * x_alg_0), (init_low * s_0, init_high * s_0))
        return cls(init_ranges=ranges, **kw)


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    reward: float
    step_index: int
    episode_done: bool


class MonodEnv:
    observation_dim = 2
    action_dim = 1

    def __init__(self, params: MonodParams, config: EnvConfig):
        self.params = params
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.max_episode_steps = config.max_episode_steps
        self.state = None
        self.steps = 0

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        (xl, xh), (sl, sh) = self.config.init_ranges
        self.state = (float(self.rng.uniform(xl, xh)), float(self.rng.uniform(sl, sh)))
        self.steps = 0
        return np.array(self.state)

    def clamp(self, action) -> float:
        a = float(np.asarray(action, dtype=float).reshape(-1)[0])
        return min(max(a, self.config.action_low), self.config.action_high)

    def step(self, action) -> Transition:
        if self.state is None:
            raise EpisodeFinishedError("call reset() before step()")
        if self.steps >= self.max_episode_steps:
            raise EpisodeFinishedError("episode finished; call reset()")
        I = self.clamp(action)
        X, S = self.state
        reward = carbon_uptake(S, I, self.params)
        self.state = advance(X, S, I, self.params, self.config.substep_dt, self.config.substeps)
        self.steps += 1
        return Transition(np.array(self.state), reward, self.steps, self.steps == self.max_episode_steps)

    def descriptor(self) -> str:
        """Plain-text binding description for external RL frameworks."""
        c = self.config
        (xl, xh), (sl, sh) = c.init_ranges
        return "\n".join([
            "observation_dim = 2",
            "observation_names = X_ALG, S",
            "observation_low = 0.0, 0.0",
            "observation_high = inf, inf",
            "action_dim = 1",
            "action_names = I",
            f"action_low = {c.action_low!r}",
            f"action_high = {c.action_high!r}",
            f"max_episode_steps = {c.max_episode_steps}",
            "termination = none",
            f"env_dt = {c.env_dt!r}",
            f"substep_dt = {c.substep_dt!r}",
            f"init_x_alg = {xl!r}, {xh!r}",
            f"init_s = {sl!r}, {sh!r}",
            "",
        ])


def run_episode(policy, env, seed=None, record=False):
    """Roll out one episode; returns ``(return, actions)`` or a trace when ``record``."""
    obs = env.reset(seed)
    total = 0.0
    actions, obs_rows, rewards = [], [obs], []
    done = False
    while not done:
        a = env.clamp(policy(obs))
        tr = env.step(a)
        total += tr.reward
        actions.append(a)
        rewards.append(tr.reward)
        obs_rows.append(tr.observation)
        obs, done = tr.observation, tr.episode_done
    if not record:
        return total, np.array(actions)
    n = len(actions)
    times = env.config.env_dt * np.arange(n + 1)
    return SimulationTrace(
        times=times,
        states=np.array(obs_rows),
        state_names=("X_ALG", "S"),
        flows=np.append(rewards, np.nan)[:, None],
        flow_names=("reward",),
        inputs=np.append(actions, np.nan)[:, None],
        input_names=("I",),
    )


def episode_return(policy, env, n_episodes, seeds=None):
    """Mean and standard deviation of undiscounted episode returns."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    seeds = list(seeds) if seeds is not None else [None] * n_episodes
    returns = [run_episode(policy, env, seeds[i])[0] for i in range(n_episodes)]
    return float(np.mean(returns)), float(np.std(returns))


def constant_policy(level):
    return lambda obs: level
