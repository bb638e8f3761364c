import numpy as np
import pytest

from co2net.env import EnvConfig, MonodEnv, Transition, constant_policy, episode_return, run_episode
from co2net.errors import EpisodeFinishedError
from co2net.microalgae import advance, carbon_uptake, optimal_light


@pytest.fixture
def env(mparams):
    return MonodEnv(mparams, EnvConfig.around(mparams, 20.0, 20.0, seed=3))


def test_config_validation():
    for kw in ({"max_episode_steps": 0}, {"action_low": 2.0, "action_high": 1.0},
               {"init_ranges": ((0.0, 1.0), (1.0, 2.0))}, {"env_dt": 1e-5, "substep_dt": 1e-4},
               {"env_dt": 0.1, "substep_dt": 0.03}):
        with pytest.raises(ValueError):
            EnvConfig(**kw)


def test_defaults(env, mparams):
    c = env.config
    assert c.max_episode_steps == 200 and c.substeps == 2000
    assert c.action_high == pytest.approx(2 * optimal_light(mparams))
    assert c.init_ranges == ((10.0, 30.0), (10.0, 30.0))


def test_reset_in_range_and_reproducible(env):
    obs = env.reset(7)
    assert 10 <= obs[0] <= 30 and 10 <= obs[1] <= 30
    np.testing.assert_array_equal(env.reset(7), obs)
    assert not np.array_equal(env.reset(8), obs)


def test_step_contract(env, mparams):
    obs = env.reset(1)
    tr = env.step(12.0)
    assert isinstance(tr, Transition) and tr.step_index == 1 and not tr.episode_done
    assert tr.reward == carbon_uptake(obs[1], 12.0, mparams)
    np.testing.assert_array_equal(tr.observation, advance(*obs, 12.0, mparams, 5e-5, 2000))


def test_clamping(env, mparams):
    env.reset(1)
    s = env.state[1]
    assert env.step(-5.0).reward == 0.0
    env.reset(1)
    assert env.step(1e6).reward == carbon_uptake(s, env.config.action_high, mparams)


def test_episode_end(env):
    env.reset(0)
    for k in range(199):
        assert not env.step(10.0).episode_done
    assert env.step(10.0).episode_done
    with pytest.raises(EpisodeFinishedError):
        env.step(10.0)
    with pytest.raises(EpisodeFinishedError):
        MonodEnv(env.params, env.config).step(1.0)


def test_returns(env):
    assert episode_return(constant_policy(0.0), env, 2, seeds=[0, 1]) == (0.0, 0.0)
    seeds = list(range(3))
    best = episode_return(constant_policy(optimal_light(env.params)), env, 3, seeds)[0]
    for level in (1.0, 5.0, 10.0, 14.0, 16.0, 20.0, 30.0):
        assert best >= episode_return(constant_policy(level), env, 3, seeds)[0]


def test_independent_instances(mparams):
    a = MonodEnv(mparams, EnvConfig.around(mparams, 20.0, 20.0, seed=5))
    b = MonodEnv(mparams, EnvConfig.around(mparams, 20.0, 20.0, seed=5))
    oa = a.reset()
    a.reset()
    np.testing.assert_array_equal(oa, b.reset())


def test_descriptor_and_trace(env, tmp_path):
    text = env.descriptor()
    assert "observation_dim = 2" in text and "action_dim = 1" in text and "max_episode_steps = 200" in text
    tr = run_episode(constant_policy(15.0), env, seed=2, record=True)
    assert tr.states.shape == (201, 2) and tr.header == ["t", "X_ALG", "S", "reward", "I"]
    tr.to_csv(tmp_path / "ep.csv")
    assert (tmp_path / "ep.csv").read_text().startswith("t,X_ALG,S,reward,I")
