import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stardiff.core import (
    ConfigError,
    NotNormalized,
    RunConfig,
    Vocab,
    categorical_from_uniform,
    round_half_up,
    sample_categorical,
    seeded_stream,
)


def test_vocab_mask_id_is_one_past_last_token():
    assert Vocab(5).mask_id == 5
    with pytest.raises(ConfigError):
        Vocab(1)


def test_stream_is_reproducible():
    a = seeded_stream(42, 0).random(100)
    b = seeded_stream(42, 0).random(100)
    assert np.array_equal(a, b)


def test_distinct_streams_differ():
    a = seeded_stream(42, 0).random(100)
    b = seeded_stream(42, 1).random(100)
    assert np.any(a != b)


def test_stream_does_not_depend_on_other_streams():
    # drawing from stream 3 first must not perturb stream 7
    seeded_stream(42, 3).random(1000)
    assert np.array_equal(seeded_stream(42, 7).random(10), seeded_stream(42, 7).random(10))


def test_sample_categorical_point_mass():
    rng = seeded_stream(0, 0)
    assert all(sample_categorical([1.0, 0.0, 0.0], rng) == 0 for _ in range(200))


def test_sample_categorical_frequency():
    rng = seeded_stream(1, 0)
    u = rng.random(100_000)
    draws = categorical_from_uniform(np.broadcast_to([0.5, 0.5, 0.0], (len(u), 3)), u)
    assert abs(np.mean(draws == 0) - 0.5) < 0.01
    assert not np.any(draws == 2)


def test_sample_categorical_rejects_unnormalized():
    with pytest.raises(NotNormalized):
        sample_categorical([0.3, 0.3, 0.3], seeded_stream(0, 0))
    with pytest.raises(NotNormalized):
        sample_categorical([1.2, -0.2], seeded_stream(0, 0))


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6).filter(lambda p: sum(p) > 0.01), st.floats(0.0, 0.999999))
def test_inverse_cdf_never_selects_zero_mass(p, u):
    probs = np.array(p) / sum(p)
    k = int(categorical_from_uniform(probs, np.asarray(u)))
    assert probs[k] > 0


@pytest.mark.parametrize("x, want", [(0.5, 1), (1.5, 2), (2.49, 2), (15.36, 15), (0.0, 0)])
def test_round_half_up(x, want):
    assert round_half_up(x) == want


def test_config_json_round_trip():
    cfg = RunConfig(vocab=3, sequence_length=5, sampler="hybrid", t_on=0.4, clamped=[[0, 1], [4, 2]])
    back = RunConfig.from_json(cfg.to_json())
    assert back == cfg
    assert back.config_hash() == cfg.config_hash()
    assert json.loads(cfg.to_json())["clamped"] == [[0, 1], [4, 2]]


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict({"vocab": 2, "t_onn": 0.3})


@pytest.mark.parametrize(
    "changes",
    [
        {"t_on": 1.5},
        {"eta": -0.1},
        {"alpha_on": 1.0},
        {"alpha_on": 0.0},
        {"loop_fraction": 1.2},
        {"tau_remask": -1.0},
        {"tau_diffuse": -1.0},
        {"clamped": [[16, 0]]},
        {"clamped": [[0, 4]]},
        {"clamped": [[0, 1], [0, 2]]},
        {"sampler": "ddpm"},
        {"vocab": 1},
    ],
)
def test_config_invariants(changes):
    with pytest.raises(ConfigError):
        RunConfig(**changes)


def test_config_hash_changes_with_content():
    a = RunConfig()
    assert a.config_hash() != a.replace(base_seed=1).config_hash()


def test_initial_state_carries_clamps():
    x = RunConfig(vocab=3, sequence_length=4, clamped=[[1, 2]]).initial_state(2)
    assert x.tolist() == [[3, 2, 3, 3]] * 2
