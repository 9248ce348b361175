import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stardiff.core import ConfigError, seeded_stream
from stardiff.corpus import (
    DyckSource,
    MarkovChain,
    ParseError,
    dyck_sample,
    is_balanced,
    markov_exact,
    markov_logprob,
    markov_sample,
    read_chain,
    read_dataset,
    write_chain,
    write_dataset,
)


def identity_chain():
    return MarkovChain(np.array([1.0, 0.0]), np.eye(2))


def test_chain_validation():
    with pytest.raises(ConfigError):
        MarkovChain(np.array([0.5, 0.6]), np.eye(2))
    with pytest.raises(ConfigError):
        MarkovChain(np.array([0.5, 0.5]), np.array([[0.5, 0.6], [0.5, 0.5]]))
    with pytest.raises(ConfigError):
        MarkovChain(np.array([1.0]), np.eye(1))


def test_absorbing_chain_sample():
    assert markov_sample(identity_chain(), 5, seeded_stream(0, 0)).tolist() == [0] * 5


def test_sticky_transition_frequency(chain09):
    x = markov_sample(chain09, 2, seeded_stream(0, 0), 100_000)
    assert abs(np.mean(x[:, 0] == x[:, 1]) - 0.9) < 0.005
    assert x.max() < 2


def test_logprob_hand_value(chain09):
    # 0.5 * 0.9 * 0.9
    assert markov_logprob(chain09, [0, 0, 0]) == pytest.approx(math.log(0.405), abs=1e-12)
    assert markov_logprob(chain09, [0, 0, 0]) == pytest.approx(-0.9039, abs=1e-4)


def test_logprob_identity_chain():
    mc = MarkovChain(np.array([0.3, 0.7]), np.eye(2))
    assert markov_logprob(mc, [1, 1, 1]) == pytest.approx(math.log(0.7))
    assert markov_logprob(mc, [1, 0, 0]) == -math.inf


def test_exact_distribution_sums_to_one(chain_asym, chain3):
    for mc, L in [(chain_asym, 3), (chain3, 4)]:
        d = markov_exact(mc, L)
        assert abs(sum(d.values()) - 1) < 1e-12
        assert len(d) == mc.size**L


@given(st.integers(0, 2**31))
@settings(max_examples=25)
def test_samples_have_finite_logprob(seed):
    mc = MarkovChain(np.array([0.6, 0.4]), np.array([[0.8, 0.2], [0.3, 0.7]]))
    x = markov_sample(mc, 12, seeded_stream(seed, 0), 8)
    assert np.all(np.isfinite(markov_logprob(mc, x)))


def test_entropy_rate_matches_sample_perplexity(chain_asym):
    x = markov_sample(chain_asym, 64, seeded_stream(2, 0), 10_000)
    ppl = math.exp(-markov_logprob(chain_asym, x).sum() / x.size)
    assert abs(ppl / math.exp(chain_asym.entropy_rate()) - 1) < 0.02


def test_dyck_unique_outcome():
    ds = DyckSource(1, 4, 2)
    assert dyck_sample(ds, seeded_stream(0, 0)).tolist() == [0, 1]


def test_dyck_length_four_support():
    ds = DyckSource(1, 4, 4)
    rng = seeded_stream(0, 0)
    seen = {tuple(dyck_sample(ds, rng).tolist()) for _ in range(500)}
    assert seen == {(0, 1, 0, 1), (0, 0, 1, 1), (0, 1, 2, 2)}


def test_dyck_is_uniform_over_strings():
    ds = DyckSource(1, 4, 4)
    rng = seeded_stream(1, 0)
    draws = [tuple(dyck_sample(ds, rng).tolist()) for _ in range(30_000)]
    for s in {(0, 1, 0, 1), (0, 0, 1, 1), (0, 1, 2, 2)}:
        assert abs(draws.count(s) / len(draws) - 1 / 3) < 0.015


@given(st.integers(1, 3), st.integers(1, 4), st.integers(2, 12), st.integers(0, 2**31))
@settings(max_examples=40)
def test_dyck_always_balanced(k, depth, length, seed):
    ds = DyckSource(k, depth, length)
    x = dyck_sample(ds, seeded_stream(seed, 0))
    assert len(x) == length and is_balanced(x, ds)


def test_dyck_too_short():
    with pytest.raises(ConfigError):
        dyck_sample(DyckSource(1, 4, 1), seeded_stream(0, 0))


def test_is_balanced_rejects():
    ds = DyckSource(2, 2, 6)
    assert not is_balanced([0, 3, 4, 4, 4, 4], ds)  # mismatched types
    assert not is_balanced([0, 0, 0, 1, 1, 1], ds)  # too deep
    assert not is_balanced([4] * 6, ds)  # empty body
    assert is_balanced([0, 2, 3, 1, 4, 4], ds)


def test_dataset_round_trip(tmp_path):
    x = markov_sample(MarkovChain(np.full(4, 0.25), np.full((4, 4), 0.25)), 7, seeded_stream(0, 0), 1000)
    p = tmp_path / "d.jsonl"
    write_dataset(p, x)
    assert np.array_equal(np.stack(read_dataset(p, vocab_size=4)), x)


def test_dataset_rejects_out_of_range(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text('{"tokens":[0,1]}\n{"tokens":[999]}\n')
    with pytest.raises(ParseError, match=":2:"):
        read_dataset(p, vocab_size=4)


def test_dataset_rejects_malformed(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text('{"tokens":[0,1]}\nnot json\n')
    with pytest.raises(ParseError, match=":2:"):
        read_dataset(p)


def test_empty_dataset(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text("")
    assert read_dataset(p) == []


def test_chain_file_round_trip(tmp_path, chain3):
    write_chain(tmp_path / "c.json", chain3)
    back = read_chain(tmp_path / "c.json")
    assert np.array_equal(back.A, chain3.A) and np.array_equal(back.pi, chain3.pi)
