import itertools
import math

import pytest
import sympy as sp
import torch

from ldp_freq.errors import InputOutOfRange, ParameterError
from ldp_freq.mechanisms.baselines import (
    SsCounts,
    rr_accumulate,
    rr_decode,
    rr_encode,
    rr_encode_batch,
    rr_exact_probabilities,
    rr_message_distribution,
    rr_params,
    ss_accumulate,
    ss_decode,
    ss_encode,
    ss_encode_batch,
    ss_exact_inclusion,
    ss_message_distribution,
    ss_params,
)

LN2 = math.log(2)


def test_rr_probabilities():
    params = rr_params(LN2, 4)
    assert params.p_true == pytest.approx(2 / 5)
    assert params.p_other == pytest.approx(1 / 5)
    assert rr_exact_probabilities(params) == (sp.Rational(2, 5), sp.Rational(1, 5))
    assert rr_params(50.0, 4).p_true == pytest.approx(1)
    with pytest.raises(ParameterError):
        rr_params(0.0, 4)


def test_rr_exact_unbiasedness():
    params = rr_params(LN2, 4)
    p_true, p_other = rr_exact_probabilities(params)
    for v in range(4):
        law = rr_message_distribution(params, v, exact=True)
        assert sum(law) == 1
        assert [(x - p_other) / (p_true - p_other) for x in law] == [1 if u == v else 0 for u in range(4)]


def test_rr_encode(generator):
    params = rr_params(LN2, 4)
    messages = rr_encode_batch(params, torch.full((40_000,), 2), generator)
    counts = torch.bincount(messages, minlength=4).to(torch.float64) / 40_000
    assert counts.tolist() == pytest.approx([0.2, 0.2, 0.4, 0.2], abs=0.02)
    assert 0 <= rr_encode(params, 3, generator) < 4
    with pytest.raises(InputOutOfRange):
        rr_encode(params, 4, generator)


def test_rr_decode(generator):
    params = rr_params(math.log(8), 5)
    values = torch.randint(0, 5, (20_000,), generator=generator)
    estimate = rr_decode(params, rr_accumulate(params, rr_encode_batch(params, values, generator)))
    truth = torch.bincount(values, minlength=5).to(torch.float64)
    assert ((estimate - truth).abs() < 600).all()


def test_ss_size():
    assert ss_params(LN2, 6).d == 2
    assert ss_params(30.0, 6).d == 1
    assert ss_params(1e-3, 6).d == 3


def test_ss_encode(generator):
    params = ss_params(LN2, 6)
    reports = ss_encode_batch(params, torch.randint(0, 6, (500,), generator=generator), generator)
    assert reports.shape == (500, 2)
    assert (reports[:, 0] != reports[:, 1]).all()
    bits = ss_encode(params, 0, generator)
    assert bits.dtype == torch.bool and int(bits.sum()) == 2


def test_ss_exact_privacy_and_unbiasedness():
    params = ss_params(LN2, 6)
    p_hit, p_miss = ss_exact_inclusion(params)
    laws = [ss_message_distribution(params, v, exact=True) for v in range(6)]
    assert all(len(law) == 15 and sum(law.values()) == 1 for law in laws)

    for law, other in itertools.product(laws, repeat=2):
        assert all(law[s] / other[s] <= 2 for s in law)
    for v, law in enumerate(laws):
        for u in range(6):
            inclusion = sum(x for s, x in law.items() if u in s)
            assert (inclusion - p_miss) / (p_hit - p_miss) == (1 if u == v else 0)


def test_ss_counts(generator):
    params = ss_params(LN2, 6)
    reports = ss_encode_batch(params, torch.randint(0, 6, (300,), generator=generator), generator)
    y = ss_accumulate(params, reports)
    assert isinstance(y, SsCounts)
    assert y.n == 300 and int(y.counts.sum()) == 600

    merged = ss_accumulate(params, reports[:100]).merge(ss_accumulate(params, reports[100:]))
    assert merged.n == 300
    assert torch.equal(merged.counts, y.counts)
    assert ss_decode(params, y).shape == (6,)


@pytest.mark.parametrize("epsilon", [25.0, 30.0, 35.0, 700.0])
def test_ss_large_epsilon(epsilon):
    params = ss_params(epsilon, 6)
    e = math.exp(epsilon)
    assert params.d == 1
    assert params.p_out == pytest.approx(5 / (e + 5))
    assert params.p_miss == pytest.approx(1 / (e + 5))
    assert params.p_hit / params.p_miss <= e * (1 + 1e-9)


def test_ss_large_epsilon_reports_the_input(generator):
    params = ss_params(30.0, 6)
    reports = ss_encode_batch(params, torch.full((200,), 4), generator)
    assert reports.flatten().tolist() == [4] * 200
    estimate = ss_decode(params, ss_accumulate(params, reports))
    assert estimate.tolist() == pytest.approx([0, 0, 0, 0, 200, 0], abs=1e-6)


def test_ss_inclusion_masses_sum_to_one():
    params = ss_params(LN2, 6)
    assert params.p_hit + params.p_out == pytest.approx(1)
    law = ss_message_distribution(params, 2)
    assert sum(law.values()) == pytest.approx(1)
