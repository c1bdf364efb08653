import itertools
import math

import pytest
import sympy as sp
import torch

from ldp_freq.errors import InputOutOfRange, NoFeasibleParams, TooLargeForExactMode
from ldp_freq.mechanisms import pirappor

LN2 = math.log(2)


@pytest.fixture
def small():
    return pirappor.derive_params(LN2, 3, q=3, t=1)


def test_default_field():
    params = pirappor.derive_params(5.0, 3_307_948)
    assert (params.q, params.t) == (149, 3)
    assert params.q**params.t == 3_307_948 + 1
    assert pirappor.derive_params(LN2, 2).q == 2


def test_small_coefficients(small):
    assert small.p == pytest.approx(1 / 12)
    assert small.alpha == pytest.approx(6)
    assert small.beta == pytest.approx(-2)
    assert pirappor.exact_coefficients(small) == (sp.Rational(1, 12), 6, -2)


def test_infeasible():
    with pytest.raises(NoFeasibleParams):
        pirappor.derive_params(LN2, 10, q=3, t=2)


def test_message_distribution(small):
    dist = pirappor.message_distribution(small, 1, exact=True)
    # (a, b) in S(1) iff a + b = 0: (0, 0), (1, 2), (2, 1)
    assert [m for m, x in enumerate(dist) if x == sp.Rational(1, 6)] == [0, 5, 7]
    assert dist.count(sp.Rational(1, 12)) == 6
    assert sum(dist) == 1
    floats = pirappor.message_distribution(small, 1)
    assert float(floats.max() / floats.min()) == pytest.approx(2)
    with pytest.raises(TooLargeForExactMode):
        pirappor.message_distribution(pirappor.derive_params(5.0, 22_000), 0)


@pytest.mark.parametrize("q,t,epsilon", [(3, 1, LN2), (2, 2, math.log(3)), (3, 2, math.log(5))])
def test_exact_privacy_and_unbiasedness(q, t, epsilon):
    params = pirappor.derive_params(epsilon, q**t, q=q, t=t)
    p, alpha, beta = pirappor.exact_coefficients(params)
    e = sp.Rational(round(math.exp(epsilon)))
    laws = [pirappor.message_distribution(params, v, exact=True) for v in range(q**t)]
    for law, other in itertools.product(laws, repeat=2):
        assert all(a / b <= e for a, b in zip(law, other))

    a_digits = pirappor.embed(params, torch.arange(q**t)).tolist()
    for v, law in enumerate(laws):
        for w, w_digits in enumerate(a_digits):
            inside = 0
            for a, digits in enumerate(a_digits):
                b = -sum(x * y for x, y in zip(digits, w_digits)) % q
                inside += law[a * q + b]
            assert alpha * inside + beta == (1 if w == v else 0)


def test_encode(small, generator):
    messages = pirappor.encode_batch(small, torch.randint(0, 3, (2000,), generator=generator), generator)
    assert messages.min() >= 0 and messages.max() < 9
    message = pirappor.encode(small, 2, generator)
    assert len(message.a) == 1 and 0 <= message.b < 3
    with pytest.raises(InputOutOfRange):
        pirappor.encode(small, 3, generator)


def test_accumulate_shape(small):
    y = pirappor.accumulate(small, torch.tensor([0, 5, 5, 8]))
    assert y.counts.shape == (3, 3)
    assert y.counts[1, 2] == 2 and y.n == 4


def test_single_count(small):
    # message (a, b) = (1, 2) lies in S(v) only for v = 1
    y = pirappor.accumulate(small, torch.tensor([1 * 3 + 2]))
    estimates = pirappor.decode_dp(small, y)
    assert estimates.tolist() == pytest.approx([-2, 4, -2])


def test_zero_counts(small):
    y = pirappor.accumulate(small, torch.empty(0, dtype=torch.long))
    assert torch.equal(pirappor.decode_dp(small, y), torch.zeros(3, dtype=torch.float64))


@pytest.mark.parametrize("q", [2, 3, 5])
@pytest.mark.parametrize("t", [1, 2, 3])
def test_dp_matches_naive(q, t, generator):
    counts = torch.randint(0, 30, (100, q**t, q), generator=generator)
    assert torch.equal(pirappor.subset_sums_dp(q, t, counts), pirappor.subset_sums_naive(q, t, counts))


def test_decoders_agree(generator):
    params = pirappor.derive_params(math.log(4), 20, q=3)
    assert params.t == 3
    y = pirappor.accumulate(params, pirappor.encode_batch(params, torch.randint(0, 20, (1000,), generator=generator), generator))
    dp = pirappor.decode_dp(params, y)
    assert dp.shape == (20,)
    assert torch.equal(dp, pirappor.decode_naive(params, y))


@pytest.mark.slow
def test_decoders_agree_at_eps5(generator):
    params = pirappor.derive_params(5.0, 22_000)
    assert (params.q, params.t) == (149, 2)
    values = torch.randint(0, 22_000, (10_000,), generator=generator)
    y = pirappor.accumulate(params, pirappor.encode_batch(params, values, generator))
    assert torch.equal(pirappor.decode_dp(params, y), pirappor.decode_naive(params, y))


@pytest.mark.slow
def test_dp_memory_at_eps5(peak_rss_mb):
    script = (
        "import torch\n"
        "from ldp_freq.mechanisms import pirappor\n"
        "params = pirappor.derive_params(5.0, 22_000)\n"
        "generator = torch.Generator().manual_seed(0)\n"
        "messages = pirappor.encode_batch(params, torch.zeros(10_000, dtype=torch.long), generator)\n"
        "pirappor.decode_dp(params, pirappor.accumulate(params, messages))\n"
    )
    assert peak_rss_mb(script) < 1500
