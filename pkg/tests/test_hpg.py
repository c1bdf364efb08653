import itertools
import math

import pytest
import sympy as sp
import torch

from ldp_freq.errors import BlockMismatch, IndexOutOfRange, NoFeasibleParams, ParameterError
from ldp_freq.ffield import make_field
from ldp_freq.mechanisms import hpg, pg
from ldp_freq.mechanisms.base import CountVector
from ldp_freq.projgeom import Geometry

LN5 = math.log(5)


def test_derive_params_at_eps5():
    params = hpg.derive_params(5.0, 22_000, 5)
    assert (params.t, params.h) == (5, 30)
    assert params.b * params.h == 23_430
    assert params.h * params.z == pytest.approx(4680 / 31)


def test_small_params(small_hpg):
    assert (small_hpg.h, small_hpg.b, small_hpg.z) == (2, 7, 3)
    assert small_hpg.p == pytest.approx(1 / 26)
    assert small_hpg.alpha == pytest.approx(13 / 4)
    assert small_hpg.beta == pytest.approx(-13 / 12)
    assert small_hpg.gamma == pytest.approx(-1 / 12)
    assert hpg.exact_coefficients(small_hpg) == (
        sp.Rational(1, 26),
        sp.Rational(13, 4),
        sp.Rational(-13, 12),
        sp.Rational(-1, 12),
    )


def test_infeasible_requests():
    with pytest.raises(NoFeasibleParams):
        hpg.derive_params(LN5, 14, 7)
    with pytest.raises(NoFeasibleParams):
        hpg.derive_params(LN5, 14, 2, t=3, h=5)
    with pytest.raises(NoFeasibleParams):
        hpg.derive_params(LN5, 14, 2, t=2)
    with pytest.raises(ParameterError):
        hpg.HpgOracle.from_config(5.0, 100)


def test_message_distribution(small_hpg):
    dist = hpg.message_distribution(small_hpg, 9)
    assert dist.numel() == 14
    assert float(dist.sum()) == pytest.approx(1, abs=1e-12)
    assert float(dist.max() / dist.min()) == pytest.approx(5)
    # value 9 is (1, 1, 0) in block 1
    assert (dist[7:] > 2 * small_hpg.p).nonzero().flatten().tolist() == [2, 3, 6]
    assert (dist[:7] < 2 * small_hpg.p).all()


@pytest.mark.parametrize(
    "e,k,q,h",
    [
        (5, 14, 2, 2),
        (7, 26, 3, 2),
    ],
)
def test_exact_privacy_and_unbiasedness(e, k, q, h):
    params = hpg.derive_params(math.log(e), k, q, t=3, h=h)
    g = params.geometry
    p, alpha, beta, gamma = hpg.exact_coefficients(params)
    laws = [hpg.message_distribution(params, v, exact=True) for v in range(params.k_logical)]
    for law in laws:
        assert sum(law) == 1
        assert max(law) / min(law) == e
    for law, other in itertools.product(laws, repeat=2):
        assert all(a / b <= e for a, b in zip(law, other))

    for v, law in enumerate(laws):
        for w in range(params.k_logical):
            block, rank = divmod(w, params.block_size)
            members = g.subspace_members(g.index_to_point(rank))
            inside = sum(law[block * g.k_universe + m] for m in members)
            total = sum(law[block * g.k_universe : (block + 1) * g.k_universe])
            assert alpha * inside + beta * total + gamma == (1 if w == v else 0)


def test_encode(small_hpg, generator):
    messages = hpg.encode_batch(small_hpg, torch.randint(0, 14, (3000,), generator=generator), generator)
    assert messages.shape == (3000, 2)
    assert messages[:, 0].max() < 2 and messages[:, 1].max() < 7
    message = hpg.encode(small_hpg, 3, generator)
    assert isinstance(message, hpg.HpgMessage)


def test_single_user_estimate(small_hpg):
    y = hpg.accumulate(small_hpg, [[0, 4]])
    assert y.counts.shape == (2, 7)
    assert float(hpg.decode_dp(small_hpg, y)[0]) == pytest.approx(25 / 12)
    assert float(hpg.decode_naive(small_hpg, y)[0]) == pytest.approx(25 / 12)


def test_zero_counts(small_hpg):
    y = hpg.accumulate(small_hpg, torch.empty((0, 2), dtype=torch.long))
    assert torch.equal(hpg.decode_dp(small_hpg, y), torch.zeros(14, dtype=torch.float64))


def test_bad_counts(small_hpg):
    with pytest.raises(IndexOutOfRange):
        hpg.accumulate(small_hpg, [[2, 0]])
    with pytest.raises(BlockMismatch):
        hpg.decode_dp(small_hpg, CountVector(torch.zeros((3, 7), dtype=torch.long)))


@pytest.mark.parametrize("q,t,k", [(2, 3, 14), (2, 4, 40), (3, 3, 30), (5, 3, 100)])
def test_dp_matches_naive(q, t, k, generator):
    epsilon = math.log(2 * q)
    params = hpg.derive_params(epsilon, k, q, t=t)
    y = hpg.accumulate(params, hpg.encode_batch(params, torch.randint(0, k, (2000,), generator=generator), generator))
    assert torch.equal(hpg.decode_dp(params, y), hpg.decode_naive(params, y))


def test_single_block_is_pg(fano, generator):
    single = hpg.make_params(fano.epsilon, fano.geometry, 1, 7)
    assert single.p == pytest.approx(fano.p)
    assert single.alpha == pytest.approx(fano.alpha)
    assert single.beta + single.gamma == pytest.approx(fano.beta)

    messages = pg.encode_batch(fano, torch.randint(0, 7, (500,), generator=generator), generator)
    y = pg.accumulate(fano, messages)
    blocks = CountVector(y.counts.reshape(1, 7))
    assert torch.allclose(hpg.decode_dp(single, blocks), pg.decode_dp(fano, y))


def test_inflation_factor(small_hpg):
    assert hpg.inflation_factor(small_hpg) == pytest.approx(1.5)
    params = hpg.derive_params(5.0, 22_000, 5)
    assert hpg.inflation_factor(params) == pytest.approx(1.248, abs=1e-3)
    wide = hpg.make_params(5.0, Geometry(make_field(149), 3), 1, 100)
    assert hpg.inflation_factor(wide) == pytest.approx(1, abs=0.01)


def test_variance_bound(small_hpg):
    bound = hpg.variance_bound(small_hpg, 100)
    assert bound.per_coordinate == pytest.approx(bound.total / 14)
    assert bound.simplified_per_coordinate is not None
    assert bound.simplified_per_coordinate > 0
    assert hpg.variance_bound(small_hpg, 200).total == pytest.approx(2 * bound.total)

    offset = hpg.derive_params(LN5, 14, 2, t=3, h=3)
    assert hpg.variance_bound(offset, 100).simplified_per_coordinate is None
    with pytest.raises(ValueError):
        hpg.variance_bound(small_hpg, 0)


@pytest.mark.slow
def test_mse_within_bound(small_hpg, generator):
    n, trials = 500, 300
    values = torch.zeros(n, dtype=torch.long)
    truth = torch.bincount(values, minlength=14).to(torch.float64)
    mse = []
    for _ in range(trials):
        y = hpg.accumulate(small_hpg, hpg.encode_batch(small_hpg, values, generator))
        mse.append(float(((hpg.decode_dp(small_hpg, y) - truth) ** 2).mean()))
    assert sum(mse) / trials <= 1.15 * hpg.variance_bound(small_hpg, n).per_coordinate
