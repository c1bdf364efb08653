import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from ldp_freq.errors import IndexOutOfRange, NotCanonical, ParameterError, ParameterOverflow, ZeroVector
from ldp_freq.ffield import make_field
from ldp_freq.projgeom import Geometry, canonicalize_vectors, to_digits


def geometry(q, t):
    return Geometry(make_field(q), t)


def within_5_sigma(counts: torch.Tensor, p: float):
    n = int(counts.sum())
    sigma = math.sqrt(n * p * (1 - p))
    assert ((counts.to(torch.float64) - n * p).abs() <= 5 * sigma).all(), counts


def test_sizes():
    g = geometry(2, 3)
    assert (g.k_universe, g.c_set, g.c_int) == (7, 3, 1)
    g = geometry(151, 3)
    assert (g.k_universe, g.c_set, g.c_int) == (22_953, 152, 1)
    g = geometry(5, 5)
    assert (g.k_universe, g.c_set, g.c_int) == (781, 156, 31)


def test_bad_dimensions():
    with pytest.raises(ParameterError):
        geometry(3, 1)
    with pytest.raises(ParameterOverflow):
        geometry(65521, 4)


def test_index_to_point():
    g = geometry(2, 3)
    assert g.index_to_point(0) == (1, 0, 0)
    assert g.index_to_point(6) == (0, 0, 1)
    g = geometry(3, 2)
    assert g.index_to_point(2) == (1, 2)
    assert g.index_to_point(3) == (0, 1)
    with pytest.raises(IndexOutOfRange):
        g.index_to_point(4)


def test_point_to_index():
    g = geometry(2, 3)
    assert g.point_to_index((1, 0, 0)) == 0
    assert g.point_to_index((0, 1, 1)) == 5
    with pytest.raises(NotCanonical):
        g.point_to_index((0, 0, 0))
    with pytest.raises(NotCanonical):
        geometry(3, 3).point_to_index((2, 1, 0))


@pytest.mark.parametrize("q,t", [(2, 3), (2, 6), (3, 4), (5, 4), (7, 3), (151, 2)])
def test_rank_round_trip(q, t):
    g = geometry(q, t)
    ranks = torch.arange(g.k_universe)
    points = g.points(ranks)
    assert torch.equal(g.indices(points), ranks)
    assert torch.equal(canonicalize_vectors(g.field, points), points)


def test_canonicalize():
    assert geometry(5, 3).canonicalize((2, 3, 0)) == (1, 4, 0)
    assert geometry(3, 3).canonicalize((0, 2, 1)) == (0, 1, 2)
    assert geometry(7, 3).canonicalize((1, 5, 6)) == (1, 5, 6)
    with pytest.raises(ZeroVector):
        geometry(3, 3).canonicalize((0, 0, 0))


@pytest.mark.parametrize("q", [2, 3, 5])
def test_canonicalize_is_scale_invariant(q):
    g = geometry(q, 3)
    vectors = to_digits(torch.arange(1, q**3), q, 3)
    canonical = canonicalize_vectors(g.field, vectors)
    for c in range(1, q):
        assert torch.equal(canonicalize_vectors(g.field, vectors * c % q), canonical)
    assert torch.equal(canonicalize_vectors(g.field, canonical), canonical)


def test_inner_product():
    assert geometry(2, 3).inner_product((1, 0, 1), (1, 1, 1)) == 0
    assert geometry(3, 2).inner_product((1, 2), (2, 1)) == 1
    assert geometry(5, 3).inner_product((1, 4, 3), (0, 0, 0)) == 0


def test_subspace_members():
    assert geometry(2, 3).subspace_members((1, 0, 0)) == [4, 5, 6]
    g = geometry(3, 3)
    members = g.subspace_members((1, 0, 0))
    assert len(members) == g.c_set == 4
    assert all(g.index_to_point(u)[0] == 0 for u in members)


@pytest.mark.parametrize("q,t", [(2, 3), (2, 4), (3, 3), (3, 4), (5, 3), (5, 4)])
def test_hyperplane_intersections(q, t):
    g = geometry(q, t)
    members = g.members(g.points(torch.arange(g.k_universe)))
    incidence = torch.zeros((g.k_universe, g.k_universe), dtype=torch.long)
    incidence.scatter_(1, members, 1)
    assert (incidence.sum(dim=1) == g.c_set).all()

    overlap = incidence @ incidence.T
    off_diagonal = ~torch.eye(g.k_universe, dtype=torch.bool)
    assert (overlap[off_diagonal] == g.c_int).all()
    assert g.c_set**2 >= g.k_universe * g.c_int


def test_star_points():
    g = geometry(3, 3)
    star = g.star_points
    assert star.numel() == 9
    assert (g.points(star)[:, -1] != 0).all()
    assert torch.equal(star, star.sort().values)


def test_sample_in_subspace_is_uniform(generator):
    g = geometry(2, 3)
    points = torch.tensor([[1, 0, 0]]).expand(30_000, 3)
    draws = g.sample_in_subspace_batch(points, generator)
    assert set(draws.tolist()) == {4, 5, 6}
    within_5_sigma(torch.bincount(draws, minlength=7)[4:], 1 / 3)
    assert g.sample_in_subspace((1, 0, 0), generator) in {4, 5, 6}


def test_sample_out_subspace_is_uniform(generator):
    g = geometry(2, 3)
    points = torch.tensor([[1, 0, 0]]).expand(30_000, 3)
    draws = g.sample_out_subspace_batch(points, generator)
    assert set(draws.tolist()) == {0, 1, 2, 3}
    within_5_sigma(torch.bincount(draws, minlength=7)[:4], 1 / 4)


def test_samples_respect_membership(generator):
    g = geometry(5, 4)
    points = g.points(torch.randint(0, g.k_universe, (2000,), generator=generator))
    inside = g.sample_in_subspace_batch(points, generator)
    outside = g.sample_out_subspace_batch(points, generator)
    assert (g.inner_products(g.points(inside), points) == 0).all()
    assert (g.inner_products(g.points(outside), points) != 0).all()


def test_line_has_one_point(generator):
    g = geometry(3, 2)
    assert {g.sample_in_subspace((1, 0), generator) for _ in range(20)} == {3}


@settings(deadline=None)
@given(st.sampled_from([(2, 20), (3, 9), (5, 6), (151, 3), (65521, 3)]), st.data())
def test_random_rank_round_trip(shape, data):
    g = geometry(*shape)
    rank = data.draw(st.integers(0, g.k_universe - 1))
    point = g.index_to_point(rank)
    assert point[next(i for i, x in enumerate(point) if x)] == 1
    assert g.point_to_index(point) == rank


@settings(deadline=None)
@given(st.sampled_from([3, 5, 7, 149]), st.lists(st.integers(0, 2**16), min_size=4, max_size=4), st.integers(1, 2**16))
def test_random_scale_invariance(q, coords, c):
    g = geometry(q, 4)
    v = tuple(x % q for x in coords)
    if not any(v) or c % q == 0:
        return
    assert g.canonicalize(tuple(x * c % q for x in v)) == g.canonicalize(v)
