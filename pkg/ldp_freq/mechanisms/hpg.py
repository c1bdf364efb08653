"""HybridProjectiveGeometry: h blocks of a smaller projective geometry.

A user with input (i, v) reports (i, u) with u in S(v) with probability
e^eps * p each and any other (j, u) with probability p. Estimates are

    x_(i,v) = alpha * sum_{u in S(v)} y_(i,u) + beta * sum_u y_(i,u) + gamma * n

so every block is decoded by the pg dynamic program on its own.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import List, NamedTuple, Optional, Sequence, Union

import sympy as sp
import torch

from ..errors import BlockMismatch, IndexOutOfRange, NoFeasibleParams, ParameterError, TooLargeForExactMode
from ..ffield import make_field
from ..projgeom import INT64_LIMIT, MAX_REJECTION_ROUNDS, Geometry, universe_size
from .base import EXACT_MODE_LIMIT, CountVector, FrequencyOracle, check_close, check_values, exp_epsilon, merge, solve_unbiased
from .pg import subset_sums_dp, subset_sums_naive

logger = logging.getLogger(__name__)

MIN_DIMENSION = 3
MAX_DIMENSION = 40
MAX_BLOCKS = 2**20


class HpgMessage(NamedTuple):
    block: int
    point: int


class Coefficients(NamedTuple):
    p: sp.Rational
    alpha: sp.Rational
    beta: sp.Rational
    gamma: sp.Rational


class VarianceBound(NamedTuple):
    total: float
    per_coordinate: float
    # only when h * z = e^eps + 1
    simplified_per_coordinate: Optional[float]


@dataclass(frozen=True)
class HpgParams:
    epsilon: float
    h: int
    geometry: Geometry
    k_logical: int
    p: float
    alpha: float
    beta: float
    gamma: float
    star_inputs: bool = False

    @property
    def q(self) -> int:
        return self.geometry.q

    @property
    def t(self) -> int:
        return self.geometry.t

    @property
    def b(self) -> int:
        return self.geometry.k_universe

    @property
    def z(self) -> float:
        return self.geometry.c_set / self.geometry.c_int

    @property
    def block_size(self) -> int:
        return -(-self.k_logical // self.h)

    @property
    def p_in(self) -> float:
        return math.exp(self.epsilon) * self.p * self.geometry.c_set

    @cached_property
    def input_points(self) -> torch.Tensor:
        """Point rank of every position inside a block."""
        if self.star_inputs:
            return self.geometry.star_points[: self.block_size]
        return torch.arange(self.block_size)

    def split(self, values: torch.Tensor):
        """(block, point rank) of every input value."""
        return torch.div(values, self.block_size, rounding_mode="floor"), self.input_points[values % self.block_size]


def make_params(epsilon: float, geometry: Geometry, h: int, k_logical: int, star_inputs: bool = False) -> HpgParams:
    e = math.exp(epsilon)
    b, c_set, c_int = geometry.k_universe, geometry.c_set, geometry.c_int

    p = 1 / (b * h + (e - 1) * c_set)
    alpha = (b * h + (e - 1) * c_set) / ((e - 1) * (c_set - c_int))
    beta = -alpha * c_int / c_set
    gamma = -(c_set - b * c_int / c_set) / ((e - 1) * (c_set - c_int))

    check_close(e * p * c_set + p * (b * h - c_set), 1.0, "message probabilities")
    check_close(alpha * e * p * c_set + beta * p * ((e - 1) * c_set + b) + gamma, 1.0, "true input")
    check_close(alpha * p * ((e - 1) * c_int + c_set) + beta * p * ((e - 1) * c_set + b) + gamma + 1.0, 1.0, "same block")
    check_close(alpha * p * c_set + beta * p * b + gamma + 1.0, 1.0, "other block")
    check_close(alpha + beta, (1 - c_int / c_set) * alpha, "alpha + beta")
    assert gamma <= 0
    assert b * h >= k_logical

    return HpgParams(
        epsilon=epsilon,
        h=h,
        geometry=geometry,
        k_logical=k_logical,
        p=p,
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        star_inputs=star_inputs,
    )


def _block_range(k_logical: int, q: int, t: int) -> range:
    """Block counts h with b*h >= k > c_set*h."""
    b, c_set = universe_size(q, t), universe_size(q, t - 1)
    return range(max(1, -(-k_logical // b)), min(MAX_BLOCKS, -(-k_logical // c_set) - 1) + 1)


def derive_params(
    epsilon: float,
    k_logical: int,
    q: int,
    t: Optional[int] = None,
    h: Optional[int] = None,
    star_inputs: bool = False,
) -> HpgParams:
    """Search (t, h) for the field size q so that h*z lands next to e^eps + 1.

    Candidates must satisfy b*h >= k > c_set*h; ties on |h*z - (e^eps + 1)|
    go to the smaller universe b*h. With star inputs a block also has to fit
    into the q^(t-1) points with a nonzero last coordinate.
    """
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    if k_logical < 2:
        raise ParameterError(f"Universe size must be at least 2, got {k_logical}")
    e = math.exp(epsilon)
    if q > e + 1 + 1e-9:
        raise NoFeasibleParams(f"q={q} exceeds e^eps + 1 = {e + 1:.4f}")
    field = make_field(q)

    dimensions = [t] if t is not None else range(MIN_DIMENSION, MAX_DIMENSION + 1)
    best = None
    for dim in dimensions:
        if dim < MIN_DIMENSION or q**dim >= INT64_LIMIT:
            continue
        z = universe_size(q, dim - 1) / universe_size(q, dim - 2)
        blocks = _block_range(k_logical, q, dim)
        if h is not None:
            blocks = [h] if h in blocks else []
        for count in blocks:
            if star_inputs and -(-k_logical // count) > q ** (dim - 1):
                continue
            key = (abs(count * z - (e + 1)), universe_size(q, dim) * count)
            if best is None or key < best[0]:
                best = (key, dim, count)

    if best is None:
        raise NoFeasibleParams(f"No (t, h) with b*h >= {k_logical} > c_set*h at q={q} (t={t}, h={h})")
    (_, inflated), t, h = best
    geometry = Geometry(field, t)
    logger.info(
        f"hpg parameters: q={q}, t={t}, h={h}, h*z={h * geometry.c_set / geometry.c_int:.2f}, "
        f"b*h={inflated} ({inflated / k_logical - 1:.1%} above k={k_logical})"
    )
    return make_params(epsilon, geometry, h, k_logical, star_inputs)


def exact_coefficients(params: HpgParams) -> Coefficients:
    e = exp_epsilon(params.epsilon, exact=True)
    g = params.geometry
    b, c_set, c_int = g.k_universe, g.c_set, g.c_int
    p = 1 / (b * params.h + (e - 1) * c_set)
    alpha, beta, gamma = sp.symbols("alpha beta gamma")
    block_mass = p * ((e - 1) * c_set + b)
    solved = solve_unbiased(
        [
            alpha * e * p * c_set + beta * block_mass + gamma - 1,
            alpha * p * ((e - 1) * c_int + c_set) + beta * block_mass + gamma,
            alpha * p * c_set + beta * p * b + gamma,
        ],
        (alpha, beta, gamma),
    )
    return Coefficients(p, *solved)


def _sample_outside(params: HpgParams, blocks: torch.Tensor, points: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
    """Uniform (j, u) among the h*b - c_set pairs outside (i, S(v))."""
    g = params.geometry
    b, size = g.k_universe, params.h * g.k_universe
    flat = torch.randint(0, size, (blocks.numel(),), generator=generator)
    pending = torch.arange(blocks.numel())
    for _ in range(MAX_REJECTION_ROUNDS):
        block, point = flat[pending] // b, flat[pending] % b
        hit = (block == blocks[pending]) & (g.inner_products(g.points(point), points[pending]) == 0)
        pending = pending[hit]
        if pending.numel() == 0:
            return torch.stack((flat // b, flat % b), dim=-1)
        flat[pending] = torch.randint(0, size, (pending.numel(),), generator=generator)
    raise RuntimeError("Out-of-block rejection sampling did not terminate")


def encode_batch(params: HpgParams, values: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
    """Messages as an (n, 2) tensor of (block, point)."""
    values = torch.as_tensor(values, dtype=torch.long).reshape(-1)
    check_values(values, params.k_logical)
    g = params.geometry

    blocks, ranks = params.split(values)
    points = g.points(ranks)
    inside = torch.rand(values.shape, generator=generator, dtype=torch.float64) < params.p_in

    messages = torch.empty((values.numel(), 2), dtype=torch.long)
    messages[inside, 0] = blocks[inside]
    messages[inside, 1] = g.sample_in_subspace_batch(points[inside], generator)
    messages[~inside] = _sample_outside(params, blocks[~inside], points[~inside], generator)
    return messages


def encode(params: HpgParams, value: int, generator: torch.Generator) -> HpgMessage:
    block, point = encode_batch(params, torch.tensor([value]), generator)[0].tolist()
    return HpgMessage(block, point)


def message_distribution(params: HpgParams, value: int, exact: bool = False) -> Union[torch.Tensor, List[sp.Rational]]:
    """Probability of every message, flattened as block * b + point."""
    g = params.geometry
    size = params.h * g.k_universe
    if size > EXACT_MODE_LIMIT:
        raise TooLargeForExactMode(f"{size} messages are too many to enumerate")
    check_values(torch.tensor([value]), params.k_logical)

    block, rank = params.split(torch.tensor([value]))
    members = (g.members(g.points(rank))[0] + int(block) * g.k_universe).tolist()
    if exact:
        e = exp_epsilon(params.epsilon, exact=True)
        p = exact_coefficients(params).p
        dist = [p] * size
        for u in members:
            dist[u] = e * p
        return dist

    dist = torch.full((size,), params.p, dtype=torch.float64)
    dist[members] = math.exp(params.epsilon) * params.p
    return dist


def accumulate(params: HpgParams, messages: Union[torch.Tensor, Sequence[Sequence[int]]]) -> CountVector:
    """Per-block counts, shape (h, b)."""
    messages = torch.as_tensor(messages, dtype=torch.long).reshape(-1, 2)
    b = params.b
    blocks, points = messages[:, 0], messages[:, 1]
    if messages.numel() and (blocks.min() < 0 or blocks.max() >= params.h or points.min() < 0 or points.max() >= b):
        raise IndexOutOfRange(f"Messages must lie in [0, {params.h}) x [0, {b})")
    counts = torch.bincount(blocks * b + points, minlength=params.h * b)
    return CountVector(counts.reshape(params.h, b))


def _check_blocks(params: HpgParams, y: CountVector):
    if tuple(y.counts.shape) != (params.h, params.b):
        raise BlockMismatch(f"Expected counts of shape ({params.h}, {params.b}), got {tuple(y.counts.shape)}")


def _estimates(params: HpgParams, y: CountVector, sums: torch.Tensor) -> torch.Tensor:
    totals = y.counts.sum(dim=-1, keepdim=True)
    per_block = params.alpha * sums.to(torch.float64) + params.beta * totals.to(torch.float64) + params.gamma * y.n
    blocks, ranks = params.split(torch.arange(params.k_logical))
    return per_block[blocks, ranks]


def decode_dp(params: HpgParams, y: CountVector) -> torch.Tensor:
    _check_blocks(params, y)
    return _estimates(params, y, subset_sums_dp(params.geometry, y.counts))


def decode_naive(params: HpgParams, y: CountVector) -> torch.Tensor:
    _check_blocks(params, y)
    return _estimates(params, y, subset_sums_naive(params.geometry, y.counts))


def inflation_factor(params: HpgParams) -> float:
    """z / (z - 1), the error price over pg at matched h*z."""
    return params.z / (params.z - 1)


def variance_bound(params: HpgParams, n: int, k: Optional[int] = None) -> VarianceBound:
    """Bound on E||x - x_est||^2 summed over own and cross coordinates."""
    if n < 1:
        raise ValueError(f"Need at least one user, got n={n}")
    k = params.k_logical if k is None else k
    e, z, h = math.exp(params.epsilon), params.z, params.h
    zh = z * h
    block = -(-k // h)

    own = 1 + (zh + e - 1) / ((e - 1) ** 2 * (z - 1)) + 2 / (e - 1) + e * (zh - e + 1) / (e - 1) ** 2
    cross = (zh + e - 1) * z / ((e - 1) ** 2 * (z - 1)) * (k - block + (block - 1) * (z + e - 1) / z)
    total = n * (own + cross)

    simplified = None
    if math.isclose(zh, e + 1, rel_tol=1e-9):
        simplified = n / k + inflation_factor(params) * n * 4 * e / (e - 1) ** 2
    return VarianceBound(total=total, per_coordinate=total / k, simplified_per_coordinate=simplified)


class HpgOracle(FrequencyOracle):
    NAME = "hpg"

    @classmethod
    def from_config(cls, epsilon, k, q=None, t=None, h=None):
        if q is None:
            raise ParameterError("hpg needs an explicit field size q")
        return cls(derive_params(epsilon, k, q, t=t, h=h))

    def encode_batch(self, values, generator, public_seed=0):
        return encode_batch(self.params, values, generator)

    def aggregate(self, messages, public_seed=0):
        return accumulate(self.params, messages)

    def decode(self, counts):
        return decode_dp(self.params, counts)


__all__ = [
    "Coefficients",
    "HpgMessage",
    "HpgOracle",
    "HpgParams",
    "VarianceBound",
    "accumulate",
    "decode_dp",
    "decode_naive",
    "derive_params",
    "encode",
    "encode_batch",
    "exact_coefficients",
    "inflation_factor",
    "make_params",
    "merge",
    "message_distribution",
    "variance_bound",
]
