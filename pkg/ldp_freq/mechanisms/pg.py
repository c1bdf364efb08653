"""ProjectiveGeometry frequency oracle.

Inputs and messages are points of P(F_q^t). A user holding v sends a point of
the hyperplane S(v) = {u : <u, v> = 0} with probability e^eps * p each and any
other point with probability p. The server estimates

    x_v = alpha * sum_{u in S(v)} y_u + beta * n

where the subset sums for all v come from a dynamic program over prefixes.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import sympy as sp
import torch

from ..errors import DegenerateIntersection, NoFeasibleParams, ParameterError, ParameterOverflow, TooLargeForExactMode
from ..ffield import FieldTable, make_field
from ..projgeom import (
    INT64_LIMIT,
    Geometry,
    leading_positions,
    ranks_from_points,
    to_digits,
    universe_size,
)
from .base import (
    EXACT_MODE_LIMIT,
    CountVector,
    FrequencyOracle,
    check_close,
    check_values,
    exp_epsilon,
    merge,
    select_prime,
    solve_unbiased,
)
from .base import accumulate as accumulate_counts

logger = logging.getLogger(__name__)

VARIANCE_FORMS = ("auto", "ratio", "exact")


class Coefficients(NamedTuple):
    p: sp.Rational
    alpha: sp.Rational
    beta: sp.Rational


@dataclass(frozen=True)
class PgParams:
    epsilon: float
    geometry: Geometry
    k_logical: int
    p: float
    alpha: float
    beta: float
    # inputs restricted to points with a nonzero last coordinate (public coin)
    star_inputs: bool = False

    @property
    def q(self) -> int:
        return self.geometry.q

    @property
    def t(self) -> int:
        return self.geometry.t

    @property
    def k_universe(self) -> int:
        return self.geometry.k_universe

    @property
    def p_in(self) -> float:
        """Probability that the message lands in S(v)."""
        return math.exp(self.epsilon) * self.p * self.geometry.c_set

    @cached_property
    def input_points(self) -> torch.Tensor:
        """Point rank of every logical input value."""
        if self.star_inputs:
            return self.geometry.star_points[: self.k_logical]
        return torch.arange(self.k_logical)


def make_params(epsilon: float, geometry: Geometry, k_logical: int, star_inputs: bool = False) -> PgParams:
    e = math.exp(epsilon)
    c_set, c_int, k = geometry.c_set, geometry.c_int, geometry.k_universe

    p = 1 / ((e - 1) * c_set + k)
    alpha = ((e - 1) * c_set + k) / ((e - 1) * (c_set - c_int))
    beta = -((e - 1) * c_int + c_set) / ((e - 1) * (c_set - c_int))

    check_close(e * p * c_set + p * (k - c_set), 1.0, "message probabilities")
    check_close(alpha * e * p * c_set + beta, 1.0, "unbiasedness for the true input")
    check_close(alpha * p * ((e - 1) * c_int + c_set) + beta + 1.0, 1.0, "unbiasedness for other inputs")
    assert k_logical <= k

    return PgParams(
        epsilon=epsilon,
        geometry=geometry,
        k_logical=k_logical,
        p=p,
        alpha=alpha,
        beta=beta,
        star_inputs=star_inputs,
    )


def derive_params(
    epsilon: float,
    k_logical: int,
    q: Optional[int] = None,
    t: Optional[int] = None,
    prime_rule: str = "ceil",
    star_inputs: bool = False,
) -> PgParams:
    """Pick (q, t) for a universe of `k_logical` inputs and build PgParams.

    q defaults to the prime next to e^eps + 1 and t to the smallest dimension
    whose point count covers k_logical. Either may be pinned.
    """
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    if k_logical < 2:
        raise ParameterError(f"Universe size must be at least 2, got {k_logical}")

    if q is None:
        q = select_prime(math.exp(epsilon) + 1, prime_rule)
    field = make_field(q)

    def capacity(dim: int) -> int:
        return q ** (dim - 1) if star_inputs else universe_size(q, dim)

    if t is None:
        t = 2
        while capacity(t) < k_logical:
            t += 1
            if q**t >= INT64_LIMIT:
                raise ParameterOverflow(f"No t with q^t below 2^63 covers k={k_logical} at q={q}")
    geometry = Geometry(field, t)
    if capacity(t) < k_logical:
        raise NoFeasibleParams(f"q={q}, t={t} covers only {capacity(t)} inputs, {k_logical} requested")

    inflation = geometry.k_universe / k_logical - 1
    logger.info(f"pg parameters: q={q}, t={t}, k_universe={geometry.k_universe} ({inflation:.1%} above k={k_logical})")
    if inflation > 0.5:
        logger.warning(f"pg universe is {inflation:.0%} larger than requested; decoding pays for the padding")

    return make_params(epsilon, geometry, k_logical, star_inputs)


def exact_coefficients(params: PgParams) -> Coefficients:
    """p, alpha, beta as rationals, solved from the unbiasedness system."""
    e = exp_epsilon(params.epsilon, exact=True)
    g = params.geometry
    p = 1 / ((e - 1) * g.c_set + g.k_universe)
    alpha, beta = sp.symbols("alpha beta")
    solved = solve_unbiased(
        [
            alpha * e * p * g.c_set + beta - 1,
            alpha * p * ((e - 1) * g.c_int + g.c_set) + beta,
        ],
        (alpha, beta),
    )
    return Coefficients(p, *solved)


def encode_batch(params: PgParams, values: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
    values = torch.as_tensor(values, dtype=torch.long).reshape(-1)
    check_values(values, params.k_logical)
    g = params.geometry

    points = g.points(params.input_points[values])
    inside = torch.rand(values.shape, generator=generator, dtype=torch.float64) < params.p_in
    messages = torch.empty_like(values)
    messages[inside] = g.sample_in_subspace_batch(points[inside], generator)
    messages[~inside] = g.sample_out_subspace_batch(points[~inside], generator)
    return messages


def encode(params: PgParams, v: int, generator: torch.Generator) -> int:
    return int(encode_batch(params, torch.tensor([v]), generator)[0])


def message_distribution(params: PgParams, v: int, exact: bool = False) -> Union[torch.Tensor, List[sp.Rational]]:
    """Probability of every message given input v."""
    g = params.geometry
    if g.k_universe > EXACT_MODE_LIMIT:
        raise TooLargeForExactMode(f"Universe of {g.k_universe} points is too large to enumerate")
    check_values(torch.tensor([v]), params.k_logical)

    members = g.members(g.points(params.input_points[[v]]))[0].tolist()
    if exact:
        e = exp_epsilon(params.epsilon, exact=True)
        p = exact_coefficients(params).p
        dist = [p] * g.k_universe
        for u in members:
            dist[u] = e * p
        return dist

    dist = torch.full((g.k_universe,), params.p, dtype=torch.float64)
    dist[members] = math.exp(params.epsilon) * params.p
    return dist


def accumulate(params: PgParams, messages: Sequence[int]) -> CountVector:
    return accumulate_counts(torch.as_tensor(messages, dtype=torch.long), params.k_universe)


@lru_cache(maxsize=None)
def suffix_table(field: FieldTable, m: int) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Transition table for the vectors b of length m used by the DP.

    Rows are the canonical b in rank order followed by the zero vector. Per
    row: the index of suff(b) among length m-1 vectors after scaling it to
    canonical form, the first entry b_1, and the factor 1/zeta that the
    target z is multiplied by when the suffix is divided by its leading
    entry zeta.
    """
    q = field.q
    k_m = universe_size(q, m)
    k_prev = universe_size(q, m - 1)
    head = q ** (m - 1)

    suffix = torch.full((k_m + 1,), k_prev, dtype=torch.long)
    first = torch.zeros(k_m + 1, dtype=torch.long)
    scale = torch.ones(k_m + 1, dtype=torch.long)

    # ranks below q^(m-1) have b_1 = 1 and an arbitrary suffix
    first[:head] = 1
    if m > 1 and head > 1:
        digits = to_digits(torch.arange(1, head), q, m - 1)
        lead = leading_positions(digits)
        inverse = field.inverse_table[digits.gather(-1, lead.unsqueeze(-1)).squeeze(-1)]
        suffix[1:head] = ranks_from_points(q, m - 1, digits * inverse.unsqueeze(-1) % q)
        scale[1:head] = inverse
    # the rest start with 0 and their suffix is canonical already
    suffix[head:k_m] = torch.arange(k_m - head)
    return suffix, first, scale


def _lookup(layer: torch.Tensor, rows: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """layer[..., rows, target]; a layer of width 1 holds only z = 0."""
    if layer.shape[-1] == 1:
        return layer[..., rows, 0] * (target == 0)
    return layer[..., rows, target]


@torch.no_grad()
def subset_sums_dp(geometry: Geometry, counts: torch.Tensor) -> torch.Tensor:
    """sum_{u in S(v)} y_u for every point v, over any leading batch dims.

    f(a, b, z) sums y_u over the points u with prefix a and <suffix, b> = z.
    Rows for a are the canonical prefixes of length j in rank order followed
    by the zero prefix; b is kept canonical or zero. Only two layers are
    alive at a time, each O(k) entries: the input layer keeps just z = 0 and
    the last one is only evaluated at z = 0.
    """
    field, q, t, k = geometry.field, geometry.q, geometry.t, geometry.k_universe
    counts = torch.as_tensor(counts, dtype=torch.long)
    batch = counts.shape[:-1]

    layer = counts.new_zeros((*batch, k + 1, 1, 1))
    layer[..., :k, 0, 0] = counts

    digit = torch.arange(q)
    for j in range(t - 1, -1, -1):
        k_j = universe_size(q, j)
        suffix, first, scale = suffix_table(field, t - j)
        rows = suffix.unsqueeze(-1)
        z = digit if j else digit[:1]

        def target(w: int) -> torch.Tensor:
            # (z - w * b_1) / zeta
            return scale[:, None] * (z[None, :] - w * first[:, None]) % q

        nxt = counts.new_zeros((*batch, k_j + 1, suffix.numel(), z.numel()))
        if k_j:
            canonical = layer[..., : q * k_j, :, :].unflatten(-3, (k_j, q))
            for w in range(q):
                nxt[..., :k_j, :, :] += _lookup(canonical.select(-3, w), rows, target(w))
        # the zero prefix only extends by 0 or by 1
        zero, unit = layer[..., -1:, :, :], layer[..., q * k_j : q * k_j + 1, :, :]
        nxt[..., k_j : k_j + 1, :, :] = _lookup(zero, rows, target(0)) + _lookup(unit, rows, target(1))

        logger.debug(f"pg dp layer j={j}: {k_j + 1} prefixes x {suffix.numel()} suffixes x {z.numel()}")
        layer = nxt

    return layer[..., 0, :k, 0]


@torch.no_grad()
def subset_sums_naive(geometry: Geometry, counts: torch.Tensor, chunk_size: int = 1024) -> torch.Tensor:
    counts = torch.as_tensor(counts, dtype=torch.long)
    k = geometry.k_universe
    sums = torch.zeros_like(counts)
    for start in range(0, k, chunk_size):
        ranks = torch.arange(start, min(start + chunk_size, k))
        members = geometry.members(geometry.points(ranks))
        sums[..., start : start + ranks.numel()] = counts[..., members].sum(dim=-1)
    return sums


def _estimates(params: PgParams, sums: torch.Tensor, n: int) -> torch.Tensor:
    return params.alpha * sums[params.input_points].to(torch.float64) + params.beta * n


def decode_naive(params: PgParams, y: CountVector) -> torch.Tensor:
    return _estimates(params, subset_sums_naive(params.geometry, y.counts), y.n)


def decode_dp(params: PgParams, y: CountVector) -> torch.Tensor:
    return _estimates(params, subset_sums_dp(params.geometry, y.counts), y.n)


def leading_term(epsilon: float) -> float:
    e = math.exp(epsilon)
    return 4 * e / (e - 1) ** 2


def single_user_variance(params: PgParams) -> float:
    """E[(x_v - 1)^2] for the coordinate of a lone user's own input."""
    return (params.alpha + params.beta - 1) * (1 - params.beta)


def cross_variance(params: PgParams) -> float:
    """E[x_u^2] for any coordinate u other than the lone user's input."""
    return -params.beta * (params.alpha + params.beta)


def variance_bound(params: PgParams, n: int, form: str = "auto") -> float:
    """Per-coordinate bound on (1/k) E||x - x_est||^2 for n users.

    "ratio" evaluates the closed form in z = c_set/c_int, "exact" sums the
    exact per-user variances; "auto" uses the ratio form unless c_int = 0.
    """
    if n < 1:
        raise ValueError(f"Need at least one user, got n={n}")
    if form not in VARIANCE_FORMS:
        raise ValueError(f"Unknown form {form!r}, expected one of {VARIANCE_FORMS}")
    g = params.geometry
    k = g.k_universe
    if form == "auto":
        form = "ratio" if g.c_int else "exact"

    if form == "exact":
        total = n * (single_user_variance(params) + (k - 1) * cross_variance(params))
    else:
        if g.c_int == 0:
            raise DegenerateIntersection("c_int = 0, the ratio form is undefined for t = 2")
        e = math.exp(params.epsilon)
        z = g.c_set / g.c_int
        total = n * (e * z * z + (k - 1) * (e - 1 + z) ** 2) / ((e - 1) ** 2 * (z - 1))
    return total / k


class PgOracle(FrequencyOracle):
    NAME = "pg"

    @classmethod
    def from_config(cls, epsilon, k, q=None, t=None, h=None):
        return cls(derive_params(epsilon, k, q=q, t=t))

    def encode_batch(self, values, generator, public_seed=0):
        return encode_batch(self.params, values, generator)

    def aggregate(self, messages, public_seed=0):
        return accumulate(self.params, messages)

    def decode(self, counts):
        return decode_dp(self.params, counts)


__all__ = [
    "Coefficients",
    "PgOracle",
    "PgParams",
    "accumulate",
    "cross_variance",
    "decode_dp",
    "decode_naive",
    "derive_params",
    "encode",
    "encode_batch",
    "exact_coefficients",
    "leading_term",
    "make_params",
    "merge",
    "message_distribution",
    "single_user_variance",
    "subset_sums_dp",
    "subset_sums_naive",
    "variance_bound",
]
