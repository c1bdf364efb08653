"""PI-RAPPOR over F_q^t x F_q with a prefix dynamic-programming decoder.

Input v is read as a vector of F_q^t (base-q digits, most significant first).
Messages are pairs (a, b); the pair lies in S(v) iff <a, v> + b = 0. Pairs in
S(v) get probability e^eps * p, all others p. Messages are stored flat as
a * q + b, so appending a digit i to a prefix a is again q * a + i.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, NamedTuple, Optional, Tuple, Union

import sympy as sp
import torch

from ..errors import NoFeasibleParams, ParameterError, ParameterOverflow, TooLargeForExactMode
from ..ffield import FieldTable, make_field
from ..projgeom import INT64_LIMIT, to_digits
from .base import EXACT_MODE_LIMIT, CountVector, FrequencyOracle, check_close, check_values, exp_epsilon, merge, select_prime, solve_unbiased
from .base import accumulate as accumulate_counts

logger = logging.getLogger(__name__)


class PiRapporMessage(NamedTuple):
    a: Tuple[int, ...]
    b: int


class Coefficients(NamedTuple):
    p: sp.Rational
    alpha: sp.Rational
    beta: sp.Rational


@dataclass(frozen=True)
class PiRapporParams:
    epsilon: float
    field: FieldTable
    t: int
    k_logical: int
    p: float
    alpha: float
    beta: float

    @property
    def q(self) -> int:
        return self.field.q

    @property
    def universe(self) -> int:
        """Number of messages, q^(t+1)."""
        return self.q ** (self.t + 1)

    @property
    def p_in(self) -> float:
        return math.exp(self.epsilon) * self.p * self.q**self.t


def make_params(epsilon: float, field: FieldTable, t: int, k_logical: int) -> PiRapporParams:
    e, q = math.exp(epsilon), field.q
    size = q**t

    p = 1 / (e * size + (q - 1) * size)
    alpha = (e * q + (q - 1) * q) / ((e - 1) * (q - 1))
    beta = -(e + q - 1) / ((e - 1) * (q - 1))

    check_close(e * p * size + p * (q * size - size), 1.0, "message probabilities")
    check_close(alpha * e * p * size + beta, 1.0, "unbiasedness for the true input")
    shared = size // q
    check_close(alpha * p * (e * shared + size - shared) + beta + 1.0, 1.0, "unbiasedness for other inputs")
    assert k_logical <= size

    return PiRapporParams(epsilon=epsilon, field=field, t=t, k_logical=k_logical, p=p, alpha=alpha, beta=beta)


def derive_params(epsilon: float, k_logical: int, q: Optional[int] = None, t: Optional[int] = None) -> PiRapporParams:
    """q defaults to the largest prime below e^eps + 1, t to the smallest with q^t >= k."""
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    if k_logical < 2:
        raise ParameterError(f"Universe size must be at least 2, got {k_logical}")

    if q is None:
        q = select_prime(math.exp(epsilon) + 1, "below")
    field = make_field(q)
    if t is None:
        t = 1
        while q**t < k_logical:
            t += 1
    if q ** (t + 1) >= INT64_LIMIT:
        raise ParameterOverflow(f"q^(t+1) = {q}^{t + 1} does not fit in 63 bits")
    if q**t < k_logical:
        raise NoFeasibleParams(f"q^t = {q}^{t} is below k={k_logical}")

    logger.info(f"pirappor parameters: q={q}, t={t}, {q ** (t + 1)} messages for k={k_logical}")
    return make_params(epsilon, field, t, k_logical)


def exact_coefficients(params: PiRapporParams) -> Coefficients:
    e = exp_epsilon(params.epsilon, exact=True)
    q, size = params.q, params.q**params.t
    p = 1 / (e * size + (q - 1) * size)
    alpha, beta = sp.symbols("alpha beta")
    # two inputs share q^(t-1) messages
    shared = size // q
    solved = solve_unbiased(
        [
            alpha * e * p * size + beta - 1,
            alpha * p * (e * shared + size - shared) + beta,
        ],
        (alpha, beta),
    )
    return Coefficients(p, *solved)


def embed(params: PiRapporParams, values: torch.Tensor) -> torch.Tensor:
    return to_digits(values, params.q, params.t)


def encode_batch(params: PiRapporParams, values: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
    """Flat messages a * q + b."""
    values = torch.as_tensor(values, dtype=torch.long).reshape(-1)
    check_values(values, params.k_logical)
    q, t = params.q, params.t

    a = torch.randint(0, q**t, values.shape, generator=generator)
    inner = (to_digits(a, q, t) * embed(params, values)).sum(dim=-1) % q
    inside = torch.rand(values.shape, generator=generator, dtype=torch.float64) < params.p_in
    shift = torch.randint(1, q, values.shape, generator=generator)
    b = (-inner + torch.where(inside, torch.zeros_like(shift), shift)) % q
    return a * q + b


def encode(params: PiRapporParams, v: int, generator: torch.Generator) -> PiRapporMessage:
    flat = int(encode_batch(params, torch.tensor([v]), generator)[0])
    a = to_digits(torch.tensor(flat // params.q), params.q, params.t)
    return PiRapporMessage(tuple(a.tolist()), flat % params.q)


def message_distribution(params: PiRapporParams, v: int, exact: bool = False) -> Union[torch.Tensor, List[sp.Rational]]:
    """Probability of every flat message a * q + b given input v."""
    q, t = params.q, params.t
    if params.universe > EXACT_MODE_LIMIT:
        raise TooLargeForExactMode(f"{params.universe} messages are too many to enumerate")
    check_values(torch.tensor([v]), params.k_logical)

    a = torch.arange(q**t)
    inner = (to_digits(a, q, t) * embed(params, torch.tensor(v))).sum(dim=-1) % q
    members = (a * q + (-inner) % q).tolist()
    if exact:
        e = exp_epsilon(params.epsilon, exact=True)
        p = exact_coefficients(params).p
        dist = [p] * params.universe
        for u in members:
            dist[u] = e * p
        return dist

    dist = torch.full((params.universe,), params.p, dtype=torch.float64)
    dist[members] = math.exp(params.epsilon) * params.p
    return dist


def accumulate(params: PiRapporParams, messages: torch.Tensor) -> CountVector:
    """Counts y[a, b], shape (q^t, q)."""
    return accumulate_counts(messages, params.universe, shape=(params.q**params.t, params.q))


@lru_cache(maxsize=None)
def _suffix_table(q: int, m: int) -> Tuple[torch.Tensor, torch.Tensor]:
    b = torch.arange(q**m)
    head = q ** (m - 1)
    return b % head, torch.div(b, head, rounding_mode="floor")


@torch.no_grad()
def subset_sums_dp(q: int, t: int, counts: torch.Tensor) -> torch.Tensor:
    """sum_a y[a, -<a, v>] for every v in F_q^t, over any leading batch dims.

    f_j(a, b, z) = sum_i f_(j+1)(a.i, suff(b), z - i * b_1) with
    f_t(a, -, w) = y[a, w]; the answer is f_0(-, v, 0), so the last layer is
    only evaluated at z = 0.
    """
    counts = torch.as_tensor(counts, dtype=torch.long)
    batch = counts.shape[:-2]
    layer = counts.reshape(*batch, q**t, 1, q)

    digit = torch.arange(q)
    for j in range(t - 1, -1, -1):
        suffix, first = _suffix_table(q, t - j)
        rows = suffix.unsqueeze(-1)
        z = digit if j else digit[:1]

        prefixes = layer.unflatten(-3, (q**j, q))
        nxt = counts.new_zeros((*batch, q**j, suffix.numel(), z.numel()))
        for i in range(q):
            nxt += prefixes.select(-3, i)[..., rows, (z[None, :] - i * first[:, None]) % q]
        logger.debug(f"pirappor dp layer j={j}: {q ** j} prefixes x {suffix.numel()} suffixes x {z.numel()}")
        layer = nxt

    return layer[..., 0, :, 0]


@torch.no_grad()
def subset_sums_naive(q: int, t: int, counts: torch.Tensor, chunk_size: int = 256) -> torch.Tensor:
    counts = torch.as_tensor(counts, dtype=torch.long)
    a = torch.arange(q**t)
    a_digits = to_digits(a, q, t)
    sums = counts.new_zeros((*counts.shape[:-2], q**t))
    for start in range(0, q**t, chunk_size):
        v = to_digits(torch.arange(start, min(start + chunk_size, q**t)), q, t)
        b = -(v[:, None, :] * a_digits[None, :, :]).sum(dim=-1) % q
        sums[..., start : start + v.shape[0]] = counts[..., a.expand_as(b), b].sum(dim=-1)
    return sums


def _estimates(params: PiRapporParams, sums: torch.Tensor, n: int) -> torch.Tensor:
    return params.alpha * sums[..., : params.k_logical].to(torch.float64) + params.beta * n


def decode_dp(params: PiRapporParams, y: CountVector) -> torch.Tensor:
    return _estimates(params, subset_sums_dp(params.q, params.t, y.counts), y.n)


def decode_naive(params: PiRapporParams, y: CountVector) -> torch.Tensor:
    return _estimates(params, subset_sums_naive(params.q, params.t, y.counts), y.n)


class PiRapporOracle(FrequencyOracle):
    NAME = "pirappor"

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
    "PiRapporMessage",
    "PiRapporOracle",
    "PiRapporParams",
    "accumulate",
    "decode_dp",
    "decode_naive",
    "derive_params",
    "embed",
    "encode",
    "encode_batch",
    "exact_coefficients",
    "make_params",
    "merge",
    "message_distribution",
    "subset_sums_dp",
    "subset_sums_naive",
]
