"""k-ary RandomizedResponse and SubsetSelection, the error baselines."""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple, Union

import sympy as sp
import torch

from ..errors import ParameterError, TooLargeForExactMode
from .base import CountVector, FrequencyOracle, accumulate, check_close, check_values, exp_epsilon

logger = logging.getLogger(__name__)

MAX_SUBSET_ENUMERATION = 10**5
SS_CHUNK_ELEMENTS = 2**22


def _check_request(epsilon: float, k: int):
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    if k < 2:
        raise ParameterError(f"Universe size must be at least 2, got {k}")


# RandomizedResponse


@dataclass(frozen=True)
class RrParams:
    epsilon: float
    k: int
    p_true: float
    p_other: float

    @property
    def k_logical(self) -> int:
        return self.k


def rr_params(epsilon: float, k: int) -> RrParams:
    _check_request(epsilon, k)
    e = math.exp(epsilon)
    p_true, p_other = e / (e + k - 1), 1 / (e + k - 1)
    check_close(p_true + (k - 1) * p_other, 1.0, "rr probabilities")
    return RrParams(epsilon=epsilon, k=k, p_true=p_true, p_other=p_other)


def rr_exact_probabilities(params: RrParams) -> Tuple[sp.Rational, sp.Rational]:
    e = exp_epsilon(params.epsilon, exact=True)
    return e / (e + params.k - 1), 1 / (e + params.k - 1)


def rr_encode_batch(params: RrParams, values: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
    values = torch.as_tensor(values, dtype=torch.long).reshape(-1)
    check_values(values, params.k)
    keep = torch.rand(values.shape, generator=generator, dtype=torch.float64) < params.p_true
    other = torch.randint(0, params.k - 1, values.shape, generator=generator)
    other = other + (other >= values).long()
    return torch.where(keep, values, other)


def rr_encode(params: RrParams, v: int, generator: torch.Generator) -> int:
    return int(rr_encode_batch(params, torch.tensor([v]), generator)[0])


def rr_message_distribution(params: RrParams, v: int, exact: bool = False) -> Union[torch.Tensor, List[sp.Rational]]:
    check_values(torch.tensor([v]), params.k)
    if exact:
        p_true, p_other = rr_exact_probabilities(params)
        dist = [p_other] * params.k
        dist[v] = p_true
        return dist
    dist = torch.full((params.k,), params.p_other, dtype=torch.float64)
    dist[v] = params.p_true
    return dist


def rr_accumulate(params: RrParams, messages: torch.Tensor) -> CountVector:
    return accumulate(messages, params.k)


def rr_decode(params: RrParams, y: CountVector) -> torch.Tensor:
    return (y.counts.to(torch.float64) - y.n * params.p_other) / (params.p_true - params.p_other)


# SubsetSelection


@dataclass(frozen=True)
class SsParams:
    epsilon: float
    k: int
    d: int
    # inclusion probability of an item given it is / is not the input
    p_hit: float
    p_miss: float
    # probability that the input is left out of the report
    p_out: float

    @property
    def k_logical(self) -> int:
        return self.k


def _inclusion(e, k: int, d: int):
    total = d * e + k - d
    p_hit = d * e / total
    p_out = (k - d) / total
    p_miss = d * (e * (d - 1) + k - d) / (k - 1) / total
    return p_hit, p_out, p_miss


def ss_params(epsilon: float, k: int) -> SsParams:
    _check_request(epsilon, k)
    e = math.exp(epsilon)
    d = min(k - 1, max(1, round(k / (e + 1))))
    p_hit, p_out, p_miss = _inclusion(e, k, d)
    # p_hit / p_miss = e (k - 1) / (e (d - 1) + k - d) <= e
    assert e * (d - 1) + k - d >= k - 1
    logger.info(f"ss parameters: d={d} of k={k}")
    return SsParams(epsilon=epsilon, k=k, d=d, p_hit=p_hit, p_miss=p_miss, p_out=p_out)


def ss_exact_inclusion(params: SsParams) -> Tuple[sp.Rational, sp.Rational]:
    p_hit, _, p_miss = _inclusion(exp_epsilon(params.epsilon, exact=True), params.k, params.d)
    return p_hit, p_miss


def ss_encode_batch(params: SsParams, values: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
    """Reported subsets as an (n, d) tensor of item indices."""
    values = torch.as_tensor(values, dtype=torch.long).reshape(-1)
    check_values(values, params.k)
    include = torch.rand(values.shape, generator=generator, dtype=torch.float64) < params.p_hit

    chunk = max(1, SS_CHUNK_ELEMENTS // params.k)
    out = []
    for start in range(0, values.numel(), chunk):
        v, inc = values[start : start + chunk], include[start : start + chunk]
        keys = torch.rand((v.numel(), params.k), generator=generator)
        keys[torch.arange(v.numel()), v] = torch.where(inc, torch.tensor(2.0), torch.tensor(-1.0))
        out.append(keys.topk(params.d, dim=-1).indices)
    if not out:
        return torch.empty((0, params.d), dtype=torch.long)
    return torch.cat(out)


def ss_encode(params: SsParams, v: int, generator: torch.Generator) -> torch.Tensor:
    """Bitset of size k with exactly d ones."""
    bits = torch.zeros(params.k, dtype=torch.bool)
    bits[ss_encode_batch(params, torch.tensor([v]), generator)[0]] = True
    return bits


def ss_message_distribution(params: SsParams, v: int, exact: bool = False) -> Dict[Tuple[int, ...], Union[float, sp.Rational]]:
    """Probability of every size-d subset, keyed by its sorted items."""
    check_values(torch.tensor([v]), params.k)
    k, d = params.k, params.d
    if math.comb(k, d) > MAX_SUBSET_ENUMERATION:
        raise TooLargeForExactMode(f"C({k}, {d}) subsets are too many to enumerate")

    if exact:
        p_hit, p_out, _ = _inclusion(exp_epsilon(params.epsilon, exact=True), k, d)
    else:
        p_hit, p_out = params.p_hit, params.p_out
    with_v = p_hit / math.comb(k - 1, d - 1)
    without_v = p_out / math.comb(k - 1, d)
    return {subset: with_v if v in subset else without_v for subset in itertools.combinations(range(k), d)}


@dataclass(frozen=True)
class SsCounts(CountVector):
    reports: int = 0

    @property
    def n(self) -> int:
        return self.reports

    def merge(self, other: "SsCounts") -> "SsCounts":
        merged = super().merge(other)
        return SsCounts(merged.counts, reports=self.reports + other.reports)


def ss_accumulate(params: SsParams, messages: torch.Tensor) -> CountVector:
    """Per-item inclusion counts; n is the number of reports, not the count total."""
    messages = torch.as_tensor(messages, dtype=torch.long).reshape(-1, params.d)
    return SsCounts(accumulate(messages, params.k).counts, reports=messages.shape[0])


def ss_decode(params: SsParams, y: CountVector) -> torch.Tensor:
    return (y.counts.to(torch.float64) - y.n * params.p_miss) / (params.p_hit - params.p_miss)


class RrOracle(FrequencyOracle):
    NAME = "rr"

    @classmethod
    def from_config(cls, epsilon, k, q=None, t=None, h=None):
        return cls(rr_params(epsilon, k))

    def encode_batch(self, values, generator, public_seed=0):
        return rr_encode_batch(self.params, values, generator)

    def aggregate(self, messages, public_seed=0):
        return rr_accumulate(self.params, messages)

    def decode(self, counts):
        return rr_decode(self.params, counts)


class SsOracle(FrequencyOracle):
    NAME = "ss"

    @classmethod
    def from_config(cls, epsilon, k, q=None, t=None, h=None):
        return cls(ss_params(epsilon, k))

    def encode_batch(self, values, generator, public_seed=0):
        return ss_encode_batch(self.params, values, generator)

    def aggregate(self, messages, public_seed=0):
        return ss_accumulate(self.params, messages)

    def decode(self, counts):
        return ss_decode(self.params, counts)
