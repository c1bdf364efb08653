import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import sympy as sp
import torch
from sympy import nextprime, prevprime

from ..errors import IndexOutOfRange, InputOutOfRange, UniverseMismatch

Number = Union[float, sp.Rational]

PRIME_RULES = ("ceil", "nearest", "below")
MAX_EXACT_DENOMINATOR = 10**6
EXACT_MODE_LIMIT = 10**5


def exp_epsilon(epsilon: float, exact: bool = False) -> Number:
    """e^epsilon, or its nearest small-denominator rational in exact mode.

    Exact mode is meant for epsilon = ln(r) with r rational, e.g. ln 2 -> 2.
    """
    value = math.exp(epsilon)
    if exact:
        return sp.Rational(value).limit_denominator(MAX_EXACT_DENOMINATOR)
    return value


def select_prime(target: float, rule: str = "ceil") -> int:
    """Pick a prime field size next to `target` (normally e^epsilon + 1).

    ceil     smallest prime >= target
    nearest  prime minimizing |q - target|, ties to the smaller prime
    below    largest prime < target
    """
    if rule not in PRIME_RULES:
        raise ValueError(f"Unknown prime rule {rule!r}, expected one of {PRIME_RULES}")
    # exp(log(r)) + 1 may land one ulp above an integer
    target = round(target, 9)
    if target <= 2:
        return 2
    above = int(nextprime(math.ceil(target) - 1))
    if rule == "ceil":
        return above
    if rule == "below":
        return int(prevprime(math.ceil(target)))
    at_or_below = int(prevprime(math.floor(target) + 1))
    return at_or_below if target - at_or_below <= above - target else above


def solve_unbiased(equations: Sequence[sp.Expr], unknowns: Sequence[sp.Symbol]) -> Tuple[sp.Expr, ...]:
    """Solve the linear unbiasedness system for the estimator coefficients."""
    solutions = sp.solve(list(equations), list(unknowns), dict=True)
    assert len(solutions) == 1, f"Unbiasedness system has {len(solutions)} solutions"
    return tuple(solutions[0][u] for u in unknowns)


def check_close(lhs: float, rhs: float, what: str, tol: float = 1e-12):
    assert math.isclose(lhs, rhs, rel_tol=tol, abs_tol=tol), f"{what}: {lhs} != {rhs}"


def check_values(values: torch.Tensor, k: int):
    if values.numel() and (values.min() < 0 or values.max() >= k):
        raise InputOutOfRange(f"Input values must lie in [0, {k})")


@dataclass(frozen=True)
class CountVector:
    """Per-message counts y, mergeable across shards."""

    counts: torch.Tensor

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def universe(self) -> int:
        return self.counts.numel()

    def merge(self, other: "CountVector") -> "CountVector":
        if self.counts.shape != other.counts.shape:
            raise UniverseMismatch(f"Cannot merge counts of shape {tuple(self.counts.shape)} and {tuple(other.counts.shape)}")
        return CountVector(self.counts + other.counts)


def accumulate(messages: torch.Tensor, universe: int, shape: Optional[Tuple[int, ...]] = None) -> CountVector:
    messages = torch.as_tensor(messages, dtype=torch.long).reshape(-1)
    if messages.numel() and (messages.min() < 0 or messages.max() >= universe):
        raise IndexOutOfRange(f"Message indices must lie in [0, {universe})")
    counts = torch.bincount(messages, minlength=universe)
    return CountVector(counts if shape is None else counts.reshape(shape))


def merge(a: CountVector, b: CountVector) -> CountVector:
    return a.merge(b)


class FrequencyOracle:
    """Uniform surface the harness drives every mechanism through.

    Subclasses set NAME and wrap one mechanism module's functions.
    """

    NAME: str = ""
    PUBLIC_COIN = False

    def __init__(self, params):
        self.params = params

    @classmethod
    def from_config(
        cls,
        epsilon: float,
        k: int,
        q: Optional[int] = None,
        t: Optional[int] = None,
        h: Optional[int] = None,
    ) -> "FrequencyOracle":
        raise NotImplementedError()

    @property
    def k_logical(self) -> int:
        return self.params.k_logical

    def encode_batch(self, values: torch.Tensor, generator: torch.Generator, public_seed: int = 0) -> torch.Tensor:
        raise NotImplementedError()

    def aggregate(self, messages: torch.Tensor, public_seed: int = 0) -> CountVector:
        raise NotImplementedError()

    def decode(self, counts: CountVector) -> torch.Tensor:
        raise NotImplementedError()

    def describe(self) -> str:
        return f"{self.NAME}: {self.params}"
