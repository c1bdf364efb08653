from functools import cached_property, lru_cache
from typing import Tuple

import torch
from sympy import primefactors

from .errors import ModulusTooLarge, NonPrimeModulus, ZeroInverse

MAX_MODULUS = 2**16


def is_prime(q: int) -> bool:
    if q < 2:
        return False
    d = 2
    while d * d <= q:
        if q % d == 0:
            return False
        d += 1
    return True


def find_generator(q: int) -> int:
    """Smallest generator of the multiplicative group F_q*.

    `g` generates iff g^((q-1)/r) != 1 for every prime factor r of q-1.
    """
    if q == 2:
        return 1
    exponents = [(q - 1) // r for r in primefactors(q - 1)]
    for g in range(2, q):
        if all(pow(g, e, q) != 1 for e in exponents):
            return g
    raise NonPrimeModulus(f"No generator of F_{q}* exists, {q} is not prime")


class FieldTable:
    """Prime field F_q with log/antilog tables over a fixed generator.

    Elements are plain ints in [0, q). Division is one table lookup pair:
    the inverse of g^i is g^(q-1-i).
    """

    def __init__(self, q: int, g: int, antilog: Tuple[int, ...], log: Tuple[int, ...]):
        self.q = q
        self.g = g
        # antilog[i] = g^i for i in [0, q-2]
        self.antilog = antilog
        # log[x] for x in [1, q-1]; log[0] is unused and set to -1
        self.log = log

    def __repr__(self):
        return f"FieldTable(q={self.q}, g={self.g})"

    def __eq__(self, other):
        return (
            isinstance(other, FieldTable)
            and self.q == other.q
            and self.g == other.g
            and self.antilog == other.antilog
            and self.log == other.log
        )

    def __hash__(self):
        return hash((self.q, self.g))

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.q

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.q

    def mul(self, a: int, b: int) -> int:
        return (a * b) % self.q

    def neg(self, a: int) -> int:
        return (-a) % self.q

    def inv(self, a: int) -> int:
        if a % self.q == 0:
            raise ZeroInverse(f"0 has no inverse in F_{self.q}")
        return self.antilog[(self.q - 1 - self.log[a % self.q]) % (self.q - 1)]

    def div(self, a: int, b: int) -> int:
        return self.mul(a, self.inv(b))

    @cached_property
    def inverse_table(self) -> torch.Tensor:
        """inverse_table[x] = x^-1 for x != 0; entry 0 holds 0."""
        table = torch.zeros(self.q, dtype=torch.long)
        for x in range(1, self.q):
            table[x] = self.inv(x)
        return table


@lru_cache(maxsize=None)
def make_field(q: int) -> FieldTable:
    if q > MAX_MODULUS:
        raise ModulusTooLarge(f"Modulus {q} exceeds {MAX_MODULUS}")
    if not is_prime(q):
        raise NonPrimeModulus(f"Modulus {q} is not prime")

    g = find_generator(q)
    antilog = [1] * (q - 1)
    for i in range(1, q - 1):
        antilog[i] = antilog[i - 1] * g % q
    log = [-1] * q
    for i, x in enumerate(antilog):
        log[x] = i

    return FieldTable(q=q, g=g, antilog=tuple(antilog), log=tuple(log))
