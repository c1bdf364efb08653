"""Public-coin variants of pg and hpg.

Client and server derive a shared vector w of length t-1 from
(public_seed, user). w is zero with probability p and otherwise a uniform
canonical vector. The client sends one field element a and the server
decodes the point w.a (a appended to w), which is distributed exactly like a
private-coin pg message. Inputs are the points with a nonzero last
coordinate, so a is always determined by (v, w).
"""

import hashlib
import logging
import math
import struct
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import sympy as sp
import torch

from ..errors import IndexOutOfRange, InputNotStarCanonical, ParameterError
from ..projgeom import canonicalize_vectors, points_from_ranks, universe_size
from . import hpg, pg
from .base import CountVector, FrequencyOracle, check_values, exp_epsilon
from .hpg import HpgMessage, HpgParams
from .pg import PgParams

logger = logging.getLogger(__name__)

PRF_RANGE = 2**64


@dataclass(frozen=True)
class SharedRandomness:
    w: Tuple[int, ...]

    @property
    def is_zero(self) -> bool:
        return not any(self.w)


def prf(public_seed: int, user: int, counter: int) -> int:
    """64-bit pseudorandom value shared by every party that knows the seed."""
    digest = hashlib.blake2b(struct.pack("<QQQ", public_seed, user, counter), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _zero_probability(params: Union[PgParams, HpgParams]) -> float:
    if isinstance(params, HpgParams):
        return params.h * params.p
    return params.p


def shared_ranks(public_seed: int, users: Iterable[int], p_zero: float, q: int, m: int) -> torch.Tensor:
    """Canonical rank of w per user, or -1 when w is zero."""
    count = universe_size(q, m)
    limit = PRF_RANGE - PRF_RANGE % count
    ranks = []
    for user in users:
        if prf(public_seed, user, 0) < p_zero * PRF_RANGE:
            ranks.append(-1)
            continue
        counter = 1
        while (x := prf(public_seed, user, counter)) >= limit:
            counter += 1
        ranks.append(x % count)
    return torch.tensor(ranks, dtype=torch.long)


def shared_vectors(public_seed: int, users: Iterable[int], p_zero: float, q: int, m: int) -> torch.Tensor:
    """w per user, shape (n, m)."""
    ranks = shared_ranks(public_seed, users, p_zero, q, m)
    vectors = points_from_ranks(q, m, ranks.clamp(min=0))
    vectors[ranks < 0] = 0
    return vectors


def sample_shared(params: Union[PgParams, HpgParams], public_seed: int, user: int = 0) -> SharedRandomness:
    g = params.geometry
    w = shared_vectors(public_seed, [user], _zero_probability(params), g.q, g.t - 1)[0]
    return SharedRandomness(tuple(w.tolist()))


def _check_star(params: Union[PgParams, HpgParams], v: Sequence[int]):
    g = params.geometry
    try:
        canonical = g.canonicalize(v)
    except ValueError as e:
        raise InputNotStarCanonical(f"{tuple(v)} is not a point of F_{g.q}^{g.t}") from e
    if canonical != tuple(v) or v[-1] == 0:
        raise InputNotStarCanonical(f"{tuple(v)} is not canonical with a nonzero last coordinate")


def _respond(
    params: Union[PgParams, HpgParams],
    points: torch.Tensor,
    w: torch.Tensor,
    generator: torch.Generator,
) -> torch.Tensor:
    """a with <v, w.a> = 0 with probability e^eps / (e^eps + q - 1), else another a uniformly."""
    g = params.geometry
    q, e = g.q, math.exp(params.epsilon)
    solved = -(w * points[:, :-1]).sum(dim=-1) * g.field.inverse_table[points[:, -1]] % q

    keep = torch.rand(solved.shape, generator=generator, dtype=torch.float64) < e / (e + q - 1)
    other = torch.randint(0, q - 1, solved.shape, generator=generator)
    other = other + (other >= solved).long()
    return torch.where(keep, solved, other)


def _decode_points(params: Union[PgParams, HpgParams], w: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
    g = params.geometry
    vectors = torch.cat((w, a.reshape(-1, 1)), dim=-1)
    return g.indices(canonicalize_vectors(g.field, vectors))


# ProjectiveGeometry


def pub_encode(params: PgParams, v: Sequence[int], w: SharedRandomness, generator: torch.Generator) -> int:
    _check_star(params, v)
    if w.is_zero:
        return 1
    points = torch.tensor([list(v)], dtype=torch.long)
    return int(_respond(params, points, torch.tensor([list(w.w)], dtype=torch.long), generator)[0])


def pub_decode(params: PgParams, w: SharedRandomness, a: int) -> int:
    """Point index of w.a; w = 0 with a = 1 decodes to (0, ..., 0, 1)."""
    return params.geometry.point_to_index(params.geometry.canonicalize(w.w + (a,)))


def pub_encode_batch(params: PgParams, values: torch.Tensor, public_seed: int, generator: torch.Generator) -> torch.Tensor:
    """One field element per user; user i is the i-th value."""
    values = torch.as_tensor(values, dtype=torch.long).reshape(-1)
    check_values(values, params.k_logical)
    g = params.geometry

    w = shared_vectors(public_seed, range(values.numel()), params.p, g.q, g.t - 1)
    a = _respond(params, g.points(params.input_points[values]), w, generator)
    return torch.where((w == 0).all(dim=-1), torch.ones_like(a), a)


def pub_decode_batch(params: PgParams, messages: torch.Tensor, public_seed: int) -> torch.Tensor:
    a = torch.as_tensor(messages, dtype=torch.long).reshape(-1)
    w = shared_vectors(public_seed, range(a.numel()), params.p, params.q, params.t - 1)
    return _decode_points(params, w, a)


def pub_decoded_distribution(params: PgParams, value: int, exact: bool = True) -> Union[torch.Tensor, List[sp.Rational]]:
    """Law of the decoded point over the shared w and the client's a."""
    g = params.geometry
    q = g.q
    check_values(torch.tensor([value]), params.k_logical)
    v = g.points(params.input_points[[value]])
    if exact:
        e, p = exp_epsilon(params.epsilon, exact=True), pg.exact_coefficients(params).p
    else:
        e, p = math.exp(params.epsilon), params.p

    dist = [0 * p] * g.k_universe
    dist[pub_decode(params, SharedRandomness((0,) * (g.t - 1)), 1)] += p
    prefixes = points_from_ranks(q, g.t - 1, torch.arange(g.c_set))
    for w in prefixes:
        solved = int(-(w * v[0, :-1]).sum() * g.field.inverse_table[v[0, -1]] % q)
        for a in range(q):
            weight = e if a == solved else 1
            dist[pub_decode(params, SharedRandomness(tuple(w.tolist())), a)] += (1 - p) / g.c_set * weight / (e + q - 1)
    return dist if exact else torch.tensor([float(x) for x in dist], dtype=torch.float64)


# HybridProjectiveGeometry


def hpg_pub_encode(params: HpgParams, value: int, w: SharedRandomness, generator: torch.Generator) -> Tuple[int, int]:
    """(block j, field element a) for one user."""
    check_values(torch.tensor([value]), params.k_logical)
    shared = torch.tensor([list(w.w)], dtype=torch.long)
    j, a = _hpg_respond(params, torch.tensor([value]), shared, generator)[0].tolist()
    return j, a


def hpg_pub_decode(params: HpgParams, w: SharedRandomness, j: int, a: int) -> HpgMessage:
    if not 0 <= j < params.h:
        raise IndexOutOfRange(f"Block {j} outside [0, {params.h})")
    g = params.geometry
    return HpgMessage(j, g.point_to_index(g.canonicalize(w.w + (a,))))


def _hpg_respond(params: HpgParams, values: torch.Tensor, w: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
    g = params.geometry
    q, h, e = g.q, params.h, math.exp(params.epsilon)
    blocks, ranks = params.split(values)
    n = values.numel()

    a_true = _respond(params, g.points(ranks), w, generator)
    stay = torch.rand(n, generator=generator, dtype=torch.float64) < (e + q - 1) / (e + h * q - 1)
    other_block = torch.randint(0, max(h - 1, 1), (n,), generator=generator)
    other_block = other_block + (other_block >= blocks).long()
    uniform_a = torch.randint(0, q, (n,), generator=generator)
    j = torch.where(stay, blocks, other_block)
    a = torch.where(stay, a_true, uniform_a)

    # w = 0 sends a = 1 to a uniform block
    zero = (w == 0).all(dim=-1)
    j = torch.where(zero, torch.randint(0, h, (n,), generator=generator), j)
    a = torch.where(zero, torch.ones_like(a), a)
    return torch.stack((j, a), dim=-1)


def hpg_pub_encode_batch(params: HpgParams, values: torch.Tensor, public_seed: int, generator: torch.Generator) -> torch.Tensor:
    """(block, field element) per user, shape (n, 2)."""
    values = torch.as_tensor(values, dtype=torch.long).reshape(-1)
    check_values(values, params.k_logical)
    w = shared_vectors(public_seed, range(values.numel()), _zero_probability(params), params.q, params.t - 1)
    return _hpg_respond(params, values, w, generator)


def hpg_pub_decode_batch(params: HpgParams, messages: torch.Tensor, public_seed: int) -> torch.Tensor:
    """Private-coin style (block, point) messages, shape (n, 2)."""
    messages = torch.as_tensor(messages, dtype=torch.long).reshape(-1, 2)
    w = shared_vectors(public_seed, range(messages.shape[0]), _zero_probability(params), params.q, params.t - 1)
    return torch.stack((messages[:, 0], _decode_points(params, w, messages[:, 1])), dim=-1)


def hpg_pub_decoded_distribution(params: HpgParams, value: int, exact: bool = True) -> Union[torch.Tensor, List[sp.Rational]]:
    """Law of the decoded (block, point), flattened as block * b + point."""
    g = params.geometry
    q, h, b = g.q, params.h, g.k_universe
    check_values(torch.tensor([value]), params.k_logical)
    block, rank = params.split(torch.tensor([value]))
    block, v = int(block), g.points(rank)[0]
    if exact:
        e, p = exp_epsilon(params.epsilon, exact=True), hpg.exact_coefficients(params).p
    else:
        e, p = math.exp(params.epsilon), params.p

    dist = [0 * p] * (h * b)
    star = g.point_to_index((0,) * (g.t - 1) + (1,))
    for j in range(h):
        dist[j * b + star] += p
    stay = (e + q - 1) / (e + h * q - 1)
    prefixes = points_from_ranks(q, g.t - 1, torch.arange(g.c_set))
    for w in prefixes:
        mass = (1 - h * p) / g.c_set
        solved = int(-(w * v[:-1]).sum() * g.field.inverse_table[v[-1]] % q)
        for a in range(q):
            u = g.point_to_index(tuple(w.tolist()) + (a,))
            dist[block * b + u] += mass * stay * (e if a == solved else 1) / (e + q - 1)
            for j in range(h):
                if j != block:
                    dist[j * b + u] += mass * (1 - stay) / (h - 1) / q
    return dist if exact else torch.tensor([float(x) for x in dist], dtype=torch.float64)


def payload_bits(params: Union[PgParams, HpgParams]) -> int:
    """Bits a public-coin client sends: the field element, plus the block for hpg."""
    bits = (params.q - 1).bit_length()
    if isinstance(params, HpgParams):
        bits += (params.h - 1).bit_length()
    return bits


def pg_pub_params(epsilon: float, k: int, q: Optional[int] = None, t: Optional[int] = None) -> PgParams:
    return pg.derive_params(epsilon, k, q=q, t=t, star_inputs=True)


def hpg_pub_params(epsilon: float, k: int, q: int, t: Optional[int] = None, h: Optional[int] = None) -> HpgParams:
    return hpg.derive_params(epsilon, k, q, t=t, h=h, star_inputs=True)


class PgPubOracle(FrequencyOracle):
    NAME = "pg-pub"
    PUBLIC_COIN = True

    @classmethod
    def from_config(cls, epsilon, k, q=None, t=None, h=None):
        return cls(pg_pub_params(epsilon, k, q=q, t=t))

    def encode_batch(self, values, generator, public_seed=0):
        return pub_encode_batch(self.params, values, public_seed, generator)

    def aggregate(self, messages, public_seed=0) -> CountVector:
        return pg.accumulate(self.params, pub_decode_batch(self.params, messages, public_seed))

    def decode(self, counts):
        return pg.decode_dp(self.params, counts)


class HpgPubOracle(FrequencyOracle):
    NAME = "hpg-pub"
    PUBLIC_COIN = True

    @classmethod
    def from_config(cls, epsilon, k, q=None, t=None, h=None):
        if q is None:
            raise ParameterError("hpg needs an explicit field size q")
        return cls(hpg_pub_params(epsilon, k, q, t=t, h=h))

    def encode_batch(self, values, generator, public_seed=0):
        return hpg_pub_encode_batch(self.params, values, public_seed, generator)

    def aggregate(self, messages, public_seed=0) -> CountVector:
        return hpg.accumulate(self.params, hpg_pub_decode_batch(self.params, messages, public_seed))

    def decode(self, counts):
        return hpg.decode_dp(self.params, counts)
