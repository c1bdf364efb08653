"""Projective space P(F_q^t): canonical vectors, dense point ranks, hyperplanes.

Point ranks follow a fixed block scheme. Points whose first nonzero coordinate
sits at position j (0-based) occupy one contiguous block of q^(t-1-j) ranks,
blocks ordered by increasing j. Inside a block the free suffix after the
leading 1 is read as a base-q number, most significant digit first. With this
scheme appending a digit w to a canonical prefix of rank r gives rank q*r + w,
and dropping a leading zero subtracts q^(m-1); the dynamic-programming
decoders rely on both.
"""

import logging
from functools import cached_property
from typing import List, Sequence, Tuple

import torch

from .errors import IndexOutOfRange, NotCanonical, ParameterError, ParameterOverflow, ZeroVector
from .ffield import FieldTable

logger = logging.getLogger(__name__)

INT64_LIMIT = 2**63
MAX_REJECTION_ROUNDS = 10_000


def universe_size(q: int, m: int) -> int:
    """Number of projective points of F_q^m, (q^m - 1)/(q - 1)."""
    return (q**m - 1) // (q - 1)


def powers(q: int, m: int) -> torch.Tensor:
    """[q^(m-1), ..., q, 1]"""
    return torch.tensor([q ** (m - 1 - i) for i in range(m)], dtype=torch.long)


def block_offsets(q: int, m: int) -> torch.Tensor:
    offsets = [0]
    for j in range(m - 1):
        offsets.append(offsets[-1] + q ** (m - 1 - j))
    return torch.tensor(offsets, dtype=torch.long)


def to_digits(values: torch.Tensor, q: int, m: int) -> torch.Tensor:
    """Base-q digits of `values`, shape (..., m), most significant first."""
    return torch.div(values.unsqueeze(-1), powers(q, m), rounding_mode="floor") % q


def leading_positions(vectors: torch.Tensor) -> torch.Tensor:
    """Position of the first nonzero coordinate per row; m for all-zero rows."""
    m = vectors.shape[-1]
    positions = torch.arange(m).expand_as(vectors)
    return torch.where(vectors != 0, positions, torch.full_like(positions, m)).min(dim=-1).values


def points_from_ranks(q: int, m: int, ranks: torch.Tensor) -> torch.Tensor:
    offsets = block_offsets(q, m)
    block = torch.searchsorted(offsets, ranks, right=True) - 1
    suffix = ranks - offsets[block]
    return to_digits(suffix + powers(q, m)[block], q, m)


def ranks_from_points(q: int, m: int, points: torch.Tensor) -> torch.Tensor:
    """Inverse of `points_from_ranks`; rows must be canonical."""
    lead = leading_positions(points)
    if (lead == m).any():
        raise NotCanonical("The zero vector is not a projective point")
    weights = powers(q, m)
    if (points.gather(-1, lead.unsqueeze(-1)).squeeze(-1) != 1).any():
        raise NotCanonical("First nonzero coordinate must be 1")
    value = (points * weights).sum(dim=-1)
    return block_offsets(q, m)[lead] + value - weights[lead]


def canonicalize_vectors(field: FieldTable, vectors: torch.Tensor) -> torch.Tensor:
    """Scale every row by the inverse of its first nonzero entry."""
    lead = leading_positions(vectors)
    if (lead == vectors.shape[-1]).any():
        raise ZeroVector("The zero vector has no canonical form")
    leading = vectors.gather(-1, lead.unsqueeze(-1))
    return vectors * field.inverse_table[leading] % field.q


class Geometry:
    def __init__(self, field: FieldTable, t: int):
        if t < 2:
            raise ParameterError(f"Dimension t must be at least 2, got {t}")
        if field.q**t >= INT64_LIMIT:
            raise ParameterOverflow(f"q^t = {field.q}^{t} does not fit in 63 bits")

        self.field = field
        self.q = field.q
        self.t = t
        self.k_universe = universe_size(self.q, t)
        self.c_set = universe_size(self.q, t - 1)
        self.c_int = universe_size(self.q, t - 2)

        assert self.c_set**2 >= self.k_universe * self.c_int

    def __repr__(self):
        return f"Geometry(q={self.q}, t={self.t}, k_universe={self.k_universe})"

    def __eq__(self, other):
        return isinstance(other, Geometry) and self.q == other.q and self.t == other.t

    def __hash__(self):
        return hash((self.q, self.t))

    # Single points

    def index_to_point(self, i: int) -> Tuple[int, ...]:
        if not 0 <= i < self.k_universe:
            raise IndexOutOfRange(f"Point index {i} outside [0, {self.k_universe})")
        return tuple(self.points(torch.tensor([i]))[0].tolist())

    def point_to_index(self, v: Sequence[int]) -> int:
        self._check_vector(v)
        return int(self.indices(torch.tensor([list(v)], dtype=torch.long))[0])

    def canonicalize(self, v: Sequence[int]) -> Tuple[int, ...]:
        self._check_vector(v)
        return tuple(canonicalize_vectors(self.field, torch.tensor([list(v)], dtype=torch.long))[0].tolist())

    def inner_product(self, u: Sequence[int], v: Sequence[int]) -> int:
        return sum(a * b for a, b in zip(u, v)) % self.q

    def subspace_members(self, v: Sequence[int]) -> List[int]:
        """Ranks of the points u with <u, v> = 0, ascending."""
        point = torch.tensor([list(self.canonicalize(v))], dtype=torch.long)
        return sorted(self.members(point)[0].tolist())

    def sample_in_subspace(self, v: Sequence[int], generator: torch.Generator) -> int:
        point = torch.tensor([list(self.canonicalize(v))], dtype=torch.long)
        return int(self.sample_in_subspace_batch(point, generator)[0])

    def sample_out_subspace(self, v: Sequence[int], generator: torch.Generator) -> int:
        point = torch.tensor([list(self.canonicalize(v))], dtype=torch.long)
        return int(self.sample_out_subspace_batch(point, generator)[0])

    def _check_vector(self, v: Sequence[int]):
        if len(v) != self.t or any(not 0 <= x < self.q for x in v):
            raise NotCanonical(f"Expected {self.t} coordinates in [0, {self.q}), got {tuple(v)}")

    # Batched

    def points(self, ranks: torch.Tensor) -> torch.Tensor:
        return points_from_ranks(self.q, self.t, ranks)

    def indices(self, points: torch.Tensor) -> torch.Tensor:
        return ranks_from_points(self.q, self.t, points)

    def inner_products(self, u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
        return (u * v).sum(dim=-1) % self.q

    @cached_property
    def star_points(self) -> torch.Tensor:
        """Ascending ranks of the q^(t-1) points with a nonzero last coordinate."""
        ranks = torch.arange(self.k_universe)
        return ranks[self.points(ranks)[:, -1] != 0]

    @cached_property
    def kernel_coefficients(self) -> torch.Tensor:
        """Canonical vectors of F_q^(t-1), one per point of a hyperplane."""
        return points_from_ranks(self.q, self.t - 1, torch.arange(self.c_set))

    def kernel_bases(self, points: torch.Tensor) -> torch.Tensor:
        """Basis of {u : <u, v> = 0} per canonical row v, shape (n, t-1, t).

        With v_j = 1 at the leading position j the basis is e_m - v_m e_j for
        every m != j, which is already in reduced echelon form.
        """
        n, t = points.shape
        lead = leading_positions(points)
        positions = torch.arange(t).expand(n, t)
        free = positions[positions != lead.unsqueeze(-1)].reshape(n, t - 1)

        bases = torch.zeros((n, t - 1, t), dtype=torch.long)
        rows = torch.arange(t - 1).expand(n, t - 1)
        batch = torch.arange(n).unsqueeze(-1).expand(n, t - 1)
        bases[batch, rows, free] = 1
        bases[batch, rows, lead.unsqueeze(-1).expand(n, t - 1)] = (-points.gather(-1, free)) % self.q
        return bases

    def members(self, points: torch.Tensor, chunk_size: int = 4096) -> torch.Tensor:
        """Ranks of S(v) for every canonical row v, shape (n, c_set), unsorted."""
        coefficients = self.kernel_coefficients
        out = []
        for start in range(0, points.shape[0], chunk_size):
            bases = self.kernel_bases(points[start : start + chunk_size])
            vectors = (coefficients[None, :, :, None] * bases[:, None, :, :]).sum(dim=2) % self.q
            canonical = canonicalize_vectors(self.field, vectors)
            out.append(self.indices(canonical))
        if not out:
            return torch.empty((0, self.c_set), dtype=torch.long)
        return torch.cat(out)

    def sample_in_subspace_batch(self, points: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
        n, t = points.shape
        if n == 0:
            return torch.empty(0, dtype=torch.long)
        # a uniform nonzero coefficient vector over the t-1 free coordinates
        coefficients = torch.randint(1, self.q ** (t - 1), (n,), generator=generator)
        free_values = to_digits(coefficients, self.q, t - 1)

        lead = leading_positions(points)
        positions = torch.arange(t).expand(n, t)
        vectors = torch.zeros((n, t), dtype=torch.long)
        vectors[positions != lead.unsqueeze(-1)] = free_values.reshape(-1)
        vectors[torch.arange(n), lead] = (-(vectors * points).sum(dim=-1)) % self.q

        return self.indices(canonicalize_vectors(self.field, vectors))

    def sample_out_subspace_batch(self, points: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
        n = points.shape[0]
        out = torch.randint(0, self.k_universe, (n,), generator=generator)
        pending = torch.arange(n)
        for rounds in range(MAX_REJECTION_ROUNDS):
            inside = self.inner_products(self.points(out[pending]), points[pending]) == 0
            pending = pending[inside]
            if pending.numel() == 0:
                if rounds > 32:
                    logger.warning(f"Out-of-subspace sampling needed {rounds} rejection rounds")
                return out
            out[pending] = torch.randint(0, self.k_universe, (pending.numel(),), generator=generator)
        raise RuntimeError("Out-of-subspace rejection sampling did not terminate")
