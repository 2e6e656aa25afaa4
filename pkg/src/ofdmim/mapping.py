"""Subcarrier activation pattern (SAP) combinatorics.

Index bits select one of ``2**p1`` legal patterns out of the ``C(n, k)``
possible k-subsets of ``{1..n}``. The map is the lexicographic combinatorial
number system: rank 0 is ``{1..k}``, rank ``C(n,k)-1`` is ``{n-k+1..n}``, and
a pattern is legal iff its rank is below ``2**p1``.

Subcarrier indices are 1-based, ranks 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from math import comb
from typing import Iterable, Iterator

import numpy as np

__all__ = [
    "InvalidParameterError",
    "SubblockParams",
    "Sap",
    "derive_params",
    "index_to_sap",
    "sap_to_rank",
    "make_sap",
    "is_legal",
    "illegal_ratio",
    "illegal_ratio_exact",
    "iter_saps",
    "SapTables",
]

# ranks and p1-bit integers are carried in int64 arrays
_MAX_PATTERNS = 2**62


class InvalidParameterError(ValueError):
    """Raised for subblock parameters or patterns outside their domain."""


@dataclass(frozen=True)
class SubblockParams:
    n: int
    k: int
    M: int
    p1: int
    p2: int
    nCk: int

    @property
    def p(self) -> int:
        return self.p1 + self.p2

    @property
    def n_legal(self) -> int:
        return 1 << self.p1

    @property
    def bits_per_symbol(self) -> int:
        return self.M.bit_length() - 1


def derive_params(n: int, k: int, M: int = 4) -> SubblockParams:
    """Build :class:`SubblockParams` for ``k`` active out of ``n`` subcarriers."""
    for name, v in (("n", n), ("k", k), ("M", M)):
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
            raise InvalidParameterError(f"{name} must be an integer, got {v!r}")
    n, k, M = int(n), int(k), int(M)
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    if not 1 <= k < n:
        raise InvalidParameterError(f"need 1 <= k < n, got n={n}, k={k}")
    if M < 2 or M & (M - 1):
        raise InvalidParameterError(f"M must be a power of 2 >= 2, got {M}")
    nck = comb(n, k)
    if nck >= _MAX_PATTERNS:
        raise InvalidParameterError(f"C({n},{k}) = {nck} overflows the rank range")
    p1 = nck.bit_length() - 1  # floor(log2) on exact integers
    p2 = k * (M.bit_length() - 1)
    return SubblockParams(n=n, k=k, M=M, p1=p1, p2=p2, nCk=nck)


@dataclass(frozen=True, order=True)
class Sap:
    """A k-subset of active subcarriers, ``indices`` 1-based and increasing."""

    rank: int
    indices: tuple[int, ...]

    def __contains__(self, i: int) -> bool:
        return i in self.indices

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)

    def __len__(self) -> int:
        return len(self.indices)


def _check_indices(indices: Iterable[int], params: SubblockParams) -> tuple[int, ...]:
    idx = tuple(int(i) for i in indices)
    if len(idx) != params.k:
        raise InvalidParameterError(f"SAP needs {params.k} indices, got {len(idx)}")
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise InvalidParameterError(f"SAP indices must be strictly increasing: {idx}")
    if idx[0] < 1 or idx[-1] > params.n:
        raise InvalidParameterError(f"SAP indices must lie in 1..{params.n}: {idx}")
    return idx


def _rank(idx: tuple[int, ...], n: int, k: int) -> int:
    rank = 0
    prev = 0
    for j, c in enumerate(idx, start=1):
        for v in range(prev + 1, c):
            rank += comb(n - v, k - j)
        prev = c
    return rank


def index_to_sap(rank: int, params: SubblockParams) -> Sap:
    """Return the k-subset at lexicographic position ``rank``."""
    rank = int(rank)
    if not 0 <= rank < params.nCk:
        raise InvalidParameterError(f"rank {rank} outside 0..{params.nCk - 1}")
    n, k = params.n, params.k
    rem = rank
    out = []
    v = 1
    for j in range(1, k + 1):
        while True:
            count = comb(n - v, k - j)
            if rem < count:
                break
            rem -= count
            v += 1
        out.append(v)
        v += 1
    return Sap(rank=rank, indices=tuple(out))


def make_sap(indices: Iterable[int], params: SubblockParams) -> Sap:
    """Build a :class:`Sap` from any iterable of 1-based indices (sorted here)."""
    idx = _check_indices(sorted(int(i) for i in indices), params)
    return Sap(rank=_rank(idx, params.n, params.k), indices=idx)


def sap_to_rank(sap: Sap | Iterable[int], params: SubblockParams) -> int:
    if isinstance(sap, Sap):
        idx = _check_indices(sap.indices, params)
    else:
        idx = _check_indices(sap, params)
    return _rank(idx, params.n, params.k)


def is_legal(sap: Sap | Iterable[int], params: SubblockParams) -> bool:
    return sap_to_rank(sap, params) < params.n_legal


def illegal_ratio_exact(params: SubblockParams) -> Fraction:
    """Illegal patterns over all incorrect patterns, as an exact fraction."""
    return Fraction(params.nCk - params.n_legal, params.nCk - 1)


def illegal_ratio(params: SubblockParams) -> float:
    return float(illegal_ratio_exact(params))


def iter_saps(params: SubblockParams) -> Iterator[Sap]:
    """All k-subsets in rank order."""
    for rank in range(params.nCk):
        yield index_to_sap(rank, params)


class SapTables:
    """Dense lookup tables for vectorized mapping and detection.

    Attributes
    ----------
    members : (C, k) int array of 0-based active positions, row = rank.
    indicator : (C, n) float array, 1.0 at active positions.
    mask_to_rank : (2**n,) int array, rank of the bitmask (bit i-1 set for
        subcarrier i), -1 for masks of the wrong weight.
    index_bits : (2**p1, p1) uint8 array, MSB-first binary of each legal rank.
    """

    # 2**n mask table stays small up to here
    MAX_N = 20

    def __init__(self, params: SubblockParams):
        if params.n > self.MAX_N:
            raise InvalidParameterError(
                f"vectorized tables support n <= {self.MAX_N}, got {params.n}"
            )
        self.params = params
        n, k = params.n, params.k
        members = np.array([s.indices for s in iter_saps(params)], dtype=np.int64) - 1
        self.members = members
        self.indicator = np.zeros((params.nCk, n))
        np.put_along_axis(self.indicator, members, 1.0, axis=1)
        weights = np.int64(1) << np.arange(n, dtype=np.int64)
        masks = (np.int64(1) << members).sum(axis=1)
        self.mask_to_rank = np.full(1 << n, -1, dtype=np.int64)
        self.mask_to_rank[masks] = np.arange(params.nCk)
        self._weights = weights
        shifts = np.arange(params.p1 - 1, -1, -1, dtype=np.int64)
        legal = np.arange(params.n_legal, dtype=np.int64)
        self.index_bits = ((legal[:, None] >> shifts) & 1).astype(np.uint8)
        self._shifts = shifts
        self.k = k

    @cached_property
    def legal_indicator(self) -> np.ndarray:
        return self.indicator[: self.params.n_legal]

    def rank_of_positions(self, positions: np.ndarray) -> np.ndarray:
        """Ranks of (..., k) arrays of 0-based positions, in any order."""
        masks = (np.int64(1) << positions.astype(np.int64)).sum(axis=-1)
        return self.mask_to_rank[masks]

    def bits_to_rank(self, bits: np.ndarray) -> np.ndarray:
        """MSB-first (..., p1) bit arrays to integer ranks."""
        if self.params.p1 == 0:
            return np.zeros(bits.shape[:-1], dtype=np.int64)
        return (bits.astype(np.int64) << self._shifts).sum(axis=-1)
