"""OFDM-IM subblock construction and interleaved frame assembly."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mapping import (
    InvalidParameterError,
    Sap,
    SapTables,
    SubblockParams,
    derive_params,
    index_to_sap,
    is_legal,
    sap_to_rank,
)
from .modem import ConstellationSpec, _as_bits, qam

__all__ = [
    "FrameConfig",
    "frame_config",
    "encode_subblock",
    "decode_subblock",
    "interleave",
    "deinterleave",
    "BatchEncoder",
]


@dataclass(frozen=True)
class FrameConfig:
    N: int
    G: int
    params: SubblockParams

    def __post_init__(self):
        if self.N != self.params.n * self.G:
            raise InvalidParameterError(
                f"N={self.N} must equal n*G = {self.params.n}*{self.G}"
            )

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def bits_per_frame(self) -> int:
        return self.params.p * self.G


def frame_config(N: int, n: int, k: int, M: int = 4) -> FrameConfig:
    if N % n:
        raise InvalidParameterError(f"N={N} is not a multiple of n={n}")
    return FrameConfig(N=N, G=N // n, params=derive_params(n, k, M))


def _bits_to_int(bits: np.ndarray) -> int:
    return int("".join(str(int(b)) for b in bits) or "0", 2)


def encode_subblock(
    bits, params: SubblockParams, spec: ConstellationSpec | None = None
) -> tuple[Sap, np.ndarray]:
    """Map ``p1 + p2`` bits to an activation pattern and a length-n subblock.

    Index bits (MSB first) give the pattern rank; symbol bits fill the active
    positions in increasing subcarrier order.
    """
    spec = spec or qam(params.M)
    arr = _as_bits(bits, params.p)
    sap = index_to_sap(_bits_to_int(arr[: params.p1]), params)
    sym_bits = arr[params.p1 :].reshape(params.k, spec.bits_per_symbol)
    x = np.zeros(params.n, dtype=complex)
    x[np.array(sap.indices) - 1] = spec.points[spec.index_of_bits(sym_bits)]
    return sap, x


def decode_subblock(
    sap: Sap, symbols: Sequence[complex], params: SubblockParams,
    spec: ConstellationSpec | None = None,
) -> str:
    """Inverse of :func:`encode_subblock` for a legal pattern."""
    spec = spec or qam(params.M)
    if not is_legal(sap, params):
        raise InvalidParameterError(f"cannot demap illegal SAP {sap}")
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.shape != (params.k,):
        raise InvalidParameterError(f"expected {params.k} symbols, got {symbols.shape}")
    out = format(sap_to_rank(sap, params), f"0{params.p1}b") if params.p1 else ""
    for s in symbols:
        hits = np.flatnonzero(spec.points == s)
        if hits.size == 0:
            raise InvalidParameterError(f"{s!r} is not a constellation point")
        out += "".join(str(b) for b in spec.labels[hits[0]])
    return out


def interleave(subblocks: np.ndarray, config: FrameConfig) -> np.ndarray:
    """Place element i of subblock g on frame subcarrier ``g + (i-1)G`` (1-based).

    Works on a trailing ``(G, n)`` pair of axes.
    """
    sb = np.asarray(subblocks)
    if sb.shape[-2:] != (config.G, config.n):
        raise InvalidParameterError(
            f"expected trailing shape {(config.G, config.n)}, got {sb.shape}"
        )
    return np.swapaxes(sb, -1, -2).reshape(*sb.shape[:-2], config.N)


def deinterleave(frame: np.ndarray, config: FrameConfig) -> np.ndarray:
    fr = np.asarray(frame)
    if fr.shape[-1] != config.N:
        raise InvalidParameterError(f"expected trailing length {config.N}, got {fr.shape}")
    return np.swapaxes(fr.reshape(*fr.shape[:-1], config.n, config.G), -1, -2)


class BatchEncoder:
    """Vectorized subblock encoder over arrays of bit vectors."""

    def __init__(self, params: SubblockParams, spec: ConstellationSpec,
                 tables: SapTables | None = None):
        self.params = params
        self.spec = spec
        self.tables = tables or SapTables(params)

    def encode(self, bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(..., p) bits -> (ranks (...), subblocks (..., n))."""
        p = self.params
        bits = np.asarray(bits)
        ranks = self.tables.bits_to_rank(bits[..., : p.p1])
        sym_bits = bits[..., p.p1 :].reshape(*bits.shape[:-1], p.k, self.spec.bits_per_symbol)
        symbols = self.spec.points[self.spec.index_of_bits(sym_bits)]
        x = np.zeros((*bits.shape[:-1], p.n), dtype=complex)
        np.put_along_axis(x, self.tables.members[ranks], symbols, axis=-1)
        return ranks, x
