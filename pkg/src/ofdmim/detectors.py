"""Activation-pattern detection from per-subcarrier active likelihoods.

Every detector works on the same metric vector

    A_i = |H_i|^2 (2 Re{conj(R_i) s_i} - |s_i|^2),   s_i = nearest point to R_i

whose subset sums rank candidate patterns: ``ml`` maximizes over legal
patterns, ``klv`` takes the k largest metrics (legal or not) and ``subml``
tries the best and the fixed second-best pattern before falling back.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Literal

import numpy as np

from .mapping import Sap, SapTables, SubblockParams, index_to_sap, make_sap
from .modem import ConstellationSpec, detect_indices, qam

__all__ = [
    "ActiveLikelihoods",
    "DetectionResult",
    "OmegaLabel",
    "compute_metrics",
    "qpsk_metric",
    "ml_detect",
    "klv_detect",
    "subml_detect",
    "detect",
    "kth_best_saps",
    "classify_outcome",
    "detection_bits",
    "get_tables",
    "BatchDetector",
    "DETECTORS",
    "FALLBACK_POLICIES",
]

DETECTORS = ("ml", "klv", "subml")
FALLBACK_POLICIES = ("default", "ml")
Fallback = Literal["default", "ml"]


@lru_cache(maxsize=32)
def get_tables(params: SubblockParams) -> SapTables:
    return SapTables(params)


@dataclass(frozen=True, eq=False)
class ActiveLikelihoods:
    """Metrics ``a``, detected symbols ``shat`` and the 1-based descending order.

    ``order`` breaks ties between equal metrics by ascending subcarrier index.
    """

    a: np.ndarray
    order: np.ndarray
    shat: np.ndarray
    shat_index: np.ndarray

    @classmethod
    def from_values(cls, a, spec: ConstellationSpec | None = None) -> "ActiveLikelihoods":
        """Wrap a bare metric vector; symbol decisions default to point 0."""
        spec = spec or qam(4)
        a = np.asarray(a, dtype=float)
        idx = np.zeros(a.shape, dtype=np.int64)
        return cls(a=a, order=np.argsort(-a, kind="stable") + 1,
                   shat=spec.points[idx], shat_index=idx)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def top(self, k: int) -> tuple[int, ...]:
        return tuple(int(i) for i in self.order[:k])

    def second(self, k: int) -> tuple[int, ...]:
        return tuple(int(i) for i in self.order[: k - 1]) + (int(self.order[k]),)


@dataclass(frozen=True, eq=False)
class DetectionResult:
    sap: Sap
    symbols: np.ndarray
    detector: str
    fallback_used: bool = False


@dataclass(frozen=True, order=True)
class OmegaLabel:
    """Position of the first legal pattern in the best-first order.

    ``depth=1, terminal="correct"`` is Ω(c); ``depth=3, terminal="legal-incorrect"``
    is Ω(i,i,l). ``terminal="overflow"`` means no legal pattern within the
    classifier's depth cap.
    """

    depth: int
    terminal: str

    @property
    def name(self) -> str:
        if self.terminal == "overflow":
            return f"Ω(i×{self.depth - 1},…)"
        tail = "c" if self.terminal == "correct" else "l"
        return "Ω(" + ",".join(["i"] * (self.depth - 1) + [tail]) + ")"


def compute_metrics(r, h, spec: ConstellationSpec | None = None) -> ActiveLikelihoods:
    """Active likelihoods of one equalized subblock ``r`` with CFR ``h``."""
    spec = spec or qam(4)
    r = np.asarray(r, dtype=complex)
    h = np.asarray(h, dtype=complex)
    if r.shape != h.shape or r.ndim != 1:
        raise ValueError(f"r and h must be equal-length vectors, got {r.shape}, {h.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("non-finite observation")
    if np.any(h == 0):
        raise ValueError("degenerate channel")
    idx = detect_indices(r, spec)
    s = spec.points[idx]
    a = _metric(r, h, s)
    order = np.argsort(-a, kind="stable") + 1
    return ActiveLikelihoods(a=a, order=order, shat=s, shat_index=idx)


def _metric(r: np.ndarray, h: np.ndarray, s: np.ndarray) -> np.ndarray:
    return (h.real**2 + h.imag**2) * (2.0 * (r.real * s.real + r.imag * s.imag)
                                      - (s.real**2 + s.imag**2))


def qpsk_metric(r, h) -> np.ndarray:
    """Closed form of the active likelihood for the ±1±j constellation."""
    r = np.asarray(r, dtype=complex)
    return 2.0 * np.abs(h) ** 2 * (np.abs(r.real) + np.abs(r.imag) - 1.0)


def _result(al: ActiveLikelihoods, sap: Sap, detector: str, fallback: bool = False):
    pos = np.array(sap.indices) - 1
    return DetectionResult(sap=sap, symbols=al.shat[pos], detector=detector,
                           fallback_used=fallback)


def _legal_sums(al: ActiveLikelihoods, params: SubblockParams) -> np.ndarray:
    if params.n <= SapTables.MAX_N:
        return get_tables(params).legal_indicator @ al.a
    return np.array([
        sum(al.a[i - 1] for i in index_to_sap(v, params).indices)
        for v in range(params.n_legal)
    ])


def ml_detect(al: ActiveLikelihoods, params: SubblockParams) -> DetectionResult:
    """Exhaustive search of the legal patterns; equal sums go to the lowest rank."""
    rank = int(np.argmax(_legal_sums(al, params)))
    return _result(al, index_to_sap(rank, params), "ml")


def klv_detect(al: ActiveLikelihoods, params: SubblockParams) -> DetectionResult:
    sap = make_sap(al.top(params.k), params)
    return _result(al, sap, "klv", fallback=sap.rank >= params.n_legal)


def subml_detect(al: ActiveLikelihoods, params: SubblockParams,
                 fallback: Fallback = "default") -> DetectionResult:
    """Test the best pattern, then the second best; otherwise fall back.

    ``fallback="default"`` returns the rank-0 pattern, ``fallback="ml"`` the
    exhaustive ML answer. Either way ``fallback_used`` is set.
    """
    k = params.k
    best = make_sap(al.top(k), params)
    if best.rank < params.n_legal:
        return _result(al, best, "subml")
    second = make_sap(al.second(k), params)
    if second.rank < params.n_legal:
        return _result(al, second, "subml")
    if fallback == "ml":
        sap = ml_detect(al, params).sap
    elif fallback == "default":
        sap = index_to_sap(0, params)
    else:
        raise ValueError(f"unknown fallback policy {fallback!r}")
    return _result(al, sap, "subml", fallback=True)


def detect(al: ActiveLikelihoods, params: SubblockParams, detector: str,
           fallback: Fallback = "default") -> DetectionResult:
    if detector == "ml":
        return ml_detect(al, params)
    if detector == "klv":
        return klv_detect(al, params)
    if detector == "subml":
        return subml_detect(al, params, fallback)
    raise ValueError(f"unknown detector {detector!r}; choose from {DETECTORS}")


def kth_best_saps(al: ActiveLikelihoods, params: SubblockParams) -> Iterator[Sap]:
    """Lazily yield every pattern in non-increasing order of metric sum.

    Best-first search over single-swap neighbours starting from the k largest
    metrics. Any pattern other than the best has a neighbour with a sum at
    least as large that is one swap closer to the best, so pops come out in
    order.
    """
    a = al.a
    n, k = params.n, params.k

    def entry(indices):
        sap = make_sap(indices, params)
        return (-math.fsum(a[i - 1] for i in sap.indices), sap.rank, sap)

    start = entry(al.top(k))
    heap = [start]
    seen = {start[1]}
    everything = set(range(1, n + 1))
    while heap:
        _, _, sap = heapq.heappop(heap)
        yield sap
        members = set(sap.indices)
        outside = sorted(everything - members)
        for out_i in sap.indices:
            for in_i in outside:
                cand = entry(members - {out_i} | {in_i})
                if cand[1] not in seen:
                    seen.add(cand[1])
                    heapq.heappush(heap, cand)


def classify_outcome(al: ActiveLikelihoods, true_sap: Sap, params: SubblockParams,
                     max_depth: int | None = None) -> OmegaLabel:
    """Label a received subblock by where the first legal pattern sits."""
    if true_sap.rank >= params.n_legal:
        raise ValueError(f"transmitted SAP {true_sap} is illegal")
    for depth, sap in enumerate(kth_best_saps(al, params), start=1):
        if max_depth is not None and depth > max_depth:
            return OmegaLabel(depth=max_depth + 1, terminal="overflow")
        if sap.rank < params.n_legal:
            terminal = "correct" if sap.rank == true_sap.rank else "legal-incorrect"
            return OmegaLabel(depth=depth, terminal=terminal)
    raise AssertionError("pattern stream exhausted without a legal pattern")


def detection_bits(result: DetectionResult, params: SubblockParams,
                   spec: ConstellationSpec | None = None) -> str:
    """Demap a detection to ``p`` bits.

    An illegal pattern (klv only) takes its index bits from rank 0; symbol
    bits always come from the detected active positions.
    """
    spec = spec or qam(params.M)
    rank = result.sap.rank if result.sap.rank < params.n_legal else 0
    out = format(rank, f"0{params.p1}b") if params.p1 else ""
    for s in result.symbols:
        out += "".join(str(b) for b in spec.labels[np.flatnonzero(spec.points == s)[0]])
    return out


class BatchDetector:
    """All three detectors and the outcome label over arrays of subblocks.

    Inputs carry a trailing subcarrier axis of length n; every leading axis is
    treated as a batch. Sums for ml and for the label share one matrix product
    so the two always agree.
    """

    def __init__(self, params: SubblockParams, spec: ConstellationSpec,
                 fallback: Fallback = "default"):
        if fallback not in FALLBACK_POLICIES:
            raise ValueError(f"unknown fallback policy {fallback!r}")
        self.params = params
        self.spec = spec
        self.fallback = fallback
        self.tables = get_tables(params)

    def metrics(self, r: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        idx = detect_indices(r, self.spec)
        return _metric(r, h, self.spec.points[idx]), idx

    def detect(self, a: np.ndarray) -> dict[str, np.ndarray]:
        p = self.params
        k, L = p.k, p.n_legal
        t = self.tables
        order = np.argsort(-a, axis=-1, kind="stable")
        r1 = t.rank_of_positions(order[..., :k])
        r2 = t.rank_of_positions(np.concatenate([order[..., : k - 1], order[..., k : k + 1]], axis=-1))
        sums = a @ t.indicator.T
        ml = np.argmax(sums[..., :L], axis=-1)
        ml_sum = np.take_along_axis(sums, ml[..., None], axis=-1)
        depth = 1 + np.count_nonzero(sums > ml_sum, axis=-1)
        legal1 = r1 < L
        legal2 = r2 < L
        fb = ~legal1 & ~legal2
        fb_rank = ml if self.fallback == "ml" else np.zeros_like(ml)
        subml = np.where(legal1, r1, np.where(legal2, r2, fb_rank))
        return {
            "klv": r1,
            "subml": subml,
            "ml": ml,
            "subml_fallback": fb,
            "depth": depth,
        }

    def bits(self, ranks: np.ndarray, shat_idx: np.ndarray) -> np.ndarray:
        """Demap (...) ranks plus (..., n) symbol decisions to (..., p) bits."""
        p, t, spec = self.params, self.tables, self.spec
        pos = t.members[ranks]
        sym_idx = np.take_along_axis(shat_idx, pos, axis=-1)
        sym_bits = spec.labels[sym_idx].reshape(*ranks.shape, p.p2)
        idx_bits = t.index_bits[np.where(ranks < p.n_legal, ranks, 0)]
        return np.concatenate([idx_bits, sym_bits], axis=-1)
