"""Gray-labelled QAM constellations and hard symbol decisions."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "ConstellationSpec",
    "qpsk",
    "qam",
    "modulate",
    "bits_of_symbol",
    "detect_symbol",
    "detect_indices",
]


@dataclass(frozen=True, eq=False)
class ConstellationSpec:
    """M points with one Gray label (MSB first) per point.

    ``points[i]`` carries ``labels[i]``; hard decisions return the lowest
    point index among equidistant candidates.
    """

    points: np.ndarray
    labels: np.ndarray
    _lookup: dict = field(init=False, repr=False)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=complex)
        labels = np.asarray(self.labels, dtype=np.uint8)
        M = points.shape[0]
        if M < 2 or M & (M - 1):
            raise ValueError(f"constellation size must be a power of 2, got {M}")
        if labels.shape != (M, M.bit_length() - 1):
            raise ValueError("labels must be an (M, log2 M) bit array")
        codes = (labels.astype(np.int64) << np.arange(labels.shape[1])[::-1]).sum(axis=1)
        if len(set(codes.tolist())) != M:
            raise ValueError("bit labels must be distinct")
        points.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)
        # label integer -> point index
        inv = np.empty(M, dtype=np.int64)
        inv[codes] = np.arange(M)
        inv.setflags(write=False)
        object.__setattr__(self, "_lookup", {"code_to_index": inv, "grid": _grid_of(points)})

    @property
    def order(self) -> int:
        return self.points.shape[0]

    @property
    def bits_per_symbol(self) -> int:
        return self.labels.shape[1]

    @property
    def avg_energy(self) -> float:
        return float(np.mean(self.points.real**2 + self.points.imag**2))

    @property
    def code_to_index(self) -> np.ndarray:
        return self._lookup["code_to_index"]

    def index_of_bits(self, bits: np.ndarray) -> np.ndarray:
        """Point indices for (..., log2 M) MSB-first bit arrays."""
        b = self.bits_per_symbol
        codes = (np.asarray(bits, dtype=np.int64) << np.arange(b - 1, -1, -1)).sum(axis=-1)
        return self.code_to_index[codes]


def _grid_of(points: np.ndarray):
    """(levels_re, levels_im) -> point index table if the points fill an odd-integer grid."""
    re = np.unique(points.real)[::-1]
    im = np.unique(points.imag)[::-1]
    if re.size * im.size != points.size:
        return None
    for lv in (re, im):
        if lv.size > 1 and not np.array_equal(lv, lv.size - 1 - 2 * np.arange(lv.size)):
            return None
    table = np.full((re.size, im.size), -1, dtype=np.int64)
    for idx, p in enumerate(points):
        table[np.flatnonzero(re == p.real)[0], np.flatnonzero(im == p.imag)[0]] = idx
    if np.any(table < 0):
        return None
    return table


def _axis_decision(x: np.ndarray, L: int) -> tuple[np.ndarray, np.ndarray]:
    # levels L-1, L-3, ... descending; compare against the exact midpoints
    # so that a tiny component is never swamped by the other axis
    if L == 1:
        return np.zeros(x.shape, dtype=np.int64), np.zeros(x.shape, dtype=bool)
    bounds = (L - 2 - 2 * np.arange(L - 1)).astype(float)
    pos = np.count_nonzero(bounds > x[..., None], axis=-1)
    tie = np.any(bounds == x[..., None], axis=-1)
    return pos, tie


def _gray_pam(nbits: int) -> tuple[np.ndarray, np.ndarray]:
    # amplitudes in descending order, reflected-binary labels
    L = 1 << nbits
    i = np.arange(L)
    return (L - 1) - 2 * i, i ^ (i >> 1)


@lru_cache(maxsize=None)
def qam(M: int = 4) -> ConstellationSpec:
    """Rectangular Gray QAM on the odd-integer grid (M=2 gives BPSK ±1).

    The leading ``floor(log2(M)/2)`` bits pick the quadrature level and the
    rest the in-phase level. For M=4 this is the unnormalized QPSK table
    00→1+j, 01→−1+j, 11→−1−j, 10→1−j.
    """
    if M < 2 or M & (M - 1):
        raise ValueError(f"M must be a power of 2 >= 2, got {M}")
    if M == 4:
        return qpsk()
    b = M.bit_length() - 1
    bq = b // 2
    bi = b - bq
    amp_i, lab_i = _gray_pam(bi)
    amp_q, lab_q = _gray_pam(bq)
    codes = np.arange(M)
    q_code, i_code = codes >> bi, codes & ((1 << bi) - 1)
    # invert the per-axis Gray labels
    pos_i = np.argsort(lab_i)[i_code]
    pos_q = np.argsort(lab_q)[q_code]
    points = amp_i[pos_i] + 1j * amp_q[pos_q]
    labels = (codes[:, None] >> np.arange(b - 1, -1, -1)) & 1
    return ConstellationSpec(points=points, labels=labels)


@lru_cache(maxsize=None)
def qpsk() -> ConstellationSpec:
    return ConstellationSpec(
        points=np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]),
        labels=np.array([[0, 0], [0, 1], [1, 1], [1, 0]]),
    )


def _as_bits(bits, nbits: int) -> np.ndarray:
    if isinstance(bits, str):
        if set(bits) - {"0", "1"}:
            raise ValueError(f"not a bit string: {bits!r}")
        bits = [int(c) for c in bits]
    arr = np.asarray(bits, dtype=np.int64).ravel()
    if arr.shape[0] != nbits:
        raise ValueError(f"expected {nbits} bits, got {arr.shape[0]}")
    if np.any((arr != 0) & (arr != 1)):
        raise ValueError("bits must be 0 or 1")
    return arr


def modulate(bits, spec: ConstellationSpec | None = None) -> complex:
    """Map one log2(M)-bit label (str or sequence) to its constellation point."""
    spec = spec or qpsk()
    arr = _as_bits(bits, spec.bits_per_symbol)
    return complex(spec.points[spec.index_of_bits(arr)])


def bits_of_symbol(symbol: complex, spec: ConstellationSpec | None = None) -> str:
    spec = spec or qpsk()
    hits = np.flatnonzero(spec.points == complex(symbol))
    if hits.size == 0:
        raise ValueError(f"{symbol!r} is not a constellation point")
    return "".join(str(b) for b in spec.labels[hits[0]])


def detect_indices(R: np.ndarray, spec: ConstellationSpec) -> np.ndarray:
    """Nearest-point indices, lowest index among equidistant points."""
    R = np.asarray(R, dtype=complex)
    table = spec._lookup["grid"]
    if table is None:
        d = np.abs(R[..., None] - spec.points) ** 2
        return np.argmin(d, axis=-1)
    Li, Lq = table.shape
    pi, ti = _axis_decision(R.real, Li)
    pq, tq = _axis_decision(R.imag, Lq)
    best = table[pi, pq]
    if np.any(ti | tq):
        pi2 = np.minimum(pi + ti, Li - 1)
        pq2 = np.minimum(pq + tq, Lq - 1)
        best = np.minimum.reduce([best, table[pi2, pq], table[pi, pq2], table[pi2, pq2]])
    return best


def detect_symbol(R: complex, spec: ConstellationSpec | None = None) -> complex:
    spec = spec or qpsk()
    R = complex(R)
    if not (np.isfinite(R.real) and np.isfinite(R.imag)):
        raise ValueError(f"non-finite observation {R!r}")
    return complex(spec.points[detect_indices(np.array(R), spec)])
