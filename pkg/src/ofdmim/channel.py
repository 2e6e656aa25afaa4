"""Multipath Rayleigh fading in the frequency domain: ``Y_i = H_i X_i + Z_i``.

The cyclic prefix makes this per-subcarrier model exact, so no time-domain
waveform is synthesized.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegenerateChannelError",
    "PowerDelayProfile",
    "ChannelRealization",
    "NoiseSpec",
    "dft_matrix",
    "sample_channel",
    "sample_taps",
    "apply_channel",
    "equalize",
    "sigma2_from_snr",
]

# |H_i| below this is treated as a deep null
CFR_FLOOR = 1e-12


class DegenerateChannelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PowerDelayProfile:
    tap_powers: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.tap_powers, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0) or p.sum() <= 0:
            raise ValueError("tap powers must be a non-empty non-negative vector")
        p = p / p.sum()
        p.setflags(write=False)
        object.__setattr__(self, "tap_powers", p)

    @classmethod
    def exponential(cls, length: int = 8, decay: float = 1.0) -> "PowerDelayProfile":
        """``p_t ∝ exp(-decay * t)`` for ``t = 0..length-1``."""
        return cls(np.exp(-decay * np.arange(length)))

    @classmethod
    def flat(cls) -> "PowerDelayProfile":
        return cls(np.array([1.0]))

    @property
    def length(self) -> int:
        return self.tap_powers.size


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    taps: np.ndarray
    cfr: np.ndarray

    @classmethod
    def from_taps(cls, taps, N: int) -> "ChannelRealization":
        taps = np.asarray(taps, dtype=complex)
        return cls(taps=taps, cfr=dft_matrix(N, taps.shape[-1]) @ taps)

    @classmethod
    def identity(cls, N: int) -> "ChannelRealization":
        return cls(taps=np.ones(1, dtype=complex), cfr=np.ones(N, dtype=complex))


@dataclass(frozen=True)
class NoiseSpec:
    """Complex noise CN(0, 2*sigma2): each real dimension has variance sigma2."""

    sigma2: float
    snr_db: float | None = None

    def __post_init__(self):
        if not self.sigma2 >= 0:
            raise ValueError(f"sigma2 must be >= 0, got {self.sigma2}")


def sigma2_from_snr(snr_db: float, avg_energy: float, mode: str = "es",
                    k: int | None = None, p: int | None = None) -> float:
    """Per-dimension noise variance for an SNR per active subcarrier.

    ``mode="es"`` treats ``snr_db`` as Es/N0 with N0 = 2*sigma2. ``mode="eb"``
    treats it as Eb/N0 with Eb = Es*k/p.
    """
    snr = 10.0 ** (snr_db / 10.0)
    if mode == "es":
        es_n0 = snr
    elif mode == "eb":
        if not k or not p:
            raise ValueError("eb mode needs k and p")
        es_n0 = snr * p / k
    else:
        raise ValueError(f"unknown SNR mode {mode!r}")
    return avg_energy / (2.0 * es_n0)


def dft_matrix(N: int, L: int) -> np.ndarray:
    """(N, L) matrix mapping L taps to the N-point CFR."""
    i = np.arange(N)[:, None]
    t = np.arange(L)[None, :]
    return np.exp(-2j * np.pi * ((i * t) % N) / N)


def sample_taps(rng: np.random.Generator, pdp: PowerDelayProfile,
                size: int | tuple[int, ...] = ()) -> np.ndarray:
    lead = (size,) if isinstance(size, int) else tuple(size)
    g = rng.standard_normal((*lead, pdp.length, 2))
    return np.sqrt(pdp.tap_powers / 2.0) * (g[..., 0] + 1j * g[..., 1])


def sample_channel(rng: np.random.Generator, pdp: PowerDelayProfile, N: int) -> ChannelRealization:
    """Independent CN(0, p_t) taps; redrawn if any subcarrier falls in a deep null."""
    F = dft_matrix(N, pdp.length)
    while True:
        taps = sample_taps(rng, pdp)
        cfr = F @ taps
        if np.min(np.abs(cfr)) >= CFR_FLOOR:
            return ChannelRealization(taps=taps, cfr=cfr)


def apply_channel(x, chan: ChannelRealization, noise: NoiseSpec,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    H = np.asarray(chan.cfr)
    if x.shape != H.shape:
        raise ValueError(f"frame shape {x.shape} does not match CFR shape {H.shape}")
    y = H * x
    if noise.sigma2 > 0:
        if rng is None:
            raise ValueError("a generator is required for noisy channels")
        g = rng.standard_normal((*x.shape, 2))
        y = y + np.sqrt(noise.sigma2) * (g[..., 0] + 1j * g[..., 1])
    return y


def equalize(y, chan: ChannelRealization | np.ndarray) -> np.ndarray:
    H = chan.cfr if isinstance(chan, ChannelRealization) else np.asarray(chan)
    if np.any(np.abs(H) < CFR_FLOOR):
        raise DegenerateChannelError("channel has a subcarrier below the CFR floor")
    return np.asarray(y) / H
