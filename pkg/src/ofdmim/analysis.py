"""Paired Monte Carlo comparison of the ml, klv and subml detectors.

One trial is one frame of G subblocks. Trial ``t`` draws its bits, channel
and unit-variance noise from ``default_rng([master_seed, t])``; the noise is
rescaled per SNR point, so every SNR point sees the same realizations and the
result does not depend on how trials are split across workers.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Iterable, Sequence

import numpy as np

from .channel import (
    CFR_FLOOR,
    PowerDelayProfile,
    dft_matrix,
    sample_taps,
    sigma2_from_snr,
)
from .detectors import (
    DETECTORS,
    FALLBACK_POLICIES,
    BatchDetector,
    DetectionResult,
    OmegaLabel,
    classify_outcome,
    compute_metrics,
    detect,
    detection_bits,
)
from .mapping import SubblockParams, illegal_ratio, index_to_sap
from .modem import qam
from .transceiver import BatchEncoder, FrameConfig, deinterleave, frame_config, interleave

__all__ = [
    "MonteCarloConfig",
    "OutcomeTally",
    "TallySummary",
    "BoundCheck",
    "BoundReport",
    "SubblockRecord",
    "DominanceViolation",
    "run_trial",
    "estimate",
    "check_bounds",
    "sweep",
    "wilson_interval",
    "CSV_COLUMNS",
    "write_csv",
    "read_csv",
    "summaries_from_rows",
]

log = logging.getLogger(__name__)

Z95 = NormalDist().inv_cdf(0.975)
LABEL_DEPTH_CAP = 16
PAIRED = ("klv", "subml")


class DominanceViolation(AssertionError):
    """klv-correct ⟹ subml-correct ⟹ ml-correct failed on some subblock."""


@dataclass(frozen=True)
class MonteCarloConfig:
    N: int = 128
    n: int = 8
    k: int = 4
    M: int = 4
    snr_grid_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0)
    trials_per_point: int = 10_000
    master_seed: int = 0
    pdp_length: int = 8
    pdp_decay: float = 1.0
    fallback_policy: str = "default"
    snr_mode: str = "es"
    sigma2_override: float | None = None
    max_label_depth: int | None = None
    chunk_size: int = 500
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        if self.trials_per_point < 1:
            raise ValueError("trials_per_point must be >= 1")
        if not self.snr_grid_db:
            raise ValueError("SNR grid is empty")
        if any(b <= a for a, b in zip(self.snr_grid_db, self.snr_grid_db[1:])):
            raise ValueError("SNR grid must be strictly increasing")
        if self.fallback_policy not in FALLBACK_POLICIES:
            raise ValueError(f"fallback_policy must be one of {FALLBACK_POLICIES}")
        if self.snr_mode not in ("es", "eb"):
            raise ValueError("snr_mode must be 'es' or 'eb'")
        if self.sigma2_override is not None and self.sigma2_override < 0:
            raise ValueError("sigma2_override must be >= 0")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.chunk_size < 1 or self.workers < 1:
            raise ValueError("chunk_size and workers must be >= 1")
        self.frame  # validates N, n, k, M

    @property
    def frame(self) -> FrameConfig:
        return frame_config(self.N, self.n, self.k, self.M)

    @property
    def params(self) -> SubblockParams:
        return self.frame.params

    @property
    def pdp(self) -> PowerDelayProfile:
        return PowerDelayProfile.exponential(self.pdp_length, self.pdp_decay)

    @property
    def label_depth_cap(self) -> int:
        p = self.params
        cap = min(p.nCk - p.n_legal + 1, LABEL_DEPTH_CAP)
        if self.max_label_depth is not None:
            cap = min(cap, self.max_label_depth)
        return max(cap, 1)

    def sigma2(self, snr_db: float) -> float:
        if self.sigma2_override is not None:
            return float(self.sigma2_override)
        p = self.params
        return sigma2_from_snr(snr_db, qam(self.M).avg_energy, self.snr_mode, k=p.k, p=p.p)

    def replace(self, **changes) -> "MonteCarloConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["snr_grid_db"] = list(self.snr_grid_db)
        return d


# -- tallies ---------------------------------------------------------------

@dataclass
class OutcomeTally:
    """Integer counters for one SNR point; ``+`` merges tallies."""

    depth_cap: int
    trials: int = 0
    subblocks: int = 0
    bits: int = 0
    bit_errors: dict = field(default_factory=lambda: {d: 0 for d in DETECTORS})
    sap_errors: dict = field(default_factory=lambda: {d: 0 for d in DETECTORS})
    # label_counts[d-1, 0] = depth d correct, [d-1, 1] = depth d legal-incorrect
    label_counts: np.ndarray = None
    overflow: int = 0
    klv_illegal: int = 0
    subml_fallbacks: int = 0
    # per-frame bit-error differences against ml: sum and sum of squares
    pair_sum: dict = field(default_factory=lambda: {d: 0 for d in PAIRED})
    pair_sq: dict = field(default_factory=lambda: {d: 0 for d in PAIRED})

    def __post_init__(self):
        if self.label_counts is None:
            self.label_counts = np.zeros((self.depth_cap, 2), dtype=np.int64)

    def __add__(self, other: "OutcomeTally") -> "OutcomeTally":
        if other.depth_cap != self.depth_cap:
            raise ValueError("cannot merge tallies with different depth caps")
        return OutcomeTally(
            depth_cap=self.depth_cap,
            trials=self.trials + other.trials,
            subblocks=self.subblocks + other.subblocks,
            bits=self.bits + other.bits,
            bit_errors={d: self.bit_errors[d] + other.bit_errors[d] for d in DETECTORS},
            sap_errors={d: self.sap_errors[d] + other.sap_errors[d] for d in DETECTORS},
            label_counts=self.label_counts + other.label_counts,
            overflow=self.overflow + other.overflow,
            klv_illegal=self.klv_illegal + other.klv_illegal,
            subml_fallbacks=self.subml_fallbacks + other.subml_fallbacks,
            pair_sum={d: self.pair_sum[d] + other.pair_sum[d] for d in PAIRED},
            pair_sq={d: self.pair_sq[d] + other.pair_sq[d] for d in PAIRED},
        )

    def count(self, label: OmegaLabel) -> int:
        if label.terminal == "overflow":
            return self.overflow
        if label.depth > self.depth_cap:
            return 0
        return int(self.label_counts[label.depth - 1, 0 if label.terminal == "correct" else 1])

    @property
    def omega_c(self) -> int:
        return int(self.label_counts[0, 0])

    @property
    def omega_l(self) -> int:
        return int(self.label_counts[0, 1])

    @property
    def omega_i(self) -> int:
        return self.subblocks - self.omega_c - self.omega_l

    @property
    def omega_ic(self) -> int:
        return int(self.label_counts[1, 0]) if self.depth_cap > 1 else 0

    @property
    def omega_il(self) -> int:
        return int(self.label_counts[1, 1]) if self.depth_cap > 1 else 0

    @property
    def omega_ii(self) -> int:
        return self.omega_i - self.omega_ic - self.omega_il

    def ber(self, detector: str) -> float:
        return self.bit_errors[detector] / self.bits if self.bits else float("nan")

    def paired_ber_gap(self, detector: str, z: float = Z95) -> tuple[float, float]:
        """BER(detector) - BER(ml) and its CI half-width from per-frame differences."""
        T = self.trials
        bpf = self.bits / T
        mean = self.pair_sum[detector] / T
        var = (self.pair_sq[detector] - T * mean * mean) / (T - 1) if T > 1 else float("inf")
        return mean / bpf, z * math.sqrt(max(var, 0.0) / T) / bpf

    def sap_error_rate(self, detector: str) -> float:
        return self.sap_errors[detector] / self.subblocks if self.subblocks else float("nan")

    def summary(self) -> "TallySummary":
        s = self.subblocks
        return TallySummary(
            subblocks=s,
            p_correct={d: 1 - self.sap_errors[d] / s for d in DETECTORS},
            omega_c=self.omega_c / s,
            omega_l=self.omega_l / s,
            omega_i=self.omega_i / s,
            omega_ic=self.omega_ic / s,
            omega_ii=self.omega_ii / s,
        )


@dataclass(frozen=True)
class TallySummary:
    """Empirical probabilities per subblock, enough to re-check the bounds."""

    subblocks: int
    p_correct: dict
    omega_c: float
    omega_l: float
    omega_i: float
    omega_ic: float
    omega_ii: float


def wilson_interval(p_hat: float, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        return (0.0, 1.0)
    denom = 1 + z * z / n
    center = (p_hat + z * z / (2 * n)) / denom
    half = z * math.sqrt(p_hat * (1 - p_hat) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def _halfwidth(p_hat: float, n: int) -> float:
    lo, hi = wilson_interval(p_hat, n)
    return (hi - lo) / 2


# -- simulation kernel -----------------------------------------------------

def _trial_rng(config: MonteCarloConfig, trial_index: int) -> np.random.Generator:
    return np.random.default_rng([config.master_seed, trial_index])


def _draw_trial(config: MonteCarloConfig, trial_index: int, F: np.ndarray, pdp: PowerDelayProfile):
    """Bits (G, p), CFR (N,) and unit per-dimension noise (N,) for one trial."""
    frame = config.frame
    rng = _trial_rng(config, trial_index)
    bits = rng.integers(0, 2, size=(frame.G, frame.params.p), dtype=np.uint8)
    while True:
        cfr = F @ sample_taps(rng, pdp)
        if np.min(np.abs(cfr)) >= CFR_FLOOR:
            break
    g = rng.standard_normal((config.N, 2))
    return bits, cfr, g[:, 0] + 1j * g[:, 1]


class _Kernel:
    def __init__(self, config: MonteCarloConfig):
        self.config = config
        self.frame = config.frame
        self.spec = qam(config.M)
        self.encoder = BatchEncoder(self.frame.params, self.spec)
        self.detector = BatchDetector(self.frame.params, self.spec, config.fallback_policy)
        self.F = dft_matrix(config.N, config.pdp_length)
        self.pdp = config.pdp

    def draw(self, start: int, stop: int):
        draws = [_draw_trial(self.config, t, self.F, self.pdp) for t in range(start, stop)]
        bits = np.stack([d[0] for d in draws])
        cfr = np.stack([d[1] for d in draws])
        noise = np.stack([d[2] for d in draws])
        return bits, cfr, noise

    def receive(self, bits, cfr, noise, sigma2):
        ranks, x = self.encoder.encode(bits)
        y = cfr * interleave(x, self.frame) + math.sqrt(sigma2) * noise
        r = deinterleave(y / cfr, self.frame)
        h = deinterleave(cfr, self.frame)
        return ranks, r, h

    def run_chunk(self, start: int, stop: int) -> list[OutcomeTally]:
        cfg = self.config
        p = self.frame.params
        bits, cfr, noise = self.draw(start, stop)
        cap = cfg.label_depth_cap
        out = []
        for snr in cfg.snr_grid_db:
            true_rank, r, h = self.receive(bits, cfr, noise, cfg.sigma2(snr))
            a, shat = self.detector.metrics(r, h)
            det = self.detector.detect(a)
            ok = {d: det[d] == true_rank for d in DETECTORS}
            if cfg.fallback_policy == "default":
                # a guessed rank-0 fallback is not a subml decision
                ok["subml"] &= ~det["subml_fallback"]
            bad = (ok["klv"] & ~ok["subml"]) | (ok["subml"] & ~ok["ml"])
            if np.any(bad):
                where = np.argwhere(bad)[0]
                raise DominanceViolation(
                    f"dominance chain broken at trial {start + where[0]}, subblock {where[1]}, "
                    f"snr {snr} dB"
                )
            t = OutcomeTally(depth_cap=cap, trials=stop - start,
                             subblocks=true_rank.size, bits=bits.size)
            per_frame = {}
            for d in DETECTORS:
                wrong = self.detector.bits(det[d], shat) != bits
                per_frame[d] = np.count_nonzero(wrong, axis=(1, 2)).astype(np.int64)
                t.bit_errors[d] = int(per_frame[d].sum())
                t.sap_errors[d] = int(np.count_nonzero(~ok[d]))
            for d in PAIRED:
                diff = per_frame[d] - per_frame["ml"]
                t.pair_sum[d] = int(diff.sum())
                t.pair_sq[d] = int((diff * diff).sum())
            depth = det["depth"]
            within = depth <= cap
            term = np.where(ok["ml"], 0, 1)
            np.add.at(t.label_counts, (depth[within] - 1, term[within]), 1)
            t.overflow = int(np.count_nonzero(~within))
            t.klv_illegal = int(np.count_nonzero(det["klv"] >= p.n_legal))
            t.subml_fallbacks = int(np.count_nonzero(det["subml_fallback"]))
            out.append(t)
        return out


def _chunk_worker(args):
    config, start, stop = args
    return _Kernel(config).run_chunk(start, stop)


def _chunks(config: MonteCarloConfig) -> list[tuple[int, int]]:
    T, c = config.trials_per_point, config.chunk_size
    return [(s, min(s + c, T)) for s in range(0, T, c)]


def estimate(config: MonteCarloConfig) -> list[OutcomeTally]:
    """Tallies for every SNR point of ``config.snr_grid_db``, in grid order."""
    chunks = _chunks(config)
    cap = config.label_depth_cap
    totals = [OutcomeTally(depth_cap=cap) for _ in config.snr_grid_db]
    if config.workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = pool.map(_chunk_worker, [(config, s, e) for s, e in chunks])
            for part in results:
                totals = [a + b for a, b in zip(totals, part)]
    else:
        kernel = _Kernel(config)
        for s, e in chunks:
            totals = [a + b for a, b in zip(totals, kernel.run_chunk(s, e))]
            log.debug("trials %d..%d done", s, e)
    return totals


# -- per-subblock records (scalar path) ------------------------------------

@dataclass(frozen=True, eq=False)
class SubblockRecord:
    g: int
    true_bits: str
    true_rank: int
    results: dict
    decoded_bits: dict
    label: OmegaLabel
    fallback_policy: str = "default"

    def sap_correct(self, detector: str) -> bool:
        res: DetectionResult = self.results[detector]
        if detector == "subml" and res.fallback_used and self.fallback_policy == "default":
            return False
        return res.sap.rank == self.true_rank


def run_trial(trial_index: int, snr_db: float, config: MonteCarloConfig) -> list[SubblockRecord]:
    """Simulate one frame through the scalar detector functions.

    Draws exactly the same realization as :func:`estimate` does for this
    trial, so records can be compared with the vectorized tallies.
    """
    kernel = _Kernel(config)
    params = kernel.frame.params
    bits, cfr, noise = kernel.draw(trial_index, trial_index + 1)
    _, r, h = kernel.receive(bits, cfr, noise, config.sigma2(snr_db))
    records = []
    for g in range(kernel.frame.G):
        true_bits = "".join(map(str, bits[0, g]))
        al = compute_metrics(r[0, g], h[0, g], kernel.spec)
        results = {d: detect(al, params, d, config.fallback_policy) for d in DETECTORS}
        true_rank = int(true_bits[: params.p1] or "0", 2)
        label = classify_outcome(al, index_to_sap(true_rank, params), params,
                                 max_depth=config.label_depth_cap)
        decoded = {d: detection_bits(results[d], params, kernel.spec) for d in DETECTORS}
        rec = SubblockRecord(g=g, true_bits=true_bits, true_rank=true_rank,
                             results=results, decoded_bits=decoded, label=label,
                             fallback_policy=config.fallback_policy)
        ok = [rec.sap_correct(d) for d in ("klv", "subml", "ml")]
        if (ok[0] and not ok[1]) or (ok[1] and not ok[2]):
            raise DominanceViolation(f"dominance chain broken in trial {trial_index}, subblock {g}")
        records.append(rec)
    return records


# -- bounds ----------------------------------------------------------------

@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    slack: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + self.slack

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "slack": self.slack, "passed": self.passed}


@dataclass(frozen=True)
class BoundReport:
    r: float
    snr_db: float | None
    checks: tuple[BoundCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> BoundCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"snr_db": self.snr_db, "r": self.r, "passed": self.passed,
                "checks": [c.to_dict() for c in self.checks]}


def check_bounds(tally: OutcomeTally | TallySummary, params: SubblockParams,
                 snr_db: float | None = None) -> BoundReport:
    """Check the ml/klv and ml/subml correct-detection gap bounds.

    ``ml_klv_gap``: P_ml - P_klv <= r (1 - P(Ω(c))).
    ``ml_subml_gap``: P_ml - P_subml <= P(Ω(i,i)).
    ``ordering``: P_klv <= P_subml <= P_ml with no slack.
    Slack is the sum of the 95% Wilson half-widths of the estimates involved.
    """
    s = tally.summary() if isinstance(tally, OutcomeTally) else tally
    n = s.subblocks
    r = illegal_ratio(params)
    pc = s.p_correct
    hw = {d: _halfwidth(pc[d], n) for d in DETECTORS}
    checks = (
        BoundCheck("ml_klv_gap", pc["ml"] - pc["klv"], r * (1 - s.omega_c),
                   hw["ml"] + hw["klv"] + r * _halfwidth(s.omega_c, n)),
        BoundCheck("ml_subml_gap", pc["ml"] - pc["subml"], s.omega_ii,
                   hw["ml"] + hw["subml"] + _halfwidth(s.omega_ii, n)),
        BoundCheck("ordering_klv_subml", pc["klv"], pc["subml"], 0.0),
        BoundCheck("ordering_subml_ml", pc["subml"], pc["ml"], 0.0),
    )
    return BoundReport(r=r, snr_db=snr_db, checks=checks)


# -- result table ----------------------------------------------------------

CSV_COLUMNS = ("snr_db", "detector", "ber", "ber_ci", "sap_err", "omega_c", "omega_l",
               "omega_i", "omega_ic", "omega_ii", "trials")


def sweep(config: MonteCarloConfig) -> tuple[list[dict], list[OutcomeTally]]:
    """Result rows (one per SNR point and detector) plus the raw tallies."""
    tallies = estimate(config)
    rows = []
    for snr, t in zip(config.snr_grid_db, tallies):
        s = t.summary()
        for d in DETECTORS:
            ber = t.ber(d)
            rows.append({
                "snr_db": snr,
                "detector": d,
                "ber": ber,
                "ber_ci": _halfwidth(ber, t.bits),
                "sap_err": t.sap_error_rate(d),
                "omega_c": s.omega_c,
                "omega_l": s.omega_l,
                "omega_i": s.omega_i,
                "omega_ic": s.omega_ic,
                "omega_ii": s.omega_ii,
                "trials": t.trials,
            })
    return rows, tallies


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows: Iterable[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def read_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            missing = set(CSV_COLUMNS) - set(raw)
            if missing:
                raise ValueError(f"result table lacks columns {sorted(missing)}")
            row = {c: float(raw[c]) for c in CSV_COLUMNS if c not in ("detector", "trials")}
            row["detector"] = raw["detector"]
            row["trials"] = int(raw["trials"])
            rows.append(row)
    return rows


def summaries_from_rows(rows: Sequence[dict], G: int) -> list[tuple[float, TallySummary]]:
    """Rebuild per-SNR summaries from a result table (``G`` subblocks per trial)."""
    by_snr: dict[float, dict] = {}
    for row in rows:
        by_snr.setdefault(row["snr_db"], {})[row["detector"]] = row
    out = []
    for snr in sorted(by_snr):
        group = by_snr[snr]
        if set(group) != set(DETECTORS):
            raise ValueError(f"SNR {snr} dB lacks rows for {sorted(set(DETECTORS) - set(group))}")
        any_row = group["ml"]
        out.append((snr, TallySummary(
            subblocks=any_row["trials"] * G,
            p_correct={d: 1 - group[d]["sap_err"] for d in DETECTORS},
            omega_c=any_row["omega_c"],
            omega_l=any_row["omega_l"],
            omega_i=any_row["omega_i"],
            omega_ic=any_row["omega_ic"],
            omega_ii=any_row["omega_ii"],
        )))
    return out
