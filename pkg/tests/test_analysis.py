import math

import numpy as np
import pytest
from statistics import NormalDist

from ofdmim.analysis import (
    CSV_COLUMNS,
    MonteCarloConfig,
    OutcomeTally,
    TallySummary,
    check_bounds,
    estimate,
    read_csv,
    run_trial,
    summaries_from_rows,
    sweep,
    wilson_interval,
    write_csv,
)
from ofdmim.detectors import DETECTORS, OmegaLabel
from ofdmim.mapping import derive_params, illegal_ratio

SMALL = MonteCarloConfig(N=32, n=8, k=4, trials_per_point=60, snr_grid_db=(0.0, 10.0, 20.0),
                         master_seed=7, chunk_size=25)
HALF_LEGAL = MonteCarloConfig(N=40, n=10, k=5, trials_per_point=60, snr_grid_db=(5.0, 15.0),
                              master_seed=3, chunk_size=17)


@pytest.fixture(scope="module")
def small_tallies():
    return estimate(SMALL)


@pytest.fixture(scope="module")
def half_tallies():
    return estimate(HALF_LEGAL)


class TestConfig:
    def test_rejects_bad_values(self):
        for bad in ({"N": 30}, {"trials_per_point": 0}, {"snr_grid_db": ()},
                    {"snr_grid_db": (5, 0)}, {"fallback_policy": "guess"},
                    {"snr_mode": "db"}, {"sigma2_override": -1.0}, {"master_seed": -1},
                    {"k": 9}):
            with pytest.raises(ValueError):
                MonteCarloConfig(**bad)

    def test_sigma2_matches_es_definition(self):
        cfg = MonteCarloConfig()
        # QPSK on ±1±j has Es = 2, so sigma^2 = 1 / 10^(snr/10) per dimension
        assert cfg.sigma2(10.0) == pytest.approx(0.1, rel=1e-12)
        assert cfg.sigma2(0.0) == pytest.approx(1.0, rel=1e-12)

    def test_eb_mode_scales_by_bits_per_active(self):
        es = MonteCarloConfig(snr_mode="es")
        eb = MonteCarloConfig(snr_mode="eb")
        p, k = es.params.p, es.params.k
        assert eb.sigma2(10.0) == pytest.approx(es.sigma2(10.0) * k / p, rel=1e-12)

    def test_depth_cap(self):
        assert MonteCarloConfig().label_depth_cap == 7            # 70 - 64 + 1
        assert MonteCarloConfig(N=100, n=10, k=5).label_depth_cap == 16
        assert MonteCarloConfig(max_label_depth=2).label_depth_cap == 2

    def test_dict_round_trip(self):
        cfg = SMALL.replace(fallback_policy="ml")
        assert MonteCarloConfig(**cfg.to_dict()) == cfg


class TestWilson:
    def test_known_value(self):
        # 10 successes in 100: textbook Wilson interval
        lo, hi = wilson_interval(0.1, 100)
        assert lo == pytest.approx(0.05523, abs=5e-5)
        assert hi == pytest.approx(0.17437, abs=5e-5)

    def test_oracle_formula(self):
        z = NormalDist().inv_cdf(0.975)
        for p, n in ((0.0, 50), (1.0, 50), (0.37, 1234), (1e-4, 10**6)):
            c = (p + z * z / (2 * n)) / (1 + z * z / n)
            h = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
            lo, hi = wilson_interval(p, n)
            assert lo == pytest.approx(max(0.0, c - h), abs=1e-15)
            assert hi == pytest.approx(min(1.0, c + h), abs=1e-15)

    def test_empty_sample(self):
        assert wilson_interval(0.0, 0) == (0.0, 1.0)


class TestTallies:
    def test_conservation(self, small_tallies):
        G = SMALL.frame.G
        for t in small_tallies:
            assert t.trials == SMALL.trials_per_point
            assert t.subblocks == t.trials * G
            assert t.bits == t.subblocks * SMALL.params.p
            assert int(t.label_counts.sum()) + t.overflow == t.subblocks
            assert t.omega_i == t.subblocks - t.omega_c - t.omega_l >= 0
            assert t.omega_ii >= 0

    def test_klv_correct_is_omega_c(self, small_tallies, half_tallies):
        for t in small_tallies + half_tallies:
            assert t.subblocks - t.sap_errors["klv"] == t.omega_c

    def test_omega_i_is_illegal_klv_count(self, small_tallies, half_tallies):
        for t in small_tallies + half_tallies:
            assert t.omega_i == t.klv_illegal

    def test_subml_correct_is_omega_c_plus_omega_ic(self, half_tallies):
        for t in half_tallies:
            assert t.subblocks - t.sap_errors["subml"] == t.omega_c + t.omega_ic

    def test_ml_correct_is_sum_of_correct_terminals(self, half_tallies):
        # overflowed subblocks carry no terminal, so they can only add ml hits
        for t in half_tallies:
            extra = t.subblocks - t.sap_errors["ml"] - int(t.label_counts[:, 0].sum())
            assert 0 <= extra <= t.overflow

    def test_merge_is_associative(self, small_tallies):
        a, b, c = small_tallies
        left, right = (a + b) + c, a + (b + c)
        assert left.bit_errors == right.bit_errors
        np.testing.assert_array_equal(left.label_counts, right.label_counts)

    def test_merge_rejects_mismatched_caps(self):
        with pytest.raises(ValueError):
            OutcomeTally(depth_cap=2) + OutcomeTally(depth_cap=3)

    def test_count_by_label(self, half_tallies):
        t = half_tallies[0]
        assert t.count(OmegaLabel(1, "correct")) == t.omega_c
        assert t.count(OmegaLabel(2, "correct")) == t.omega_ic
        assert t.count(OmegaLabel(99, "correct")) == 0
        assert t.count(OmegaLabel(17, "overflow")) == t.overflow

    def test_fallback_ml_policy_matches_ml_on_fallbacks(self):
        cfg = HALF_LEGAL.replace(fallback_policy="ml")
        for t in estimate(cfg):
            assert t.sap_errors["subml"] >= t.sap_errors["ml"]
            # the ml fallback can only help compared with the rank-0 guess
        for a, b in zip(estimate(cfg), estimate(HALF_LEGAL)):
            assert a.sap_errors["subml"] <= b.sap_errors["subml"]


class TestDeterminism:
    def test_repeatable(self, small_tallies):
        again = estimate(SMALL)
        for a, b in zip(small_tallies, again):
            assert a.bit_errors == b.bit_errors
            np.testing.assert_array_equal(a.label_counts, b.label_counts)

    def test_chunking_and_workers_do_not_matter(self, small_tallies):
        for variant in (SMALL.replace(chunk_size=7), SMALL.replace(chunk_size=60),
                        SMALL.replace(workers=2, chunk_size=13)):
            for a, b in zip(small_tallies, estimate(variant)):
                assert a.bit_errors == b.bit_errors
                assert a.sap_errors == b.sap_errors
                assert a.pair_sum == b.pair_sum and a.pair_sq == b.pair_sq
                np.testing.assert_array_equal(a.label_counts, b.label_counts)

    def test_prefix_of_trials_is_stable(self):
        # trial t draws from its own stream, so a longer run extends a shorter one
        short = estimate(SMALL.replace(trials_per_point=20))
        longer = estimate(SMALL.replace(trials_per_point=40))
        parts = estimate(SMALL.replace(trials_per_point=40, chunk_size=20))
        for a, b in zip(longer, parts):
            assert a.bit_errors == b.bit_errors
        assert any(s.bit_errors != l.bit_errors for s, l in zip(short, longer))

    def test_seed_changes_draws(self, small_tallies):
        other = estimate(SMALL.replace(master_seed=8))
        assert any(a.bit_errors != b.bit_errors for a, b in zip(small_tallies, other))


class TestScalarAgreement:
    @pytest.mark.parametrize("cfg", [SMALL, HALF_LEGAL, HALF_LEGAL.replace(fallback_policy="ml")])
    def test_run_trial_matches_tallies(self, cfg):
        cfg = cfg.replace(trials_per_point=12, snr_grid_db=(cfg.snr_grid_db[0],))
        (t,) = estimate(cfg)
        p = cfg.params
        bit_err = {d: 0 for d in DETECTORS}
        sap_err = {d: 0 for d in DETECTORS}
        labels = np.zeros_like(t.label_counts)
        for trial in range(cfg.trials_per_point):
            for rec in run_trial(trial, cfg.snr_grid_db[0], cfg):
                for d in DETECTORS:
                    bit_err[d] += sum(x != y for x, y in zip(rec.decoded_bits[d], rec.true_bits))
                    sap_err[d] += not rec.sap_correct(d)
                assert len(rec.true_bits) == p.p
                labels[rec.label.depth - 1, int(rec.label.terminal != "correct")] += 1
        assert bit_err == t.bit_errors
        assert sap_err == t.sap_errors
        np.testing.assert_array_equal(labels, t.label_counts)


class TestNoiseless:
    def test_zero_noise_is_error_free(self):
        cfg = SMALL.replace(sigma2_override=0.0, trials_per_point=30)
        for t in estimate(cfg):
            assert all(v == 0 for v in t.bit_errors.values())
            assert all(v == 0 for v in t.sap_errors.values())
            assert t.omega_c == t.subblocks

    def test_flat_channel_zero_noise(self):
        cfg = HALF_LEGAL.replace(sigma2_override=0.0, pdp_length=1, trials_per_point=20)
        for t in estimate(cfg):
            assert t.omega_c == t.subblocks and t.bit_errors["klv"] == 0


class TestPairedGap:
    def test_mean_equals_ber_difference(self, small_tallies):
        for t in small_tallies:
            gap, half = t.paired_ber_gap("klv")
            assert gap == pytest.approx(t.ber("klv") - t.ber("ml"), abs=1e-15)
            assert half >= 0

    def test_half_width_oracle(self):
        t = OutcomeTally(depth_cap=1, trials=4, subblocks=4, bits=40)
        diffs = np.array([0, 2, 1, 3])
        t.pair_sum["klv"], t.pair_sq["klv"] = int(diffs.sum()), int((diffs**2).sum())
        gap, half = t.paired_ber_gap("klv")
        z = NormalDist().inv_cdf(0.975)
        assert gap == pytest.approx(diffs.mean() / 10)
        assert half == pytest.approx(z * diffs.std(ddof=1) / 2 / 10)


class TestBounds:
    def test_hold_on_simulated_points(self, small_tallies, half_tallies):
        for cfg, tallies in ((SMALL, small_tallies), (HALF_LEGAL, half_tallies)):
            for snr, t in zip(cfg.snr_grid_db, tallies):
                report = check_bounds(t, cfg.params, snr)
                assert report.passed, report.to_dict()
                assert report.r == illegal_ratio(cfg.params)

    def test_detects_violation(self):
        params = derive_params(10, 5)
        s = TallySummary(subblocks=10**6, p_correct={"ml": 0.9, "klv": 0.5, "subml": 0.95},
                         omega_c=0.5, omega_l=0.0, omega_i=0.5, omega_ic=0.45, omega_ii=0.0)
        report = check_bounds(s, params)
        assert not report["ml_klv_gap"].passed      # 0.4 > 0.494 * 0.5
        assert not report["ordering_subml_ml"].passed
        assert not report.passed
        assert report["ml_subml_gap"].passed

    def test_unknown_check_name(self):
        report = check_bounds(TallySummary(1, {d: 1.0 for d in DETECTORS}, 1, 0, 0, 0, 0),
                              derive_params(4, 2))
        with pytest.raises(KeyError):
            report["nope"]


class TestCsv:
    def test_round_trip(self, tmp_path):
        rows, tallies = sweep(HALF_LEGAL)
        path = tmp_path / "r.csv"
        write_csv(rows, path)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)
        back = read_csv(path)
        assert back == rows
        summaries = summaries_from_rows(back, HALF_LEGAL.frame.G)
        for (snr, s), t in zip(summaries, tallies):
            direct = check_bounds(t, HALF_LEGAL.params, snr).to_dict()
            again = check_bounds(s, HALF_LEGAL.params, snr).to_dict()
            for c1, c2 in zip(direct["checks"], again["checks"]):
                assert c1["passed"] == c2["passed"]
                assert c1["lhs"] == pytest.approx(c2["lhs"], abs=1e-12)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("snr_db,detector\n0,ml\n")
        with pytest.raises(ValueError):
            read_csv(path)

    def test_missing_detector_rows(self):
        rows, _ = sweep(SMALL.replace(snr_grid_db=(0.0,), trials_per_point=5))
        with pytest.raises(ValueError):
            summaries_from_rows(rows[:2], SMALL.frame.G)
