import io
import math

import numpy as np
import pytest

from mfake.biosim import (
    evaluate_rates,
    load_features_csv,
    reports_from_csv,
    reports_to_csv,
    sample_population,
    sample_reading,
    save_features_csv,
    sweep_eer,
)
from mfake.errors import DecodeError, ParameterError


class TestSamplePopulation:
    def test_dimensions(self):
        pop = sample_population(6, 11, 1.0, 0.1, np.random.default_rng(0))
        assert pop.templates.shape == (11, 6)
        assert pop.n == 6 and pop.num_identities == 11

    def test_reproducible(self):
        a = sample_population(4, 7, 1.0, 0.1, np.random.default_rng(5))
        b = sample_population(4, 7, 1.0, 0.1, np.random.default_rng(5))
        assert np.array_equal(a.templates, b.templates)

    def test_large_sample_mean_near_zero(self):
        n, m, sigma = 8, 10_000, 1.5
        pop = sample_population(n, m, sigma, 0.1, np.random.default_rng(6))
        tol = 3 * sigma / math.sqrt(n * m)
        assert abs(pop.templates.mean()) < tol

    @pytest.mark.parametrize("kwargs", [
        dict(n=0, num_identities=5, inter_sigma=1.0, noise_sigma=0.1),
        dict(n=3, num_identities=0, inter_sigma=1.0, noise_sigma=0.1),
        dict(n=3, num_identities=5, inter_sigma=0.0, noise_sigma=0.1),
        dict(n=3, num_identities=5, inter_sigma=1.0, noise_sigma=-0.1),
    ])
    def test_rejects_bad_config(self, kwargs):
        with pytest.raises(ParameterError):
            sample_population(rng=np.random.default_rng(0), **kwargs)


class TestSampleReading:
    def test_zero_noise_returns_template(self):
        pop = sample_population(5, 3, 1.0, 0.0, np.random.default_rng(7))
        reading = sample_reading(pop, 1, np.random.default_rng(8))
        assert np.array_equal(reading, pop.templates[1])

    def test_noise_scale_matches_config(self):
        sigma = 0.3
        pop = sample_population(4, 2, 1.0, sigma, np.random.default_rng(9))
        rng = np.random.default_rng(10)
        deviations = np.concatenate(
            [sample_reading(pop, 0, rng) - pop.templates[0] for _ in range(25_000)]
        )
        assert abs(deviations.std() - sigma) / sigma < 0.05

    def test_index_out_of_range(self):
        pop = sample_population(4, 2, 1.0, 0.1, np.random.default_rng(11))
        with pytest.raises(ParameterError):
            sample_reading(pop, 2, np.random.default_rng(0))


class TestEvaluateRates:
    def test_zero_noise_means_zero_fnmr(self):
        pop = sample_population(8, 20, 1.0, 0.0, np.random.default_rng(12))
        report = evaluate_rates(pop, 0.3, 500, 500, np.random.default_rng(13))
        assert report.fnmr == 0.0

    def test_huge_cell_accepts_impostors(self):
        n = 8
        pop = sample_population(n, 20, 1.0, 0.1, np.random.default_rng(14))
        d = 100 * 1.0 * math.sqrt(n)
        report = evaluate_rates(pop, d, 200, 500, np.random.default_rng(15))
        assert report.fmr >= 0.99

    def test_rates_in_unit_interval(self):
        pop = sample_population(8, 20, 1.0, 0.5, np.random.default_rng(16))
        report = evaluate_rates(pop, 2.0, 300, 300, np.random.default_rng(17))
        assert 0.0 <= report.fmr <= 1.0
        assert 0.0 <= report.fnmr <= 1.0
        assert report.genuine_pairs == 300 and report.impostor_pairs == 300

    def test_zero_pair_counts_rejected(self):
        pop = sample_population(4, 5, 1.0, 0.1, np.random.default_rng(18))
        with pytest.raises(ParameterError):
            evaluate_rates(pop, 1.0, 0, 10, np.random.default_rng(0))
        with pytest.raises(ParameterError):
            evaluate_rates(pop, 1.0, 10, 0, np.random.default_rng(0))

    def test_monotone_tradeoff(self):
        pop = sample_population(8, 50, 1.0, 1.0, np.random.default_rng(19))
        rng = np.random.default_rng(20)
        pairs = 2000
        reports = [evaluate_rates(pop, d, pairs, pairs, rng) for d in np.geomspace(0.8, 8.0, 10)]
        for prev, cur in zip(reports, reports[1:]):
            slack = 2 * (
                math.sqrt(max(prev.fmr * (1 - prev.fmr), 1e-9) / pairs)
                + math.sqrt(max(cur.fmr * (1 - cur.fmr), 1e-9) / pairs)
            )
            assert cur.fmr >= prev.fmr - slack
            slack = 2 * (
                math.sqrt(max(prev.fnmr * (1 - prev.fnmr), 1e-9) / pairs)
                + math.sqrt(max(cur.fnmr * (1 - cur.fnmr), 1e-9) / pairs)
            )
            assert cur.fnmr <= prev.fnmr + slack

    def test_fnmr_estimator_concentrates_with_more_pairs(self):
        # doubling the sample size should shrink the estimator spread by ~sqrt(2)
        pop = sample_population(8, 50, 1.0, 1.0, np.random.default_rng(40))
        d = 5.0

        def spread(pairs, seed0, reps=40):
            values = [
                evaluate_rates(pop, d, pairs, 1, np.random.default_rng(seed0 + i)).fnmr
                for i in range(reps)
            ]
            return np.std(values)

        ratio = spread(400, 5000) / spread(800, 6000)
        assert 1.1 < ratio < 1.9, ratio

    def test_translation_invariance(self):
        pop = sample_population(6, 12, 1.0, 0.6, np.random.default_rng(21))
        shift = np.array([7.0, -3.0, 2.0, 11.0, -6.0, 4.0])
        shifted = type(pop)(
            n=pop.n,
            num_identities=pop.num_identities,
            templates=pop.templates + shift,
            genuine_noise_sigma=pop.genuine_noise_sigma,
            inter_identity_sigma=pop.inter_identity_sigma,
        )
        r1 = evaluate_rates(pop, 1.5, 800, 800, np.random.default_rng(22))
        r2 = evaluate_rates(shifted, 1.5, 800, 800, np.random.default_rng(22))
        assert r1 == r2


class TestSweepEer:
    def test_single_point_grid_has_no_crossing(self):
        pop = sample_population(8, 20, 1.0, 0.5, np.random.default_rng(23))
        reports, estimate = sweep_eer(pop, [1.0], 100, np.random.default_rng(24))
        assert len(reports) == 1
        assert estimate is None

    def test_interior_crossing_found(self):
        pop = sample_population(16, 60, 1.0, 1.0, np.random.default_rng(25))
        grid = np.geomspace(1.5, 10.0, 10)
        reports, estimate = sweep_eer(pop, grid, 2000, np.random.default_rng(26))
        assert estimate is not None
        assert 0.0 <= estimate.eer <= 0.5
        assert grid[0] <= estimate.d <= grid[-1]

    def test_well_separated_population_has_tiny_eer(self):
        # the documented low-noise configuration: readings sit almost exactly
        # on their templates, so the crossing happens on the shared-zero
        # plateau between the two transitions
        pop = sample_population(16, 60, 1.0, 0.02, np.random.default_rng(27))
        grid = np.geomspace(0.1, 12.0, 12)
        reports, estimate = sweep_eer(pop, grid, 2000, np.random.default_rng(28))
        assert estimate is not None
        assert estimate.eer < 0.01

    def test_csv_round_trip(self, tmp_path):
        pop = sample_population(8, 20, 1.0, 0.8, np.random.default_rng(29))
        reports, _ = sweep_eer(pop, [0.5, 1.0, 2.0], 200, np.random.default_rng(30))
        path = tmp_path / "sweep.csv"
        reports_to_csv(reports, path)
        assert reports_from_csv(path) == reports

    def test_csv_round_trip_via_buffer(self):
        pop = sample_population(4, 10, 1.0, 0.5, np.random.default_rng(31))
        reports, _ = sweep_eer(pop, [0.4, 0.9], 150, np.random.default_rng(32))
        buf = io.StringIO()
        reports_to_csv(reports, buf)
        buf.seek(0)
        assert reports_from_csv(buf) == reports


class TestFeaturesCsv:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "features.csv"
        path.write_text("")
        assert load_features_csv(path) == []

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(33)
        rows = [(f"id{i}", rng.normal(size=5)) for i in range(4)]
        path = tmp_path / "features.csv"
        save_features_csv(path, rows)
        back = load_features_csv(path)
        assert len(back) == 4
        for (l1, v1), (l2, v2) in zip(rows, back):
            assert l1 == l2
            assert np.array_equal(v1, v2)

    def test_ragged_row_names_line(self, tmp_path):
        path = tmp_path / "features.csv"
        path.write_text("a,1.0,2.0\nb,1.0\n")
        with pytest.raises(DecodeError, match="line 2"):
            load_features_csv(path)

    def test_non_numeric_names_line(self, tmp_path):
        path = tmp_path / "features.csv"
        path.write_text("a,1.0,2.0\nb,x,3.0\n")
        with pytest.raises(DecodeError, match="line 2"):
            load_features_csv(path)
