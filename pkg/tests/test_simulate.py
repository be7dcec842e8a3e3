"""Network simulation, data sampling, and the exact implied covariance."""

import math

import numpy as np
import pytest

from pctune.exceptions import (
    IllConditionedDataError,
    InvalidInputError,
    InvalidScenarioError,
)
from pctune.graphs import Dag
from pctune.simulate import (
    Dataset,
    GaussianBayesNet,
    Scenario,
    covariance_to_correlation,
    format_gbn,
    implied_covariance,
    load_dataset_csv,
    load_gbn,
    parse_gbn,
    rng_stream,
    sample_dag,
    sample_data,
    sample_weights,
    write_dataset_csv,
    write_gbn,
)


class TestScenario:
    def test_edge_probability(self):
        assert Scenario(p=25, n=2, N=50).d == pytest.approx(2 / 24)

    def test_rejects_n_too_large(self):
        with pytest.raises(InvalidScenarioError):
            Scenario(p=5, n=5, N=50)

    def test_rejects_tiny(self):
        with pytest.raises(InvalidScenarioError):
            Scenario(p=1, n=0.5, N=50)
        with pytest.raises(InvalidScenarioError):
            Scenario(p=5, n=2, N=1)


class TestSampleDag:
    def test_forced_edge_when_d_is_one(self, rng):
        dag = sample_dag(2, 1, rng)
        assert dag.edges == frozenset({(1, 2)})

    def test_edges_respect_ancestral_order(self, rng):
        for _ in range(20):
            dag = sample_dag(8, 3, rng)
            assert all(j < i for j, i in dag.edges)

    def test_mean_edge_count_matches_binomial(self, rng):
        # p=25, n=2: 300 pairs at d = 2/24; the mean over 10000 draws must
        # land within 3 binomial standard errors of 25.
        p, n, draws = 25, 2, 10000
        d = n / (p - 1)
        n_pairs = p * (p - 1) // 2
        counts = [len(sample_dag(p, n, rng).edges) for _ in range(draws)]
        se = math.sqrt(n_pairs * d * (1 - d) / draws)
        assert abs(np.mean(counts) - n_pairs * d) < 3 * se

    def test_rejects_bad_density(self, rng):
        with pytest.raises(InvalidScenarioError):
            sample_dag(5, 4.5, rng)

    def test_deterministic(self):
        a = sample_dag(10, 3, rng_stream(7, 1))
        b = sample_dag(10, 3, rng_stream(7, 1))
        assert a == b


class TestSampleWeights:
    def test_empty_dag(self, rng):
        gbn = sample_weights(Dag(3, []), rng)
        assert gbn.weights == {}
        assert gbn.noise_var == (1.0, 1.0, 1.0)

    def test_weights_in_range(self, rng):
        dag = sample_dag(10, 5, rng)
        gbn = sample_weights(dag, rng)
        assert all(0.1 <= b <= 1.0 for b in gbn.weights.values())
        assert set(gbn.weights) == set(dag.edges)

    def test_mean_weight_matches_uniform_moments(self, rng):
        # Uniform[0.1, 1] has mean 0.55 and sd 0.9/sqrt(12).
        dag = Dag(160, [(j, i) for i in range(2, 161) for j in range(1, i)][:100000])
        gbn = sample_weights(dag, rng)
        betas = np.fromiter(gbn.weights.values(), dtype=float)
        se = (0.9 / math.sqrt(12)) / math.sqrt(len(betas))
        assert abs(betas.mean() - 0.55) < 3 * se

    def test_custom_range(self, rng):
        dag = sample_dag(6, 3, rng)
        gbn = sample_weights(dag, rng, low=0.5, high=1.0)
        assert all(0.5 <= b <= 1.0 for b in gbn.weights.values())


class TestGaussianBayesNet:
    def test_rejects_wrong_weight_keys(self):
        with pytest.raises(InvalidInputError):
            GaussianBayesNet(Dag(2, [(1, 2)]), {}, (1.0, 1.0))

    def test_rejects_nonpositive_noise(self):
        with pytest.raises(InvalidInputError):
            GaussianBayesNet(Dag(2, [(1, 2)]), {(1, 2): 0.5}, (1.0, 0.0))

    def test_rejects_descending_edge(self):
        with pytest.raises(InvalidInputError):
            GaussianBayesNet(Dag(2, [(2, 1)]), {(2, 1): 0.5}, (1.0, 1.0))


class TestSampleData:
    def test_shape(self, rng):
        gbn = sample_weights(sample_dag(4, 2, rng), rng)
        data = sample_data(gbn, 17, rng)
        assert data.values.shape == (17, 4)
        assert data.n_rows == 17 and data.p == 4

    def test_empty_graph_gives_identity_covariance(self, rng):
        gbn = sample_weights(Dag(4, []), rng)
        data = sample_data(gbn, 100000, rng)
        cov = np.cov(data.values, rowvar=False)
        off = cov - np.diag(np.diag(cov))
        assert np.abs(off).max() < 0.02
        assert np.allclose(np.diag(cov), 1.0, atol=0.03)

    def test_single_edge_moments(self, rng):
        gbn = GaussianBayesNet(Dag(2, [(1, 2)]), {(1, 2): 0.5}, (1.0, 1.0))
        data = sample_data(gbn, 200000, rng)
        cov = np.cov(data.values, rowvar=False)
        assert cov[0, 1] == pytest.approx(0.5, abs=0.02)
        assert cov[1, 1] == pytest.approx(1.25, abs=0.03)

    def test_deterministic_bit_for_bit(self):
        gbn = sample_weights(sample_dag(6, 2, rng_stream(3, 0)), rng_stream(3, 1))
        a = sample_data(gbn, 50, rng_stream(3, 2))
        b = sample_data(gbn, 50, rng_stream(3, 2))
        assert np.array_equal(a.values, b.values)


class TestImpliedCovariance:
    def test_empty_graph_identity(self):
        gbn = GaussianBayesNet(Dag(3, []), {}, (1.0,) * 3)
        assert np.allclose(implied_covariance(gbn), np.eye(3))

    def test_single_edge_exact(self):
        gbn = GaussianBayesNet(Dag(2, [(1, 2)]), {(1, 2): 0.5}, (1.0, 1.0))
        assert np.allclose(implied_covariance(gbn), [[1.0, 0.5], [0.5, 1.25]])

    def test_monte_carlo_agreement(self, rng):
        gbn = sample_weights(sample_dag(4, 2, rng), rng)
        sigma = implied_covariance(gbn)
        data = sample_data(gbn, 1_000_000, rng)
        mc = np.cov(data.values, rowvar=False)
        assert np.abs(mc - sigma).max() < 5e-3 * max(1.0, np.abs(sigma).max())

    def test_positive_definite(self, rng):
        for _ in range(20):
            gbn = sample_weights(sample_dag(8, 4, rng), rng)
            eigs = np.linalg.eigvalsh(implied_covariance(gbn))
            assert eigs.min() > 0

    def test_chain_partial_correlation_is_zero(self):
        gbn = GaussianBayesNet(
            Dag(3, [(1, 2), (2, 3)]), {(1, 2): 0.8, (2, 3): 0.8}, (1.0,) * 3
        )
        corr = covariance_to_correlation(implied_covariance(gbn))
        om = np.linalg.inv(corr)
        rho = -om[0, 2] / math.sqrt(om[0, 0] * om[2, 2])
        assert abs(rho) < 1e-12


class TestDataset:
    def test_rejects_nonfinite(self):
        with pytest.raises(InvalidInputError):
            Dataset(np.array([[1.0, np.nan], [0.0, 1.0]]))

    def test_corr_properties(self, rng):
        data = Dataset(rng.standard_normal((40, 5)))
        corr = data.corr
        assert np.allclose(corr, corr.T)
        assert np.allclose(np.diag(corr), 1.0)
        assert corr.min() >= -1.0 and corr.max() <= 1.0

    def test_constant_column_raises(self):
        values = np.ones((10, 2))
        values[:, 0] = np.arange(10)
        with pytest.raises(IllConditionedDataError):
            Dataset(values).corr

    def test_values_read_only(self, rng):
        data = Dataset(rng.standard_normal((5, 2)))
        with pytest.raises(ValueError):
            data.values[0, 0] = 99.0


class TestFileFormats:
    def test_dataset_csv_round_trip(self, rng, tmp_path):
        data = Dataset(rng.standard_normal((20, 3)))
        path = tmp_path / "d.csv"
        write_dataset_csv(data, path)
        header = path.read_text().splitlines()[0]
        assert header == "X1,X2,X3"
        loaded = load_dataset_csv(path)
        assert np.allclose(loaded.values, data.values)

    def test_csv_drops_nonfinite_rows(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("X1,X2\n1.0,2.0\nnan,3.0\n4.0,5.0\n")
        loaded = load_dataset_csv(path)
        assert loaded.values.shape == (2, 2)

    def test_gbn_round_trip(self, rng, tmp_path):
        gbn = sample_weights(sample_dag(5, 2, rng), rng, noise_var=1.5)
        path = tmp_path / "net.txt"
        write_gbn(gbn, path)
        loaded = load_gbn(path)
        assert loaded.dag == gbn.dag
        assert loaded.noise_var == gbn.noise_var
        assert all(
            loaded.weights[e] == pytest.approx(gbn.weights[e], rel=0, abs=0)
            for e in gbn.weights
        )

    def test_gbn_default_noise(self):
        gbn = parse_gbn("2\n1 -> 2 : 0.5\n")
        assert gbn.noise_var == (1.0, 1.0)

    def test_gbn_bad_line(self):
        with pytest.raises(InvalidInputError):
            parse_gbn("2\n1 2 0.5\n")

    def test_format_is_parseable_text(self, rng):
        gbn = sample_weights(sample_dag(4, 2, rng), rng)
        text = format_gbn(gbn)
        assert text.splitlines()[0] == "4"
        assert parse_gbn(text).weights == gbn.weights


class TestRngStreams:
    def test_distinct_keys_give_distinct_streams(self):
        a = rng_stream(0, 1, 2).standard_normal(4)
        b = rng_stream(0, 1, 3).standard_normal(4)
        assert not np.allclose(a, b)

    def test_same_key_reproduces(self):
        a = rng_stream(9, 0, 1, 2).standard_normal(4)
        b = rng_stream(9, 0, 1, 2).standard_normal(4)
        assert np.array_equal(a, b)
