"""Mode integral, covariance assembly and conditional laws."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import mode_integral_fixed
from platoon_risk.errors import DegenerateCorrelationError, InvalidParameterError, StabilityDomainError
from platoon_risk.graph import build_complete, build_path, build_pcycle, graph_eigenstructure
from platoon_risk.spectral import (
    DistanceStatistics,
    PlatoonConfig,
    conditional_distribution,
    conditional_moments,
    correlation,
    covariance_matrix,
    distance_covariance,
    max_workers,
    mode_integral,
)
from platoon_risk.stability import s2_bound

# frozen from the fixed-panel Gauss-Legendre oracle
F_FIXTURES = {
    (0.5, 0.2): 85.68757210699924,
    (1.0, 0.02): 164.92625063864202,
    (0.5, 0.02): 645.9883809968172,
    (0.2, 0.2): 504.26616731567714,
}


def stable_pair(u, v):
    s1 = 1e-3 + u * (math.pi / 2 - 2e-3)
    return s1, (0.02 + 0.96 * v) * s2_bound(s1)


class TestModeIntegral:
    @pytest.mark.parametrize("key", sorted(F_FIXTURES))
    def test_fixture(self, key):
        assert mode_integral(*key) == pytest.approx(F_FIXTURES[key], rel=1e-9)

    def test_error_bound_reported(self):
        value, err, radius = mode_integral(0.5, 0.2, full_output=True)
        assert radius >= 64
        assert 0 < err <= 1e-9 * value

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 1))
    def test_live_oracle(self, u, v):
        s1, s2 = stable_pair(u, v)
        # the oracle's panels must resolve the low-frequency peak
        width = min(0.01, 0.1 * min(s1, math.sqrt(s1 * s2)))
        ref = mode_integral_fixed(s1, s2, width)
        assert mode_integral(s1, s2) == pytest.approx(ref, rel=1e-7)

    def test_blows_up_at_boundary(self):
        s1 = 0.8
        values = [mode_integral(s1, (1 - gap) * s2_bound(s1)) for gap in (1e-1, 1e-2, 1e-3)]
        assert values[0] < values[1] < values[2]
        assert values[2] > 10 * values[0]

    @pytest.mark.parametrize("s1, s2", [(math.pi / 2, 0.1), (0.5, 0.9), (0.0, 0.1)])
    def test_outside(self, s1, s2):
        with pytest.raises(StabilityDomainError):
            mode_integral(s1, s2)

    def test_arguments(self):
        with pytest.raises(InvalidParameterError):
            mode_integral(0.5, 0.2, rtol=0.0)
        with pytest.raises(InvalidParameterError):
            mode_integral(0.5, 0.2, radius_scale=0.5)


def oracle_covariance(graph, cfg):
    """Independent assembly: numpy eigh plus the fixed-panel integral."""
    from platoon_risk.graph import laplacian

    lam, Q = np.linalg.eigh(laplacian(graph))
    D = np.diff(np.eye(graph.n), axis=0)
    out = np.zeros((graph.n - 1, graph.n - 1))
    for k in range(1, graph.n):
        u = D @ Q[:, k]
        out += mode_integral_fixed(lam[k] * cfg.tau, cfg.beta * cfg.tau) * np.outer(u, u)
    return cfg.g**2 * cfg.tau**3 / (2 * math.pi) * out


class TestCovariance:
    def test_against_oracle(self):
        g, cfg = build_path(5), PlatoonConfig(5, 0.5, 0.05, 1.0)
        sigma = covariance_matrix(graph_eigenstructure(g), cfg)
        np.testing.assert_allclose(sigma, oracle_covariance(g, cfg), rtol=1e-8, atol=1e-14)

    def test_pcycle_against_oracle(self):
        g, cfg = build_pcycle(8, 2), PlatoonConfig(8, 1.0, 0.05, 2.0)
        sigma = covariance_matrix(graph_eigenstructure(g), cfg)
        np.testing.assert_allclose(sigma, oracle_covariance(g, cfg), rtol=1e-8, atol=1e-14)

    def test_zero_noise(self):
        eigs = graph_eigenstructure(build_path(4))
        assert np.all(covariance_matrix(eigs, PlatoonConfig(4, 0.0, 0.05, 1.0)) == 0)
        with pytest.raises(InvalidParameterError):
            distance_covariance(eigs, PlatoonConfig(4, 0.0, 0.05, 1.0))

    def test_unstable_rejected(self):
        with pytest.raises(StabilityDomainError):
            covariance_matrix(graph_eigenstructure(build_path(5)), PlatoonConfig(5, 1.0, 0.2, 10.0))

    @pytest.mark.parametrize("graph", [build_complete(10), build_path(10), build_pcycle(10, 2)])
    def test_psd_and_symmetric(self, graph):
        sigma = covariance_matrix(graph_eigenstructure(graph), PlatoonConfig(10, 1.0, 0.02, 1.0))
        np.testing.assert_array_equal(sigma, sigma.T)
        assert np.linalg.eigvalsh(sigma).min() > -1e-12 * np.abs(sigma).max()

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.01, 100))
    def test_quadratic_in_noise(self, g):
        eigs = graph_eigenstructure(build_pcycle(9, 2))
        base = covariance_matrix(eigs, PlatoonConfig(9, 1.0, 0.02, 1.0))
        scaled = covariance_matrix(eigs, PlatoonConfig(9, g, 0.02, 1.0))
        np.testing.assert_allclose(scaled, g * g * base, rtol=1e-13, atol=0)

    def test_complete_graph_structure(self):
        stats = distance_covariance(graph_eigenstructure(build_complete(8)), PlatoonConfig(8, 1.0, 0.02, 1.0))
        rho = stats.correlations
        for i in range(7):
            for j in range(7):
                expected = 1.0 if i == j else (-0.5 if abs(i - j) == 1 else 0.0)
                assert rho[i, j] == pytest.approx(expected, abs=1e-10)

    def test_threads_env(self, monkeypatch):
        eigs = graph_eigenstructure(build_path(6))
        cfg = PlatoonConfig(6, 1.0, 0.05, 1.0, )
        monkeypatch.setenv("PLATOON_RISK_THREADS", "1")
        serial = covariance_matrix(eigs, cfg, rtol=1e-9)
        monkeypatch.setenv("PLATOON_RISK_THREADS", "4")
        assert max_workers() == 4
        np.testing.assert_array_equal(covariance_matrix(eigs, cfg, rtol=1e-9), serial)
        monkeypatch.setenv("PLATOON_RISK_THREADS", "x")
        with pytest.raises(InvalidParameterError):
            max_workers()


class TestDistanceStatistics:
    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            DistanceStatistics(np.array([[1.0, 0.5], [0.4, 1.0]]))
        with pytest.raises(InvalidParameterError):
            DistanceStatistics(np.array([[0.0, 0.0], [0.0, 1.0]]))

    def test_one_based(self):
        stats = DistanceStatistics(np.array([[4.0, 1.0], [1.0, 1.0]]))
        assert stats.std(1) == 2.0
        assert correlation(stats, 1, 2) == 0.5
        with pytest.raises(InvalidParameterError):
            stats.std(0)


class TestConditional:
    def test_zero_correlation_is_marginal(self):
        cd = conditional_moments(1.3, 0.7, 0.0, 2.0, 0.0)
        assert cd.mu_tilde == 2.0
        assert cd.sigma_tilde_sq == pytest.approx(0.49, rel=1e-15)

    def test_known_values(self):
        cd = conditional_moments(1.0, 2.0, 0.5, 2.0, 0.0)
        assert cd.mu_tilde == pytest.approx(0.0)
        assert cd.sigma_tilde_sq == pytest.approx(3.0)

    def test_degenerate(self):
        with pytest.raises(DegenerateCorrelationError):
            conditional_moments(1.0, 1.0, 1.0, 2.0, 0.0)

    @settings(max_examples=300, deadline=None)
    @given(st.floats(0.01, 10), st.floats(0.01, 10), st.floats(-0.999, 0.999), st.floats(-5, 5))
    def test_variance_never_grows(self, si, sj, rho, d_c):
        assert conditional_moments(si, sj, rho, 2.0, d_c).sigma_tilde_sq <= sj * sj * (1 + 1e-15)

    def test_against_matrix_formula(self):
        stats = distance_covariance(graph_eigenstructure(build_path(6)), PlatoonConfig(6, 1.0, 0.05, 1.0))
        cfg = PlatoonConfig(6, 1.0, 0.05, 1.0)
        S = stats.sigma
        for j in (1, 3, 5):
            cd = conditional_distribution(stats, cfg, 2, j, d_c=0.4)
            assert cd.mu_tilde == pytest.approx(2.0 + S[j - 1, 1] / S[1, 1] * (0.4 - 2.0), rel=1e-12)
            assert cd.sigma_tilde_sq == pytest.approx(S[j - 1, j - 1] - S[j - 1, 1] ** 2 / S[1, 1], rel=1e-10)
        with pytest.raises(InvalidParameterError):
            conditional_distribution(stats, cfg, 2, 2)
