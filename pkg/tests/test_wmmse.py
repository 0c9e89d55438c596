"""Tests for the multicell transceiver design solver."""

import numpy as np
import pytest

from bsumkit.app_wmmse import (
    ChannelSet,
    NetworkSpec,
    gen_channels,
    init_transmitters,
    logdet_surrogate,
    mmse_receiver,
    mse_matrix,
    power_per_cell,
    run_wmmse,
    sum_rate,
    update_transmitters,
)
from bsumkit.core import InvalidArgumentError, RngStream
from bsumkit.engine import SolveOptions
from bsumkit.verify import audit_trace


def scalar_network(noise=1.0, power=1.0, gain=1.0):
    spec = NetworkSpec.build(n_cells=1, users_per_cell=1, n_antennas=1,
                             streams=1, noise_power=noise, power=power)
    H = ChannelSet(np.full((1, 1, 1, 1), gain, dtype=np.complex128))
    return spec, H


def two_cell_network(seed=0):
    spec = NetworkSpec.build(n_cells=2, users_per_cell=1, n_antennas=2,
                             streams=1, noise_power=1.0, power=1.0)
    return spec, gen_channels(spec, RngStream(seed))


class TestNetworkSpec:

    def test_flat_user_indexing(self):
        spec = NetworkSpec.build(n_cells=2, users_per_cell=(2, 1), n_antennas=2)
        assert spec.n_users == 3
        assert spec.user_cell == (0, 0, 1)
        assert spec.cell_users(0) == [0, 1]
        assert spec.cell_users(1) == [2]

    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            NetworkSpec.build(n_cells=0, users_per_cell=1, n_antennas=2)
        with pytest.raises(InvalidArgumentError):
            NetworkSpec.build(n_cells=1, users_per_cell=1, n_antennas=2, streams=3)
        with pytest.raises(InvalidArgumentError):
            NetworkSpec.build(n_cells=1, users_per_cell=1, n_antennas=2,
                              noise_power=0.0)


class TestGenChannels:

    def test_deterministic_per_seed(self):
        spec, _ = two_cell_network()
        a = gen_channels(spec, RngStream(3)).gains
        b = gen_channels(spec, RngStream(3)).gains
        np.testing.assert_array_equal(a, b)

    def test_shape_single_user(self):
        spec = NetworkSpec.build(n_cells=1, users_per_cell=1, n_antennas=2)
        H = gen_channels(spec, RngStream(0))
        assert H.gains.shape == (1, 1, 2, 2)

    def test_unit_variance(self):
        """Empirical second moment of >= 1e5 entries within 1 +- 0.02."""
        spec = NetworkSpec.build(n_cells=2, users_per_cell=1, n_antennas=160)
        H = gen_channels(spec, RngStream(42))
        second_moment = float(np.mean(np.abs(H.gains) ** 2))
        assert H.gains.size >= 100_000
        np.testing.assert_allclose(second_moment, 1.0, atol=0.02)


class TestSumRate:

    def test_zero_transmitters_zero_rate(self):
        spec, H = two_cell_network()
        V = [np.zeros((2, 1), dtype=np.complex128) for _ in range(2)]
        assert sum_rate(spec, H, V) == 0.0

    def test_scalar_link_log_two(self):
        """h = v = 1, sigma^2 = 1: rate log(1 + 1) nats."""
        spec, H = scalar_network()
        rate = sum_rate(spec, H, [np.ones((1, 1), dtype=np.complex128)])
        np.testing.assert_allclose(rate, np.log(2.0), rtol=1e-12)

    def test_more_noise_means_less_rate(self):
        spec, H = two_cell_network(seed=5)
        V = init_transmitters(spec, RngStream(1))
        louder = NetworkSpec.build(n_cells=2, users_per_cell=1, n_antennas=2,
                                   streams=1, noise_power=2.0, power=1.0)
        assert sum_rate(louder, H, V) < sum_rate(spec, H, V)


class TestMseMatrix:

    def test_zero_receiver_gives_identity(self):
        spec, H = two_cell_network()
        V = init_transmitters(spec, RngStream(2))
        U = [np.zeros((2, 1), dtype=np.complex128) for _ in range(2)]
        for u in range(2):
            np.testing.assert_allclose(mse_matrix(spec, H, V, U, u), np.eye(1),
                                       atol=1e-15)

    def test_zero_transmitters(self):
        """V = 0: E = I + sigma^2 U^H U."""
        spec, H = two_cell_network()
        V = [np.zeros((2, 1), dtype=np.complex128) for _ in range(2)]
        U = [np.array([[0.5], [0.25j]]), np.array([[1.0], [0.0]])]
        for u in range(2):
            expected = np.eye(1) + U[u].conj().T @ U[u]
            np.testing.assert_allclose(mse_matrix(spec, H, V, U, u), expected,
                                       atol=1e-14)

    def test_scalar_case(self):
        """h = v = sigma = 1, u = 1/2: E = |1 - uhv|^2 + sigma^2 |u|^2 = 0.5."""
        spec, H = scalar_network()
        V = [np.ones((1, 1), dtype=np.complex128)]
        U = [np.full((1, 1), 0.5, dtype=np.complex128)]
        np.testing.assert_allclose(mse_matrix(spec, H, V, U, 0), [[0.5]],
                                   atol=1e-15)


class TestMmseReceiver:

    def test_scalar_half(self):
        spec, H = scalar_network()
        got = mmse_receiver(spec, H, [np.ones((1, 1), dtype=np.complex128)], 0)
        np.testing.assert_allclose(got, [[0.5]], atol=1e-15)

    def test_zero_transmitters_zero_receiver(self):
        spec, H = two_cell_network()
        V = [np.zeros((2, 1), dtype=np.complex128) for _ in range(2)]
        for u in range(2):
            np.testing.assert_array_equal(mmse_receiver(spec, H, V, u),
                                          np.zeros((2, 1)))

    @pytest.mark.parametrize("seed", range(4))
    def test_rate_identity_at_mmse_receivers(self, seed):
        """sum of logdet(E^-1) at fresh receivers equals the sum rate."""
        spec, H = two_cell_network(seed=seed)
        V = init_transmitters(spec, RngStream(seed + 10))
        U = [mmse_receiver(spec, H, V, u) for u in range(spec.n_users)]
        total = 0.0
        for u in range(spec.n_users):
            E = mse_matrix(spec, H, V, U, u)
            sign, val = np.linalg.slogdet(E)
            total -= val
        np.testing.assert_allclose(total, sum_rate(spec, H, V), atol=1e-9)


class TestLogdetSurrogate:

    def test_tangent_at_anchor(self):
        e_hat = np.array([[2.0, 0.3], [0.3, 1.0]])
        sign, val = np.linalg.slogdet(e_hat)
        np.testing.assert_allclose(logdet_surrogate(e_hat, e_hat), val,
                                   rtol=1e-12)

    def test_scalar_values(self):
        np.testing.assert_allclose(logdet_surrogate([[2.0]], [[1.0]]), 1.0,
                                   rtol=1e-12)
        np.testing.assert_allclose(logdet_surrogate([[1.0]], [[2.0]]),
                                   np.log(2.0) - 0.5, rtol=1e-12)
        assert logdet_surrogate([[2.0]], [[1.0]]) >= np.log(2.0)

    @pytest.mark.parametrize("seed", range(4))
    def test_dominates_logdet_on_random_psd(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(20):
            a = rng.normal(size=(3, 3))
            b = rng.normal(size=(3, 3))
            e = a @ a.T + 1e-3 * np.eye(3)
            e_hat = b @ b.T + 1e-3 * np.eye(3)
            sign, val = np.linalg.slogdet(e)
            assert logdet_surrogate(e, e_hat) >= val - 1e-10

    def test_singular_anchor_rejected(self):
        with pytest.raises(InvalidArgumentError):
            logdet_surrogate(np.eye(2), np.zeros((2, 2)))


class TestUpdateTransmitters:

    def test_scalar_power_constraint_active(self):
        """Scalar cell with strong target: bisection lands on |v|^2 = 1."""
        spec, H = scalar_network()
        U = [np.full((1, 1), 0.5, dtype=np.complex128)]
        W = [np.full((1, 1), 2.0, dtype=np.complex128)]  # inverse of E = 0.5
        V = update_transmitters(spec, H, U, W)
        np.testing.assert_allclose(np.abs(V[0][0, 0]) ** 2, 1.0, rtol=1e-9)

    def test_zero_receivers_give_zero_transmitters(self):
        spec, H = two_cell_network()
        U = [np.zeros((2, 1), dtype=np.complex128) for _ in range(2)]
        W = [np.eye(1, dtype=np.complex128) for _ in range(2)]
        V = update_transmitters(spec, H, U, W)
        for v in V:
            np.testing.assert_array_equal(v, np.zeros((2, 1)))

    def test_inactive_budget_ignores_power_increase(self):
        spec, H = scalar_network()
        U = [np.full((1, 1), 2.0, dtype=np.complex128)]
        W = [np.eye(1, dtype=np.complex128)]
        V1 = update_transmitters(spec, H, U, W)
        assert float(np.abs(V1[0][0, 0]) ** 2) < 1.0  # unconstrained solution fits
        doubled = NetworkSpec.build(n_cells=1, users_per_cell=1, n_antennas=1,
                                    streams=1, noise_power=1.0, power=2.0)
        V2 = update_transmitters(doubled, H, U, W)
        np.testing.assert_allclose(V1[0], V2[0], atol=1e-14)

    @pytest.mark.parametrize("seed", range(3))
    def test_budgets_respected(self, seed):
        spec, H = two_cell_network(seed=seed)
        V = init_transmitters(spec, RngStream(seed))
        U = [mmse_receiver(spec, H, V, u) for u in range(spec.n_users)]
        W = [np.linalg.inv(mse_matrix(spec, H, V, U, u))
             for u in range(spec.n_users)]
        V_new = update_transmitters(spec, H, U, W)
        power = power_per_cell(spec, V_new)
        assert np.all(power <= np.asarray(spec.power) + 1e-9)


class TestInitTransmitters:

    def test_budget_split_exactly(self):
        spec = NetworkSpec.build(n_cells=2, users_per_cell=(2, 1), n_antennas=3,
                                 streams=2, power=(1.5, 0.5))
        V = init_transmitters(spec, RngStream(0))
        np.testing.assert_allclose(power_per_cell(spec, V), [1.5, 0.5],
                                   rtol=1e-12)

    def test_deterministic(self):
        spec, _ = two_cell_network()
        a = init_transmitters(spec, RngStream(4))
        b = init_transmitters(spec, RngStream(4))
        for va, vb in zip(a, b):
            np.testing.assert_array_equal(va, vb)


class TestRunWmmse:

    def test_two_cell_run_is_monotone_and_feasible(self):
        spec, H = two_cell_network(seed=0)
        V0 = init_transmitters(spec, RngStream(0))
        state, trace = run_wmmse(spec, H, V0, SolveOptions(max_iters=100, tol=1e-9))
        assert audit_trace(trace, slack=1e-9).passed
        for rec in trace.records:
            assert rec.extras["max_power_violation"] <= 1e-9

    def test_objective_is_minus_rate_at_receiver_steps(self):
        spec, H = two_cell_network(seed=1)
        V0 = init_transmitters(spec, RngStream(1))
        _, trace = run_wmmse(spec, H, V0, SolveOptions(max_iters=40, tol=1e-9))
        for rec in trace.records:
            if rec.block == 0:  # fresh minimum-error receivers
                np.testing.assert_allclose(-rec.objective,
                                           rec.extras["sum_rate_nats"], atol=1e-9)

    def test_all_zero_start_is_stationary(self):
        spec, H = two_cell_network(seed=2)
        V0 = [np.zeros((2, 1), dtype=np.complex128) for _ in range(2)]
        state, trace = run_wmmse(spec, H, V0, SolveOptions(max_iters=50))
        assert trace.terminal_status == "converged"
        for v in state.V:
            np.testing.assert_array_equal(v, np.zeros((2, 1)))

    def test_infeasible_start_rejected(self):
        spec, H = two_cell_network()
        V0 = [np.full((2, 1), 10.0, dtype=np.complex128) for _ in range(2)]
        with pytest.raises(InvalidArgumentError):
            run_wmmse(spec, H, V0)

    def test_missing_start_rejected(self):
        spec, H = two_cell_network()
        with pytest.raises(InvalidArgumentError):
            run_wmmse(spec, H, None)

    def test_sum_rate_improves_from_init(self):
        spec, H = two_cell_network(seed=3)
        V0 = init_transmitters(spec, RngStream(3))
        before = sum_rate(spec, H, V0)
        state, trace = run_wmmse(spec, H, V0, SolveOptions(max_iters=200, tol=1e-10))
        after = sum_rate(spec, H, state.V)
        assert after >= before - 1e-12
