import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from conftest import random_channels, random_psd, random_uplink
from rcca.duality import (
    CovarianceSet,
    PreconditionError,
    conversion_matrices,
    effective_channel,
    effective_channels,
)
from rcca.metrics import downlink_sum_rate, uplink_sum_rate


class TestEffectiveChannel:
    def test_no_interference_is_identity_whitening(self, rng):
        H = random_channels(rng, 3, 1, 2, 4)[:, 0]
        out = effective_channel(H[0], H[1:], np.zeros((2, 2, 2)))
        assert np.allclose(out, H[0])

    def test_scalar_whitening(self, rng):
        c = 3.5
        H_u = random_channels(rng, 1, 1, 3, 3)[0, 0]
        out = effective_channel(H_u, np.eye(3)[None], c * np.eye(3)[None])
        assert np.allclose(out, H_u / np.sqrt(1 + c))

    def test_matches_independent_inverse_sqrt(self, rng):
        H = random_channels(rng, 3, 1, 2, 5)[:, 0]
        S = random_psd(rng, (2,), 2)
        out = effective_channel(H[0], H[1:], S)
        J = np.eye(5) + sum(H[i].conj().T @ S[i - 1] @ H[i] for i in (1, 2))
        oracle = H[0] @ np.linalg.inv(sla.sqrtm(J))
        assert np.linalg.norm(out - oracle) <= 1e-9 * np.linalg.norm(oracle)

    def test_batched_agrees_with_single(self, rng):
        H = random_channels(rng, 3, 2, 2, 4)
        S = random_psd(rng, (3, 2), 2)
        eff = effective_channels(H, S)
        for u in range(3):
            others = [i for i in range(3) if i != u]
            for k in range(2):
                assert np.allclose(eff[u, k], effective_channel(H[u, k], H[others, k], S[others, k]))

    def test_non_psd_rejected(self, rng):
        H = random_channels(rng, 2, 1, 2, 3)[:, 0]
        with pytest.raises(PreconditionError):
            effective_channel(H[0], H[1:], -np.eye(2)[None])
        with pytest.raises(PreconditionError):
            effective_channels(H[:, None], -np.eye(2) * np.ones((2, 1, 1, 1)))


class TestConversion:
    def test_single_user_zero_power(self):
        H = random_channels(np.random.default_rng(0), 1, 1, 2, 3)
        state, dl = conversion_matrices(H, CovarianceSet("uplink", np.zeros((1, 1, 2, 2), complex)))
        assert np.allclose(state.A, np.eye(2)) and np.allclose(state.B, np.eye(3))
        assert np.allclose(dl.mats, 0)

    def test_single_user_delta_is_isometry(self, rng):
        H = random_channels(rng, 1, 3, 2, 4)
        _, dl = conversion_matrices(H, CovarianceSet("uplink", np.zeros((1, 3, 2, 2), complex)))
        state, _ = conversion_matrices(H, CovarianceSet("uplink", random_psd(rng, (1, 3), 2)))
        D = state.Delta[0]
        assert np.allclose(np.conj(np.swapaxes(D, -1, -2)) @ D, np.eye(2))

    def test_rejects_downlink_input_and_non_psd(self, rng):
        H = random_channels(rng, 2, 1, 2, 3)
        with pytest.raises(PreconditionError):
            conversion_matrices(H, CovarianceSet("downlink", np.zeros((2, 1, 2, 2))))
        bad = np.zeros((2, 1, 2, 2), complex)
        bad[0, 0] = np.diag([1.0, -1.0])
        with pytest.raises(PreconditionError):
            conversion_matrices(H, CovarianceSet("uplink", bad))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), U=st.integers(1, 4), K=st.integers(1, 3),
           R=st.integers(1, 3), P=st.floats(0.1, 100.0))
    def test_rate_and_power_preserved(self, seed, U, K, R, P):
        rng = np.random.default_rng(seed)
        M = 6
        H = random_channels(rng, U, K, R, M)
        S = CovarianceSet("uplink", random_uplink(rng, U, K, R, P))
        _, dl = conversion_matrices(H, S)
        ul_rate = uplink_sum_rate(H, S) / K
        dl_rate = downlink_sum_rate(H, dl).sum_rate
        assert abs(ul_rate - dl_rate) <= 1e-6 * max(dl_rate, 1e-12)
        assert dl.total_power == pytest.approx(P, rel=1e-9)
        dl.check()

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31), rank=st.integers(0, 2))
    def test_rank_does_not_grow(self, seed, rank):
        rng = np.random.default_rng(seed)
        H = random_channels(rng, 3, 2, 3, 6)
        S = random_psd(rng, (3, 2), 3, rank=rank) if rank else np.zeros((3, 2, 3, 3), complex)
        _, dl = conversion_matrices(H, CovarianceSet("uplink", S))
        for u in range(3):
            for k in range(2):
                assert np.linalg.matrix_rank(dl.mats[u, k], tol=1e-8) <= max(
                    np.linalg.matrix_rank(S[u, k], tol=1e-8), 0)

    @pytest.mark.parametrize("perm", [[2, 0, 1], [1, 2, 0], [0, 2, 1]])
    def test_any_decoding_order_has_a_dual(self, rng, perm):
        H = random_channels(rng, 3, 2, 2, 5)
        S = random_uplink(rng, 3, 2, 2, 4.0)
        # relabel users, convert, then map the dual encoding order back
        _, dl = conversion_matrices(H[perm], CovarianceSet("uplink", S[perm]))
        Q = np.empty_like(dl.mats)
        Q[perm] = dl.mats
        order = [perm[i] for i in (2, 1, 0)]
        rate = downlink_sum_rate(H, Q, order=order).sum_rate
        assert rate == pytest.approx(uplink_sum_rate(H, S) / 2, rel=1e-8)
