import numpy as np
import pytest

from rcca.sysmodel import SystemConfig

# acceptance criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def random_channels(rng, U, K, R, M):
    return (rng.standard_normal((U, K, R, M)) + 1j * rng.standard_normal((U, K, R, M))) / np.sqrt(2)


def random_psd(rng, shape, n, rank=None):
    rank = n if rank is None else rank
    X = rng.standard_normal(shape + (n, rank)) + 1j * rng.standard_normal(shape + (n, rank))
    return X @ np.conj(np.swapaxes(X, -1, -2))


def random_uplink(rng, U, K, R, P_tx):
    S = random_psd(rng, (U, K), R)
    return S * (P_tx / np.real(np.trace(S, axis1=-2, axis2=-1)).sum())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def desk_cfg():
    return SystemConfig(M=16, R=2, U=4, K=8, N_RF=4, N_p=8).with_snr_db(10)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {key}: {detail}")
