import numpy as np
import pytest

from mrkf.cli import L2_RATIO_GRID, POLE_GRID
from mrkf.design import DesignSpec, design, l2_optimal
from mrkf.model import MultirateModel, automotive_model
from mrkf.oracle import periodic_riccati


@pytest.fixture(scope="session")
def auto():
    return automotive_model()


@pytest.fixture(scope="session")
def auto_design(auto):
    return design(auto)


@pytest.fixture(scope="session")
def auto_oracle(auto):
    return periodic_riccati(auto)


@pytest.fixture(scope="session")
def gamma_opt(auto):
    return l2_optimal(auto)


@pytest.fixture(scope="session")
def pole_sweep(auto):
    """{r: design} over the default pole grid."""
    return {r: design(auto, DesignSpec(pole_radius=r)) for r in POLE_GRID}


@pytest.fixture(scope="session")
def l2_sweep(auto, gamma_opt):
    """{ratio: design} over the default l2 grid, each with its achieved norm."""
    g = gamma_opt[0]
    return {c: design(auto, DesignSpec(l2_bound=c * g), verify_l2=True) for c in L2_RATIO_GRID}


def random_model(rng, n=None, q=None, N=None, p=1, stable=False, full=False) -> MultirateModel:
    """Random model with PD noise and a schedule where some sensor fires each period."""
    n = n or int(rng.integers(1, 5))
    q = q or int(rng.integers(1, 4))
    N = N or int(rng.integers(1, 6))
    A = rng.standard_normal((n, n))
    if stable:
        A *= 0.9 / max(1e-9, np.max(np.abs(np.linalg.eigvals(A))))
    B = rng.standard_normal((n, p))
    C = rng.standard_normal((q, n))
    Gq = rng.standard_normal((n, n))
    Gr = rng.standard_normal((q, q))
    Q = Gq @ Gq.T + 0.1 * np.eye(n)
    R = Gr @ Gr.T + 0.1 * np.eye(q)
    masks = np.ones((N, q)) if full else (rng.random((N, q)) < 0.6).astype(float)
    masks[0, 0] = 1.0
    return MultirateModel.from_arrays(A, B, C, Q, R, masks)


@pytest.fixture(scope="session")
def make_model():
    return random_model
