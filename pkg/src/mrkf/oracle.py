"""Reference solutions independent of the LMI path.

Two generators: the periodic Riccati difference recursion, which uses only
the active measurement rows at each step, and a plain fixed-point iteration
of the algebraic Riccati equation for the time-invariant case. All gains are
in predictor form, ``L = A K``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cyclic import CyclicGain, block, monodromy, spectral_radius
from .errors import DimensionMismatch, NoConvergence
from .model import MultirateModel, validate_model

RICCATI_TOL = 1e-11
RICCATI_MAX_ITERS = 100_000


@dataclass(frozen=True)
class RiccatiTrace:
    """Periodic steady state of the prediction covariance.

    Attributes
    ----------
    P : tuple of ndarray
        ``P[k]`` is the one-step prediction covariance entering step k.
    L : tuple of ndarray
        Predictor gains, n x q, zero columns at inactive sensors.
    iterations : int
        Number of full periods iterated.
    residual : float
        Final ``max_k ||P_k^(i+1) - P_k^(i)||_F``.
    """

    P: tuple
    L: tuple
    iterations: int
    residual: float

    @property
    def N(self) -> int:
        return len(self.P)

    @property
    def trace(self) -> float:
        """Sum over one period of trace(P_k)."""
        return float(sum(np.trace(P) for P in self.P))

    def gains(self) -> CyclicGain:
        return CyclicGain.from_periodic(self.L)


def _sym(M):
    return 0.5 * (M + M.T)


def riccati_step(A, C, Q, R, P, active):
    """One measurement update (rows ``active`` only) followed by prediction.

    Returns ``(P_next, L)``, with ``L`` the predictor gain scattered into
    ``q`` columns.
    """
    n, q = A.shape[0], C.shape[0]
    L = np.zeros((n, q))
    if active.size == 0:
        return _sym(A @ P @ A.T + Q), L
    Ca = C[active]
    Ra = R[np.ix_(active, active)]
    Sinn = Ca @ P @ Ca.T + Ra
    K = np.linalg.solve(Sinn, Ca @ P).T
    Pu = P - K @ Ca @ P
    L[:, active] = A @ K
    return _sym(A @ Pu @ A.T + Q), L


def periodic_riccati(m: MultirateModel, P0=None, tol: float = RICCATI_TOL,
                     max_iters: int = RICCATI_MAX_ITERS) -> RiccatiTrace:
    """Iterate the periodic Riccati recursion to its periodic steady state.

    Convergence is judged period against period. ``max_iters`` counts
    periods.

    Raises
    ------
    NoConvergence
        If the recursion has not settled after ``max_iters`` periods.
    """
    validate_model(m)
    A, C = m.sys.A, m.sys.C
    Q, R = m.noise.Q, m.noise.R
    N, n = m.N, m.n
    P = np.eye(n) if P0 is None else _sym(np.asarray(P0, dtype=float))
    if P.shape != (n, n):
        raise DimensionMismatch(f"P0 must be {n} x {n}")
    active = [m.schedule.active(k) for k in range(N)]
    prev = None
    res = np.inf
    for it in range(1, max_iters + 1):
        Ps, Ls = [], []
        for k in range(N):
            Ps.append(P)
            P, L = riccati_step(A, C, Q, R, P, active[k])
            Ls.append(L)
        if prev is not None:
            res = max(np.linalg.norm(a - b) for a, b in zip(Ps, prev))
            if not np.isfinite(res):
                break
            if res < tol:
                return RiccatiTrace(tuple(Ps), tuple(Ls), it, float(res))
        prev = Ps
    raise NoConvergence(f"periodic Riccati recursion did not converge (residual {res:.3g})")


def dare_fixed_point(A, C, Q, R, tol: float = RICCATI_TOL, max_iters: int = RICCATI_MAX_ITERS, P0=None):
    """Fixed-point iteration of the filtering DARE.

    Returns ``(P, K, L)`` with ``K = P C^T (C P C^T + R)^{-1}`` and
    ``L = A K``.

    >>> P, K, L = dare_fixed_point([[1.0]], [[1.0]], [[1.0]], [[1.0]])
    >>> round(float(P[0, 0]), 6)
    1.618034
    """
    A, C = np.atleast_2d(np.asarray(A, float)), np.atleast_2d(np.asarray(C, float))
    Q, R = np.atleast_2d(np.asarray(Q, float)), np.atleast_2d(np.asarray(R, float))
    n = A.shape[0]
    P = np.eye(n) if P0 is None else np.asarray(P0, float)
    allrows = np.arange(C.shape[0])
    res = np.inf
    for _ in range(max_iters):
        Pn, _ = riccati_step(A, C, Q, R, P, allrows)
        res = np.linalg.norm(Pn - P)
        P = Pn
        if not np.isfinite(res):
            break
        if res < tol:
            K = np.linalg.solve(C @ P @ C.T + R, C @ P).T
            return P, K, A @ K
    raise NoConvergence(f"DARE fixed-point iteration did not converge (residual {res:.3g})")


@dataclass
class CrossValidationReport:
    gaps: tuple
    max_gap: float
    oracle_trace: float
    covariance_bound_ok: bool
    covariance_bound_margin: float
    oracle_spectral_radius: float

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_gap < tol


def cross_validate(m: MultirateModel, d, tol: float = 1e-8, oracle: RiccatiTrace | None = None) -> CrossValidationReport:
    """Compare an LMI design with the periodic Riccati steady state.

    ``d`` is anything with ``gains`` (a :class:`CyclicGain`) and
    optionally ``X`` (cyclic Lyapunov matrix). The covariance check tests
    ``P_k <= block_{k+1}(X^{-1}) + tol I`` for every phase.
    """
    ora = oracle or periodic_riccati(m)
    gains = d.gains if hasattr(d, "gains") else d
    if gains.N != m.N:
        raise DimensionMismatch(f"{gains.N} gains for a period of {m.N}")
    gaps = tuple(float(np.linalg.norm(a - b)) for a, b in zip(gains.periodic, ora.L))
    ok, margin = True, np.inf
    X = getattr(d, "X", None)
    if X is not None:
        Xi = np.linalg.inv(X)
        n = m.n
        for k, P in enumerate(ora.P):
            blk = _sym(block(Xi, k + 1, k + 1, n, n))
            e = float(np.linalg.eigvalsh(blk - P)[0])
            margin = min(margin, e)
        ok = margin >= -tol
    rho = spectral_radius(monodromy(m, ora.gains())) ** (1.0 / m.N)
    return CrossValidationReport(gaps, max(gaps), ora.trace, ok, float(margin), float(rho))
