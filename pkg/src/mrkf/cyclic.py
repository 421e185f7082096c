"""Cyclic reformulation of the periodic multirate system and its analysis.

Block indices in the public helpers are 1-based: ``block(i, j)`` is the
``(i, j)`` block of an ``N x N`` block matrix, matching the usual cyclic
indexing where the measurement at step k lives in block k+1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import DimensionMismatch
from .model import MultirateModel

RANK_RTOL = 1e-10


def cyclic_pattern(M, N: int) -> np.ndarray:
    """Place ``M`` at blocks (i+1, i) for i = 1..N-1 and at (1, N)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    r, c = M.shape
    out = np.zeros((N * r, N * c))
    for i in range(N):
        j = (i - 1) % N
        out[i * r:(i + 1) * r, j * c:(j + 1) * c] = M
    return out


def block(M, i: int, j: int, rows: int, cols: int) -> np.ndarray:
    """The 1-based (i, j) block of size rows x cols."""
    return M[(i - 1) * rows:i * rows, (j - 1) * cols:j * cols]


def cycle_signal(v, k: int, N: int) -> np.ndarray:
    """Cycled representation: ``v`` in block ``k % N + 1``, zeros elsewhere."""
    v = np.asarray(v, dtype=float).ravel()
    out = np.zeros(N * v.size)
    j = k % N
    out[j * v.size:(j + 1) * v.size] = v
    return out


@dataclass(frozen=True)
class CyclicSystem:
    Acyc: np.ndarray
    Bcyc: np.ndarray
    Ccyc: np.ndarray
    Qhalf_cyc: np.ndarray
    Rhalf_cyc: np.ndarray
    N: int
    n: int
    p: int
    q: int

    @property
    def Q_cyc(self) -> np.ndarray:
        return self.Qhalf_cyc @ self.Qhalf_cyc.T

    @property
    def R_cyc(self) -> np.ndarray:
        return self.Rhalf_cyc @ self.Rhalf_cyc.T

    @property
    def Nn(self) -> int:
        return self.N * self.n

    @property
    def Nq(self) -> int:
        return self.N * self.q


def build_cyclic(m: MultirateModel) -> CyclicSystem:
    N, n, p, q = m.N, m.n, m.p, m.q
    sel = [m.schedule.S(k) for k in range(N)]
    return CyclicSystem(
        Acyc=cyclic_pattern(m.sys.A, N),
        Bcyc=cyclic_pattern(m.sys.B, N),
        Ccyc=la.block_diag(*[S @ m.sys.C for S in sel]),
        Qhalf_cyc=cyclic_pattern(m.noise.Qhalf, N),
        Rhalf_cyc=la.block_diag(*[S @ m.noise.Rhalf for S in sel]),
        N=N, n=n, p=p, q=q,
    )


@dataclass(frozen=True)
class CyclicGain:
    """Cyclic gain and the periodic gains L_0 .. L_{N-1} it encodes."""

    Lcyc: np.ndarray
    periodic: tuple

    @property
    def N(self) -> int:
        return len(self.periodic)

    @classmethod
    def from_cyclic(cls, Lcyc, N: int, n: int, q: int) -> "CyclicGain":
        return cls(np.asarray(Lcyc, dtype=float), tuple(extract_periodic_gains(Lcyc, N, n, q)))

    @classmethod
    def from_periodic(cls, gains) -> "CyclicGain":
        gains = [np.atleast_2d(np.asarray(L, dtype=float)) for L in gains]
        return cls(embed_periodic_gains(gains), tuple(gains))

    def off_pattern_norm(self) -> float:
        """Frobenius norm of the parts of Lcyc outside the cyclic index pattern."""
        return float(np.linalg.norm(self.Lcyc - embed_periodic_gains(self.periodic)))


def extract_periodic_gains(Lcyc, N: int, n: int, q: int) -> list[np.ndarray]:
    """L_0 = block(2, 1), L_k = block(k+2, k+1), L_{N-1} = block(1, N)."""
    Lcyc = np.asarray(Lcyc, dtype=float)
    if Lcyc.shape != (N * n, N * q):
        raise DimensionMismatch(f"cyclic gain has shape {Lcyc.shape}, expected {(N * n, N * q)}")
    if N == 1:
        return [Lcyc.copy()]
    gains = [block(Lcyc, 2, 1, n, q).copy()]
    gains += [block(Lcyc, k + 2, k + 1, n, q).copy() for k in range(1, N - 1)]
    gains.append(block(Lcyc, 1, N, n, q).copy())
    return gains


def embed_periodic_gains(gains) -> np.ndarray:
    """Inverse of :func:`extract_periodic_gains` (zeros off the pattern)."""
    N = len(gains)
    n, q = np.shape(gains[0])
    out = np.zeros((N * n, N * q))
    for k, L in enumerate(gains):
        i = (k + 1) % N
        out[i * n:(i + 1) * n, k * q:(k + 1) * q] = L
    return out


@dataclass(frozen=True)
class RankReport:
    rank_R: int
    block_ranks: tuple
    Nq: int

    @property
    def is_definite(self) -> bool:
        return self.rank_R == self.Nq


def numerical_rank(M, rtol: float = RANK_RTOL) -> int:
    if M.size == 0:
        return 0
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def cyclic_rank_report(cs: CyclicSystem) -> RankReport:
    Rc = cs.R_cyc
    q = cs.q
    blocks = tuple(numerical_rank(Rc[k * q:(k + 1) * q, k * q:(k + 1) * q]) for k in range(cs.N))
    return RankReport(numerical_rank(Rc), blocks, cs.Nq)


@dataclass(frozen=True)
class ObservabilityReport:
    matrix: np.ndarray
    rank: int
    cond: float


def observability_matrix(cs: CyclicSystem, rtol: float = RANK_RTOL) -> ObservabilityReport:
    """Stack ``Ccyc @ Acyc**i`` for i = 0 .. Nn-1 and report rank and conditioning.

    The condition number is sigma_max / sigma_min over the singular values
    counted in the rank (``inf`` when the rank is zero).
    """
    rows, Ak = [], np.eye(cs.Nn)
    for _ in range(cs.Nn):
        rows.append(cs.Ccyc @ Ak)
        Ak = cs.Acyc @ Ak
    O = np.vstack(rows)
    sv = np.linalg.svd(O, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return ObservabilityReport(O, 0, np.inf)
    keep = sv > rtol * sv[0]
    return ObservabilityReport(O, int(keep.sum()), float(sv[0] / sv[keep][-1]))


def monodromy(m: MultirateModel, gains: CyclicGain) -> np.ndarray:
    """Error transition over one period starting at phase 0.

    ``(A - L_{N-1} S_{N-1} C) ... (A - L_1 S_1 C)(A - L_0 S_0 C)``.
    """
    if gains.N != m.N:
        raise DimensionMismatch(f"{gains.N} gains for a period of {m.N}")
    A, C = m.sys.A, m.sys.C
    Phi = np.eye(m.n)
    for k in range(m.N - 1, -1, -1):
        Phi = Phi @ (A - gains.periodic[k] @ m.schedule.S(k) @ C)
    return Phi


def spectral_radius(M) -> float:
    M = np.atleast_2d(M)
    return float(np.max(np.abs(np.linalg.eigvals(M)))) if M.size else 0.0


def closed_loop(cs: CyclicSystem, gains: CyclicGain) -> np.ndarray:
    return cs.Acyc - gains.Lcyc @ cs.Ccyc


def spectral_radius_identity_check(cs: CyclicSystem, gains: CyclicGain, m: MultirateModel | None = None) -> float:
    """``|rho(Acyc - Lcyc Ccyc) - rho(Phi_N)**(1/N)|``.

    The monodromy uses the periodic gains encoded in ``gains``; when the
    model is not passed it is rebuilt from the cyclic blocks.
    """
    if m is None:
        A = block(cs.Acyc, 2, 1, cs.n, cs.n) if cs.N > 1 else cs.Acyc
        Cs = [block(cs.Ccyc, k + 1, k + 1, cs.q, cs.n) for k in range(cs.N)]
        Phi = np.eye(cs.n)
        for k in range(cs.N - 1, -1, -1):
            Phi = Phi @ (A - gains.periodic[k] @ Cs[k])
    else:
        Phi = monodromy(m, gains)
    rho_cyc = spectral_radius(closed_loop(cs, gains))
    return abs(rho_cyc - spectral_radius(Phi) ** (1.0 / cs.N))
