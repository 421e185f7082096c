"""Primal-dual path-following interior-point method for block LMIs.

Solves the pair

    (P)  minimize   c^T x         s.t.  S = F0 + sum_i x_i F_i >= 0
    (D)  maximize  -<F0, Z>       s.t.  <F_i, Z> = c_i,  Z >= 0

over a list of dense symmetric blocks.  Each iteration uses the
Nesterov-Todd scaling point and a Mehrotra predictor-corrector step.  The
start is infeasible: S = eta*I, Z = xi*I, x = 0.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg as la

from .problem import CanonicalForm, SdpProblem, canonicalize

log = logging.getLogger(__name__)


class Status(str, Enum):
    OPTIMAL = "Optimal"
    # best iterate met ``accept_tol`` but not ``tol`` before numerical breakdown
    INACCURATE = "OptimalInaccurate"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iters: int = 200
    step_fraction: float = 0.98
    # certificate threshold for primal infeasibility (normalized dual ray)
    infeas_tol: float = 1e-8
    # stall rule: no progress in mu or primal residual while the latter stays large
    stall_iters: int = 30
    stall_residual: float = 1e-6
    schur_chunk: int = 256
    # iterative refinement passes on the Schur-complement solve
    refinement: int = 2
    # fallback acceptance for the best iterate when the run ends without reaching tol
    accept_tol: float = 1e-6
    verbose: bool = False


@dataclass
class SdpSolution:
    values: dict
    x: np.ndarray
    objective: float
    dual_objective: float
    status: Status
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    S: list = field(default_factory=list, repr=False)
    Z: list = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    @property
    def acceptable(self) -> bool:
        """Optimal, or optimal to ``accept_tol`` (see :class:`SolverOptions`)."""
        return self.status in (Status.OPTIMAL, Status.INACCURATE)


class _SchurBlock:
    """Column groups of one block's F, padded by nonzero count.

    Lets ``V F_j V`` be formed for many j at once with batched matmul.
    """

    def __init__(self, F, s, chunk):
        self.s = s
        self.F = F.tocsc()
        self.FT = self.F.T.tocsr()
        counts = np.diff(self.F.indptr)
        self.groups = []
        for P in np.unique(counts):
            if P == 0:
                continue
            cols = np.flatnonzero(counts == P)
            for start in range(0, cols.size, chunk):
                cc = cols[start:start + chunk]
                idx = np.concatenate([np.arange(self.F.indptr[j], self.F.indptr[j + 1]) for j in cc])
                vec = self.F.indices[idx].reshape(cc.size, P)
                vals = self.F.data[idx].reshape(cc.size, P)
                k, l = np.divmod(vec, s)
                self.groups.append((cc, k, l, vals))

    def accumulate(self, H, V):
        s = self.s
        for cc, k, l, vals in self.groups:
            # G_j = sum_p vals_jp V[:, k_jp] V[l_jp, :]
            left = np.transpose(V[:, k], (1, 0, 2)) * vals[:, None, :]
            G = np.matmul(left, V[l, :])
            H[:, cc] += (self.FT @ G.reshape(cc.size, s * s).T)


def _sym(M):
    return 0.5 * (M + M.T)


def _nt_scaling(S, Z):
    """R with R^T Z R = R^{-1} S R^{-T} = diag(lam)."""
    Ls = la.cholesky(S, lower=True)
    Lz = la.cholesky(Z, lower=True)
    U, lam, Vt = la.svd(Lz.T @ Ls)
    R = (Ls @ Vt.T) / np.sqrt(lam)
    Rinv = (U.T / np.sqrt(lam)[:, None]) @ Lz.T
    return R, Rinv, lam


def _max_step(lam, D):
    """Largest alpha with diag(lam) + alpha*D >= 0."""
    isq = 1.0 / np.sqrt(lam)
    e = la.eigvalsh(_sym(D * isq[:, None] * isq[None, :]))[0]
    return np.inf if e >= 0 else -1.0 / e


def solve_canonical(cf: CanonicalForm, opts: SolverOptions | None = None) -> SdpSolution:
    opts = opts or SolverOptions()
    m = cf.n_unknowns
    sizes = cf.sizes
    nu = sum(sizes)

    used = np.zeros(m, dtype=bool)
    for Fb in cf.F:
        used |= np.diff(Fb.tocsc().indptr) > 0
    if np.any(cf.c[~used] != 0):
        return _finish(cf, np.zeros(m), [], [], Status.UNBOUNDED, np.inf, np.inf, np.inf, 0)
    act = np.flatnonzero(used)
    c = cf.c[act]
    F = [Fb.tocsc()[:, act] for Fb in cf.F]
    ma = act.size
    x = np.zeros(ma)

    if nu == 0:
        return _finish(cf, np.zeros(m), [], [], Status.OPTIMAL, 0.0, 0.0, 0.0, 0)

    schur = [_SchurBlock(Fb, s, opts.schur_chunk) for Fb, s in zip(F, sizes)]
    Fnorm = [np.sqrt(np.asarray(Fb.multiply(Fb).sum(axis=0))).ravel() for Fb in F]
    nF0 = [np.linalg.norm(F0) for F0 in cf.F0]

    S, Z = [], []
    for b, s in enumerate(sizes):
        fn = Fnorm[b]
        xi = max(10.0, np.sqrt(s), s * np.max((1 + np.abs(c)) / (1 + fn)) if ma else 0.0)
        eta = max(10.0, np.sqrt(s), nF0[b], fn.max() if ma else 0.0)
        S.append(eta * np.eye(s))
        Z.append(xi * np.eye(s))

    def AT(Ms):
        out = np.zeros(ma)
        for Fb, M in zip(F, Ms):
            out += Fb.T @ M.reshape(-1)
        return out

    def Fx(b, v):
        s = sizes[b]
        return _sym((F[b] @ v).reshape(s, s))

    norm_c = 1.0 + np.linalg.norm(c)
    norm_F0 = 1.0 + np.sqrt(sum(n ** 2 for n in nF0))
    best_mu, best_pres, stall = np.inf, np.inf, 0
    best = (np.inf,)
    status = Status.MAX_ITERATIONS
    it = 0
    pres = dres = rgap = np.inf
    for it in range(opts.max_iters + 1):
        rp = [cf.F0[b] + Fx(b, x) - S[b] for b in range(len(sizes))]
        rd = c - AT(Z)
        pobj = c @ x
        dobj = -sum(np.sum(F0 * Zb) for F0, Zb in zip(cf.F0, Z))
        gap = sum(np.sum(Sb * Zb) for Sb, Zb in zip(S, Z))
        mu = gap / nu
        pres = np.sqrt(sum(np.sum(r * r) for r in rp)) / norm_F0
        dres = np.linalg.norm(rd) / norm_c
        rgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        if opts.verbose:
            log.info("it %3d pobj %+.8e dobj %+.8e pres %.1e dres %.1e gap %.1e", it, pobj, dobj, pres, dres, rgap)

        if pres <= opts.tol and dres <= opts.tol and rgap <= opts.tol:
            status = Status.OPTIMAL
            break
        err = max(pres, dres, rgap)
        if err < best[0]:
            best = (err, x.copy(), list(S), list(Z), pres, dres, rgap)
        # dual ray: Z >= 0, F^T Z ~ 0, <F0, Z> < 0 certifies the LMI is empty
        if dobj > 0:
            trZ = sum(np.trace(Zb) for Zb in Z)
            if np.linalg.norm(c - rd) / dobj <= opts.infeas_tol * norm_c and dobj / trZ > opts.infeas_tol:
                log.debug("dual ray certificate at iteration %d", it)
                status = Status.INFEASIBLE
                break
        # primal ray: sum_i x_i F_i >= 0 with c^T x < 0 certifies unboundedness
        if pobj < -1e6 * (1.0 + abs(dobj)):
            lo = min(la.eigvalsh(Fx(b, x))[0] for b in range(len(sizes)))
            if lo >= -opts.infeas_tol * -pobj:
                status = Status.UNBOUNDED
                break
        if it == opts.max_iters:
            break
        # stalled only when neither the duality measure nor primal feasibility improve
        if mu < 0.7 * best_mu or pres < 0.7 * best_pres:
            best_mu, best_pres, stall = min(mu, best_mu), min(pres, best_pres), 0
        elif pres > opts.stall_residual:
            stall += 1
            if stall >= opts.stall_iters:
                log.debug("no progress for %d iterations with pres %.1e", stall, pres)
                status = Status.INFEASIBLE
                break

        try:
            scal = [_nt_scaling(S[b], Z[b]) for b in range(len(sizes))]
        except la.LinAlgError:
            log.debug("NT scaling failed at iteration %d", it)
            status = Status.NUMERICAL_FAILURE
            break

        H = np.zeros((ma, ma))
        for b, (R, Rinv, lam) in enumerate(scal):
            V = Rinv.T @ Rinv
            schur[b].accumulate(H, _sym(V))
        H = _sym(H)
        cho = _factor(H)
        if cho is None:
            log.debug("Schur complement not factorable at iteration %d", it)
            status = Status.NUMERICAL_FAILURE
            break

        def direction(K):
            rhs = -rd
            Rc = []
            for b, (R, Rinv, lam) in enumerate(scal):
                Rcb = Rinv.T @ K[b] @ Rinv
                V = Rinv.T @ Rinv
                Rc.append(Rcb)
                rhs = rhs + F[b].T @ (Rcb - V @ rp[b] @ V).reshape(-1)
            dx = la.cho_solve(cho, rhs)
            Vs = [Rinv.T @ Rinv for (_, Rinv, _) in scal]

            def dual_dir(dx):
                dS = [Fx(b, dx) + rp[b] for b in range(len(scal))]
                dZ = [_sym(Rc[b] - Vs[b] @ dS[b] @ Vs[b]) for b in range(len(scal))]
                return dS, dZ

            # refine against the dual equation A(dZ) = rd evaluated directly
            dS, dZ = dual_dir(dx)
            for _ in range(opts.refinement):
                err = AT(dZ) - rd
                dx = dx + la.cho_solve(cho, err)
                dS, dZ = dual_dir(dx)
            dSh, dZh = [], []
            for b, (R, Rinv, lam) in enumerate(scal):
                dSb, dZb = dS[b], dZ[b]
                dSh.append(_sym(Rinv @ dSb @ Rinv.T))
                dZh.append(_sym(R.T @ dZb @ R))
            return dx, dS, dZ, dSh, dZh

        def steps(dSh, dZh):
            ap = min(_max_step(lam, D) for (_, _, lam), D in zip(scal, dSh))
            ad = min(_max_step(lam, D) for (_, _, lam), D in zip(scal, dZh))
            return ap, ad

        # predictor
        Kaff = [-np.diag(lam) for (_, _, lam) in scal]
        dx, dS, dZ, dSh, dZh = direction(Kaff)
        ap, ad = steps(dSh, dZh)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = sum(
            np.sum((np.diag(lam) + ap * a) * (np.diag(lam) + ad * b_))
            for (_, _, lam), a, b_ in zip(scal, dSh, dZh)
        ) / nu
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        # corrector
        K = []
        for (_, _, lam), a, b_ in zip(scal, dSh, dZh):
            T = sigma * mu * np.eye(lam.size) - np.diag(lam * lam) - _sym(a @ b_)
            K.append(2.0 * T / (lam[:, None] + lam[None, :]))
        dx, dS, dZ, dSh, dZh = direction(K)
        ap, ad = steps(dSh, dZh)
        ap = min(1.0, opts.step_fraction * ap)
        ad = min(1.0, opts.step_fraction * ad)
        if ap < 1e-12 and ad < 1e-12:
            log.debug("step lengths vanished at iteration %d", it)
            status = Status.NUMERICAL_FAILURE
            break
        x = x + ap * dx
        S = [_sym(Sb + ap * d) for Sb, d in zip(S, dS)]
        Z = [_sym(Zb + ad * d) for Zb, d in zip(Z, dZ)]

    if status in (Status.NUMERICAL_FAILURE, Status.MAX_ITERATIONS) and best[0] <= opts.accept_tol:
        _, x, S, Z, pres, dres, rgap = best
        status = Status.INACCURATE
    xf = np.zeros(m)
    xf[act] = x
    return _finish(cf, xf, S, Z, status, pres, dres, rgap, it)


def _factor(H):
    d = np.diag(H)
    scale = max(d.max(initial=0.0), 1e-300)
    for shift in (0.0, 1e-14, 1e-12, 1e-10):
        try:
            return la.cho_factor(H + shift * scale * np.eye(H.shape[0]), lower=True, check_finite=False)
        except la.LinAlgError:
            continue
    return None


def _finish(cf, x, S, Z, status, pres, dres, rgap, it):
    dobj = -sum(float(np.sum(F0 * Zb)) for F0, Zb in zip(cf.F0, Z)) if Z else float(cf.c @ x)
    return SdpSolution(
        values=cf.unpack(x),
        x=x,
        objective=float(cf.c @ x),
        dual_objective=dobj,
        status=status,
        primal_residual=float(pres),
        dual_residual=float(dres),
        gap=float(rgap),
        iterations=int(it),
        S=S,
        Z=Z,
    )


def solve_sdp(p: SdpProblem, opts: SolverOptions | None = None) -> SdpSolution:
    """Canonicalize and solve ``p``."""
    return solve_canonical(canonicalize(p), opts)
