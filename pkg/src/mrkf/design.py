"""LMI design of periodic multirate Kalman gains on the cyclic system.

Decision variables are the Lyapunov matrix X (symmetric, Nn x Nn), the
gain product Y = -X L (Nn x Nq) and the covariance bound W (symmetric,
Nn x Nn).  The base problem minimizes trace(W) subject to the
Riccati/Lyapunov LMI, ``X >= eps I`` and ``[[W, G], [G, X]] >= 0``.
Pole-disk and l2-induced-norm constraints can be stacked on top.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .cyclic import (
    CyclicGain,
    CyclicSystem,
    build_cyclic,
    closed_loop,
    observability_matrix,
    spectral_radius,
)
from .errors import Infeasible, NotPositiveDefinite, SolverFailure, Unobservable, Unstable
from .model import MultirateModel, is_positive_definite, validate_model
from .sdp import LmiBlock, SdpProblem, SolverOptions, Status, evaluate_block, solve_sdp

log = logging.getLogger(__name__)

EPSILON = 1e-6
STRICT_MARGIN = 1e-6
DEFAULT_CZ_SCALE = np.sqrt(0.1)


@dataclass
class DesignSpec:
    """What to optimize and which extra constraints to impose.

    ``weights`` is the diagonal of the cyclic weighting matrix (length Nn),
    a length-n diagonal replicated over the period, or a full Nn x Nn matrix.
    ``Cz`` is the per-step performance output (m_z x n); when omitted,
    ``sqrt(0.1) * I_n`` is used for l2 constraints.
    """

    weights: np.ndarray | None = None
    pole_radius: float | None = None
    l2_bound: float | None = None
    Cz: np.ndarray | None = None
    alpha: float = 1.0
    epsilon: float = EPSILON
    margin: float = STRICT_MARGIN

    def __post_init__(self):
        if self.pole_radius is not None and not 0.0 < self.pole_radius < 1.0:
            raise ValueError(f"pole radius must lie in (0, 1), got {self.pole_radius}")
        if self.l2_bound is not None and not self.l2_bound > 0.0:
            raise ValueError(f"l2 bound must be positive, got {self.l2_bound}")
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")

    def performance_output(self, n: int) -> np.ndarray:
        if self.Cz is None:
            return DEFAULT_CZ_SCALE * np.eye(n)
        Cz = np.atleast_2d(np.asarray(self.Cz, dtype=float))
        if Cz.shape[1] != n or Cz.shape[0] > n:
            raise ValueError(f"Cz must be m_z x {n} with m_z <= {n}, got {Cz.shape}")
        return Cz


class FilterLmi(SdpProblem):
    """SdpProblem with handles on the filter-design variables and blocks."""

    def __init__(self, cs: CyclicSystem):
        super().__init__()
        self.cs = cs
        self.X = self.variable("X", (cs.Nn, cs.Nn), symmetric=True)
        self.Y = self.variable("Y", (cs.Nn, cs.Nq))
        self.named: dict[str, LmiBlock] = {}

    def add_block(self, name, blk):
        blk.name = name
        self.named[name] = blk
        return self.constrain(blk)


def weight_matrix(cs: CyclicSystem, weights) -> np.ndarray:
    if weights is None:
        return np.eye(cs.Nn)
    G = np.asarray(weights, dtype=float)
    if G.ndim == 1:
        if G.size == cs.n:
            G = np.tile(G, cs.N)
        if G.size != cs.Nn:
            raise ValueError(f"weight diagonal must have length {cs.n} or {cs.Nn}")
        G = np.diag(G)
    if G.shape != (cs.Nn, cs.Nn):
        raise ValueError(f"weight matrix must be {cs.Nn} x {cs.Nn}")
    if not is_positive_definite(G):
        raise NotPositiveDefinite("weighting matrix must be positive definite")
    return G


def _riccati_block(lmi: FilterLmi, lower_right: float | None = None, Czc=None, alpha=1.0, gamma_var=None,
                   gamma_sq=None, margin=0.0, gain=None):
    """4 x 4 block shared by the Kalman LMI and the l2 LMI.

    With ``gain`` given the product Y is replaced by -X @ gain (analysis form).
    """
    cs, X, Y = lmi.cs, lmi.X, lmi.Y
    Nn, Nq = cs.Nn, cs.Nq
    blk = LmiBlock([Nn, Nn, Nn, Nq], margin=margin)
    blk.add(0, 0, X)
    if gain is None:
        blk.add(0, 1, X, right=cs.Acyc).add(0, 1, Y, right=cs.Ccyc)
        blk.add(0, 3, Y, right=cs.Rhalf_cyc)
    else:
        blk.add(0, 1, X, right=cs.Acyc - gain @ cs.Ccyc)
        blk.add(0, 3, X, right=-gain @ cs.Rhalf_cyc)
    blk.add(0, 2, X, right=cs.Qhalf_cyc)
    blk.add(1, 1, X)
    if Czc is not None:
        blk.constant(1, 1, -(alpha ** 2) * Czc.T @ Czc)
    if gamma_var is not None:
        blk.add_identity(2, gamma_var, scale=1.0 / alpha ** 2)
        blk.add_identity(3, gamma_var, scale=1.0 / alpha ** 2)
    else:
        s = 1.0 if gamma_sq is None else gamma_sq / alpha ** 2
        blk.constant(2, 2, s * np.eye(Nn))
        blk.constant(3, 3, s * np.eye(Nq))
    return blk


def assemble_kalman_lmi(cs: CyclicSystem, epsilon: float = EPSILON, weights=None) -> FilterLmi:
    """Base trace-minimization problem; ``weights`` turns it into the weighted design."""
    lmi = FilterLmi(cs)
    lmi.W = lmi.variable("W", (cs.Nn, cs.Nn), symmetric=True)
    lmi.add_block("kalman", _riccati_block(lmi))
    lmi.add_block("x_pd", LmiBlock([cs.Nn], margin=epsilon).add(0, 0, lmi.X))
    G = weight_matrix(cs, weights)
    lmi.add_block("cov_bound", LmiBlock([cs.Nn, cs.Nn]).add(0, 0, lmi.W).constant(0, 1, G).add(1, 1, lmi.X))
    lmi.minimize_trace(lmi.W)
    return lmi


def assemble_weighted(cs: CyclicSystem, weights, epsilon: float = EPSILON) -> FilterLmi:
    return assemble_kalman_lmi(cs, epsilon=epsilon, weights=weights)


def assemble_pole_constraint(lmi: FilterLmi, pole_radius: float, margin: float = STRICT_MARGIN) -> LmiBlock:
    """``[[r^2 X, X A + Y C], [., X]] >= margin I``, appended to ``lmi``."""
    if not 0.0 < pole_radius < 1.0:
        raise ValueError("pole radius must lie in (0, 1)")
    cs = lmi.cs
    blk = LmiBlock([cs.Nn, cs.Nn], margin=margin)
    blk.add(0, 0, lmi.X, scale=pole_radius ** 2)
    blk.add(0, 1, lmi.X, right=cs.Acyc).add(0, 1, lmi.Y, right=cs.Ccyc)
    blk.add(1, 1, lmi.X)
    return lmi.add_block("pole", blk)


def cyclic_output(cs: CyclicSystem, Cz) -> np.ndarray:
    return np.kron(np.eye(cs.N), np.atleast_2d(Cz))


def assemble_l2_constraint(lmi: FilterLmi, l2_bound, Cz, alpha: float = 1.0,
                           margin: float = STRICT_MARGIN) -> LmiBlock:
    """Bounded-real-type LMI certifying an l2-induced norm below ``l2_bound``.

    ``l2_bound=None`` makes gamma^2 a decision variable ``g`` instead.
    """
    Czc = cyclic_output(lmi.cs, Cz)
    if l2_bound is None:
        g = lmi.variable("g", (1, 1))
        blk = _riccati_block(lmi, Czc=Czc, alpha=alpha, gamma_var=g, margin=margin)
    else:
        blk = _riccati_block(lmi, Czc=Czc, alpha=alpha, gamma_sq=float(l2_bound) ** 2, margin=margin)
    return lmi.add_block("l2", blk)


@dataclass
class VerificationReport:
    spectral_radius: float
    stable: bool
    pole_radius: float | None = None
    pole_ok: bool | None = None
    l2_bound: float | None = None
    l2_achieved: float | None = None
    l2_ok: bool | None = None
    lmi_min_eig: dict = field(default_factory=dict)
    recovery_residual: float = 0.0
    off_pattern_norm: float = 0.0

    @property
    def ok(self) -> bool:
        flags = [self.stable, self.pole_ok, self.l2_ok]
        return all(f for f in flags if f is not None)


@dataclass
class FilterDesign:
    gains: CyclicGain
    X: np.ndarray
    Y: np.ndarray
    W: np.ndarray | None
    objective: float
    status: Status
    spec: DesignSpec
    cs: CyclicSystem
    verification: VerificationReport
    iterations: int = 0
    seconds: float = 0.0

    @property
    def trace_W(self) -> float:
        return float(np.trace(self.W)) if self.W is not None else float("nan")

    @property
    def spectral_radius(self) -> float:
        return self.verification.spectral_radius


def recover_gain(X, Y) -> np.ndarray:
    """Cyclic gain ``L = -X^{-1} Y``."""
    return -np.linalg.solve(X, Y)


def _solve(lmi: FilterLmi, opts):
    t0 = time.perf_counter()
    sol = solve_sdp(lmi, opts)
    dt = time.perf_counter() - t0
    log.info("solve: %s obj %.8g in %d iterations (%.1f s)", sol.status.value, sol.objective, sol.iterations, dt)
    if sol.status is Status.INFEASIBLE:
        raise Infeasible("LMI constraints are infeasible")
    if not sol.acceptable:
        raise SolverFailure(
            f"solver stopped with {sol.status.value} (pres {sol.primal_residual:.1e}, "
            f"dres {sol.dual_residual:.1e}, gap {sol.gap:.1e})"
        )
    return sol, dt


def check_observable(cs: CyclicSystem):
    obs = observability_matrix(cs)
    if obs.rank < cs.Nn:
        raise Unobservable(f"cyclic pair has observability rank {obs.rank} < {cs.Nn}")
    return obs


def build_problem(cs: CyclicSystem, spec: DesignSpec) -> FilterLmi:
    lmi = assemble_kalman_lmi(cs, epsilon=spec.epsilon, weights=spec.weights)
    if spec.pole_radius is not None:
        assemble_pole_constraint(lmi, spec.pole_radius, margin=spec.margin)
    if spec.l2_bound is not None:
        assemble_l2_constraint(lmi, spec.l2_bound, spec.performance_output(cs.n), spec.alpha, margin=spec.margin)
    return lmi


def design(m: MultirateModel, spec: DesignSpec | None = None, opts: SolverOptions | None = None,
           verify_l2: bool = False) -> FilterDesign:
    """Build, solve, recover and verify one filter design.

    Raises
    ------
    Unobservable, Infeasible, SolverFailure
    """
    spec = spec or DesignSpec()
    validate_model(m)
    cs = build_cyclic(m)
    check_observable(cs)
    lmi = build_problem(cs, spec)
    sol, dt = _solve(lmi, opts)
    X, Y, W = sol.values["X"], sol.values["Y"], sol.values["W"]
    gains = CyclicGain.from_cyclic(recover_gain(X, Y), cs.N, cs.n, cs.q)
    rep = verify_design(lmi, sol.values, gains, spec)
    if verify_l2 and spec.l2_bound is not None:
        rep.l2_achieved = verify_l2_norm(m, gains, spec.performance_output(cs.n), spec.alpha,
                                         margin=spec.margin, opts=opts)
        rep.l2_ok = rep.l2_achieved <= spec.l2_bound * (1 + 1e-6)
    return FilterDesign(gains, X, Y, W, float(np.trace(W)), sol.status, spec, cs, rep, sol.iterations, dt)


def verify_design(lmi: FilterLmi, values, gains: CyclicGain, spec: DesignSpec) -> VerificationReport:
    cs = lmi.cs
    rho = spectral_radius(closed_loop(cs, gains))
    X, Y = values["X"], values["Y"]
    rep = VerificationReport(
        spectral_radius=rho,
        stable=rho < 1.0,
        lmi_min_eig={name: evaluate_block(b, values)[1] for name, b in lmi.named.items()},
        recovery_residual=float(np.linalg.norm(X @ gains.Lcyc + Y) / max(1.0, np.linalg.norm(Y))),
        off_pattern_norm=gains.off_pattern_norm(),
    )
    if spec.pole_radius is not None:
        rep.pole_radius = spec.pole_radius
        rep.pole_ok = rho <= spec.pole_radius + 1e-6
    if spec.l2_bound is not None:
        rep.l2_bound = spec.l2_bound
    return rep


def l2_analysis_problem(cs: CyclicSystem, gains: CyclicGain, Cz, alpha=1.0, margin=STRICT_MARGIN,
                        epsilon=EPSILON) -> FilterLmi:
    """Minimize gamma^2 over X for fixed gains (Y = -X L substituted)."""
    lmi = FilterLmi(cs)
    g = lmi.variable("g", (1, 1))
    blk = _riccati_block(lmi, Czc=cyclic_output(cs, Cz), alpha=alpha, gamma_var=g, margin=margin,
                         gain=gains.Lcyc)
    lmi.add_block("l2", blk)
    lmi.add_block("x_pd", LmiBlock([cs.Nn], margin=epsilon).add(0, 0, lmi.X))
    lmi.minimize_trace(g)
    return lmi


def verify_l2_norm(m: MultirateModel, gains: CyclicGain, Cz=None, alpha=1.0, margin=STRICT_MARGIN,
                   opts: SolverOptions | None = None) -> float:
    """Smallest gamma certified by the l2 LMI for the given (fixed) gains.

    Raises
    ------
    Unstable
        If the error dynamics are not Schur stable.
    """
    cs = build_cyclic(m)
    if spectral_radius(closed_loop(cs, gains)) >= 1.0:
        raise Unstable("error dynamics are not Schur stable; the l2-induced norm is unbounded")
    Cz = DesignSpec(Cz=Cz).performance_output(cs.n)
    sol, _ = _solve(l2_analysis_problem(cs, gains, Cz, alpha, margin), opts)
    return float(alpha * np.sqrt(sol.values["g"][0, 0]))


def l2_optimal(m: MultirateModel, Cz=None, alpha=1.0, margin=STRICT_MARGIN, with_kalman=False,
               opts: SolverOptions | None = None):
    """Minimum certifiable l2-induced norm over all gains.

    Returns ``(gamma_opt, gains)``.  With ``with_kalman`` the Kalman LMI and
    the covariance bound share X with the l2 LMI.
    """
    validate_model(m)
    cs = build_cyclic(m)
    Cz = DesignSpec(Cz=Cz).performance_output(cs.n)
    lmi = FilterLmi(cs)
    g = lmi.variable("g", (1, 1))
    if with_kalman:
        lmi.add_block("kalman", _riccati_block(lmi))
    lmi.add_block("x_pd", LmiBlock([cs.Nn], margin=EPSILON).add(0, 0, lmi.X))
    lmi.add_block("l2", _riccati_block(lmi, Czc=cyclic_output(cs, Cz), alpha=alpha, gamma_var=g, margin=margin))
    lmi.minimize_trace(g)
    sol, _ = _solve(lmi, opts)
    gains = CyclicGain.from_cyclic(recover_gain(sol.values["X"], sol.values["Y"]), cs.N, cs.n, cs.q)
    return float(alpha * np.sqrt(sol.values["g"][0, 0])), gains


def minimal_pole_radius(m: MultirateModel, lo: float, hi: float, resolution: float = 1e-3,
                        spec: DesignSpec | None = None, opts: SolverOptions | None = None):
    """Bisect for the smallest feasible pole radius in ``[lo, hi]``.

    ``hi`` must be feasible. Returns ``(radius, design)`` for the smallest
    feasible radius found; the true minimum lies within ``resolution`` below
    it (or equals ``lo`` if that is feasible).  Near the minimum the problem
    is badly scaled; a radius whose solve breaks down counts as not
    certified, so the returned radius always comes with a verified design.
    """
    base = spec or DesignSpec()

    def attempt(r):
        try:
            return design(m, DesignSpec(**{**base.__dict__, "pole_radius": r}), opts)
        except Infeasible:
            return None
        except SolverFailure as exc:
            log.warning("pole radius %.6g not certified: %s", r, exc)
            return None

    best = attempt(hi)
    if best is None:
        raise Infeasible(f"pole radius {hi} is already infeasible")
    d = attempt(lo)
    if d is not None:
        return lo, d
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        d = attempt(mid)
        if d is None:
            lo = mid
        else:
            hi, best = mid, d
    return hi, best
