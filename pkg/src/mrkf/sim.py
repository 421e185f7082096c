"""Seeded Monte-Carlo simulation of the multirate plant and periodic estimator.

Plant and predictor-form estimator::

    x(k+1)  = A x + B u + Q^{1/2} w,        y(k) = S_k C x + S_k R^{1/2} v
    xh(k+1) = A xh + B u + L_k (y - S_k C xh)

Random numbers come from numpy's Philox-4x64 counter-based generator.
Standard normals are formed by the Box-Muller transform from pairs of
uniforms ``(u1, u2)`` in [0, 1): ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`` and the
matching sine. At every step the process noise (n values) is drawn before
the measurement noise (q values). Run ``r`` of a batch with master seed
``s`` uses ``SeedSequence([s, r])``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .cyclic import CyclicGain, build_cyclic, cycle_signal
from .errors import DimensionMismatch, InsufficientData
from .model import MultirateModel


@dataclass(frozen=True)
class InputSignal:
    """``kind`` is one of ``zero``, ``constant``, ``sinusoid``, ``sequence``.

    A sinusoid is ``amplitude * sin(frequency * k + phase)`` with frequency
    in radians per step. A sequence shorter than the horizon is padded
    with zeros.
    """

    kind: str = "zero"
    value: float = 0.0
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0
    sequence: tuple = ()

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "sinusoid", "sequence"):
            raise ValueError(f"unknown input kind {self.kind!r}")

    def samples(self, T: int, p: int) -> np.ndarray:
        k = np.arange(T, dtype=float)
        if self.kind == "zero":
            u = np.zeros(T)
        elif self.kind == "constant":
            u = np.full(T, float(self.value))
        elif self.kind == "sinusoid":
            u = self.amplitude * np.sin(self.frequency * k + self.phase)
        else:
            seq = np.asarray(self.sequence, dtype=float)
            seq = seq.reshape(seq.shape[0], -1) if seq.size else np.zeros((0, p))
            if seq.shape[1] != p:
                raise DimensionMismatch(f"input sequence has {seq.shape[1]} channels, plant has {p}")
            out = np.zeros((T, p))
            out[:min(T, seq.shape[0])] = seq[:T]
            return out
        return np.repeat(u[:, None], p, axis=1)


@dataclass(frozen=True)
class ScenarioConfig:
    T: int = 200
    x0: tuple | None = None
    xhat0: tuple | None = None
    input: InputSignal = field(default_factory=InputSignal)
    seed: int = 0
    process_noise: bool = True
    measurement_noise: bool = True

    def __post_init__(self):
        if int(self.T) < 1:
            raise ValueError("horizon T must be at least 1")

    @property
    def noise_free(self) -> bool:
        return not (self.process_noise or self.measurement_noise)


def automotive_scenario(seed: int = 0, T: int = 200) -> ScenarioConfig:
    """Start at 5 m/s with a matched estimate, sinusoidal input 0.5 sin(0.05 k)."""
    return ScenarioConfig(T=T, x0=(0.0, 5.0, 0.0), xhat0=(0.0, 5.0, 0.0),
                          input=InputSignal("sinusoid", amplitude=0.5, frequency=0.05), seed=seed)


@dataclass
class SimulationRun:
    """Length-T time series. ``y`` holds NaN where a sensor was absent."""

    k: np.ndarray
    x_true: np.ndarray
    y: np.ndarray
    x_hat: np.ndarray
    e: np.ndarray
    N: int
    u: np.ndarray | None = None
    # a-posteriori estimate xh(k|k) and its error, when the update gain is known
    x_filt: np.ndarray | None = None
    e_filt: np.ndarray | None = None

    @property
    def T(self) -> int:
        return self.k.size

    @property
    def phase(self) -> np.ndarray:
        return self.k % self.N

    def rmse(self, warmup: int | None = None, filtered: bool = False) -> np.ndarray:
        return rmse(self, warmup, filtered)


def box_muller(gen: np.random.Generator, size: int) -> np.ndarray:
    """``size`` standard normals from uniform pairs of ``gen``."""
    m = (size + 1) // 2
    u = gen.random((m, 2))
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    t = 2.0 * np.pi * u[:, 1]
    return np.column_stack([r * np.cos(t), r * np.sin(t)]).ravel()[:size]


def make_generator(seed: int, run: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(run)])))


def _noise(m: MultirateModel, cfg: ScenarioConfig, run: int):
    n, q, T = m.n, m.q, int(cfg.T)
    z = box_muller(make_generator(cfg.seed, run), T * (n + q)).reshape(T, n + q)
    w, v = z[:, :n], z[:, n:]
    if not cfg.process_noise:
        w = np.zeros_like(w)
    if not cfg.measurement_noise:
        v = np.zeros_like(v)
    return w @ m.noise.Qhalf.T, v @ m.noise.Rhalf.T


def _initial(m, cfg):
    x0 = np.zeros(m.n) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float).ravel()
    xh0 = x0.copy() if cfg.xhat0 is None else np.asarray(cfg.xhat0, dtype=float).ravel()
    if x0.size != m.n or xh0.size != m.n:
        raise DimensionMismatch(f"initial state must have length {m.n}")
    return x0, xh0


def _check_gains(m, gains):
    if gains.N != m.N:
        raise DimensionMismatch(f"{gains.N} gains for a period of {m.N}")
    for L in gains.periodic:
        if L.shape != (m.n, m.q):
            raise DimensionMismatch(f"gain shape {L.shape}, expected {(m.n, m.q)}")


def _plant(m, cfg, run):
    """True states, zero-filled measurements, inputs and masks."""
    A, B, C = m.sys.A, m.sys.B, m.sys.C
    T = int(cfg.T)
    x0, _ = _initial(m, cfg)
    u = cfg.input.samples(T, m.p)
    wq, vr = _noise(m, cfg, run)
    masks = np.array([m.schedule.mask(k) for k in range(T)])
    x = np.zeros((T, m.n))
    y = np.zeros((T, m.q))
    x[0] = x0
    for k in range(T):
        y[k] = masks[k] * (C @ x[k] + vr[k])
        if k + 1 < T:
            x[k + 1] = A @ x[k] + B @ u[k] + wq[k]
    return x, y, u, masks


def update_gains(m: MultirateModel, gains: CyclicGain):
    """Measurement-update gains ``K_k = A^{-1} L_k``, or None when A is singular."""
    A = m.sys.A
    if np.linalg.cond(A) > 1e12:
        return None
    return [np.linalg.solve(A, L) for L in gains.periodic]


def simulate(m: MultirateModel, gains: CyclicGain, cfg: ScenarioConfig, run: int = 0) -> SimulationRun:
    """One seeded realization with the periodic estimator.

    Besides the prediction ``xh(k) = xh(k|k-1)`` the run records the
    updated estimate ``xh(k|k) = xh(k) + K_k (y - S_k C xh(k))`` with
    ``K_k = A^{-1} L_k`` whenever A is invertible.

    Raises
    ------
    DimensionMismatch
        If the gains or the initial conditions do not fit the model.
    """
    _check_gains(m, gains)
    A, B, C = m.sys.A, m.sys.B, m.sys.C
    x, y, u, masks = _plant(m, cfg, run)
    _, xh0 = _initial(m, cfg)
    T = x.shape[0]
    K = update_gains(m, gains)
    xh = np.zeros_like(x)
    xf = np.zeros_like(x) if K is not None else None
    xh[0] = xh0
    for k in range(T):
        innov = y[k] - masks[k] * (C @ xh[k])
        if xf is not None:
            xf[k] = xh[k] + K[k % m.N] @ innov
        if k + 1 < T:
            xh[k + 1] = A @ xh[k] + B @ u[k] + gains.periodic[k % m.N] @ innov
    yrec = np.where(masks == 1, y, np.nan)
    ef = None if xf is None else x - xf
    return SimulationRun(np.arange(T), x, yrec, xh, x - xh, m.N, u, xf, ef)


def simulate_cyclic(m: MultirateModel, gains: CyclicGain, cfg: ScenarioConfig, run: int = 0) -> SimulationRun:
    """Same realization as :func:`simulate`, estimated on the cyclic system.

    Signals at step k live in block ``k mod N``; the estimate is read back
    from that block.
    """
    _check_gains(m, gains)
    cs = build_cyclic(m)
    x, y, u, masks = _plant(m, cfg, run)
    _, xh0 = _initial(m, cfg)
    T, N, n = x.shape[0], m.N, m.n
    xc = cycle_signal(xh0, 0, N)
    xh = np.zeros_like(x)
    for k in range(T):
        j = k % N
        xh[k] = xc[j * n:(j + 1) * n]
        if k + 1 < T:
            yc = cycle_signal(y[k], k, N)
            uc = cycle_signal(u[k], k, N)
            xc = cs.Acyc @ xc + cs.Bcyc @ uc + gains.Lcyc @ (yc - cs.Ccyc @ xc)
    yrec = np.where(masks == 1, y, np.nan)
    return SimulationRun(np.arange(T), x, yrec, xh, x - xh, N, u)


def default_warmup(N: int) -> int:
    return 2 * N


def rmse(run: SimulationRun, warmup: int | None = None, filtered: bool = False) -> np.ndarray:
    """Component-wise RMSE over ``k >= warmup`` (default two periods).

    ``filtered`` selects the error of the updated estimate xh(k|k).
    """
    w = default_warmup(run.N) if warmup is None else int(warmup)
    if not 0 <= w < run.T:
        raise ValueError(f"warmup must lie in [0, {run.T})")
    if filtered and run.e_filt is None:
        raise ValueError("run has no updated estimate (singular A)")
    e = (run.e_filt if filtered else run.e)[w:]
    return np.sqrt(np.mean(e * e, axis=0))


def monte_carlo(m: MultirateModel, gains: CyclicGain, cfg: ScenarioConfig, runs: int = 100) -> list[SimulationRun]:
    """``runs`` independent realizations, run r seeded by ``(cfg.seed, r)``."""
    return [simulate(m, gains, cfg, r) for r in range(int(runs))]


def empirical_covariance(runs, k_offset: int, warmup: int | None = None, filtered: bool = False) -> np.ndarray:
    """Pooled sample covariance of e(k) over steps with ``k mod N == k_offset``.

    ``filtered`` pools the error of the updated estimate xh(k|k) instead.

    Raises
    ------
    InsufficientData
        With fewer than two runs or fewer than two pooled samples.
    """
    runs = list(runs)
    if len(runs) < 2:
        raise InsufficientData("need at least two runs")
    N = runs[0].N
    w = default_warmup(N) if warmup is None else int(warmup)
    if filtered and any(r.e_filt is None for r in runs):
        raise ValueError("runs carry no updated estimate (singular A)")
    samples = [(r.e_filt if filtered else r.e)[(r.k >= w) & (r.k % N == k_offset % N)] for r in runs]
    E = np.vstack(samples)
    if E.shape[0] < 2:
        raise InsufficientData("fewer than two samples in the steady-state window")
    return np.atleast_2d(np.cov(E, rowvar=False))


def _fmt(v) -> str:
    return "" if np.isnan(v) else repr(float(v))


def write_csv(run: SimulationRun, path) -> None:
    """Columns k, phase, x_true_i, y_j (empty when absent), xhat_i, e_i.

    When the run carries the updated estimate, xfilt_i and efilt_i follow.
    """
    n, q = run.x_true.shape[1], run.y.shape[1]
    header = (["k", "phase"] + [f"x_true_{i}" for i in range(n)] + [f"y_{j}" for j in range(q)]
              + [f"xhat_{i}" for i in range(n)] + [f"e_{i}" for i in range(n)])
    parts = [run.x_true, run.y, run.x_hat, run.e]
    if run.x_filt is not None:
        header += [f"xfilt_{i}" for i in range(n)] + [f"efilt_{i}" for i in range(n)]
        parts += [run.x_filt, run.e_filt]
    body = np.hstack(parts)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for k in range(run.T):
            wr.writerow([int(run.k[k]), int(run.phase[k])] + [_fmt(v) for v in body[k]])


def read_csv(path, N: int | None = None) -> SimulationRun:
    """Inverse of :func:`write_csv`; ``N`` defaults to the largest phase + 1."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]

    def cols(prefix):
        idx = [i for i, h in enumerate(head) if h.startswith(prefix)]
        if not idx:
            return None
        return np.array([[float(r[i]) if r[i] != "" else np.nan for i in idx] for r in body])

    k = np.array([int(r[0]) for r in body])
    phase = np.array([int(r[1]) for r in body])
    if N is None:
        N = int(phase.max()) + 1 if phase.size else 1
    return SimulationRun(k, cols("x_true_"), cols("y_"), cols("xhat_"), cols("e_"), N,
                         x_filt=cols("xfilt_"), e_filt=cols("efilt_"))
