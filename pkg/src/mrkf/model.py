"""Multirate estimation problem: plant, noise model and sensor schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidMask, NotPositiveDefinite

PD_RTOL = 1e-12


def _frozen(M) -> np.ndarray:
    M = np.array(M, dtype=float, copy=True)
    M.setflags(write=False)
    return M


def is_positive_definite(M) -> bool:
    """Minimum eigenvalue above ``1e-12 * max(1, largest eigenvalue)``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or not np.all(np.isfinite(M)):
        return False
    if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max(initial=0.0))):
        return False
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    return bool(ev[0] > PD_RTOL * max(1.0, ev[-1]))


def cholesky_factor(M) -> np.ndarray:
    """Lower-triangular L with ``L @ L.T == M``.

    Raises
    ------
    NotPositiveDefinite
        If ``M`` fails the PD threshold or a pivot is not positive.
    """
    M = np.asarray(M, dtype=float)
    if not is_positive_definite(M):
        raise NotPositiveDefinite("matrix is not symmetric positive definite")
    try:
        return np.linalg.cholesky(0.5 * (M + M.T))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


@dataclass(frozen=True)
class LtiSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = _frozen(self.A)
        B = _frozen(np.atleast_2d(self.B) if np.ndim(self.B) else self.B)
        C = _frozen(np.atleast_2d(self.C))
        if B.ndim == 1:
            B = _frozen(B.reshape(-1, 1))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class NoiseModel:
    """Process and measurement noise covariances with Cholesky factors."""

    Q: np.ndarray
    R: np.ndarray
    Qhalf: np.ndarray = field(init=False)
    Rhalf: np.ndarray = field(init=False)

    def __post_init__(self):
        Q, R = _frozen(np.atleast_2d(self.Q)), _frozen(np.atleast_2d(self.R))
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "Qhalf", _frozen(cholesky_factor(Q)) if is_positive_definite(Q) else None)
        object.__setattr__(self, "Rhalf", _frozen(cholesky_factor(R)) if is_positive_definite(R) else None)


@dataclass(frozen=True)
class SelectionSchedule:
    """Diagonals of the periodic selection matrices S_0 .. S_{N-1}."""

    masks: np.ndarray

    def __post_init__(self):
        masks = np.atleast_2d(np.array(self.masks, dtype=float))
        object.__setattr__(self, "masks", _frozen(masks))

    @property
    def N(self) -> int:
        return self.masks.shape[0]

    def mask(self, k: int) -> np.ndarray:
        return self.masks[k % self.N]

    def S(self, k: int) -> np.ndarray:
        return np.diag(self.mask(k))

    def active(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.mask(k) == 1)


def schedule_from_rates(base_period: int, sensor_divisors) -> SelectionSchedule:
    """Sensor i is active at step k iff ``k % sensor_divisors[i] == 0``.

    >>> schedule_from_rates(4, (2, 1)).masks.tolist()
    [[1.0, 1.0], [0.0, 1.0], [1.0, 1.0], [0.0, 1.0]]
    """
    div = np.asarray(sensor_divisors, dtype=int)
    k = np.arange(int(base_period))[:, None]
    return SelectionSchedule((k % div[None, :] == 0).astype(float))


@dataclass(frozen=True)
class MultirateModel:
    sys: LtiSystem
    noise: NoiseModel
    schedule: SelectionSchedule

    @property
    def n(self):
        return self.sys.n

    @property
    def q(self):
        return self.sys.q

    @property
    def p(self):
        return self.sys.p

    @property
    def N(self):
        return self.schedule.N

    @classmethod
    def from_arrays(cls, A, B, C, Q, R, masks):
        return cls(LtiSystem(A, B, C), NoiseModel(Q, R), SelectionSchedule(masks))

    def with_schedule(self, masks) -> "MultirateModel":
        return MultirateModel(self.sys, self.noise, SelectionSchedule(masks))


@dataclass
class ValidationReport:
    checks: dict[str, bool]
    messages: list[str]

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def check_model(m: MultirateModel) -> ValidationReport:
    """Evaluate every model invariant without raising."""
    A, B, C = m.sys.A, m.sys.B, m.sys.C
    Q, R, masks = m.noise.Q, m.noise.R, m.schedule.masks
    n = A.shape[0]
    checks, msgs = {}, []

    dims = (
        A.ndim == 2 and A.shape == (n, n) and B.ndim == 2 and B.shape[0] == n
        and C.ndim == 2 and C.shape[1] == n and Q.shape == (n, n)
        and R.shape == (C.shape[0], C.shape[0]) and masks.ndim == 2 and masks.shape[1] == C.shape[0]
    )
    checks["dimensions"] = bool(dims)
    if not dims:
        msgs.append(
            f"inconsistent shapes A{A.shape} B{B.shape} C{C.shape} Q{Q.shape} R{R.shape} masks{masks.shape}"
        )
    finite = all(np.all(np.isfinite(M)) for M in (A, B, C, Q, R))
    checks["finite"] = bool(finite)
    if not finite:
        msgs.append("non-finite entries in plant or noise matrices")
    checks["Q_pd"] = is_positive_definite(Q)
    checks["R_pd"] = is_positive_definite(R)
    for key, name in (("Q_pd", "Q"), ("R_pd", "R")):
        if not checks[key]:
            msgs.append(f"{name} is not symmetric positive definite")
    binary = bool(np.all((masks == 0) | (masks == 1)))
    checks["binary_masks"] = binary
    if not binary:
        msgs.append("schedule masks must contain only 0 and 1")
    checks["some_sensor"] = bool(binary and masks.size and masks.any())
    if not checks["some_sensor"]:
        msgs.append("no sensor is active at any step of the period")
    return ValidationReport(checks, msgs)


def validate_model(m: MultirateModel) -> ValidationReport:
    """Check the model and raise the first applicable error.

    Raises
    ------
    DimensionMismatch, NotPositiveDefinite, InvalidMask
    """
    rep = check_model(m)
    if not (rep.checks["dimensions"] and rep.checks["finite"]):
        raise DimensionMismatch("; ".join(rep.messages))
    if not (rep.checks["Q_pd"] and rep.checks["R_pd"]):
        raise NotPositiveDefinite("; ".join(rep.messages))
    if not (rep.checks["binary_masks"] and rep.checks["some_sensor"]):
        raise InvalidMask("; ".join(rep.messages))
    return rep


def automotive_model() -> MultirateModel:
    """GPS (1 Hz) + wheel speed (10 Hz) vehicle model, 0.1 s base step."""
    dt = 0.1
    A = np.array([[1.0, dt, 0.5 * dt ** 2], [0.0, 1.0, dt], [0.0, 0.0, 0.8]])
    B = np.array([[0.0], [0.0], [1.0]])
    C = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    Q = np.diag([0.01, 0.1, 0.5])
    R = np.diag([1.0, 0.1])
    return MultirateModel(LtiSystem(A, B, C), NoiseModel(Q, R), schedule_from_rates(10, (10, 1)))
