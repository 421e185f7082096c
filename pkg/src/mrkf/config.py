"""JSON run configuration and gain files.

Matrices are written as ``{"shape": [rows, cols], "data": [row-major values]}``.
Unknown keys are rejected at every level. Floats are serialized with
``repr`` precision by :mod:`json`, so write/read round trips are exact.

A configuration has the sections ``plant``, ``noise``, ``schedule`` and the
optional ``design``, ``simulation``, ``output``::

    {"plant": {"A": M, "B": M, "C": M},
     "noise": {"Q": M, "R": M},
     "schedule": {"N": 10, "divisors": [10, 1]}      # or "masks": [[1, 1], ...]
     "design": {"objective": "trace", "weights": [...], "pole_radius": 0.9,
                "l2_bound": 1.5 | "l2_ratio": 1.5, "Cz": M, "alpha": 1.0,
                "epsilon": 1e-6, "margin": 1e-6, "solver": {"tol": 1e-8, ...}},
     "simulation": {"T": 200, "x0": [...], "xhat0": [...], "seed": 0, "runs": 100,
                    "warmup": 20, "process_noise": true, "measurement_noise": true,
                    "input": {"kind": "sinusoid", "amplitude": 0.5, "frequency": 0.05}},
     "output": {"gains": "gains.json", "timeseries": "run.csv", "sweep": "sweep.csv"}}

``l2_ratio`` expresses the l2 bound as a multiple of the minimum certifiable
norm, which is computed when the configuration is used.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .cyclic import CyclicGain
from .design import DesignSpec
from .errors import ConfigParseError, DimensionMismatch, InputOutputError
from .model import MultirateModel, SelectionSchedule, schedule_from_rates, validate_model
from .sdp import SolverOptions
from .sim import InputSignal, ScenarioConfig

SECTIONS = {"plant", "noise", "schedule", "design", "simulation", "output"}
DESIGN_KEYS = {"objective", "weights", "pole_radius", "l2_bound", "l2_ratio", "Cz", "alpha", "epsilon",
               "margin", "solver"}
SOLVER_KEYS = {"tol", "max_iters", "accept_tol", "step_fraction"}
SIM_KEYS = {"T", "x0", "xhat0", "input", "seed", "runs", "warmup", "process_noise", "measurement_noise"}
INPUT_KEYS = {"kind", "value", "amplitude", "frequency", "phase", "sequence"}
OUTPUT_KEYS = {"gains", "timeseries", "sweep"}
GAIN_FORMAT = "mrkf-gains"


def _keys(d, allowed, where, required=()):
    if not isinstance(d, dict):
        raise ConfigParseError(f"{where} must be an object")
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigParseError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")
    missing = [k for k in required if k not in d]
    if missing:
        raise ConfigParseError(f"missing key(s) in {where}: {', '.join(missing)}")


def _number(v, where) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigParseError(f"{where} must be a number")
    if not math.isfinite(v):
        raise ConfigParseError(f"{where} must be finite")
    return float(v)


def _integer(v, where) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigParseError(f"{where} must be an integer")
    return int(v)


def _flag(v, where) -> bool:
    if not isinstance(v, bool):
        raise ConfigParseError(f"{where} must be true or false")
    return v


def _vector(v, where) -> np.ndarray:
    if not isinstance(v, list):
        raise ConfigParseError(f"{where} must be a list of numbers")
    return np.array([_number(x, f"{where}[{i}]") for i, x in enumerate(v)])


def matrix_from_json(d, where="matrix") -> np.ndarray:
    _keys(d, {"shape", "data"}, where, required=("shape", "data"))
    shape = d["shape"]
    if not (isinstance(shape, list) and len(shape) == 2):
        raise ConfigParseError(f"{where}.shape must be [rows, cols]")
    r, c = (_integer(s, f"{where}.shape") for s in shape)
    if r < 0 or c < 0:
        raise ConfigParseError(f"{where}.shape must be non-negative")
    data = _vector(d["data"], f"{where}.data")
    if data.size != r * c:
        raise ConfigParseError(f"{where} declares shape {r}x{c} but has {data.size} entries")
    return data.reshape(r, c)


def matrix_to_json(M) -> dict:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return {"shape": [int(M.shape[0]), int(M.shape[1])], "data": [float(v) for v in M.ravel()]}


@dataclass
class RunConfig:
    """Parsed configuration. ``source`` keeps the schedule shorthand if one was used."""

    model: MultirateModel
    spec: DesignSpec
    scenario: ScenarioConfig
    solver: SolverOptions
    l2_ratio: float | None = None
    runs: int = 1
    warmup: int | None = None
    output: dict = field(default_factory=dict)
    divisors: tuple | None = None
    objective: str = "trace"
    sections: frozenset = frozenset()
    base_dir: Path | None = None

    def output_path(self, key, override=None):
        p = override or self.output.get(key)
        if p is None:
            return None
        p = Path(p)
        if not p.is_absolute() and self.base_dir is not None and override is None:
            p = self.base_dir / p
        return p


def _parse_schedule(d, q):
    _keys(d, {"N", "masks", "divisors"}, "schedule", required=("N",))
    N = _integer(d["N"], "schedule.N")
    if N < 1:
        raise ConfigParseError("schedule.N must be at least 1")
    if ("masks" in d) == ("divisors" in d):
        raise ConfigParseError("schedule needs exactly one of 'masks' or 'divisors'")
    if "divisors" in d:
        div = [_integer(v, "schedule.divisors") for v in d["divisors"]] if isinstance(d["divisors"], list) else None
        if div is None or any(v < 1 for v in div):
            raise ConfigParseError("schedule.divisors must be a list of positive integers")
        return schedule_from_rates(N, div), tuple(div)
    masks = d["masks"]
    if not isinstance(masks, list) or len(masks) != N:
        raise ConfigParseError(f"schedule.masks must list {N} mask vectors")
    rows = [_vector(mk, f"schedule.masks[{k}]") for k, mk in enumerate(masks)]
    return SelectionSchedule(np.array(rows) if rows else np.zeros((0, q))), None


def _parse_solver(d) -> SolverOptions:
    _keys(d, SOLVER_KEYS, "design.solver")
    kw = {}
    for k, v in d.items():
        kw[k] = _integer(v, f"design.solver.{k}") if k == "max_iters" else _number(v, f"design.solver.{k}")
    return SolverOptions(**kw)


def _parse_design(d, n):
    _keys(d, DESIGN_KEYS, "design")
    obj = d.get("objective", "trace")
    if obj != "trace":
        raise ConfigParseError("design.objective must be 'trace'")
    if "l2_bound" in d and "l2_ratio" in d:
        raise ConfigParseError("give at most one of design.l2_bound and design.l2_ratio")
    weights = d.get("weights")
    if weights is not None:
        weights = matrix_from_json(weights, "design.weights") if isinstance(weights, dict) else _vector(
            weights, "design.weights")
    opt = lambda k: None if d.get(k) is None else _number(d[k], f"design.{k}")  # noqa: E731
    Cz = matrix_from_json(d["Cz"], "design.Cz") if d.get("Cz") is not None else None
    kw = {"weights": weights, "pole_radius": opt("pole_radius"), "l2_bound": opt("l2_bound"), "Cz": Cz}
    for k in ("alpha", "epsilon", "margin"):
        if k in d:
            kw[k] = _number(d[k], f"design.{k}")
    try:
        spec = DesignSpec(**kw)
        spec.performance_output(n)
    except ValueError as exc:
        raise ConfigParseError(f"design: {exc}") from exc
    ratio = opt("l2_ratio")
    if ratio is not None and ratio <= 0:
        raise ConfigParseError("design.l2_ratio must be positive")
    solver = _parse_solver(d.get("solver", {}))
    return spec, ratio, solver


def _parse_input(d) -> InputSignal:
    _keys(d, INPUT_KEYS, "simulation.input", required=("kind",))
    kw = {"kind": d["kind"]}
    for k in ("value", "amplitude", "frequency", "phase"):
        if k in d:
            kw[k] = _number(d[k], f"simulation.input.{k}")
    if "sequence" in d:
        kw["sequence"] = tuple(map(tuple, matrix_from_json(d["sequence"], "simulation.input.sequence")))
    try:
        return InputSignal(**kw)
    except ValueError as exc:
        raise ConfigParseError(str(exc)) from exc


def _parse_simulation(d):
    _keys(d, SIM_KEYS, "simulation")
    kw = {}
    if "T" in d:
        kw["T"] = _integer(d["T"], "simulation.T")
        if kw["T"] < 1:
            raise ConfigParseError("simulation.T must be at least 1")
    for k in ("x0", "xhat0"):
        if d.get(k) is not None:
            kw[k] = tuple(_vector(d[k], f"simulation.{k}"))
    if "seed" in d:
        kw["seed"] = _integer(d["seed"], "simulation.seed")
    for k in ("process_noise", "measurement_noise"):
        if k in d:
            kw[k] = _flag(d[k], f"simulation.{k}")
    if "input" in d:
        kw["input"] = _parse_input(d["input"])
    runs = _integer(d.get("runs", 1), "simulation.runs")
    if runs < 1:
        raise ConfigParseError("simulation.runs must be at least 1")
    warmup = None if d.get("warmup") is None else _integer(d["warmup"], "simulation.warmup")
    return ScenarioConfig(**kw), runs, warmup


def config_from_dict(d: dict, base_dir=None) -> RunConfig:
    """Parse and validate a configuration dictionary.

    Raises
    ------
    ConfigParseError
        On malformed or unknown content.
    DimensionMismatch, NotPositiveDefinite, InvalidMask
        If the parsed model is inconsistent.
    """
    _keys(d, SECTIONS, "configuration", required=("plant", "noise", "schedule"))
    _keys(d["plant"], {"A", "B", "C"}, "plant", required=("A", "B", "C"))
    _keys(d["noise"], {"Q", "R"}, "noise", required=("Q", "R"))
    A, B, C = (matrix_from_json(d["plant"][k], f"plant.{k}") for k in ("A", "B", "C"))
    Q, R = (matrix_from_json(d["noise"][k], f"noise.{k}") for k in ("Q", "R"))
    sched, divisors = _parse_schedule(d["schedule"], C.shape[0])
    if sched.masks.shape[1] != C.shape[0]:
        raise DimensionMismatch(f"masks have {sched.masks.shape[1]} entries but C has {C.shape[0]} rows")
    model = MultirateModel.from_arrays(A, B, C, Q, R, sched.masks)
    validate_model(model)
    spec, ratio, solver = _parse_design(d.get("design", {}), model.n)
    scenario, runs, warmup = _parse_simulation(d.get("simulation", {}))
    out = d.get("output", {})
    _keys(out, OUTPUT_KEYS, "output")
    for k, v in out.items():
        if not isinstance(v, str):
            raise ConfigParseError(f"output.{k} must be a path string")
    return RunConfig(model, spec, scenario, solver, ratio, runs, warmup, dict(out), divisors,
                     sections=frozenset(d), base_dir=None if base_dir is None else Path(base_dir))


def config_to_dict(cfg: RunConfig) -> dict:
    """Canonical dictionary for ``cfg``; parsing it back gives the same numbers."""
    m, spec, sc = cfg.model, cfg.spec, cfg.scenario
    d = {
        "plant": {k: matrix_to_json(getattr(m.sys, k)) for k in ("A", "B", "C")},
        "noise": {"Q": matrix_to_json(m.noise.Q), "R": matrix_to_json(m.noise.R)},
    }
    if cfg.divisors is not None:
        d["schedule"] = {"N": m.N, "divisors": list(cfg.divisors)}
    else:
        d["schedule"] = {"N": m.N, "masks": [[float(v) for v in row] for row in m.schedule.masks]}
    des = {"objective": cfg.objective}
    if spec.weights is not None:
        w = np.asarray(spec.weights, dtype=float)
        des["weights"] = matrix_to_json(w) if w.ndim == 2 else [float(v) for v in w]
    for k in ("pole_radius", "l2_bound"):
        if getattr(spec, k) is not None:
            des[k] = float(getattr(spec, k))
    if cfg.l2_ratio is not None:
        des["l2_ratio"] = float(cfg.l2_ratio)
    if spec.Cz is not None:
        des["Cz"] = matrix_to_json(spec.Cz)
    des.update(alpha=float(spec.alpha), epsilon=float(spec.epsilon), margin=float(spec.margin))
    so = cfg.solver
    des["solver"] = {"tol": float(so.tol), "max_iters": int(so.max_iters), "accept_tol": float(so.accept_tol),
                     "step_fraction": float(so.step_fraction)}
    d["design"] = des
    inp = {"kind": sc.input.kind}
    if sc.input.kind == "constant":
        inp["value"] = float(sc.input.value)
    elif sc.input.kind == "sinusoid":
        inp.update(amplitude=float(sc.input.amplitude), frequency=float(sc.input.frequency),
                   phase=float(sc.input.phase))
    elif sc.input.kind == "sequence":
        inp["sequence"] = matrix_to_json(np.array(sc.input.sequence, dtype=float).reshape(len(sc.input.sequence), -1))
    simd = {"T": int(sc.T), "seed": int(sc.seed), "runs": int(cfg.runs), "process_noise": bool(sc.process_noise),
            "measurement_noise": bool(sc.measurement_noise), "input": inp}
    for k in ("x0", "xhat0"):
        if getattr(sc, k) is not None:
            simd[k] = [float(v) for v in getattr(sc, k)]
    if cfg.warmup is not None:
        simd["warmup"] = int(cfg.warmup)
    d["simulation"] = simd
    if cfg.output:
        d["output"] = dict(cfg.output)
    return d


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise InputOutputError(f"cannot read {path}: {exc.strerror}") from exc
    except OSError as exc:
        raise InputOutputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}: invalid JSON ({exc})") from exc


def load_config(path) -> RunConfig:
    """Read a JSON file; a bare name such as ``automotive`` selects a bundled config."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and p.name in bundled_configs():
        p = bundled_config_path(p.name)
    return config_from_dict(_read_json(p), base_dir=Path.cwd())


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")


def bundled_configs() -> list[str]:
    root = resources.files("mrkf") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_config_path(name: str) -> Path:
    return Path(str(resources.files("mrkf") / "configs" / f"{name}.json"))


@dataclass
class GainFile:
    """Periodic gains with a descriptive header."""

    gains: CyclicGain
    n: int
    q: int
    N: int
    objective: float | None = None
    spectral_radius: float | None = None
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_gains(cls, gains: CyclicGain, objective=None, spectral_radius=None, metadata=None):
        n, q = gains.periodic[0].shape
        return cls(gains, n, q, gains.N, objective, spectral_radius, dict(metadata or {}))

    def to_dict(self) -> dict:
        return {
            "format": GAIN_FORMAT,
            "n": self.n, "q": self.q, "N": self.N,
            "objective": self.objective,
            "spectral_radius": self.spectral_radius,
            "metadata": self.metadata,
            "gains": [matrix_to_json(L) for L in self.gains.periodic],
        }

    @classmethod
    def from_dict(cls, d) -> "GainFile":
        _keys(d, {"format", "n", "q", "N", "objective", "spectral_radius", "metadata", "gains"}, "gain file",
              required=("format", "n", "q", "N", "gains"))
        if d["format"] != GAIN_FORMAT:
            raise ConfigParseError(f"not a gain file (format {d['format']!r})")
        n, q, N = (_integer(d[k], f"gain file {k}") for k in ("n", "q", "N"))
        if not isinstance(d["gains"], list) or len(d["gains"]) != N:
            raise ConfigParseError(f"gain file must hold {N} gains")
        gains = [matrix_from_json(g, f"gains[{k}]") for k, g in enumerate(d["gains"])]
        for L in gains:
            if L.shape != (n, q):
                raise DimensionMismatch(f"gain of shape {L.shape} in a file declaring {n} x {q}")
        opt = lambda k: None if d.get(k) is None else _number(d[k], k)  # noqa: E731
        meta = d.get("metadata") or {}
        if not isinstance(meta, dict):
            raise ConfigParseError("gain file metadata must be an object")
        return cls(CyclicGain.from_periodic(gains), n, q, N, opt("objective"), opt("spectral_radius"), meta)

    def write(self, path) -> None:
        try:
            with open(path, "w") as fh:
                json.dump(self.to_dict(), fh, indent=2)
                fh.write("\n")
        except OSError as exc:
            raise InputOutputError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def read(cls, path) -> "GainFile":
        return cls.from_dict(_read_json(path))
