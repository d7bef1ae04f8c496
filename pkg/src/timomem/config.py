"""Run configuration: a single TOML file, parsed strictly.

Example::

    [beam]
    rho1 = 1.0
    rho2 = 4.0
    b = 4.0
    kappa = 1.0
    L = 1.0

    [kernel]
    type = "power_law"
    a = 1.94
    nu = 3.0

    [history]
    kind = "power_growth"
    r = 0.0

    [space]
    N = 32

    [time]
    dt = 0.05
    T = 2000.0

    [memory]
    mode = "prony"

    [envelope]
    c1 = 0.1

    [output]
    every = 20
    path = "nu3.csv"

Unknown blocks or keys raise :class:`ConfigError` before anything runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import tomli

from .errors import ConfigError, InadmissibleKernelError
from .kernel import BeamParams, Kernel, load_table, make_kernel, PowerLawKernel
from .simulate import HistoryProfile, InitialData, SimConfig


@dataclass(frozen=True)
class MemoryBlock:
    mode: str = "direct"
    Th: Optional[float] = None
    eps: float = 1e-8
    prony_horizon: Optional[float] = None
    prony_per_decade: int = 6
    prony_tol: float = 1e-6


@dataclass(frozen=True)
class EnvelopeBlock:
    nu: Optional[float] = None
    r: Optional[float] = None
    c1: float = 1.0
    c2: float = 1.0
    c_over_d: float = 1.0
    q0: Optional[float] = None
    chi_lambda: Optional[float] = None
    horizon: Optional[float] = None


@dataclass(frozen=True)
class OutputBlock:
    every: int = 1
    path: str = "run.csv"
    report: Optional[str] = None
    plot_recipe: bool = False


@dataclass(frozen=True)
class FitBlock:
    window_fraction: float = 0.5
    log_corrected: Optional[bool] = None
    tolerance: float = 0.25


@dataclass(frozen=True)
class ConvergenceBlock:
    levels: int = 3
    min_order: float = 1.9


@dataclass(frozen=True)
class RunConfig:
    beam: BeamParams
    kernel: Kernel
    history: HistoryProfile
    initial: InitialData
    N: int
    dt: float
    T: float
    memory: MemoryBlock = field(default_factory=MemoryBlock)
    envelope: EnvelopeBlock = field(default_factory=EnvelopeBlock)
    output: OutputBlock = field(default_factory=OutputBlock)
    fit: FitBlock = field(default_factory=FitBlock)
    convergence: ConvergenceBlock = field(default_factory=ConvergenceBlock)
    allow_inadmissible: bool = False
    source: Optional[Path] = None

    def sim_config(self, **changes) -> SimConfig:
        base = dict(
            beam=self.beam, kernel=self.kernel, history=self.history, initial=self.initial,
            N=self.N, dt=self.dt, T=self.T, memory_mode=self.memory.mode, Th=self.memory.Th,
            eps=self.memory.eps, prony_horizon=self.memory.prony_horizon,
            prony_per_decade=self.memory.prony_per_decade, prony_tol=self.memory.prony_tol,
            every=self.output.every, allow_inadmissible=self.allow_inadmissible,
        )
        base.update(changes)
        return SimConfig(**base)

    @property
    def nu(self) -> Optional[float]:
        if self.envelope.nu is not None:
            return self.envelope.nu
        return self.kernel.nu if isinstance(self.kernel, PowerLawKernel) else None

    @property
    def r(self) -> float:
        if self.envelope.r is not None:
            return self.envelope.r
        return self.history.r

    def resolve(self, path) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.source is not None:
            p = self.source.parent / p
        return p


_KERNEL_KEYS = {
    "power_law": {"a", "nu"},
    "exponential": {"a", "lam"},
    "prony": {"terms"},
    "table": {"path"},
}


def _block(data: dict, name: str, allowed: set, required: bool = False) -> dict:
    if name not in data:
        if required:
            raise ConfigError(f"missing [{name}] block")
        return {}
    blk = data[name]
    if not isinstance(blk, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = set(blk) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    return blk


def _names(cls) -> set:
    return {f.name for f in fields(cls)}


def _build(cls, name, kw):
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def _number(blk, key, name, default=None, required=False):
    if key not in blk:
        if required:
            raise ConfigError(f"[{name}] needs {key}")
        return default
    v = blk[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"[{name}] {key} must be a number, got {v!r}")
    return float(v)


def parse_config(data: dict, source: Optional[Path] = None) -> RunConfig:
    top = {"beam", "kernel", "history", "initial", "space", "time", "memory", "envelope",
           "output", "overrides", "fit", "convergence"}
    unknown = set(data) - top
    if unknown:
        raise ConfigError(f"unknown block(s): {', '.join(sorted(unknown))}")

    b = _block(data, "beam", {"rho1", "rho2", "b", "kappa", "L"}, required=True)
    beam = _build(BeamParams, "beam", {k: _number(b, k, "beam", required=True)
                                       for k in ("rho1", "rho2", "b", "kappa")}
                  | {"L": _number(b, "L", "beam", 1.0)})

    kb = data.get("kernel")
    if not isinstance(kb, dict) or "type" not in kb:
        raise ConfigError("missing [kernel] block or kernel.type")
    ktype = kb["type"]
    if ktype not in _KERNEL_KEYS:
        raise ConfigError(f"unknown kernel.type {ktype!r}")
    kb = _block(data, "kernel", _KERNEL_KEYS[ktype] | {"type"})
    missing = _KERNEL_KEYS[ktype] - set(kb)
    if missing:
        raise ConfigError(f"[kernel] type {ktype} needs {', '.join(sorted(missing))}")
    try:
        if ktype == "table":
            p = Path(kb["path"])
            if not p.is_absolute() and source is not None:
                p = source.parent / p
            kern = load_table(p)
        elif ktype == "prony":
            kern = make_kernel("prony", terms=[tuple(t) for t in kb["terms"]])
        else:
            kern = make_kernel(ktype, **{k: _number(kb, k, "kernel") for k in _KERNEL_KEYS[ktype]})
    except OSError:
        raise
    except (InadmissibleKernelError, ValueError, TypeError) as exc:
        raise ConfigError(f"[kernel]: {exc}") from exc

    h = _block(data, "history", {"kind", "r", "amplitude"})
    kind = h.get("kind", "power_growth")
    if kind not in ("zero", "power_growth"):
        raise ConfigError(f"history.kind must be zero or power_growth in a config file, got {kind!r}")
    history = _build(HistoryProfile, "history",
                     dict(kind=kind, r=_number(h, "r", "history", 0.0),
                          amplitude=_number(h, "amplitude", "history", 1.0)))

    ib = _block(data, "initial", _names(InitialData))
    initial = _build(InitialData, "initial", ib)

    sp = _block(data, "space", {"N"}, required=True)
    if not isinstance(sp.get("N"), int) or isinstance(sp.get("N"), bool):
        raise ConfigError("space.N must be an integer")
    tb = _block(data, "time", {"dt", "T"}, required=True)
    dt, T = _number(tb, "dt", "time", required=True), _number(tb, "T", "time", required=True)
    if not (dt > 0 and T > 0 and math.isfinite(T)):
        raise ConfigError("time.dt and time.T must be positive")

    memory = _build(MemoryBlock, "memory", _block(data, "memory", _names(MemoryBlock)))
    if memory.mode not in ("direct", "prony"):
        raise ConfigError(f"memory.mode must be direct or prony, got {memory.mode!r}")
    eb = _block(data, "envelope", _names(EnvelopeBlock) - {"chi_lambda"} | {"lambda"})
    eb = {("chi_lambda" if k == "lambda" else k): v for k, v in eb.items()}
    envelope = _build(EnvelopeBlock, "envelope", eb)
    output = _build(OutputBlock, "output", _block(data, "output", _names(OutputBlock)))
    if output.every < 1:
        raise ConfigError("output.every must be >= 1")
    fit = _build(FitBlock, "fit", _block(data, "fit", _names(FitBlock)))
    conv = _build(ConvergenceBlock, "convergence", _block(data, "convergence", _names(ConvergenceBlock)))
    ov = _block(data, "overrides", {"allow_inadmissible"})

    try:
        return RunConfig(beam=beam, kernel=kern, history=history, initial=initial, N=sp["N"],
                         dt=dt, T=T, memory=memory, envelope=envelope, output=output, fit=fit,
                         convergence=conv, allow_inadmissible=bool(ov.get("allow_inadmissible", False)),
                         source=source)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    """Read and validate a TOML run config; OSError propagates for missing files."""
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            data = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, source=path)
