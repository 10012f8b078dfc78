"""Synthetic single-rod hydraulic cylinder testbed.

The piston follows a commanded displacement exactly (inverse simulation);
chamber pressures are solved from the force balance

    m x'' + c x' + K x + F_d(x') = p1 A1 - p2 A2 - F

so noiseless records satisfy it to rounding error. Sensor noise is added
per channel afterwards.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator, Union

import numpy as np

log = logging.getLogger(__name__)

# 50 mm bore, 28 mm rod
DEFAULT_A1 = 1.963e-3
DEFAULT_A2 = 1.374e-3
DEFAULT_P_BASE = 1e5
DEFAULT_RATE = 50.0
DEFAULT_AMPLITUDE = 0.06
DEFAULT_OMEGA = 0.05
DEFAULT_NOISE = {"x": 1e-6, "p1": 0.2, "p2": 0.2}

CHANNELS = ("t", "x", "dx", "ddx", "p1", "p2", "F")


@dataclass(frozen=True)
class StribeckParams:
    """Full exponential Stribeck model."""

    fc: float
    fm: float
    fv: float
    vs: float
    delta: float

    def __post_init__(self):
        if not (self.vs > 0 and self.delta > 0):
            raise ValueError("vs and delta must be positive")


@dataclass(frozen=True)
class LinearStribeck:
    """Linearised Stribeck model: Coulomb, viscous and cube-root terms."""

    fc: float
    fv: float
    fs: float

    def as_array(self) -> np.ndarray:
        return np.array([self.fc, self.fv, self.fs])


Friction = Union[StribeckParams, LinearStribeck]


@dataclass(frozen=True)
class CylinderParams:
    m: float
    c: float
    K: float
    friction: Friction
    A1: float = DEFAULT_A1
    A2: float = DEFAULT_A2

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError("piston mass must be positive")
        if not self.A1 > 0:
            raise ValueError("A1 must be positive")
        if not self.A1 > self.A2 > 0:
            raise ValueError("chamber areas must satisfy A1 > A2 > 0")
        if self.c < 0 or self.K < 0:
            raise ValueError("damping and stiffness must be non-negative")


def stribeck_force(p: StribeckParams, v):
    v = np.asarray(v, dtype=float)
    sg = np.sign(v)
    dip = (p.fm - p.fc) * np.exp(-(np.abs(v) / p.vs) ** p.delta)
    return p.fc * sg + p.fv * v + dip * sg


def linearized_stribeck(p: LinearStribeck, v):
    v = np.asarray(v, dtype=float)
    return p.fc * np.sign(v) + p.fv * v + p.fs * np.cbrt(v)


def friction_force(p: Friction, v):
    if isinstance(p, StribeckParams):
        return stribeck_force(p, v)
    return linearized_stribeck(p, v)


def excitation_signal(amplitude: float = DEFAULT_AMPLITUDE, omega: float = DEFAULT_OMEGA, t=0.0):
    """``(x, dx)`` of the sinusoidal displacement command ``A sin(w t)``."""
    if amplitude <= 0 or omega <= 0:
        raise ValueError("amplitude and omega must be positive")
    t = np.asarray(t, dtype=float)
    return amplitude * np.sin(omega * t), amplitude * omega * np.cos(omega * t)


@dataclass(frozen=True)
class Excitation:
    """Sum of sines ``sum_k A_k sin(w_k t)``; one term by default.

    An empty excitation holds the piston at rest.
    """

    amplitudes: tuple[float, ...] = (DEFAULT_AMPLITUDE,)
    omegas: tuple[float, ...] = (DEFAULT_OMEGA,)

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        object.__setattr__(self, "omegas", tuple(float(w) for w in self.omegas))
        if len(self.amplitudes) != len(self.omegas):
            raise ValueError("amplitudes and omegas must have equal length")
        if any(w <= 0 for w in self.omegas):
            raise ValueError("frequencies must be positive")

    @classmethod
    def none(cls) -> Excitation:
        return cls((), ())

    @property
    def period(self) -> float:
        """Period of the slowest component (inf for a resting piston)."""
        return 2 * np.pi / min(self.omegas) if self.omegas else np.inf

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        x = np.zeros_like(t)
        dx = np.zeros_like(t)
        ddx = np.zeros_like(t)
        for A, w in zip(self.amplitudes, self.omegas):
            s, c = np.sin(w * t), np.cos(w * t)
            x += A * s
            dx += A * w * c
            ddx -= A * w * w * s
        return x, dx, ddx

    def to_dict(self) -> dict:
        return {"amplitudes": list(self.amplitudes), "omegas": list(self.omegas)}


@dataclass(frozen=True)
class CylinderRecord:
    t: float
    x: float
    dx: float
    ddx: float
    p1: float
    p2: float
    F: float


@dataclass
class CylinderRun:
    """Column-wise record series; iterating yields :class:`CylinderRecord`."""

    t: np.ndarray
    x: np.ndarray
    dx: np.ndarray
    ddx: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    F: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in CHANNELS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.t)
        if any(len(getattr(self, c)) != n for c in CHANNELS):
            raise ValueError("all channels must have the same length")

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[CylinderRecord]:
        for row in zip(*(getattr(self, c) for c in CHANNELS)):
            yield CylinderRecord(*(float(v) for v in row))

    def as_array(self) -> np.ndarray:
        return np.column_stack([getattr(self, c) for c in CHANNELS])


def _load_profile(load, t):
    if callable(load):
        return np.asarray(load(t), dtype=float) * np.ones_like(t)
    return np.full_like(t, float(load))


def simulate_cylinder(params: CylinderParams, excitation: Excitation | None = None,
                      duration: float | None = None, dt: float = 1 / DEFAULT_RATE,
                      noise: dict | None = None, load: float | Callable = 0.0,
                      seed: int = 0, p_base: float = DEFAULT_P_BASE,
                      periods: float = 3.0) -> CylinderRun:
    """Generate sensor records for a cylinder tracking ``excitation``.

    ``duration`` defaults to ``periods`` periods of the excitation. ``noise``
    maps channel names to Gaussian standard deviations; ``None`` applies
    ``DEFAULT_NOISE`` and ``{}`` gives clean records.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    excitation = Excitation() if excitation is None else excitation
    if duration is None:
        if not np.isfinite(excitation.period):
            raise ValueError("duration is required for a resting excitation")
        duration = periods * excitation.period
    n = int(round(duration / dt))
    t = np.arange(n) * dt
    x, dx, ddx = excitation.evaluate(t)
    F = _load_profile(load, t)

    required = (params.m * ddx + params.c * dx + params.K * x
                + friction_force(params.friction, dx) + F)
    p2 = np.full(n, float(p_base))
    p1 = (required + p2 * params.A2) / params.A1
    neg = p1 < 0
    if np.any(neg):
        log.warning("p1 would go negative at %d samples; clamping p1 to 0 and raising p2",
                    int(neg.sum()))
        p1[neg] = 0.0
        p2[neg] = -required[neg] / params.A2

    channels = {"x": x, "dx": dx, "ddx": ddx, "p1": p1, "p2": p2, "F": F}
    noise = DEFAULT_NOISE if noise is None else noise
    unknown = set(noise) - set(channels)
    if unknown:
        raise ValueError(f"unknown noise channels: {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    for name in ("x", "dx", "ddx", "p1", "p2", "F"):
        sigma = float(noise.get(name, 0.0))
        if sigma > 0:
            channels[name] = channels[name] + rng.normal(0.0, sigma, n)
    channels["p1"] = np.maximum(channels["p1"], 0.0)
    channels["p2"] = np.maximum(channels["p2"], 0.0)

    meta = {"rate_hz": 1.0 / dt, "duration_s": duration, "seed": seed,
            "noise": dict(noise), "excitation": excitation.to_dict(),
            "A1": params.A1, "A2": params.A2, "c": params.c}
    return CylinderRun(t=t, meta=meta, **channels)


def force_balance_residual(params: CylinderParams, run: CylinderRun) -> np.ndarray:
    """Left minus right side of the force balance at every sample."""
    lhs = (params.m * run.ddx + params.c * run.dx + params.K * run.x
           + friction_force(params.friction, run.dx))
    rhs = run.p1 * params.A1 - run.p2 * params.A2 - run.F
    return lhs - rhs
