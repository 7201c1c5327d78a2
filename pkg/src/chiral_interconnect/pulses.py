"""Photon wavepackets, coupling envelopes and the segmented pulse family."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.signal import lfilter

__all__ = [
    "COUPLERS",
    "N_SEGMENTS",
    "PulseSet",
    "DistortionModel",
    "IdealPulses",
    "sech_photon",
    "ideal_coupling",
    "segmented_envelope",
    "distort",
    "emitter_couplers",
]

COUPLERS = ("C13", "C24", "C57", "C68")
N_SEGMENTS = 8

Envelope = Callable[[np.ndarray], np.ndarray]


def emitter_couplers(direction: str) -> tuple[tuple[str, str], tuple[str, str]]:
    """(emitting couplers, absorbing couplers) for a transfer direction."""
    if direction == "right":
        return ("C13", "C24"), ("C57", "C68")
    if direction == "left":
        return ("C57", "C68"), ("C13", "C24")
    raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")


def sech_photon(t, gamma_ph: float):
    """Unit-norm hyperbolic-secant photon amplitude ``(sqrt(g)/2) sech(g t/2)``."""
    if not gamma_ph > 0:
        raise ValueError("gamma_ph must be positive")
    x = 0.5 * gamma_ph * np.abs(np.asarray(t, dtype=float))
    # sech(x) = 2 e^{-x} / (1 + e^{-2x}), overflow-free
    e = np.exp(-x)
    return math.sqrt(gamma_ph) / 2 * (2 * e / (1 + e * e))


def ideal_coupling(t, gamma: float, gamma_ph: float):
    """Coupling envelope that releases a stored excitation as a sech photon.

    The closed form is rewritten in terms of ``s = exp(-|gamma_ph t|)`` so it
    never forms ``exp(+gamma_ph t)``.  The envelope rises from zero at early
    times to the plateau ``(gamma_ph/2) sqrt(gamma/gamma_ph - 1)`` at late
    times.
    """
    if not gamma_ph > 0 or not gamma > 0:
        raise ValueError("rates must be positive")
    if gamma_ph > gamma * (1 + 1e-12):
        raise ValueError(f"gamma_ph = {gamma_ph} exceeds gamma = {gamma}")
    t = np.asarray(t, dtype=float)
    r = min(gamma_ph / gamma, 1.0)
    s = np.exp(-gamma_ph * np.abs(t))
    if r == 1.0:
        return gamma * np.sqrt(s) / (1 + s)
    pos = np.sqrt(r) * (gamma * (1 - r) + 2 * gamma_ph * s / (1 + s)) / (2 * np.sqrt(1 - r + s))
    tanh_x = np.tanh(0.5 * gamma_ph * t)
    neg = np.sqrt(r * s) * (gamma - gamma_ph * tanh_x) / (2 * np.sqrt(1 + s * (1 - r)))
    return np.where(t >= 0, pos, neg)


@dataclass(frozen=True)
class IdealPulses:
    """Closed-form emission/absorption envelopes centred at ``center``.

    Emitters follow ``g(t - center)``, absorbers ``g(center - t)`` delayed by
    ``absorber_delay``.  ``phases`` holds one modulation phase per coupler in
    :data:`COUPLERS` order.
    """

    gamma_ph: float
    center: float = 100.0
    absorber_delay: float = 0.0
    phases: tuple = (0.0, 0.0, 0.0, 0.0)
    gamma: float | None = None

    def envelopes(self, direction: str, gamma: float) -> dict[str, Envelope]:
        g_ref = self.gamma if self.gamma is not None else gamma
        emit, absorb = emitter_couplers(direction)
        out = {}
        for k, name in enumerate(COUPLERS):
            ph = np.exp(1j * self.phases[k])
            if name in emit:
                out[name] = (lambda t, ph=ph: ph * ideal_coupling(np.asarray(t) - self.center, g_ref, self.gamma_ph))
            else:
                c = self.center + self.absorber_delay
                out[name] = (lambda t, ph=ph, c=c: ph * ideal_coupling(c - np.asarray(t), g_ref, self.gamma_ph))
        return out


@dataclass(frozen=True, eq=False)
class PulseSet:
    """Four segmented I/Q envelopes plus detunings, phases and a delay.

    ``segments`` has shape ``(4, 8, 2)`` (coupler, time segment, I/Q) in
    rad/ns, couplers ordered as :data:`COUPLERS`.  ``absorber_delay`` shifts
    the envelopes of whichever module absorbs; the whole set is therefore
    ``4*8*2 + 4 + 4 + 1 = 73`` real parameters.
    """

    segments: np.ndarray
    detunings: np.ndarray = field(default_factory=lambda: np.zeros(4))
    phases: np.ndarray = field(default_factory=lambda: np.zeros(4))
    absorber_delay: float = 0.0
    total_duration: float = 200.0
    g_max: float = 0.1

    def __post_init__(self):
        seg = np.array(self.segments, dtype=float)
        if seg.shape != (len(COUPLERS), N_SEGMENTS, 2):
            raise ValueError(f"segments must have shape (4, 8, 2), got {seg.shape}")
        det = np.array(self.detunings, dtype=float).reshape(4)
        ph = np.array(self.phases, dtype=float).reshape(4)
        if not self.total_duration > 0:
            raise ValueError("total_duration must be positive")
        if np.max(np.hypot(seg[..., 0], seg[..., 1])) > self.g_max * (1 + 1e-12):
            raise ValueError(f"segment amplitude exceeds g_max = {self.g_max}")
        for a in (seg, det, ph):
            a.setflags(write=False)
        object.__setattr__(self, "segments", seg)
        object.__setattr__(self, "detunings", det)
        object.__setattr__(self, "phases", ph)
        object.__setattr__(self, "absorber_delay", float(self.absorber_delay))

    n_params = len(COUPLERS) * N_SEGMENTS * 2 + 4 + 4 + 1

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.segments.reshape(-1), self.detunings, self.phases, [self.absorber_delay]])

    @classmethod
    def from_vector(cls, v, total_duration: float = 200.0, g_max: float = 0.1, clip: bool = False) -> "PulseSet":
        v = np.asarray(v, dtype=float)
        if v.shape != (cls.n_params,):
            raise ValueError(f"expected {cls.n_params} parameters, got {v.shape}")
        seg = v[:64].reshape(4, N_SEGMENTS, 2)
        if clip:
            a = np.hypot(seg[..., 0], seg[..., 1])
            scale = np.minimum(1.0, g_max / np.maximum(a, 1e-300))
            seg = seg * scale[..., None]
        return cls(seg, v[64:68], v[68:72], float(v[72]), total_duration, g_max)

    @staticmethod
    def parameter_names() -> list[str]:
        names = [f"{c}_s{k}_{iq}" for c in COUPLERS for k in range(N_SEGMENTS) for iq in "IQ"]
        names += [f"{c}_detuning" for c in COUPLERS]
        names += [f"{c}_phase" for c in COUPLERS]
        names.append("absorber_delay")
        return names

    def to_dict(self) -> dict[str, float]:
        return dict(zip(self.parameter_names(), map(float, self.to_vector())))

    @classmethod
    def from_dict(cls, d: dict, total_duration: float = 200.0, g_max: float = 0.1) -> "PulseSet":
        names = cls.parameter_names()
        missing = [k for k in names if k not in d]
        extra = [k for k in d if k not in names]
        if missing or extra:
            raise ValueError(f"pulse parameters: missing {missing[:3]}, unknown {extra[:3]}")
        return cls.from_vector([d[k] for k in names], total_duration, g_max)

    def with_(self, **kw) -> "PulseSet":
        return replace(self, **kw)

    @classmethod
    def from_ideal(
        cls,
        gamma: float,
        gamma_ph: float,
        direction: str = "right",
        total_duration: float = 200.0,
        phases=(0.0, 0.0, 0.0, 0.0),
        g_max: float = 0.1,
    ) -> "PulseSet":
        """Seed pulses: ideal envelopes sampled at the segment midpoints."""
        emit, _ = emitter_couplers(direction)
        mids = segment_midpoints(total_duration)
        c = total_duration / 2
        seg = np.zeros((4, N_SEGMENTS, 2))
        for k, name in enumerate(COUPLERS):
            g = ideal_coupling(mids - c if name in emit else c - mids, gamma, gamma_ph)
            seg[k, :, 0] = g
        return cls(seg, np.zeros(4), np.asarray(phases, float), 0.0, total_duration, g_max)

    def envelopes(self, direction: str, gamma: float | None = None) -> dict[str, Envelope]:
        return {name: self.envelope(name, direction) for name in COUPLERS}

    def envelope(self, which: str, direction: str = "right") -> Envelope:
        _, absorb = emitter_couplers(direction)
        shift = self.absorber_delay if which in absorb else 0.0
        return _SegmentEnvelope(self, COUPLERS.index(which), shift)


def segment_midpoints(total_duration: float) -> np.ndarray:
    w = total_duration / N_SEGMENTS
    return w * (np.arange(N_SEGMENTS) + 0.5)


class _SegmentEnvelope:
    """Monotone cubic through segment midpoints, flat at both window edges."""

    def __init__(self, ps: PulseSet, k: int, shift: float):
        T = ps.total_duration
        knots = np.concatenate([[0.0], segment_midpoints(T), [T]])
        vals = ps.segments[k, :, 0] + 1j * ps.segments[k, :, 1]
        vals = np.concatenate([[vals[0]], vals, [vals[-1]]])
        self._re = PchipInterpolator(knots, vals.real, extrapolate=False)
        self._im = PchipInterpolator(knots, vals.imag, extrapolate=False)
        self.T = T
        self.detuning = float(ps.detunings[k])
        self.phase = float(ps.phases[k])
        self.shift = shift

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        u = t - self.shift
        inside = (u >= 0) & (u <= self.T)
        uc = np.clip(u, 0.0, self.T)
        v = self._re(uc) + 1j * self._im(uc)
        v = v * np.exp(1j * (self.detuning * t + self.phase))
        return np.where(inside, v, 0.0)


def segmented_envelope(ps: PulseSet, which: str, t, direction: str = "right"):
    """Value of one segmented envelope; ``t`` must lie in ``[0, total_duration]``."""
    if which not in COUPLERS:
        raise ValueError(f"unknown envelope {which!r}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > ps.total_duration):
        raise ValueError("time outside [0, total_duration]")
    return ps.envelope(which, direction)(t)


@dataclass(frozen=True)
class DistortionModel:
    """Synthetic control-line distortion.

    ``time_constant`` (ns) is a single-pole low-pass; ``cubic`` compresses the
    amplitude as ``y (1 - cubic |y/amplitude_scale|^2)``; ``phase_offset``
    (rad) is a static rotation.
    """

    time_constant: float = 0.0
    cubic: float = 0.0
    phase_offset: float = 0.0
    amplitude_scale: float = 0.1

    def __post_init__(self):
        if self.time_constant < 0:
            raise ValueError("time_constant must be non-negative")
        if not self.amplitude_scale > 0:
            raise ValueError("amplitude_scale must be positive")

    @property
    def is_identity(self) -> bool:
        return self.time_constant == 0 and self.cubic == 0 and self.phase_offset == 0


def distort(envelope: Envelope, model: DistortionModel, t_range=(0.0, 200.0), dt: float = 0.05) -> Envelope:
    """Apply low-pass filtering, cubic compression and a phase offset.

    The input is sampled on ``[t_range[0], t_range[1]]`` with step ``dt``;
    the output is linearly interpolated and zero outside that interval.
    """
    if model.is_identity:
        return envelope
    t0, t1 = t_range
    n = int(round((t1 - t0) / dt))
    grid = t0 + dt * np.arange(n + 1)
    y = np.asarray(envelope(grid), dtype=complex)
    if model.time_constant > 0:
        a = math.exp(-dt / model.time_constant)
        y = lfilter([1 - a], [1, -a], y)
    if model.cubic:
        y = y * (1 - model.cubic * np.abs(y / model.amplitude_scale) ** 2)
    if model.phase_offset:
        y = y * np.exp(1j * model.phase_offset)

    def out(t):
        t = np.asarray(t, dtype=float)
        v = np.interp(t, grid, y.real) + 1j * np.interp(t, grid, y.imag)
        return np.where((t >= t0) & (t <= t1), v, 0.0)

    return out
