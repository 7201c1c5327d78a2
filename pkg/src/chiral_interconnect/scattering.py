"""Elastic scattering of a weak coherent probe.

Closed-form single-emitter transmission, the attenuation estimate from
fitted drive strengths, and driven steady states of the four waveguide
qubits.  Drive strength is expressed as the Rabi rate ``omega_p`` (rad/ns)
of a single qubit, related to the input field ``alpha`` (sqrt(photons/ns)) by
``omega_p = sqrt(2 gamma) |alpha|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lindblad import GeneratorSpec, IntegrationError, TimeGrid, evolve
from .network import DeviceParams, build_waveguide_only, collective_jump
from .qops import NUMBER, DensityMatrix, Operator, embed, expect, trace_distance

__all__ = [
    "ScatterPoint",
    "s21_single",
    "extract_eta2",
    "input_amplitude",
    "steady_state",
    "s21_four_qubit",
    "sweep_four_qubit",
    "module_response",
]


@dataclass(frozen=True)
class ScatterPoint:
    detuning: float
    power: float
    s21: complex
    converged: bool = True
    residual: float = 0.0

    def __post_init__(self):
        if self.converged and abs(self.s21) > 1 + 1e-6:
            raise ValueError(f"|S21| = {abs(self.s21)} exceeds 1 for a passive configuration")


def s21_single(delta, omega_p, gamma: float, gamma_phi: float = 0.0, gamma_nr: float = 0.0):
    """Coherent transmission amplitude of one emitter on a waveguide.

    ``delta`` is the qubit-probe detuning.  Non-radiative decay enters
    through ``gamma1 = gamma + gamma_nr`` and
    ``gamma2 = gamma1/2 + gamma_phi``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    delta = np.asarray(delta, dtype=float)
    omega_p = np.asarray(omega_p, dtype=float)
    g1 = gamma + gamma_nr
    g2 = 0.5 * g1 + gamma_phi
    x = delta / g2
    return 1 - gamma * (1 - 1j * x) / (2 * g2 * (1 + x**2 + omega_p**2 / (g1 * g2)))


def extract_eta2(omega_1l: float, omega_1r: float, omega_5l: float, omega_5r: float) -> float:
    """Attenuation ``eta^2`` from drive strengths fitted from both ends."""
    vals = (omega_1l, omega_1r, omega_5l, omega_5r)
    if any(not v > 0 for v in vals):
        raise ValueError("drive strengths must be positive")
    return omega_1l * omega_5r / (omega_1r * omega_5l)


def input_amplitude(omega_p: float, gamma: float) -> complex:
    """Input field whose Hamiltonian drive is ``(omega_p/2) sigma_x``."""
    return 1j * omega_p / math.sqrt(2 * gamma)


def steady_state(
    gen: GeneratorSpec,
    rho0: DensityMatrix,
    *,
    chunk: float,
    dt: float,
    tol: float = 1e-7,
    max_chunks: int = 400,
) -> tuple[DensityMatrix, bool, float]:
    """Integrate until states ``chunk`` apart differ by at most ``tol`` in trace distance."""
    n = max(1, int(math.ceil(chunk / dt)))
    grid = TimeGrid(0.0, n * dt, dt, n)
    rho = rho0
    dist = math.inf
    for _ in range(max_chunks):
        nxt = evolve(rho, gen, grid).final_state
        dist = trace_distance(rho, nxt)
        rho = nxt
        if dist <= tol:
            return DensityMatrix(rho.entries, check=False), True, dist
    return DensityMatrix(rho.entries, check=False), False, dist


def _stable_dt(gamma: float, delta: float, omega_p: float) -> float:
    return 0.5 / (2 * gamma + abs(delta) + omega_p)


def s21_four_qubit(
    device: DeviceParams,
    detuning: float,
    omega_p: float,
    direction: str = "right",
    tol: float = 1e-7,
) -> ScatterPoint:
    """Steady-state transmission through both modules.

    The output relative to the drive is ``eta + sqrt(gamma/2) <c_out>/alpha``
    with the composite output operator referenced to the downstream module.
    """
    g = device.gamma
    alpha = input_amplitude(omega_p, g)
    net = build_waveguide_only(device, direction, alpha, detuning)
    rho0 = DensityMatrix(np.diag([1.0] + [0.0] * 15))
    dt = _stable_dt(g, detuning, omega_p)
    try:
        rho, ok, dist = steady_state(net.generator, rho0, chunk=50.0 / g, dt=dt, tol=tol)
    except IntegrationError:
        return ScatterPoint(detuning, omega_p, complex("nan"), False, math.inf)
    if direction == "right":
        c = expect(net.jump_right, rho)
    else:
        c = np.exp(-1j * device.kd) * expect(net.jump_left, rho)
    s21 = device.eta_total + math.sqrt(g / 2) * c / alpha
    return ScatterPoint(float(detuning), float(omega_p), complex(s21), ok, dist)


def sweep_four_qubit(
    device: DeviceParams,
    detunings: Sequence[float],
    powers: Sequence[float],
    direction: str = "right",
    threads: int = 1,
) -> list[ScatterPoint]:
    """Grid of steady-state points, row-major over ``powers`` then ``detunings``."""
    jobs = [(float(p), float(d)) for p in powers for d in detunings]
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(lambda j: s21_four_qubit(device, j[1], j[0], direction), jobs))
    return [s21_four_qubit(device, d, p, direction) for p, d in jobs]


def module_response(
    gamma: float, detuning: float, omega_p: float, direction: str = "right", tol: float = 1e-9
) -> tuple[complex, complex]:
    """Transmission and reflection of a single lambda/4 module (two qubits).

    Intra-module exchange is assumed cancelled.  Returns ``(t, r)``.
    """
    params = DeviceParams(gamma_per_qubit=(gamma,) * 4)
    site_map = {"Q1": 0, "Q2": 1}
    c_r = collective_jump("A", "right", params, site_map)
    c_l = collective_jump("A", "left", params, site_map)
    c_in, c_back = (c_r, c_l) if direction == "right" else (c_l, c_r)
    alpha = input_amplitude(omega_p, gamma)
    om = -1j * math.sqrt(gamma / 2) * alpha
    h = detuning * (embed(NUMBER, 0, 2) + embed(NUMBER, 1, 2))
    h = h + om * c_in.dag() + np.conj(om) * c_in
    gen = GeneratorSpec(h, (), ((gamma / 2, c_r, c_r), (gamma / 2, c_l, c_l)))
    rho0 = DensityMatrix(np.diag([1.0, 0, 0, 0]))
    rho, ok, _ = steady_state(gen, rho0, chunk=50.0 / gamma, dt=_stable_dt(gamma, detuning, omega_p), tol=tol)
    t = 1 + math.sqrt(gamma / 2) * expect(c_in, rho) / alpha
    r = math.sqrt(gamma / 2) * expect(c_back, rho) / alpha
    return complex(t), complex(r)
