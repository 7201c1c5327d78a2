"""Concrete models of the two-module chiral interconnect.

Sites are labelled ``Q1..Q8``.  Module A holds waveguide qubits Q1, Q2 and
data qubits Q3, Q4; module B holds waveguide qubits Q5, Q6 and data qubits
Q7, Q8.  The full register orders sites Q1..Q8 (Q1 most significant); the
waveguide-only register orders Q1, Q2, Q5, Q6.

All dynamics are in the frame rotating at the common waveguide-qubit
frequency, with ``hbar = 1`` and rates in rad/ns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping

import numpy as np

from .lindblad import GeneratorSpec
from .qops import NUMBER, SIGMA_MINUS, SIGMA_Z, Operator, embed
from . import slh

__all__ = [
    "DeviceParams",
    "NetworkSpec",
    "FULL_SITES",
    "WAVEGUIDE_SITES",
    "COUPLER_PAIRS",
    "collective_jump",
    "build_cascaded",
    "parametric_coupling",
    "build_waveguide_only",
    "cascaded_slh",
]

FULL_SITES = {f"Q{i + 1}": i for i in range(8)}
WAVEGUIDE_SITES = {"Q1": 0, "Q2": 1, "Q5": 2, "Q6": 3}
MODULE_WAVEGUIDE = {"A": ("Q1", "Q2"), "B": ("Q5", "Q6")}
MODULE_DATA = {"A": ("Q3", "Q4"), "B": ("Q7", "Q8")}
DATA_QUBITS = ("Q3", "Q4", "Q7", "Q8")
WAVEGUIDE_QUBITS = ("Q1", "Q2", "Q5", "Q6")
# coupler name -> (data qubit, waveguide qubit)
COUPLER_PAIRS = {"C13": ("Q3", "Q1"), "C24": ("Q4", "Q2"), "C57": ("Q7", "Q5"), "C68": ("Q8", "Q6")}

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class DeviceParams:
    """Device parameters; rates in rad/ns, times in ns.

    ``t1_data`` / ``t2star_data`` may be ``inf`` for decoherence-free data
    qubits.  ``sideband_loss`` is an optional fixed incoherent loss applied to
    the propagating photon on top of ``eta``.
    """

    gamma_per_qubit: tuple = (TWO_PI * 0.017,) * 4
    kd: float = 0.0
    eta: float = 1.0
    t1_data: tuple = (math.inf,) * 4
    t2star_data: tuple = (math.inf,) * 4
    intra_module_phase: float = math.pi / 2
    residual_exchange: float = 0.0
    sideband_loss: float = 0.0

    def __post_init__(self):
        for name in ("gamma_per_qubit", "t1_data", "t2star_data"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 4:
                raise ValueError(f"{name} needs 4 entries, got {len(v)}")
            if any(not x > 0 for x in v):
                raise ValueError(f"{name} entries must be positive")
            object.__setattr__(self, name, v)
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if not 0.0 <= self.sideband_loss < 1.0:
            raise ValueError("sideband_loss must lie in [0, 1)")
        for k, g in enumerate(self.gamma_phi_data):
            if g < -1e-15:
                raise ValueError(
                    f"data qubit {DATA_QUBITS[k]}: T2* exceeds 2*T1 (negative pure dephasing {g:.3g})"
                )

    @property
    def gamma(self) -> float:
        """Reference waveguide coupling: mean over the waveguide qubits."""
        return float(np.mean(self.gamma_per_qubit))

    @property
    def gamma_nr_data(self) -> tuple:
        return tuple(1.0 / t for t in self.t1_data)

    @property
    def gamma_phi_data(self) -> tuple:
        return tuple(1.0 / t2 - 0.5 / t1 for t1, t2 in zip(self.t1_data, self.t2star_data))

    @property
    def eta_total(self) -> float:
        """Amplitude transmissivity including the optional sideband loss."""
        return self.eta * math.sqrt(1.0 - self.sideband_loss)

    def replace(self, **kw) -> "DeviceParams":
        return replace(self, **kw)

    def mirrored(self) -> "DeviceParams":
        """Parameters of the spatially reflected device (A <-> B, Q1 <-> Q6, ...)."""
        return self.replace(
            gamma_per_qubit=self.gamma_per_qubit[::-1],
            t1_data=self.t1_data[::-1],
            t2star_data=self.t2star_data[::-1],
        )

    @classmethod
    def measured(cls, eta2: float = 0.82, kd: float = 0.0) -> "DeviceParams":
        """Measured device: per-qubit couplings, data-qubit T1/T2*, eta^2 = 0.82.

        Couplings are listed for Q1, Q2, Q5, Q6 as 17.7, 17.3, 17.9, 17.1 MHz.
        """
        return cls(
            gamma_per_qubit=tuple(TWO_PI * f for f in (0.0177, 0.0173, 0.0179, 0.0171)),
            kd=kd,
            eta=math.sqrt(eta2),
            t1_data=(7.9e3, 4.4e3, 8.1e3, 6.0e3),
            t2star_data=(3.2e3, 2.0e3, 4.5e3, 5.4e3),
        )


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    generator: GeneratorSpec
    jump_left: Operator
    jump_right: Operator
    site_map: Mapping[str, int]
    loss_right: Operator = None
    loss_left: Operator = None
    gamma: float = 0.0

    @property
    def n_sites(self) -> int:
        return len(self.site_map)

    def sigma(self, label: str) -> Operator:
        return embed(SIGMA_MINUS, self.site_map[label], self.n_sites)

    def number(self, label: str) -> Operator:
        return embed(NUMBER, self.site_map[label], self.n_sites)


def _site_map(include_data: bool) -> dict:
    return dict(FULL_SITES if include_data else WAVEGUIDE_SITES)


def collective_jump(
    module: str,
    direction: str,
    params: DeviceParams,
    site_map: Mapping[str, int] = FULL_SITES,
) -> Operator:
    """``c_{dir,module} = w1 s1 + exp(-+i phi) w2 s2`` on the given register.

    The weights ``w = sqrt(gamma_j / gamma)`` account for unequal couplings;
    rightward emission carries ``exp(-i phi)``, leftward ``exp(+i phi)``.
    """
    if module not in MODULE_WAVEGUIDE:
        raise ValueError(f"module must be 'A' or 'B', got {module!r}")
    if direction not in ("left", "right"):
        raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
    n = len(site_map)
    q1, q2 = MODULE_WAVEGUIDE[module]
    gk = {q: g for q, g in zip(WAVEGUIDE_QUBITS, params.gamma_per_qubit)}
    w1 = math.sqrt(gk[q1] / params.gamma)
    w2 = math.sqrt(gk[q2] / params.gamma)
    sign = -1.0 if direction == "right" else 1.0
    ph = np.exp(1j * sign * params.intra_module_phase)
    return w1 * embed(SIGMA_MINUS, site_map[q1], n) + (ph * w2) * embed(SIGMA_MINUS, site_map[q2], n)


def cascaded_slh(params: DeviceParams, direction: str, site_map: Mapping[str, int] = FULL_SITES,
                 drive: complex | None = None, delta: float = 0.0) -> slh.SLH:
    """Two-port triplet of the A -> B (right) or B -> A (left) cascade.

    Port 1 is the waveguide output, port 2 the loss channel of the
    inter-module section.  ``drive`` feeds a coherent input into the
    upstream module; ``delta`` detunes all four waveguide qubits from it.
    """
    n = len(site_map)
    d = 2**n
    up, down = ("A", "B") if direction == "right" else ("B", "A")

    def number(module):
        q1, q2 = MODULE_WAVEGUIDE[module]
        return embed(NUMBER, site_map[q1], n) + embed(NUMBER, site_map[q2], n)

    g_up = slh.element_module(collective_jump(up, direction, params, site_map), params.gamma,
                              number=number(up), delta=delta, drive=drive)
    g_down = slh.element_module(collective_jump(down, direction, params, site_map), params.gamma,
                                number=number(down), delta=delta, n_ports=1)
    return slh.series_chain(
        slh.concat(g_down, slh.element_phase(0.0, d)),
        slh.element_beamsplitter(params.eta_total, d),
        slh.element_phase(params.kd, d, n_ports=2),
        g_up,
    )


def _jumps(params: DeviceParams, direction: str, site_map):
    """Composite output operator and loss operator (rate gamma/2 each)."""
    up, down = ("A", "B") if direction == "right" else ("B", "A")
    e = params.eta_total
    c_up = collective_jump(up, direction, params, site_map)
    c_down = collective_jump(down, direction, params, site_map)
    if direction == "right":
        out = e * c_up + np.exp(-1j * params.kd) * c_down
    else:
        out = c_down + (e * np.exp(1j * params.kd)) * c_up
    loss = math.sqrt(max(0.0, 1.0 - e**2)) * c_up
    return out, loss


def _exchange(params: DeviceParams, direction: str, site_map) -> np.ndarray:
    """Cascaded coherent exchange ``H_R`` or ``H_L`` (without the eta factor)."""
    g = params.gamma
    kd = params.kd
    if direction == "right":
        ca = collective_jump("A", "right", params, site_map).entries
        cb = collective_jump("B", "right", params, site_map).entries
        x = np.exp(1j * kd) * ca @ cb.conj().T
    else:
        ca = collective_jump("A", "left", params, site_map).entries
        cb = collective_jump("B", "left", params, site_map).entries
        x = np.exp(1j * kd) * ca.conj().T @ cb
    return (-1j * g / 4) * (x - x.conj().T)


def _base(params: DeviceParams, site_map) -> tuple[np.ndarray, list, Operator, Operator, Operator, Operator]:
    n = len(site_map)
    d = 2**n
    g = params.gamma
    e = params.eta_total
    h = e * (_exchange(params, "left", site_map) + _exchange(params, "right", site_map))
    if params.residual_exchange:
        for q1, q2 in MODULE_WAVEGUIDE.values():
            s1 = embed(SIGMA_MINUS, site_map[q1], n).entries
            s2 = embed(SIGMA_MINUS, site_map[q2], n).entries
            x = s1.conj().T @ s2
            h = h + params.residual_exchange * (x + x.conj().T)
    c1, c2 = _jumps(params, "right", site_map)
    c3, c4 = _jumps(params, "left", site_map)
    terms = []
    for c in (c1, c2, c3, c4):
        if not c.is_zero():
            terms.append((g / 2, c, c))
    return h, terms, c1, c2, c3, c4


def build_cascaded(params: DeviceParams, *, include_data: bool = True) -> NetworkSpec:
    """Undriven two-module generator without parametric couplings.

    With ``include_data=False`` only the waveguide qubits Q1, Q2, Q5, Q6 are
    modelled.
    """
    site_map = _site_map(include_data)
    n = len(site_map)
    h, terms, c1, c2, c3, c4 = _base(params, site_map)
    if include_data:
        for q, gnr, gphi in zip(DATA_QUBITS, params.gamma_nr_data, params.gamma_phi_data):
            if gnr > 0:
                sm = embed(SIGMA_MINUS, site_map[q], n)
                terms.append((gnr, sm, sm))
            if gphi > 0:
                sz = embed(SIGMA_Z, site_map[q], n)
                terms.append((gphi / 2, sz, sz))
    gen = GeneratorSpec(Operator(h), (), tuple(terms))
    return NetworkSpec(gen, c3, c1, site_map, loss_right=c2, loss_left=c4, gamma=params.gamma)


def parametric_coupling(
    pair: tuple[str, str],
    envelope: Callable[[np.ndarray], np.ndarray],
    site_map: Mapping[str, int] = FULL_SITES,
) -> tuple:
    """Exchange term ``g(t) s_w^+ s_d + conj(g(t)) s_d^+ s_w`` for the lindblad solver.

    ``pair`` is ``(data qubit, waveguide qubit)``, e.g. ``("Q3", "Q1")``.
    """
    pair = tuple(pair)
    if pair not in COUPLER_PAIRS.values():
        raise ValueError(f"invalid coupler pair {pair}")
    if not callable(envelope):
        raise TypeError("envelope must be callable")
    n = len(site_map)
    sd = embed(SIGMA_MINUS, site_map[pair[0]], n)
    sw = embed(SIGMA_MINUS, site_map[pair[1]], n)
    return (envelope, sw.dag() @ sd)


def drive_amplitude(alpha: complex, gamma: float) -> complex:
    """Hamiltonian drive strength of a coherent input ``alpha`` (sqrt(photons/ns))."""
    return -1j * math.sqrt(gamma / 2) * alpha


def build_waveguide_only(
    params: DeviceParams,
    direction: str = "right",
    amplitude: complex = 0.0,
    detuning: float = 0.0,
) -> NetworkSpec:
    """Four waveguide qubits driven by a coherent input from one end.

    ``amplitude`` is the input field ``alpha`` in sqrt(photons/ns) and
    ``detuning`` the qubit-minus-probe frequency; the frame rotates at the
    probe.  The drive reaches the downstream module attenuated by ``eta``
    and delayed by the propagation phase.
    """
    if direction not in ("left", "right"):
        raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
    site_map = _site_map(False)
    n = len(site_map)
    h, terms, c1, c2, c3, c4 = _base(params, site_map)
    e = params.eta_total
    if detuning:
        for q in WAVEGUIDE_QUBITS:
            h = h + detuning * embed(NUMBER, site_map[q], n).entries
    if amplitude:
        om = drive_amplitude(amplitude, params.gamma)
        up, down = ("A", "B") if direction == "right" else ("B", "A")
        cu = collective_jump(up, direction, params, site_map).entries
        cd = collective_jump(down, direction, params, site_map).entries
        ph = np.exp(1j * params.kd)
        x = om * cu.conj().T + (e * ph * om) * cd.conj().T
        h = h + x + x.conj().T
    gen = GeneratorSpec(Operator(h), (), tuple(terms))
    return NetworkSpec(gen, c3, c1, site_map, loss_right=c2, loss_left=c4, gamma=params.gamma)
