"""SLH triplets and their series/concatenation products.

Operators inside a triplet must already live on the joint Hilbert space;
nothing here embeds or inflates spaces.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag

from .lindblad import GeneratorSpec
from .qops import Operator, identity, zero

__all__ = [
    "SLH",
    "series",
    "series_chain",
    "concat",
    "element_phase",
    "element_beamsplitter",
    "element_module",
    "element_drive",
    "to_generator",
]


@dataclass(frozen=True, eq=False)
class SLH:
    s: np.ndarray
    l: tuple
    h: Operator

    def __post_init__(self):
        s = np.atleast_2d(np.array(self.s, dtype=complex))
        if self.s is not None and np.size(self.s) == 0:
            s = np.zeros((0, 0), dtype=complex)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "l", tuple(self.l))
        n = s.shape[0]
        if s.shape != (n, n) or len(self.l) != n:
            raise ValueError("S must be square with one L entry per port")
        if n and np.max(np.abs(s.conj().T @ s - np.eye(n))) > 1e-10:
            raise ValueError("scattering matrix is not unitary")
        for op in self.l:
            if op.dim != self.h.dim:
                raise ValueError("L and H operators must share one Hilbert space")

    @property
    def n_ports(self) -> int:
        return self.s.shape[0]

    @property
    def dim(self) -> int:
        return self.h.dim


def _apply(s: np.ndarray, l: Sequence[Operator], dim: int) -> list[Operator]:
    out = []
    for i in range(s.shape[0]):
        acc = np.zeros((dim, dim), dtype=complex)
        for j, op in enumerate(l):
            if s[i, j] != 0:
                acc = acc + s[i, j] * op.entries
        out.append(Operator(acc))
    return out


def series(g2: SLH, g1: SLH) -> SLH:
    """Feed the outputs of ``g1`` into ``g2`` (``g2 <| g1``)."""
    if g1.n_ports != g2.n_ports:
        raise ValueError(f"port mismatch: {g2.n_ports} vs {g1.n_ports}")
    if g1.dim != g2.dim:
        raise ValueError("triplets act on different Hilbert spaces")
    d = g1.dim
    s = g2.s @ g1.s
    s2l1 = _apply(g2.s, g1.l, d)
    l = [a + b for a, b in zip(s2l1, g2.l)]
    x = np.zeros((d, d), dtype=complex)
    for l2, v in zip(g2.l, s2l1):
        x = x + l2.entries.conj().T @ v.entries
    im = (x - x.conj().T) / 2j
    h = Operator(g1.h.entries + g2.h.entries + im)
    return SLH(s, l, h)


def series_chain(*gs: SLH) -> SLH:
    """``series_chain(a, b, c) == a <| b <| c``."""
    out = gs[-1]
    for g in reversed(gs[:-1]):
        out = series(g, out)
    return out


def concat(g1: SLH, g2: SLH) -> SLH:
    if g1.dim != g2.dim:
        raise ValueError("triplets act on different Hilbert spaces")
    if g1.n_ports == 0:
        s = g2.s
    elif g2.n_ports == 0:
        s = g1.s
    else:
        s = block_diag(g1.s, g2.s)
    return SLH(s, g1.l + g2.l, g1.h + g2.h)


def element_phase(kd: float, dim: int, n_ports: int = 1) -> SLH:
    """Propagation phase ``exp(i kd)`` on every port."""
    return SLH(np.exp(1j * kd) * np.eye(n_ports), [zero(dim)] * n_ports, zero(dim))


def element_beamsplitter(eta: float, dim: int) -> SLH:
    """Two-port splitter with amplitude transmissivity ``eta``; port 2 is loss."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    r = np.sqrt(1.0 - eta**2)
    s = np.array([[eta, -r], [r, eta]])
    return SLH(s, [zero(dim), zero(dim)], zero(dim))


def element_drive(alpha: complex, dim: int, n_ports: int = 2) -> SLH:
    """Coherent input of amplitude ``alpha`` on port 1."""
    l = [alpha * identity(dim)] + [zero(dim)] * (n_ports - 1)
    return SLH(np.eye(n_ports), l, zero(dim))


def element_module(
    jump: Operator,
    gamma: float,
    *,
    number: Operator | None = None,
    delta: float = 0.0,
    drive: complex | None = None,
    n_ports: int = 2,
) -> SLH:
    """Emitter pair coupled to port 1 through ``sqrt(gamma/2) * jump``.

    ``number`` is the excitation-number operator of the pair; ``delta`` the
    emitter-drive detuning.  With ``drive`` set, a coherent input of that
    amplitude is fed into the module first.
    """
    d = jump.dim
    h = zero(d) if number is None or delta == 0 else delta * number
    l = [np.sqrt(gamma / 2) * jump] + [zero(d)] * (n_ports - 1)
    g = SLH(np.eye(n_ports), l, h)
    if drive is not None:
        g = series(g, element_drive(drive, d, n_ports))
    return g


def to_generator(g: SLH, *, extract_scalars: bool = True) -> GeneratorSpec:
    """Master-equation generator ``-i[H, .] + sum_k D[L_k]``.

    With ``extract_scalars`` the identity component ``beta`` of each ``L_k``
    is moved into the Hamiltonian as ``(i/2)(beta* L' - beta L'^+)``, which
    leaves the generator unchanged.  Zero entries are dropped.
    """
    d = g.dim
    h = g.h.entries.astype(complex)
    terms = []
    eye = np.eye(d)
    for op in g.l:
        m = op.entries
        if extract_scalars:
            beta = np.trace(m) / d
            m = m - beta * eye
            h = h + 0.5j * (np.conj(beta) * m - beta * m.conj().T)
        if np.any(m):
            lop = Operator(m)
            terms.append((1.0, lop, lop))
    return GeneratorSpec(Operator(h), (), tuple(terms))
