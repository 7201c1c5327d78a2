"""Dense operator algebra on small qubit registers.

Basis convention: ``|g> = (1, 0)``, ``|e> = (0, 1)``.  Registers are ordered
with site 0 as the most significant bit of the basis index, so for two sites
``|eg>`` is basis index 2.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Operator",
    "DensityMatrix",
    "Ket",
    "identity",
    "zero",
    "SIGMA_MINUS",
    "SIGMA_PLUS",
    "SIGMA_Z",
    "SIGMA_X",
    "SIGMA_Y",
    "NUMBER",
    "kron",
    "embed",
    "partial_trace",
    "expect",
    "dissipator",
    "basis_ket",
    "excitation_subspace",
    "trace_distance",
]


@dataclass(frozen=True, eq=False)
class Operator:
    """Square complex matrix acting on a Hilbert space of dimension ``dim``."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def n_sites(self) -> int:
        """Number of qubit sites; raises if ``dim`` is not a power of two."""
        n = int(round(np.log2(self.dim)))
        if 2**n != self.dim:
            raise ValueError(f"dimension {self.dim} is not a qubit register")
        return n

    def dag(self) -> "Operator":
        return Operator(self.entries.conj().T)

    def _check(self, other: "Operator"):
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.entries @ other.entries)
        if isinstance(other, Ket):
            if other.dim != self.dim:
                raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
            return self.entries @ other.amplitudes
        return NotImplemented

    def __add__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.entries + other.entries)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.entries - other.entries)
        return NotImplemented

    def __neg__(self):
        return Operator(-self.entries)

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return Operator(self.entries * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Operator(self.entries / scalar)

    def norm_max(self) -> float:
        return float(np.max(np.abs(self.entries))) if self.dim else 0.0

    def allclose(self, other: "Operator", atol: float = 1e-12) -> bool:
        return self.dim == other.dim and self.norm_max_diff(other) <= atol

    def norm_max_diff(self, other: "Operator") -> float:
        self._check(other)
        return float(np.max(np.abs(self.entries - other.entries)))

    def is_zero(self, atol: float = 0.0) -> bool:
        return self.norm_max() <= atol

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def __repr__(self):
        return f"Operator(dim={self.dim})"


class DensityMatrix(Operator):
    """Trace-one, Hermitian, positive semidefinite operator.

    Validation runs at construction; pass ``check=False`` for intermediate
    integrator states that are only approximately physical.
    """

    def __init__(self, entries, check: bool = True):
        super().__init__(entries)
        if check:
            self.validate()

    def validate(self, trace_tol=1e-8, herm_tol=1e-10, psd_tol=1e-7):
        m = self.entries
        tr = np.trace(m)
        if abs(tr - 1) > trace_tol:
            raise ValueError(f"density matrix trace {tr} differs from 1")
        herm = float(np.max(np.abs(m - m.conj().T)))
        if herm > herm_tol:
            raise ValueError(f"density matrix not Hermitian (deviation {herm:.3g})")
        lam = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])
        if lam < -psd_tol:
            raise ValueError(f"density matrix has negative eigenvalue {lam:.3g}")

    @classmethod
    def from_ket(cls, ket: "Ket") -> "DensityMatrix":
        a = ket.amplitudes
        return cls(np.outer(a, a.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.entries + self.entries.conj().T))

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim})"


@dataclass(frozen=True, eq=False)
class Ket:
    """Normalized state vector."""

    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.array(self.amplitudes, dtype=complex).reshape(-1)
        nrm = np.linalg.norm(v)
        if abs(nrm - 1) > 1e-10:
            raise ValueError(f"ket norm {nrm} differs from 1")
        v.setflags(write=False)
        object.__setattr__(self, "amplitudes", v)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @classmethod
    def normalized(cls, amplitudes) -> "Ket":
        v = np.asarray(amplitudes, dtype=complex)
        return cls(v / np.linalg.norm(v))

    def overlap(self, other: "Ket") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def dm(self) -> DensityMatrix:
        return DensityMatrix.from_ket(self)

    def __repr__(self):
        return f"Ket(dim={self.dim})"


def identity(dim: int) -> Operator:
    return Operator(np.eye(dim))


def zero(dim: int) -> Operator:
    return Operator(np.zeros((dim, dim)))


SIGMA_MINUS = Operator([[0, 1], [0, 0]])
SIGMA_PLUS = SIGMA_MINUS.dag()
SIGMA_Z = Operator([[1, 0], [0, -1]])
SIGMA_X = Operator([[0, 1], [1, 0]])
SIGMA_Y = Operator([[0, 1j], [-1j, 0]])
NUMBER = SIGMA_PLUS @ SIGMA_MINUS


def kron(a: Operator, b: Operator) -> Operator:
    return Operator(np.kron(a.entries, b.entries))


def embed(site_op: Operator, index: int, n: int) -> Operator:
    """Lift a single-qubit operator onto site ``index`` of an ``n``-site register."""
    if site_op.dim != 2:
        raise ValueError("site operator must be 2x2")
    if not 0 <= index < n:
        raise IndexError(f"site {index} outside register of {n} sites")
    left = np.eye(2**index)
    right = np.eye(2 ** (n - index - 1))
    return Operator(np.kron(np.kron(left, site_op.entries), right))


def embed_many(ops: Iterable[tuple[Operator, int]], n: int) -> Operator:
    """Product of single-site operators, ``[(op, site), ...]``, on ``n`` sites."""
    factors = [np.eye(2, dtype=complex) for _ in range(n)]
    for op, i in ops:
        if not 0 <= i < n:
            raise IndexError(f"site {i} outside register of {n} sites")
        factors[i] = op.entries @ factors[i]
    return Operator(reduce(np.kron, factors))


def partial_trace(rho: Operator, keep: Sequence[int]) -> DensityMatrix | Operator:
    """Reduced state on the sites in ``keep`` (sorted, in register order)."""
    n = rho.n_sites
    keep = list(keep)
    if not keep or sorted(set(keep)) != keep or keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"invalid keep set {keep} for {n} sites")
    drop = [i for i in range(n) if i not in keep]
    t = rho.entries.reshape([2] * (2 * n))
    # contract each dropped site's row/column index pair, highest first
    for i in sorted(drop, reverse=True):
        m = t.ndim // 2
        t = np.trace(t, axis1=i, axis2=i + m)
    d = 2 ** len(keep)
    out = t.reshape(d, d)
    if isinstance(rho, DensityMatrix):
        return DensityMatrix(out, check=False)
    return Operator(out)


def expect(op: Operator, rho: Operator) -> complex:
    if op.dim != rho.dim:
        raise ValueError(f"dimension mismatch: {op.dim} vs {rho.dim}")
    # trace(A B) without forming the product
    return complex(np.sum(op.entries * rho.entries.T))


def dissipator(a: Operator, b: Operator, rho: Operator) -> Operator:
    """Generalized Lindblad term ``a rho b^+ - (b^+ a rho + rho b^+ a)/2``."""
    if not a.dim == b.dim == rho.dim:
        raise ValueError("dimension mismatch in dissipator")
    A, B, R = a.entries, b.entries, rho.entries
    bda = B.conj().T @ A
    return Operator(A @ R @ B.conj().T - 0.5 * (bda @ R + R @ bda))


def basis_ket(bits: str | Sequence[int]) -> Ket:
    """Computational basis state from a string such as ``"eg"`` or ``"10"``."""
    vals = []
    for c in bits:
        if c in ("g", "0", 0):
            vals.append(0)
        elif c in ("e", "1", 1):
            vals.append(1)
        else:
            raise ValueError(f"bad basis label {c!r}")
    idx = 0
    for v in vals:
        idx = 2 * idx + v
    amp = np.zeros(2 ** len(vals), dtype=complex)
    amp[idx] = 1
    return Ket(amp)


def excitation_subspace(n: int, max_excitations: int) -> np.ndarray:
    """Register basis indices holding at most ``max_excitations`` excited sites."""
    idx = np.arange(2**n)
    counts = np.array([bin(i).count("1") for i in idx])
    return idx[counts <= max_excitations]


def trace_distance(a: Operator, b: Operator) -> float:
    d = a.entries - b.entries
    d = 0.5 * (d + d.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(d))))
