"""State metrics, target states, shot sampling and linear-inversion tomography."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import reduce
from typing import Mapping

import numpy as np

from .qops import SIGMA_X, SIGMA_Y, SIGMA_Z, DensityMatrix, Ket, Operator

__all__ = [
    "ShotRecord",
    "fidelity",
    "concurrence",
    "bell_target",
    "w_target",
    "sample_shots",
    "pauli_expectations",
    "linear_inversion",
    "positivity_deficit",
    "shot_expectations",
]

_PAULI = {"I": np.eye(2, dtype=complex), "X": SIGMA_X.entries, "Y": SIGMA_Y.entries, "Z": SIGMA_Z.entries}


@dataclass(frozen=True)
class ShotRecord:
    """Computational-basis counts; bitstrings list sites in register order, ``1`` = excited."""

    counts: Mapping[str, int]
    shots: int
    seed: int

    def __post_init__(self):
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("counts must be non-negative")
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts do not sum to shots")
        object.__setattr__(self, "counts", dict(sorted(self.counts.items())))

    def probabilities(self) -> dict[str, float]:
        return {k: v / self.shots for k, v in self.counts.items()}

    def to_text(self) -> str:
        return "".join(f"{k},{v}\n" for k, v in self.counts.items())

    @classmethod
    def from_text(cls, text: str, seed: int = 0) -> "ShotRecord":
        counts = {}
        for line in text.splitlines():
            if line.strip():
                k, v = line.split(",")
                counts[k.strip()] = int(v)
        return cls(counts, sum(counts.values()), seed)


def fidelity(rho: Operator, target: Ket) -> float:
    """Overlap ``<t|rho|t>`` with a pure target."""
    if rho.dim != target.dim:
        raise ValueError(f"dimension mismatch: {rho.dim} vs {target.dim}")
    v = target.amplitudes
    f = float(np.real(np.vdot(v, rho.entries @ v)))
    return min(1.0, max(0.0, f)) if abs(f - min(1.0, max(0.0, f))) < 1e-9 else f


def concurrence(rho: Operator) -> float:
    """Wootters concurrence of a two-qubit state."""
    if rho.dim != 4:
        raise ValueError(f"concurrence needs a two-qubit state, got dim {rho.dim}")
    r = rho.entries
    yy = np.kron(_PAULI["Y"], _PAULI["Y"])
    r_tilde = yy @ r.conj() @ yy
    ev = np.linalg.eigvals(r @ r_tilde)
    lam = np.sqrt(np.clip(np.sort(np.real(ev))[::-1], 0.0, None))
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def bell_target(sign: str) -> Ket:
    """``(|eg> +- i|ge>)/sqrt(2)``."""
    s = {"+": 1j, "-": -1j}[sign]
    return Ket(np.array([0, s, 1, 0]) / math.sqrt(2))


def w_target(sign: str, kd: float = 0.0) -> Ket:
    """Four-qubit W state shared by the two modules, ordered (Q3, Q4, Q7, Q8).

    ``W+- = [|Q3> +- i|Q4> + e^{+-i kd}(|Q7> +- i|Q8>)]/2`` where ``|Qj>``
    has only site ``j`` excited.  The downstream module carries the
    propagation phase ``e^{i kd}`` relative to the upstream one.
    """
    if sign not in ("+", "-"):
        raise ValueError(f"sign must be '+' or '-', got {sign!r}")
    s = 1j if sign == "+" else -1j
    ph = np.exp(1j * kd) if sign == "+" else np.exp(-1j * kd)
    amp = np.zeros(16, dtype=complex)
    amp[0b1000] = 0.5
    amp[0b0100] = 0.5 * s
    amp[0b0010] = 0.5 * ph
    amp[0b0001] = 0.5 * ph * s
    return Ket(amp)


def sample_shots(rho: Operator, n: int, seed: int) -> ShotRecord:
    """Multinomial draw from the diagonal of ``rho`` with ``numpy.random.default_rng(seed)``."""
    if n < 1:
        raise ValueError("need at least one shot")
    p = np.clip(np.real(np.diag(rho.entries)), 0.0, None)
    p = p / p.sum()
    rng = np.random.default_rng(seed)
    c = rng.multinomial(n, p)
    nq = rho.n_sites
    counts = {format(i, f"0{nq}b"): int(k) for i, k in enumerate(c) if k}
    return ShotRecord(counts, n, int(seed))


def _pauli_op(label: str) -> np.ndarray:
    return reduce(np.kron, [_PAULI[c] for c in label])


def pauli_expectations(rho: Operator) -> dict[str, float]:
    n = rho.n_sites
    return {
        "".join(p): float(np.real(np.trace(_pauli_op("".join(p)) @ rho.entries)))
        for p in itertools.product("IXYZ", repeat=n)
    }


def shot_expectations(rho: Operator, shots: int, seed: int) -> dict[str, float]:
    """Pauli expectations estimated from ``shots`` projective samples per basis.

    Each of the ``3^n`` measurement settings is sampled independently with a
    seed derived from ``(seed, setting index)``; every Pauli string takes its
    estimate from the first compatible setting.
    """
    n = rho.n_sites
    # u P u^+ = Z for each basis; Y follows the register's SIGMA_Y sign
    rots = {"X": np.array([[1, 1], [1, -1]]) / math.sqrt(2),
            "Y": np.array([[1, 1j], [1, -1j]]) / math.sqrt(2),
            "Z": np.eye(2)}
    est: dict[str, float] = {"I" * n: 1.0}
    for k, setting in enumerate(itertools.product("XYZ", repeat=n)):
        u = reduce(np.kron, [rots[c] for c in setting])
        rr = Operator(u @ rho.entries @ u.conj().T)
        rec = sample_shots(rr, shots, int(np.random.SeedSequence([seed, k]).generate_state(1)[0]))
        outcomes = np.array([[int(b) for b in key] for key in rec.counts])
        weights = np.array(list(rec.counts.values())) / shots
        for mask in itertools.product((0, 1), repeat=n):
            if not any(mask):
                continue
            label = "".join(c if m else "I" for c, m in zip(setting, mask))
            if label in est:
                continue
            # sigma_z eigenvalue +1 on |g> (bit 0)
            signs = np.prod(np.where(outcomes[:, np.array(mask, bool)] == 0, 1.0, -1.0), axis=1)
            est[label] = float(np.sum(weights * signs))
    return est


def linear_inversion(expectations: Mapping[str, float]) -> Operator:
    """``rho = 2^-n sum_P <P> P`` from a complete set of Pauli expectations."""
    keys = list(expectations)
    if not keys:
        raise ValueError("no expectations given")
    n = len(keys[0])
    need = {"".join(p) for p in itertools.product("IXYZ", repeat=n)}
    missing = need - set(keys)
    if missing:
        raise ValueError(f"incomplete Pauli basis: missing {sorted(missing)[:4]}")
    d = 2**n
    rho = np.zeros((d, d), dtype=complex)
    for label in need:
        rho = rho + expectations[label] * _pauli_op(label)
    return Operator(rho / d)


def positivity_deficit(rho: Operator) -> float:
    """Magnitude of the most negative eigenvalue (0 for a valid state)."""
    lam = np.linalg.eigvalsh(0.5 * (rho.entries + rho.entries.conj().T))
    return float(max(0.0, -lam[0]))
