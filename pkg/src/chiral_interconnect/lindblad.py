"""Fixed-step RK4 integration of time-dependent Lindblad master equations.

The generator is

    d rho/dt = -i [H(t), rho] + sum_k r_k D[a_k, b_k] rho

with ``H(t) = H0 + sum_j (e_j(t) O_j + conj(e_j(t)) O_j^+)`` and the
generalized dissipator of :func:`qops.dissipator`.  Envelopes are evaluated
exactly at the RK4 substage times.  Trace is never renormalized.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .qops import DensityMatrix, Operator, trace_distance

__all__ = [
    "GeneratorSpec",
    "TimeGrid",
    "Trajectory",
    "IntegrationError",
    "evolve",
    "evolve_many",
    "step_error_estimate",
    "liouvillian_rhs",
]

Envelope = Callable[[np.ndarray], np.ndarray]

# below this Hilbert dimension the static part is applied as a dense superoperator
_SUPEROP_MAX_DIM = 32


class IntegrationError(RuntimeError):
    """Non-finite state encountered; the step size is too large."""


@dataclass(frozen=True)
class GeneratorSpec:
    h_static: Operator
    h_time_dependent: tuple = ()
    lindblad_terms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "h_time_dependent", tuple(self.h_time_dependent))
        object.__setattr__(self, "lindblad_terms", tuple(self.lindblad_terms))
        d = self.dim
        for env, op in self.h_time_dependent:
            if op.dim != d:
                raise ValueError("time-dependent operator dimension mismatch")
            if not callable(env):
                raise TypeError("envelope must be callable")
        for rate, a, b in self.lindblad_terms:
            if a.dim != d or b.dim != d:
                raise ValueError("Lindblad operator dimension mismatch")
            if _same(a, b):
                if rate < 0:
                    raise ValueError(f"negative decay rate {rate}")
            elif not any(
                _same(a, b2) and _same(b, a2) and np.isclose(r2, np.conj(rate))
                for r2, a2, b2 in self.lindblad_terms
            ):
                raise ValueError("correlated Lindblad term lacks its conjugate partner")

    @property
    def dim(self) -> int:
        return self.h_static.dim

    def hamiltonian(self, t: float) -> Operator:
        h = self.h_static.entries.copy()
        for env, op in self.h_time_dependent:
            e = complex(np.asarray(env(np.array([t])))[0])
            h = h + e * op.entries + np.conj(e) * op.entries.conj().T
        return Operator(h)

    def with_envelopes(self, envelopes: Sequence[Envelope]) -> "GeneratorSpec":
        """Same operators, new envelope callables (in order)."""
        if len(envelopes) != len(self.h_time_dependent):
            raise ValueError("envelope count mismatch")
        terms = tuple((e, op) for e, (_, op) in zip(envelopes, self.h_time_dependent))
        return GeneratorSpec(self.h_static, terms, self.lindblad_terms)


def _same(a: Operator, b: Operator) -> bool:
    return a is b or (a.dim == b.dim and np.array_equal(a.entries, b.entries))


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    dt: float
    sample_stride: int = 1

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be a positive integer")
        n = (self.t_end - self.t_start) / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError("(t_end - t_start)/dt must be an integer")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.dt))

    def sample_times(self) -> np.ndarray:
        idx = np.arange(0, self.n_steps + 1, self.sample_stride)
        if idx[-1] != self.n_steps:
            idx = np.append(idx, self.n_steps)
        return self.t_start + idx * self.dt

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t_start, self.t_end, self.dt / factor, self.sample_stride * factor)


@dataclass
class Trajectory:
    times: np.ndarray
    expectations: np.ndarray  # (n_samples, n_observables), complex
    final_state: DensityMatrix
    states: list = field(default_factory=list)
    max_trace_drift: float = 0.0

    def series(self, k: int) -> np.ndarray:
        return self.expectations[:, k]


class _Compiled:
    """Generator lowered to arrays, optionally restricted to an invariant subspace."""

    def __init__(self, gen: GeneratorSpec, subspace=None):
        full = gen.dim
        self.full_dim = full
        self.subspace = None if subspace is None else np.asarray(subspace, dtype=int)
        P = self.subspace

        def restrict(m: np.ndarray) -> np.ndarray:
            return m if P is None else m[np.ix_(P, P)]

        if P is not None:
            outside = np.setdiff1d(np.arange(full), P)
            ops = [gen.h_static] + [op for _, op in gen.h_time_dependent]
            ops += [op.dag() for _, op in gen.h_time_dependent]
            for _, a, b in gen.lindblad_terms:
                ops += [a, b]
            for op in ops:
                if np.any(op.entries[np.ix_(outside, P)] != 0):
                    raise ValueError("subspace is not invariant under the generator")

        d = full if P is None else len(P)
        self.dim = d
        h0 = gen.h_static.entries
        keff = h0.astype(complex)
        jumps = []
        diag_mask = np.zeros((d, d))
        has_diag = False
        for rate, a, b in gen.lindblad_terms:
            if rate == 0 or (not np.any(a.entries)) or (not np.any(b.entries)):
                continue
            A, B = a.entries, b.entries
            keff = keff - 0.5j * rate * (B.conj().T @ A)
            Ar, Br = restrict(A), restrict(B)
            if _same(a, b) and _is_diagonal(Ar):
                dv = np.diag(Ar)
                diag_mask = diag_mask + rate * np.real(np.outer(dv, dv.conj()))
                has_diag = True
            else:
                jumps.append((rate, Ar, Br))
        keff = restrict(keff)

        self.td_ops = np.array([restrict(op.entries) for _, op in gen.h_time_dependent],
                               dtype=complex).reshape(-1, d, d)
        self.envelopes = [env for env, _ in gen.h_time_dependent]

        if d <= _SUPEROP_MAX_DIM:
            eye = np.eye(d)
            # row-major vec: vec(A X B) = (A kron B^T) vec(X)
            sup = -1j * np.kron(keff, eye) + 1j * np.kron(eye, keff.conj())
            for rate, A, B in jumps:
                sup = sup + rate * np.kron(A, B.conj())
            if has_diag:
                sup = sup + np.diag(diag_mask.reshape(-1))
            self.superop_T = np.ascontiguousarray(sup.T)
            self.mode = "superop"
        else:
            self.keff = keff
            self.jumps = jumps
            self.diag_mask = diag_mask if has_diag else None
            self.mode = "operator"

    def envelope_table(self, times: np.ndarray) -> np.ndarray:
        """Envelope values (n_td, len(times)), complex."""
        out = np.empty((len(self.envelopes), len(times)), dtype=complex)
        for k, env in enumerate(self.envelopes):
            v = np.asarray(env(times), dtype=complex)
            if v.shape != times.shape:
                v = np.array([complex(np.asarray(env(np.array([t])))[0]) for t in times])
            out[k] = v
        return out

    def rhs(self, rho: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        """rho: (B, d, d); coeffs: (B, n_td) envelope values."""
        d = self.dim
        if self.mode == "superop":
            out = (rho.reshape(-1, 1, d * d) @ self.superop_T).reshape(rho.shape)
            if len(self.td_ops):
                h = _td_hamiltonian(self.td_ops, coeffs)
                y = -1j * (h @ rho)
                out = out + y + y.conj().swapaxes(-1, -2)
            return out
        k = self.keff
        if len(self.td_ops):
            k = k + _td_hamiltonian(self.td_ops, coeffs)
        y = -1j * (k @ rho)
        out = y + y.conj().swapaxes(-1, -2)
        for rate, A, B in self.jumps:
            out = out + rate * (A @ rho @ B.conj().T)
        if self.diag_mask is not None:
            out = out + self.diag_mask * rho
        return out

    def lift(self, rho: np.ndarray) -> np.ndarray:
        if self.subspace is None:
            return rho
        full = np.zeros((self.full_dim, self.full_dim), dtype=complex)
        full[np.ix_(self.subspace, self.subspace)] = rho
        return full

    def restrict_state(self, rho: np.ndarray) -> np.ndarray:
        if self.subspace is None:
            return np.array(rho, dtype=complex)
        P = self.subspace
        outside = np.setdiff1d(np.arange(self.full_dim), P)
        if np.any(np.abs(rho[np.ix_(outside, outside)]) > 0) or np.any(np.abs(rho[np.ix_(P, outside)]) > 0):
            raise ValueError("initial state has support outside the subspace")
        return np.array(rho[np.ix_(P, P)], dtype=complex)

    def restrict_op(self, m: np.ndarray) -> np.ndarray:
        return m if self.subspace is None else m[np.ix_(self.subspace, self.subspace)]


def _is_diagonal(m: np.ndarray) -> bool:
    return not np.any(m - np.diag(np.diag(m)))


def _td_hamiltonian(ops: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    # explicit accumulation keeps the result independent of the batch size
    h = None
    for k in range(ops.shape[0]):
        c = coeffs[:, k, None, None]
        term = c * ops[k] + c.conj() * ops[k].conj().T
        h = term if h is None else h + term
    return h


def liouvillian_rhs(gen: GeneratorSpec, rho: Operator, t: float = 0.0) -> Operator:
    """Right-hand side of the master equation at time ``t`` (reference path)."""
    comp = _Compiled(gen)
    coeffs = comp.envelope_table(np.array([t]))[:, 0][None, :]
    return Operator(comp.rhs(rho.entries[None].astype(complex), coeffs)[0])


def evolve(
    rho0: Operator,
    gen: GeneratorSpec,
    grid: TimeGrid,
    observables: Sequence[Operator] = (),
    *,
    store_states: bool = False,
    subspace=None,
) -> Trajectory:
    """Integrate from ``grid.t_start`` to ``grid.t_end`` with classic RK4.

    Observable expectations ``trace(O rho)`` are sampled every
    ``grid.sample_stride`` steps (and at the final time).  With ``subspace``
    given, the generator is restricted to those register basis states, which
    must span an invariant subspace containing ``rho0``; returned states are
    lifted back to the full register.
    """
    return evolve_many(rho0, [gen], grid, observables, store_states=store_states,
                       subspace=subspace)[0]


def evolve_many(
    rho0: Operator,
    gens: Sequence[GeneratorSpec],
    grid: TimeGrid,
    observables: Sequence[Operator] = (),
    *,
    store_states: bool = False,
    subspace=None,
) -> list[Trajectory]:
    """Integrate several generators that differ only in their envelopes.

    All generators must share the first generator's operators; the batch is
    stepped together.  Each member's result is bitwise identical to a batch
    of one.
    """
    if not gens:
        return []
    base = gens[0]
    for g in gens[1:]:
        if len(g.h_time_dependent) != len(base.h_time_dependent) or not all(
            _same(a, b) for (_, a), (_, b) in zip(g.h_time_dependent, base.h_time_dependent)
        ):
            raise ValueError("generators differ in structure")
    if rho0.dim != base.dim:
        raise ValueError(f"state dimension {rho0.dim} does not match generator {base.dim}")
    for o in observables:
        if o.dim != base.dim:
            raise ValueError("observable dimension mismatch")

    comp = _Compiled(base, subspace)
    n = grid.n_steps
    dt = grid.dt
    half_times = grid.t_start + 0.5 * dt * np.arange(2 * n + 1)
    tables = []
    for g in gens:
        comp.envelopes = [env for env, _ in g.h_time_dependent]
        tables.append(comp.envelope_table(half_times))
    table = np.stack(tables)  # (B, n_td, 2n+1)

    B = len(gens)
    rho = np.repeat(comp.restrict_state(rho0.entries)[None], B, axis=0)
    obs = np.array([comp.restrict_op(o.entries) for o in observables], dtype=complex)
    obs_T = obs.transpose(0, 2, 1) if len(obs) else obs

    sample_idx = set(range(0, n + 1, grid.sample_stride)) | {n}
    times, records, drift = [], [], np.zeros(B)
    snaps: list[list] = [[] for _ in range(B)]

    def record(step: int):
        times.append(grid.t_start + step * dt)
        if len(obs):
            records.append(np.einsum("mij,bij->bm", obs_T, rho))
        else:
            records.append(np.zeros((B, 0), dtype=complex))
        tr = np.real(np.trace(rho, axis1=1, axis2=2))
        np.maximum(drift, np.abs(tr - 1), out=drift)
        if not np.all(np.isfinite(rho)):
            raise IntegrationError(f"non-finite state at t={times[-1]:.4g}; reduce dt")
        if store_states:
            for b in range(B):
                snaps[b].append(rho[b].copy())

    record(0)
    f = comp.rhs
    # overflow shows up as a non-finite sample and is reported by record()
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(n):
            c0 = table[:, :, 2 * step]
            c1 = table[:, :, 2 * step + 1]
            c2 = table[:, :, 2 * step + 2]
            k1 = f(rho, c0)
            k2 = f(rho + (0.5 * dt) * k1, c1)
            k3 = f(rho + (0.5 * dt) * k2, c1)
            k4 = f(rho + dt * k3, c2)
            rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if step + 1 in sample_idx:
                record(step + 1)

    times_arr = np.array(times)
    rec = np.stack(records, axis=1) if records else np.zeros((B, 0, 0))
    out = []
    for b in range(B):
        final = DensityMatrix(comp.lift(rho[b]), check=False)
        states = [DensityMatrix(comp.lift(s), check=False) for s in snaps[b]]
        out.append(Trajectory(times_arr, rec[b], final, states, float(drift[b])))
    return out


def step_error_estimate(rho0: Operator, gen: GeneratorSpec, grid: TimeGrid, *, subspace=None) -> float:
    """Trace distance between endpoints integrated at ``dt`` and ``dt/2``."""
    coarse = evolve(rho0, gen, grid, subspace=subspace).final_state
    fine = evolve(rho0, gen, grid.refined(2), subspace=subspace).final_state
    return trace_distance(coarse, fine)
