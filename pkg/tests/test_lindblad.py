import math

import numpy as np
import pytest

from chiral_interconnect.lindblad import (
    GeneratorSpec, IntegrationError, TimeGrid, evolve, evolve_many, liouvillian_rhs, step_error_estimate,
)
from chiral_interconnect.network import DeviceParams, build_cascaded
from chiral_interconnect.qops import (
    NUMBER, SIGMA_MINUS, SIGMA_X, DensityMatrix, Ket, Operator, basis_ket, embed, excitation_subspace, zero,
)

G = 2 * math.pi * 0.017


def decay_gen(rate=G):
    return GeneratorSpec(zero(2), (), ((rate, SIGMA_MINUS, SIGMA_MINUS),))


def test_single_qubit_decay():
    grid = TimeGrid(0.0, 60.0, 0.05, 10)  # gamma dt = 0.0053
    tr = evolve(basis_ket("1").dm(), decay_gen(), grid, [NUMBER])
    err = np.max(np.abs(tr.series(0).real - np.exp(-G * tr.times)))
    assert err <= 1e-6


def test_rabi():
    om = 2 * math.pi * 0.05
    gen = GeneratorSpec(SIGMA_X * (om / 2))
    tr = evolve(basis_ket("0").dm(), gen, TimeGrid(0.0, 50.0, 0.01, 5), [NUMBER])
    assert np.max(np.abs(tr.series(0).real - np.sin(om * tr.times / 2) ** 2)) <= 1e-6


def test_time_dependent_envelope_sampled_at_substages():
    # H(t) = w(t) op + h.c. = w(t) sigma_x: population sin^2 of the integral of w
    w = lambda t: 0.02 * np.asarray(t)
    gen = GeneratorSpec(zero(2), ((w, SIGMA_X * 0.5),))
    tr = evolve(basis_ket("0").dm(), gen, TimeGrid(0.0, 20.0, 0.02), [NUMBER])
    theta = 0.01 * tr.times**2
    assert np.max(np.abs(tr.series(0).real - np.sin(theta) ** 2)) <= 1e-8


def ψplus_waveguide():
    a = np.zeros(16, complex)
    a[0b1000] = 1 / math.sqrt(2)
    a[0b0100] = 1j / math.sqrt(2)
    return Ket(a).dm()


def test_cascaded_flux_integrates_to_one():
    net = build_cascaded(DeviceParams(), include_data=False)
    g = net.gamma
    obs = [net.jump_right.dag() @ net.jump_right, net.jump_left.dag() @ net.jump_left]
    sub = excitation_subspace(4, 1)

    def flux(dt):
        tr = evolve(ψplus_waveguide(), net.generator, TimeGrid(0.0, 250.0, dt, 1), obs, subspace=sub)
        return np.trapezoid((g / 2) * tr.series(0).real, tr.times)

    f1, f2 = flux(0.1), flux(0.05)
    rich = f2 + (f2 - f1) / 15
    assert abs(rich - 1) <= 1e-4
    assert abs(f2 - 1) <= 1e-4


def test_step_error_estimate():
    rho = basis_ket("1").dm()
    grid = TimeGrid(0.0, 20.0, 0.05)
    assert step_error_estimate(rho, decay_gen(), grid) <= 1e-8
    assert step_error_estimate(rho, GeneratorSpec(zero(2)), grid) == 0.0


def test_rk4_order():
    om = 2 * math.pi * 0.05
    gen = GeneratorSpec(SIGMA_X * (om / 2), (), ((0.05, SIGMA_MINUS, SIGMA_MINUS),))
    rho = basis_ket("0").dm()
    e1 = step_error_estimate(rho, gen, TimeGrid(0.0, 40.0, 0.4))
    e2 = step_error_estimate(rho, gen, TimeGrid(0.0, 40.0, 0.2))
    assert e1 / e2 >= 8


def test_invariants_on_cascaded_run():
    net = build_cascaded(DeviceParams(), include_data=False)
    tr = evolve(ψplus_waveguide(), net.generator, TimeGrid(0.0, 100.0, 0.05, 20), store_states=True)
    for r in tr.states:
        m = r.entries
        assert abs(np.trace(m) - 1) <= 1e-8
        assert np.max(np.abs(m - m.conj().T)) <= 1e-10
        assert np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0] >= -1e-7


def test_subspace_matches_full():
    net = build_cascaded(DeviceParams(eta=0.9), include_data=False)
    grid = TimeGrid(0.0, 30.0, 0.05)
    full = evolve(ψplus_waveguide(), net.generator, grid).final_state
    sub = evolve(ψplus_waveguide(), net.generator, grid, subspace=excitation_subspace(4, 1)).final_state
    assert full.norm_max_diff(sub) <= 1e-12


def test_evolve_many_bitwise_equals_serial():
    envs = [lambda t, a=a: a * np.sin(0.1 * np.asarray(t)) for a in (0.01, 0.02, 0.03)]
    op = SIGMA_X * 0.5
    gens = [GeneratorSpec(zero(2), ((e, op),), ((G, SIGMA_MINUS, SIGMA_MINUS),)) for e in envs]
    grid = TimeGrid(0.0, 20.0, 0.05, 4)
    rho = basis_ket("0").dm()
    batch = evolve_many(rho, gens, grid, [NUMBER])
    for g, b in zip(gens, batch):
        s = evolve(rho, g, grid, [NUMBER])
        assert np.array_equal(s.final_state.entries, b.final_state.entries)
        assert np.array_equal(s.expectations, b.expectations)


def test_rhs_trace_free():
    rho = DensityMatrix(np.array([[0.6, 0.2j], [-0.2j, 0.4]]))
    assert abs(liouvillian_rhs(decay_gen(), rho).trace()) < 1e-15


def test_timegrid_validation():
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0.3)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0.0, 0.1)


def test_divergence_raises():
    gen = GeneratorSpec(SIGMA_X * 1e6)
    with pytest.raises(IntegrationError):
        evolve(basis_ket("0").dm(), gen, TimeGrid(0.0, 100.0, 1.0))
