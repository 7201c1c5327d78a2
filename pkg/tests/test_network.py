import math

import numpy as np
import pytest

from chiral_interconnect.lindblad import GeneratorSpec, TimeGrid, evolve, liouvillian_rhs
from chiral_interconnect.network import (
    COUPLER_PAIRS, FULL_SITES, WAVEGUIDE_SITES, DeviceParams, build_cascaded, build_waveguide_only,
    collective_jump, drive_amplitude, parametric_coupling,
)
from chiral_interconnect.pulses import ideal_coupling
from chiral_interconnect.qops import (
    NUMBER, SIGMA_MINUS, DensityMatrix, Ket, Operator, basis_ket, embed, excitation_subspace, zero,
)

TWO = {"Q1": 0, "Q2": 1}


def psi_r():
    return Ket(np.array([0, 1j, 1, 0]) / math.sqrt(2))


def test_null_space_and_bright_state():
    p = DeviceParams()
    cl = collective_jump("A", "left", p, TWO)
    cr = collective_jump("A", "right", p, TWO)
    v = psi_r().amplitudes
    assert np.max(np.abs(cl.entries @ v)) < 1e-15
    np.testing.assert_allclose(cr.entries @ v, [math.sqrt(2), 0, 0, 0], atol=1e-15)
    ground = basis_ket("0" * 8).amplitudes
    assert np.max(np.abs(collective_jump("A", "left", p).entries @ ground)) == 0


def test_lossless_has_no_loss_operators():
    net = build_cascaded(DeviceParams(), include_data=False)
    assert net.loss_right.is_zero() and net.loss_left.is_zero()
    assert len(net.generator.lindblad_terms) == 2


def test_no_intra_module_correlated_decay():
    # expand sum of D[c] into pairwise D[s_j, s_l]: the Q1-Q2 and Q5-Q6 coefficients vanish
    net = build_cascaded(DeviceParams(kd=0.7), include_data=False)
    n = 4
    coef = np.zeros((n, n), complex)
    for rate, a, _ in net.generator.lindblad_terms:
        w = [np.vdot(embed(SIGMA_MINUS, j, n).entries.ravel(), a.entries.ravel()) for j in range(n)]
        coef += rate * np.outer(w, np.conj(w))
    assert abs(coef[0, 1]) < 1e-15 and abs(coef[2, 3]) < 1e-15


def position_model(kd: float, gamma: float):
    """Bidirectional waveguide QED at eta = 1 with emitters at 0, lambda/4, d, d + lambda/4."""
    kx = np.array([0.0, math.pi / 2, kd, kd + math.pi / 2])
    n = 4
    s = [embed(SIGMA_MINUS, j, n).entries for j in range(n)]
    h = np.zeros((16, 16), complex)
    terms = []
    for j in range(n):
        for l in range(n):
            if j < l and not ({j, l} in ({0, 1}, {2, 3})):
                x = s[j].conj().T @ s[l]
                h += (gamma / 2) * math.sin(abs(kx[j] - kx[l])) * (x + x.conj().T)
            terms.append((gamma * math.cos(kx[j] - kx[l]), Operator(s[j]), Operator(s[l])))
    return GeneratorSpec(Operator(h), (), tuple(terms))


@pytest.mark.parametrize("kd", [0.0, math.pi / 4, 1.3, 2.9])
def test_bidirectional_position_model_oracle(kd):
    # module B must sit wholly downstream of A, so place it one wavelength further out
    p = DeviceParams(kd=kd)
    ref = position_model(kd + 2 * math.pi, p.gamma)
    gen = build_cascaded(p, include_data=False).generator
    rng = np.random.default_rng(7)
    for _ in range(3):
        r = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
        rho = DensityMatrix(r @ r.conj().T / np.trace(r @ r.conj().T))
        assert liouvillian_rhs(gen, rho).norm_max_diff(liouvillian_rhs(ref, rho)) <= 1e-13


def waveguide_psi():
    a = np.zeros(16, complex)
    a[0b1000], a[0b0100] = 1 / math.sqrt(2), 1j / math.sqrt(2)
    return Ket(a).dm()


def fluxes(p, t_end=250.0):
    net = build_cascaded(p, include_data=False)
    g = net.gamma
    obs = [net.jump_right.dag() @ net.jump_right, net.jump_left.dag() @ net.jump_left,
           net.loss_right.dag() @ net.loss_right]
    tr = evolve(waveguide_psi(), net.generator, TimeGrid(0.0, t_end, 0.05, 1), obs,
                subspace=excitation_subspace(4, 1))
    return [np.trapezoid((g / 2) * tr.series(k).real, tr.times) for k in range(3)], tr


def test_leftward_flux_nullified():
    (right, left, _), _ = fluxes(DeviceParams())
    assert left <= 1e-6
    assert right >= 0.999


def test_attenuation_flux_oracle():
    # eta^2 of the emitted excitation reaches B; 1 - eta^2 leaves through the loss port
    (right, left, loss), _ = fluxes(DeviceParams(eta=math.sqrt(0.82)))
    assert abs(loss - 0.18) <= 1e-3
    assert abs(right - 0.82) <= 1e-3


def test_residual_exchange_spoils_directionality():
    p = DeviceParams()
    (right, left, _), _ = fluxes(p.replace(residual_exchange=p.gamma / 2))
    assert left / (left + right) > 1e-2


def test_constant_coupling_swap():
    g = 0.05
    env, op = parametric_coupling(("Q3", "Q1"), lambda t: g * np.ones_like(np.asarray(t, float)), FULL_SITES)
    gen = GeneratorSpec(zero(256), ((env, op),))
    rho0 = basis_ket("00100000").dm()
    t_swap = math.pi / (2 * g)
    n = 2000
    tr = evolve(rho0, gen, TimeGrid(0.0, t_swap, t_swap / n, n), [embed(NUMBER, 0, 8)],
                subspace=excitation_subspace(8, 1))
    assert abs(tr.series(0)[-1].real - 1) <= 1e-6


def test_zero_envelope_is_identity():
    env, op = parametric_coupling(("Q4", "Q2"), lambda t: np.zeros_like(np.asarray(t, float)))
    gen = GeneratorSpec(zero(256), ((env, op),))
    rho0 = basis_ket("00010000").dm()
    out = evolve(rho0, gen, TimeGrid(0.0, 10.0, 0.1), subspace=excitation_subspace(8, 1)).final_state
    assert out.norm_max_diff(rho0) == 0.0


def test_parametric_coupling_rejects_bad_pair():
    with pytest.raises(ValueError):
        parametric_coupling(("Q3", "Q2"), lambda t: t)


def test_ideal_envelope_emits_sech_photon():
    # single waveguide qubit + data qubit, envelope from the closed form, flux vs (gph/4) sech^2
    gamma = 2 * math.pi * 0.017
    gph = 0.4 * gamma
    n = 2
    sd, sw = embed(SIGMA_MINUS, 0, n), embed(SIGMA_MINUS, 1, n)
    env = lambda t: ideal_coupling(np.asarray(t) - 150.0, gamma, gph)
    gen = GeneratorSpec(zero(4), ((env, sw.dag() @ sd),), ((gamma, sw, sw),))
    tr = evolve(basis_ket("10").dm(), gen, TimeGrid(0.0, 300.0, 0.02, 10), [sw.dag() @ sw])
    flux = gamma * tr.series(0).real
    target = (gph / 4) / np.cosh(gph * (tr.times - 150.0) / 2) ** 2
    assert np.max(np.abs(flux - target)) <= 0.02 * target.max()


def test_drive_reduces_to_undriven():
    p = DeviceParams(eta=0.9, kd=0.4)
    a = build_waveguide_only(p, "right", 0.0).generator
    b = build_cascaded(p, include_data=False).generator
    assert a.h_static.norm_max_diff(b.h_static) == 0


def test_downstream_drive_prefactor():
    p = DeviceParams(eta=math.sqrt(0.82), kd=0.9)
    alpha = 0.3 + 0.1j
    h = build_waveguide_only(p, "right", alpha).generator.h_static.entries - \
        build_waveguide_only(p, "right", 0.0).generator.h_static.entries
    s = [embed(SIGMA_MINUS, j, 4).entries for j in range(4)]
    g0 = basis_ket("0000").amplitudes
    # amplitude of raising Q1 (upstream) and Q5 (downstream) from the ground state
    up = np.vdot(s[0].conj().T @ g0, h @ g0)
    down = np.vdot(s[2].conj().T @ g0, h @ g0)
    assert abs(down / up - p.eta * np.exp(1j * p.kd)) < 1e-14
    lower_up = np.vdot(g0, h @ (s[0].conj().T @ g0))
    lower_down = np.vdot(g0, h @ (s[2].conj().T @ g0))
    assert abs(lower_down / lower_up - p.eta * np.exp(-1j * p.kd)) < 1e-14
    assert abs(up - drive_amplitude(alpha, p.gamma)) < 1e-15


def test_device_params_validation():
    with pytest.raises(ValueError):
        DeviceParams(eta=1.2)
    with pytest.raises(ValueError):
        DeviceParams(t1_data=(1.0,) * 4, t2star_data=(3.0,) * 4)
    t = DeviceParams.measured()
    assert abs(t.eta**2 - 0.82) < 1e-15
    assert all(g >= 0 for g in t.gamma_phi_data)
    assert set(COUPLER_PAIRS) == {"C13", "C24", "C57", "C68"}
