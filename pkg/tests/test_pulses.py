import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from chiral_interconnect.protocol import photon_gamma
from chiral_interconnect.pulses import (
    COUPLERS, DistortionModel, IdealPulses, PulseSet, distort, ideal_coupling, sech_photon, segmented_envelope,
)

GAMMA = 2 * math.pi * 0.017


def test_sech_photon_basics():
    assert abs(sech_photon(0.0, photon_gamma) - math.sqrt(photon_gamma) / 2) < 1e-15
    val, _ = quad(lambda t: sech_photon(t, photon_gamma) ** 2, -np.inf, np.inf)
    assert abs(val - 1) < 1e-10
    # full width at half maximum of |f|^2 is 4 acosh(sqrt 2)/gph, about 80 ns at 7 MHz
    fwhm = 4 * math.acosh(math.sqrt(2)) / photon_gamma
    assert abs(sech_photon(fwhm / 2, photon_gamma) ** 2 / sech_photon(0.0, photon_gamma) ** 2 - 0.5) < 1e-12
    assert 75 < fwhm < 85
    assert np.all(np.isfinite(sech_photon(np.array([-1e6, 1e6]), photon_gamma)))


def printed_form(t, gamma, gph):
    """Closed form evaluated literally; fine for moderate |gph t|."""
    x = gph * t
    r = gamma / gph
    e = math.exp(x)
    return gph / (4 * math.cosh(x / 2)) * ((1 + e) * r + 1 - e) / math.sqrt((1 + e) * r - e)


@pytest.mark.parametrize("gph_frac", [0.2, 0.41, 0.9, 1.0])
def test_ideal_coupling_matches_printed_form(gph_frac):
    gph = gph_frac * GAMMA
    for t in np.linspace(-18 / gph, 18 / gph, 301):
        ref = printed_form(t, GAMMA, gph)
        assert abs(ideal_coupling(t, GAMMA, gph) - ref) <= 1e-11 * abs(ref) + 1e-300


def test_ideal_coupling_sech_limit():
    t = np.linspace(-200, 200, 801)
    g = ideal_coupling(t, GAMMA, GAMMA)
    np.testing.assert_allclose(g, (GAMMA / 2) / np.cosh(GAMMA * t / 2), rtol=1e-12, atol=1e-300)


def test_ideal_coupling_plateau_and_finiteness():
    far = 40 / photon_gamma
    lo, hi = ideal_coupling(np.array([-far, far]), GAMMA, photon_gamma)
    assert math.isfinite(lo) and math.isfinite(hi)
    plateau = (photon_gamma / 2) * math.sqrt(GAMMA / photon_gamma - 1)
    assert abs(hi - plateau) < 1e-12
    assert lo < 1e-9
    with pytest.raises(ValueError):
        ideal_coupling(0.0, GAMMA, 2 * GAMMA)


def test_ideal_coupling_continuity():
    t = np.arange(-300, 300, 0.05)
    g = ideal_coupling(t, GAMMA, photon_gamma)
    assert np.max(np.abs(np.diff(g))) <= 1e-3 * g.max()


def test_ideal_pulses_time_reversed_absorber():
    env = IdealPulses(photon_gamma, center=100.0).envelopes("right", GAMMA)
    t = np.linspace(0, 200, 11)
    np.testing.assert_allclose(env["C57"](t), env["C13"](200 - t), atol=1e-15)


def test_pulseset_constant_and_phase():
    seg = np.zeros((4, 8, 2))
    seg[..., 0] = 0.03
    ps = PulseSet(seg)
    t = np.linspace(0, 200, 101)
    np.testing.assert_allclose(segmented_envelope(ps, "C13", t), 0.03, atol=1e-15)
    flipped = ps.with_(phases=np.array([math.pi, 0, 0, 0]))
    np.testing.assert_allclose(segmented_envelope(flipped, "C13", t), -0.03, atol=1e-15)
    with pytest.raises(ValueError):
        segmented_envelope(ps, "C13", np.array([250.0]))


def test_seed_from_ideal_rms():
    ps = PulseSet.from_ideal(GAMMA, photon_gamma)
    t = np.linspace(0, 200, 4001)
    for c in COUPLERS:
        ref = ideal_coupling(t - 100 if c in ("C13", "C24") else 100 - t, GAMMA, photon_gamma)
        rms = np.sqrt(np.mean((ps.envelope(c)(t).real - ref) ** 2))
        assert rms <= 0.05 * np.sqrt(np.mean(ref**2))


def test_pulseset_layout_and_bounds():
    assert PulseSet.n_params == 73
    assert len(PulseSet.parameter_names()) == 73
    with pytest.raises(ValueError):
        PulseSet(np.full((4, 8, 2), 0.2))
    with pytest.raises(ValueError):
        PulseSet(np.zeros((4, 7, 2)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_pulseset_round_trips(seed):
    rng = np.random.default_rng(seed)
    v = np.concatenate([rng.uniform(-0.05, 0.05, 64), rng.normal(size=4) * 0.01, rng.normal(size=4), [rng.normal()]])
    ps = PulseSet.from_vector(v)
    assert np.array_equal(ps.to_vector(), v)
    assert np.array_equal(PulseSet.from_dict(ps.to_dict()).to_vector(), v)


def test_distortion_models():
    env = IdealPulses(photon_gamma, center=100.0).envelopes("right", GAMMA)["C13"]
    t = np.linspace(0, 200, 2001)
    assert distort(env, DistortionModel()) is env
    pulse = lambda t: 0.05 * np.exp(-((np.asarray(t) - 100) / 5.0) ** 2)
    slow = distort(pulse, DistortionModel(time_constant=500.0))
    assert np.max(np.abs(slow(t))) < 0.5 * 0.05
    ph = distort(env, DistortionModel(phase_offset=0.8))
    np.testing.assert_allclose(np.abs(ph(t)), np.abs(env(t)), atol=1e-12)
    with pytest.raises(ValueError):
        DistortionModel(time_constant=-1.0)


def test_lowpass_matches_convolution_oracle():
    # single-pole filter equals discrete convolution with (1-a) a^k
    pulse = lambda t: np.where(np.asarray(t) < 50, 0.04, 0.0)
    dt, tau = 0.05, 10.0
    out = distort(pulse, DistortionModel(time_constant=tau), (0.0, 200.0), dt)
    grid = dt * np.arange(4001)
    a = math.exp(-dt / tau)
    kernel = (1 - a) * a ** np.arange(4001)
    ref = np.convolve(pulse(grid), kernel)[:4001]
    np.testing.assert_allclose(out(grid).real, ref, atol=1e-14)
