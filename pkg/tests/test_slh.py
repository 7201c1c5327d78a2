import math

import numpy as np
import pytest

from chiral_interconnect import slh
from chiral_interconnect.lindblad import liouvillian_rhs
from chiral_interconnect.network import DeviceParams, WAVEGUIDE_SITES, build_cascaded, cascaded_slh, collective_jump
from chiral_interconnect.qops import DensityMatrix, Operator, embed, SIGMA_MINUS, zero

D = 4


def random_triplet(rng, n_ports=2, d=D):
    q, _ = np.linalg.qr(rng.normal(size=(n_ports, n_ports)) + 1j * rng.normal(size=(n_ports, n_ports)))
    l = [Operator(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) for _ in range(n_ports)]
    h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return slh.SLH(q, l, Operator(h + h.conj().T))


def same(a: slh.SLH, b: slh.SLH, tol=1e-10):
    return (np.max(np.abs(a.s - b.s)) <= tol
            and all(x.norm_max_diff(y) <= tol for x, y in zip(a.l, b.l))
            and a.h.norm_max_diff(b.h) <= tol)


def test_phase_composition():
    g = slh.series(slh.element_phase(0.3, D), slh.element_phase(1.1, D))
    assert same(g, slh.element_phase(1.4, D))
    assert np.array_equal(slh.element_phase(0.0, D).s, np.eye(1))


def test_beamsplitter_elements():
    assert np.allclose(slh.element_beamsplitter(1.0, D).s, np.eye(2))
    bs = slh.element_beamsplitter(math.sqrt(0.82), D)
    assert abs(abs(bs.s[0, 0]) ** 2 - 0.82) < 1e-15
    rng = np.random.default_rng(0)
    g = random_triplet(rng)
    out = slh.series(slh.element_beamsplitter(1.0, D), g)
    assert same(out, g)


def test_series_associative_and_unitary():
    rng = np.random.default_rng(1)
    a, b, c = (random_triplet(rng) for _ in range(3))
    left = slh.series(slh.series(a, b), c)
    right = slh.series(a, slh.series(b, c))
    assert same(left, right, 1e-10)
    s = left.s
    assert np.max(np.abs(s.conj().T @ s - np.eye(2))) <= 1e-10


def test_concat_properties():
    rng = np.random.default_rng(2)
    a, b = random_triplet(rng), random_triplet(rng, 1)
    c = slh.concat(a, b)
    assert c.n_ports == 3
    assert np.array_equal(c.h.entries, (a.h + b.h).entries)
    empty = slh.SLH(np.zeros((0, 0)), [], zero(D))
    assert same(slh.concat(a, empty), a)
    assert np.max(np.abs(c.s.conj().T @ c.s - np.eye(3))) <= 1e-10


def test_non_unitary_rejected():
    with pytest.raises(ValueError):
        slh.SLH(np.array([[2.0]]), [zero(D)], zero(D))
    with pytest.raises(ValueError):
        slh.series(random_triplet(np.random.default_rng(3)), slh.element_phase(0.0, D))


def test_scalar_extraction_preserves_generator():
    rng = np.random.default_rng(4)
    g = random_triplet(rng)
    g = slh.SLH(g.s, [g.l[0] + Operator(0.7j * np.eye(D)), g.l[1]], g.h)
    a = slh.to_generator(g, extract_scalars=True)
    b = slh.to_generator(g, extract_scalars=False)
    r = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    rho = DensityMatrix(r @ r.conj().T / np.trace(r @ r.conj().T))
    assert liouvillian_rhs(a, rho).norm_max_diff(liouvillian_rhs(b, rho)) <= 1e-13


@pytest.mark.parametrize("eta2,kd", [(1.0, 0.0), (0.82, 0.0), (0.82, 1.3), (0.5, math.pi / 4)])
def test_lowered_two_direction_system_matches_hand_built(eta2, kd):
    p = DeviceParams(eta=math.sqrt(eta2), kd=kd)
    g4 = slh.concat(cascaded_slh(p, "right", WAVEGUIDE_SITES), cascaded_slh(p, "left", WAVEGUIDE_SITES))
    gen = slh.to_generator(g4)
    ref = build_cascaded(p, include_data=False).generator
    rng = np.random.default_rng(5)
    r = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    rho = DensityMatrix(r @ r.conj().T / np.trace(r @ r.conj().T))
    # SLH lindblads carry sqrt(gamma/2); hand-built terms carry rate gamma/2
    assert liouvillian_rhs(gen, rho).norm_max_diff(liouvillian_rhs(ref, rho)) <= 1e-12
    assert gen.h_static.norm_max_diff(ref.h_static) <= 1e-12
