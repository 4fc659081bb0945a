import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from kerrcat.errors import InvalidState, LayoutMismatch, NonFinite, TruncationTooSmall
from kerrcat.hilbert import (HilbertLayout, OperatorMatrix, QuantumState, coherent, displacement, expectation,
                             fidelity_trace, fock, make_ladder, matrix_exponential, parity_operator,
                             photon_distribution, project_qubit, reduce_to_resonator, superposition,
                             trace_distance, truncation_guard)

from oracles import coherent_vec, normalized


def test_truncation_guard_grows_with_alpha():
    assert truncation_guard(0) == 10
    assert truncation_guard(1.42) >= 1.42**2 + 6 * 1.42 + 10
    assert truncation_guard(2.0) > truncation_guard(1.0)


def test_layout_dims_and_validation():
    lay = HilbertLayout(10, 2)
    assert lay.dim == 20
    assert lay.resonator_only() == HilbertLayout(10)
    with pytest.raises(ValueError):
        HilbertLayout(1)
    with pytest.raises(ValueError):
        HilbertLayout(10, 3)


def test_coherent_matches_analytic_amplitudes():
    lay = HilbertLayout(40)
    psi = coherent(1.42 * np.exp(0.3j), lay)
    ref = normalized(coherent_vec(1.42 * np.exp(0.3j), 40))
    assert np.max(np.abs(psi.data - ref)) < 1e-12


def test_displacement_matches_scipy_and_vacuum():
    lay = HilbertLayout(40)
    alpha = 1.42 - 0.4j
    D = displacement(alpha, lay)
    a = np.diag(np.sqrt(np.arange(1, 40)), 1)
    ref = expm(alpha * a.T - np.conj(alpha) * a)
    assert np.max(np.abs(D.matrix - ref)) < 1e-11
    vac = fock(lay, 0)
    assert fidelity_trace(D.apply(vac), coherent(alpha, lay)) > 1 - 1e-10


def test_displacement_refuses_small_space():
    with pytest.raises(TruncationTooSmall):
        displacement(3.0, HilbertLayout(12))


@pytest.mark.parametrize("scale", [1e-3, 0.5, 3.0, 40.0])
def test_pade_expm_against_scipy(scale):
    rng = np.random.default_rng(7)
    A = scale * (rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12)))
    ref = expm(A)
    assert np.max(np.abs(matrix_exponential(A) - ref)) <= 1e-11 * max(1.0, np.max(np.abs(ref)))


def test_states_are_immutable_and_validated():
    lay = HilbertLayout(5)
    psi = fock(lay, 2)
    with pytest.raises(AttributeError):
        psi.data = None
    with pytest.raises(ValueError):
        psi.data[0] = 1.0
    with pytest.raises(InvalidState):
        QuantumState(lay, np.ones(5))
    with pytest.raises(NonFinite):
        QuantumState(lay, np.full(5, np.nan))
    with pytest.raises(LayoutMismatch):
        QuantumState(lay, np.ones(4) / 2)
    bad = np.diag([1.2, -0.2, 0, 0, 0])
    with pytest.raises(InvalidState):
        QuantumState(lay, bad)


def test_ladder_and_parity():
    lay = HilbertLayout(8)
    a, ad, n = make_ladder(lay)
    assert np.allclose((ad @ a).matrix, n.matrix)
    par = parity_operator(lay)
    assert expectation(par, fock(lay, 3)) == pytest.approx(-1.0)
    assert expectation(par, fock(lay, 4)) == pytest.approx(1.0)


def test_cat_parity_and_superposition():
    lay = HilbertLayout(40)
    odd = superposition([1.42, -1.42], [1, -1], lay)
    even = superposition([1.42, -1.42], [1, 1], lay)
    assert expectation(parity_operator(lay), odd).real == pytest.approx(-1.0, abs=1e-12)
    assert expectation(parity_operator(lay), even).real == pytest.approx(1.0, abs=1e-12)


def test_fidelity_pure_mixed_consistency():
    lay = HilbertLayout(20)
    u, v = coherent(1.0, lay), coherent(0.5j, lay)
    f = fidelity_trace(u, v)
    assert f == pytest.approx(math.exp(-abs(1.0 - 0.5j) ** 2), rel=1e-10)
    assert fidelity_trace(u.to_density(), v) == pytest.approx(f, rel=1e-12)
    assert fidelity_trace(u.to_density(), v.to_density()) == pytest.approx(f, rel=1e-12)


def test_partial_trace_and_projection():
    lay = HilbertLayout(6, 2)
    v = np.zeros(12, complex)
    v[1] = v[6 + 2] = 1 / math.sqrt(2)
    st_ = QuantumState(lay, v)
    red = reduce_to_resonator(st_)
    assert np.allclose(np.diag(red.data).real, [0, 0.5, 0.5, 0, 0, 0])
    g, p = project_qubit(st_, 0)
    assert p == pytest.approx(0.5)
    assert fidelity_trace(g, fock(HilbertLayout(6), 1)) == pytest.approx(1.0)
    assert photon_distribution(st_)[2] == pytest.approx(0.5)


def test_trace_distance_bounds():
    lay = HilbertLayout(4)
    r0, r1 = fock(lay, 0).density(), fock(lay, 1).density()
    assert trace_distance(r0, r0) == pytest.approx(0.0, abs=1e-15)
    assert trace_distance(r0, r1) == pytest.approx(1.0)


# ---------------------------------------------------------------- randomized invariants

_alpha = st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False)


@settings(max_examples=100, deadline=None)
@given(alpha=_alpha)
def test_displacement_unitarity_random(alpha):
    lay = HilbertLayout(truncation_guard(alpha) + 4)
    D = displacement(alpha, lay).matrix
    assert np.max(np.abs(D.conj().T @ D - np.eye(lay.dim))) < 1e-10


@settings(max_examples=100, deadline=None)
@given(alpha=_alpha, seed=st.integers(0, 2**32 - 1))
def test_density_hermitian_unit_trace_random(alpha, seed):
    lay = HilbertLayout(truncation_guard(alpha))
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(3))
    rho = sum(wi * coherent(alpha * np.exp(2j * math.pi * k / 3), lay).density() for k, wi in enumerate(w))
    s = QuantumState(lay, rho)
    assert np.trace(s.data).real == pytest.approx(1.0, abs=1e-9)
    assert np.max(np.abs(s.data - s.data.conj().T)) < 1e-14
    assert OperatorMatrix(lay, np.eye(lay.dim)).apply(s).data.shape == rho.shape
