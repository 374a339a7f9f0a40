import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mechesc.linalg import eigvals, hessenberg, jacobi_eigh, spd_power


def _match(ours, ref):
    """Greedy pairing of two eigenvalue lists; returns the largest gap."""
    ref = list(ref)
    worst = 0.0
    for e in ours:
        k = int(np.argmin([abs(e - r) for r in ref]))
        worst = max(worst, abs(e - ref.pop(k)))
    return worst


@given(st.integers(1, 9), st.integers(0, 2**31 - 1))
def test_eigvals_matches_lapack(n, seed):
    a = np.random.default_rng(seed).standard_normal((n, n))
    ours = eigvals(a)
    ref = np.linalg.eigvals(a)
    assert _match(ours, ref) <= 1e-9 * max(1.0, np.max(np.abs(ref)))


def test_eigvals_known_spectra():
    rot = np.array([[0.0, -2.0], [2.0, 0.0]])
    assert np.allclose(eigvals(rot), [-2j, 2j])
    jordan = np.array([[3.0, 1.0], [0.0, 3.0]])
    assert np.allclose(eigvals(jordan), [3.0, 3.0], atol=1e-7)
    assert np.allclose(eigvals(np.diag([4.0, -1.0, 2.0])), [-1.0, 2.0, 4.0])
    companion = np.array([[0, 0, 0, -24], [1, 0, 0, 50], [0, 1, 0, -35], [0, 0, 1, 10]], float)
    assert np.allclose(eigvals(companion), [1, 2, 3, 4], atol=1e-9)


def test_eigvals_sorted_and_conjugate_pairs():
    a = np.random.default_rng(4).standard_normal((7, 7))
    ev = eigvals(a)
    assert np.all(np.diff(ev.real) >= 0)
    cplx = ev[np.abs(ev.imag) > 1e-12]
    assert np.allclose(np.sort_complex(cplx), np.sort_complex(cplx.conj()))


def test_eigvals_rejects_bad_input():
    with pytest.raises(ValueError):
        eigvals(np.ones((2, 3)))
    with pytest.raises(ValueError):
        eigvals(np.array([[np.nan]]))


def test_hessenberg_is_similar_and_upper_hessenberg():
    a = np.random.default_rng(5).standard_normal((6, 6))
    h = hessenberg(a.copy())
    assert np.allclose(np.tril(h, -2), 0.0, atol=1e-12)
    assert np.allclose(np.sort_complex(np.linalg.eigvals(h)), np.sort_complex(np.linalg.eigvals(a)))


@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_jacobi_matches_lapack(n, seed):
    b = np.random.default_rng(seed).standard_normal((n, n))
    a = b + b.T
    w, v = jacobi_eigh(a)
    assert np.allclose(w, np.linalg.eigvalsh(a), atol=1e-10)
    assert np.allclose(v.T @ v, np.eye(n), atol=1e-10)
    assert np.allclose(a @ v, v * w, atol=1e-9)


def test_jacobi_rejects_asymmetric():
    with pytest.raises(ValueError):
        jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))


@given(arrays(float, (3, 3), elements=st.floats(-2, 2)))
def test_spd_inverse_square_root(b):
    a = b @ b.T + np.eye(3)
    r = spd_power(a, -0.5)
    assert np.allclose(r @ a @ r, np.eye(3), atol=1e-10)
    assert np.allclose(r, r.T)


def test_spd_power_rejects_indefinite():
    with pytest.raises(ValueError):
        spd_power(np.diag([1.0, -1.0]), 0.5)
