import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sclab import connlab as C
from sclab import reduction as R
from sclab import twistor as T


@given(st.integers(0, 10_000), st.sampled_from([2, 4, 6]))
def test_random_j_is_compatible(seed, d):
    w = C.standard_omega(d)
    j = T.random_compatible_j(w, seed)
    r = j.residuals()
    assert r["square"] < 1e-12 * max(1.0, np.max(np.abs(j.j)) ** 2)
    assert r["compatible"] < 1e-12 * max(1.0, np.max(np.abs(j.j)) ** 2)
    assert r["symmetric"] < 1e-12 * max(1.0, np.max(np.abs(j.j)) ** 2)
    assert r["min_eig"] > 0


def test_non_standard_omega(rng):
    G = np.eye(4) + 0.3 * rng.standard_normal((4, 4))
    w = G.T @ C.standard_omega(4) @ G
    assert T.random_compatible_j(w, rng).is_valid(1e-10)


def test_standard_pair_and_distinct_seeds():
    j0 = T.CompatibleJ(T.standard_j(2), C.standard_omega(2))
    np.testing.assert_array_equal(j0.B, np.eye(2))
    a = T.random_compatible_j(C.standard_omega(2), 1).j
    b = T.random_compatible_j(C.standard_omega(2), 2).j
    assert np.max(np.abs(a - b)) > 1e-3


def test_projections(rng):
    j0 = T.CompatibleJ(T.standard_j(2), C.standard_omega(2))
    jp, jm = T.j_projections(j0)
    np.testing.assert_allclose(jp, 0.5 * np.array([[1, 1j], [-1j, 1]]))
    j = T.random_compatible_j(C.standard_omega(4), rng)
    jp, jm = T.j_projections(j)
    for P in (jp, jm):
        assert np.max(np.abs(P @ P - P)) < 1e-13
    assert np.max(np.abs(jp @ jm)) < 1e-13
    v = rng.standard_normal(4)
    np.testing.assert_allclose(j.j @ (jp @ v), 1j * (jp @ v), atol=1e-13)


def test_defect_flat_and_ricci_type(rng):
    j = T.random_compatible_j(C.standard_omega(4), rng)
    assert T.integrability_defect(np.zeros((4, 4, 4, 4)), j) == 0.0
    ch = R.build_chart(R.SpElement.complex_structure(6), np.eye(6)[0], 0.2)
    cp = C.curvature(R.reduced_connection(ch), R.reduced_form_field(ch), np.array([0.05, -0.02, 0.01, 0.03]))
    assert np.max(np.abs(cp.R)) > 0.1
    for _ in range(50):
        assert T.integrability_defect(cp, T.random_compatible_j(cp.omega, rng)) < 1e-9


def test_defect_with_w(rng):
    w = C.standard_omega(4)
    Rw = T.random_w_curvature(w, rng, 1.0)
    E, W_ = C.decompose(Rw, w)
    assert np.max(np.abs(E)) < 1e-12 and np.max(np.abs(W_)) == pytest.approx(1.0)
    Re = T.random_ricci_type_curvature(w, rng)
    defects = [T.integrability_defect(Re + Rw, T.random_compatible_j(w, rng)) for _ in range(50)]
    assert max(defects) > 1e-3


def test_torsion_correct(rng):
    w0 = C.standard_omega(4)
    omega = C.SymplecticFormField.constant(4, w0)
    nab = T.almost_symplectic_example(w0, rng)
    pts = [rng.uniform(-1, 1, 4) for _ in range(3)]
    assert np.max(np.abs(C.torsion(nab, pts[0]))) > 0.1
    fixed = T.torsion_correct(nab, omega, pts)
    for p in pts:
        assert np.max(np.abs(C.torsion(fixed, p))) < 1e-12
        assert np.max(np.abs(C.nabla_omega(fixed, omega, p))) < 1e-12
        ids = C.curvature(fixed, omega, p).identities()
        assert max(ids.values()) < 1e-9
    # torsion-free input is unchanged
    sym = C.symplectize(C.ConnectionField.flat(4), omega)
    again = T.torsion_correct(sym, omega)
    np.testing.assert_allclose(again.at(pts[0]), sym.at(pts[0]), atol=1e-15)


def test_torsion_correct_rejects_non_parallel(rng):
    G = rng.standard_normal((2, 2, 2))
    with pytest.raises(T.InvalidInputError):
        T.torsion_correct(C.ConnectionField.constant(2, G), C.SymplecticFormField.standard(2), [np.zeros(2)])


@pytest.mark.parametrize("d,samples,expected", [(2, 10, 4), (4, 40, 20)])
def test_uniqueness_rank(d, samples, expected):
    info = T.uniqueness_rank(d, samples, seed=0)
    assert info["rank"] == expected == info["expected"]
    assert info["kernel_residual"] > 1e-8  # no nonzero B survives


def test_uniqueness_needs_samples():
    with pytest.raises(T.NeedMoreSamplesError):
        T.uniqueness_rank(4, 5)


def test_darboux_basis(rng):
    G = np.eye(4) + 0.4 * rng.standard_normal((4, 4))
    w = G.T @ C.standard_omega(4) @ G
    F = T.darboux_basis(w)
    np.testing.assert_allclose(F.T @ w @ F, C.standard_omega(4), atol=1e-12)
