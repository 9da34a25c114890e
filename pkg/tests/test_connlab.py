import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sclab import connlab as C
from sclab import jets as J
from sclab import wkb as W
from sclab.jets import Jet

x0, x1, x2, x3 = J.variables(4)


def exp_form():
    """omega = e^{x0} dx0 ^ dx1 on R^2."""
    e = J.fn("exp", x0)
    return C.SymplecticFormField.from_exprs(2, [[0.0, e], [-e, 0.0]])


def curved_form_4d():
    g = 1.0 + 0.3 * x0 * x0 + 0.2 * J.fn("sin", x2)
    h = 1.0 + 0.2 * J.fn("cos", x1) * x3
    b = 0.3 * J.fn("sin", x0)
    a = 0.3 * J.fn("cos", x0) * x2
    W_ = [[0.0, a, g, 0.0], [-a, 0.0, -b, h], [-g, b, 0.0, 0.0], [0.0, -h, 0.0, 0.0]]
    return C.SymplecticFormField.from_exprs(4, W_)


def random_symmetric_low(rng, d, scale=1.0):
    return C.KoszulElement.random(0, 3, d, rng).t * scale / 6


def fd_nabla_omega(nabla, omega, x, h=1e-5):
    """Covariant derivative of omega with finite-difference partials."""
    d = omega.dim
    dw = np.stack([(omega.at(x + h * e) - omega.at(x - h * e)) / (2 * h) for e in np.eye(d)])
    G, w = nabla.at(x), omega.at(x)
    return dw - np.einsum("mij,mk->ijk", G, w) - np.einsum("mik,jm->ijk", G, w)


# -- forms ------------------------------------------------------------------


def test_form_checks(rng):
    pts = [rng.uniform(-0.5, 0.5, 4) for _ in range(20)]
    res = curved_form_4d().check(pts)
    assert res["ok"] and res["closedness"] < 1e-9 and res["min_abs_det"] > 0


def test_non_closed_form_detected():
    f = x1
    omega = C.SymplecticFormField.from_exprs(4, [[0, 1.0, 0, f], [-1.0, 0, 0, 0], [0, 0, 0, 1.0], [-f, 0, -1.0, 0]])
    # d(x1 dx0^dx3) = dx1^dx0^dx3 != 0
    assert omega.check([np.zeros(4)])["closedness"] == pytest.approx(1.0)


def test_degenerate_form_raises():
    omega = C.SymplecticFormField.from_exprs(2, [[0.0, x0], [-x0, 0.0]])
    with pytest.raises(C.NondegeneracyError):
        C.curvature(C.ConnectionField.flat(2), omega, np.zeros(2))
    with pytest.raises(C.NondegeneracyError):
        C.inv_omega(np.zeros((2, 2)))


# -- torsion and nabla omega --------------------------------------------------


def test_torsion_definitions(rng):
    G = rng.standard_normal((3, 3, 3))
    Gs = G + G.transpose(0, 2, 1)
    assert np.max(np.abs(C.torsion(C.ConnectionField.constant(3, Gs), np.zeros(3)))) == 0.0
    G1 = np.zeros((2, 2, 2))
    G1[0, 0, 1] = 1.0
    T = C.torsion(C.ConnectionField.constant(2, G1), np.zeros(2))
    assert T[0, 0, 1] == 1.0 and T[0, 1, 0] == -1.0
    Tr = C.torsion(C.ConnectionField.constant(3, G), np.zeros(3))
    assert np.array_equal(Tr, -Tr.transpose(0, 2, 1))


def test_nabla_omega_hand_values():
    flat = C.ConnectionField.flat(2)
    assert np.max(np.abs(C.nabla_omega(flat, C.SymplecticFormField.standard(2), np.zeros(2)))) == 0.0
    for a in (-0.7, 0.0, 0.4):
        N = C.nabla_omega(flat, exp_form(), np.array([a, 0.3]))
        assert N[0, 0, 1] == pytest.approx(np.exp(a), rel=1e-14)


# -- symplectize --------------------------------------------------------------


def test_symplectize_fixed_point():
    omega = C.SymplecticFormField.standard(4)
    flat = C.ConnectionField.flat(4)
    out = C.symplectize(flat, omega)
    assert np.max(np.abs(out.at(np.full(4, 0.3)))) == 0.0


def test_symplectize_exp_form(rng):
    omega = exp_form()
    out = C.symplectize(C.ConnectionField.flat(2), omega)
    pts = [rng.uniform(-1, 1, 2) for _ in range(50)]
    assert max(np.max(np.abs(out.at(p))) for p in pts) > 0.1
    for p in pts:
        assert np.max(np.abs(C.nabla_omega(out, omega, p))) < 1e-9
        assert np.max(np.abs(fd_nabla_omega(out, omega, p))) < 1e-8


def test_symmetric_perturbation_stays_symplectic(rng):
    omega = curved_form_4d()
    base = C.symplectize(C.ConnectionField.flat(4), omega)
    S_low = random_symmetric_low(rng, 4)

    def pert(x):
        w = omega(x)
        return J.einsum("ijk,km->mij", S_low, C.inv_omega(w))

    nab = base + C.TensorField(4, pert, (4, 4, 4))
    for p in [rng.uniform(-0.4, 0.4, 4) for _ in range(10)]:
        assert np.max(np.abs(C.torsion(nab, p))) < 1e-12
        assert np.max(np.abs(C.nabla_omega(nab, omega, p))) < 1e-9


def test_symplectize_rejects_torsion():
    G = np.zeros((2, 2, 2))
    G[0, 0, 1] = 1.0
    with pytest.raises(C.ConnlabError):
        C.symplectize(C.ConnectionField.constant(2, G), exp_form(), [np.zeros(2)])


# -- curvature ----------------------------------------------------------------


def test_flat_curvature_vanishes():
    cp = C.curvature(C.ConnectionField.flat(4), C.SymplecticFormField.standard(4), np.zeros(4))
    for arr in (cp.R, cp.r, cp.E, cp.W):
        assert np.max(np.abs(arr)) == 0.0


def surface_connection():
    def sym(x, y):
        return C_stack(W.CURVED.sym(x[0], x[1], y[0], y[1]))

    return C.canonical_symmetric_connection(sym, C.SymplecticFormField.standard(2))


def C_stack(pair):
    a, l = pair
    return J.stack([a, l]) if isinstance(a, Jet) else np.array([a, l])


def test_surface_connection_curvature(rng):
    nab = surface_connection()
    omega = C.SymplecticFormField.standard(2)
    for p in [rng.uniform(-1, 1, 2) for _ in range(5)]:
        cp = C.curvature(nab, omega, p)
        ids = cp.identities()
        assert np.max(np.abs(cp.R)) > 0.1
        assert ids["bianchi"] < 1e-9 and ids["second_trace"] < 1e-9
        assert np.max(np.abs(C.nabla_omega(nab, omega, p))) < 1e-9
        # symmetric space: nabla R = 0
        G = nab.jet(p, 2)
        dR = C.covariant_derivative(C.curvature_jet(G), G.truncate(1), "uddd")
        assert np.max(np.abs(dR.value)) < 1e-8


def test_flat_symmetric_space_gives_zero_connection():
    def sym(x, y):
        return x * 2.0 - y

    nab = C.canonical_symmetric_connection(sym, C.SymplecticFormField.standard(2), [np.zeros(2)])
    assert np.max(np.abs(nab.at(np.array([0.3, -0.2])))) == 0.0


def test_symmetric_space_axiom_violation():
    def bad(x, y):
        return x * 3.0 - y * 2.0

    with pytest.raises(C.InvalidSymmetricSpaceError):
        C.canonical_symmetric_connection(bad, C.SymplecticFormField.standard(2), [np.zeros(2)])


@given(st.integers(0, 10_000))
def test_curvature_identities_property(seed):
    rng = np.random.default_rng(seed)
    omega = curved_form_4d()
    S_low = random_symmetric_low(rng, 4, 0.5)
    base = C.symplectize(C.ConnectionField.flat(4), omega)
    x = rng.uniform(-0.4, 0.4, 4)

    def pert(p):
        w = omega(p)
        lin = 1.0 + (p[0] * 0.5 if isinstance(p, Jet) else 0.5 * p[0])
        return J.einsum("ijk,km->mij", S_low, C.inv_omega(w)) * lin

    nab = base + C.TensorField(4, pert, (4, 4, 4))
    cp = C.curvature(nab, omega, x)
    ids = cp.identities()
    scale = max(1.0, float(np.max(np.abs(cp.R))))
    for key in ("antisymmetry", "bianchi", "ricci_symmetry", "second_trace", "rlow_pair_symmetry", "decomposition", "w_ricci_trace"):
        assert ids[key] / scale < 1e-9, key
    assert C.bianchi_check(cp.Rlow) < 1e-9 * scale
    assert C.curvature_space_membership(cp.Rlow, 1e-9 * scale)


def test_random_rlow_violates_bianchi(rng):
    t = C.KoszulElement.random(2, 2, 4, rng).t
    assert C.bianchi_check(t) > 1e-3


def test_e_part_lies_in_curvature_space(rng):
    w = C.standard_omega(4)
    r = rng.standard_normal((4, 4))
    r = r + r.T
    assert C.bianchi_check(C.e_part_low(r, w)) < 1e-12


def test_operator_rebuild_matches_index_formula(rng):
    w = C.standard_omega(6)
    r = rng.standard_normal((6, 6))
    r = r + r.T
    rho = np.linalg.solve(w, r)
    np.testing.assert_allclose(C.ricci_type_curvature(rho, w), C.e_part(rho, r, w, 3), atol=1e-13)
    # the rebuilt tensor has Ricci tensor r
    np.testing.assert_allclose(C.ricci(C.e_part(rho, r, w, 3)), r, atol=1e-12)


# -- preferred and Ricci-type data -------------------------------------------


def test_preferred_residual_flat_and_perturbed(rng):
    omega = C.SymplecticFormField.standard(4)
    flat = C.ConnectionField.flat(4)
    assert np.max(np.abs(C.preferred_residual(flat, omega, np.zeros(4)))) == 0.0
    S_low = random_symmetric_low(rng, 4, 0.1 * 6)
    w0 = C.standard_omega(4)

    def pert(p):
        q = p if isinstance(p, Jet) else Jet.variables(np.asarray(p, float), 0)
        out = J.einsum("ijk,km->mij", Jet.constant(S_low, 4, q.order), np.linalg.inv(w0)) * (q[0] * q[1] + q[2] * q[2] * q[3])
        return out if isinstance(p, Jet) else out.value

    nab = C.ConnectionField(4, pert)
    worst = max(np.max(np.abs(C.preferred_residual(nab, omega, rng.uniform(-1, 1, 4)))) for _ in range(5))
    assert worst > 1e-4


def test_ricci_type_invariants_flat():
    data, rep = C.ricci_type_invariants(C.ConnectionField.flat(2), C.SymplecticFormField.standard(2), [np.zeros(2), np.ones(2)])
    for d in data:
        assert np.max(np.abs(d.rho)) == 0 and np.max(np.abs(d.U)) == 0 and d.f == 0 and d.K == 0
    assert rep["K_constant"]


def test_ricci_type_invariants_rejects_w(rng):
    omega = C.SymplecticFormField.standard(4)
    c = C.KoszulElement.random(0, 4, 4, rng).t / 24
    w0 = C.standard_omega(4)

    def g(p):
        q = p if isinstance(p, Jet) else Jet.variables(np.asarray(p, float), 0)
        low = J.einsum("ijkl,l->ijk", Jet.constant(c, 4, q.order), q)
        out = J.einsum("ijk,km->mij", low, np.linalg.inv(w0))
        return out if isinstance(p, Jet) else out.value

    with pytest.raises(C.NotRicciTypeError):
        C.ricci_type_invariants(C.ConnectionField(4, g), omega, [np.full(4, 0.5)])


# -- Koszul operators ---------------------------------------------------------


def test_koszul_hand_expansion():
    t = np.zeros((2, 2))
    t[0, 1] = 1.0  # e1 (x) e2 in Lambda^1 (x) S^1
    at = C.koszul_a(C.KoszulElement(1, 1, t))
    assert (at.q, at.p) == (2, 0)
    np.testing.assert_array_equal(at.t, [[0.0, 1.0], [-1.0, 0.0]])  # e1 ^ e2 = e1 (x) e2 - e2 (x) e1


@pytest.mark.parametrize("dim", [2, 4])
def test_koszul_identity_all_degrees(dim, rng):
    for total in range(1, 5):
        for q in range(total + 1):
            p = total - q
            t = C.KoszulElement.random(q, p, dim, rng)
            lhs = np.zeros_like(t.t)
            if q:
                lhs += C.koszul_a(C.koszul_s(t)).t
            if p:
                lhs += C.koszul_s(C.koszul_a(t)).t
            assert np.max(np.abs(lhs - total * t.t)) < 1e-12 * max(1.0, np.max(np.abs(t.t)))
            if p >= 2:
                assert np.max(np.abs(C.koszul_a(C.koszul_a(t)).t)) < 1e-12 * max(1.0, np.max(np.abs(t.t)))
            if q >= 2:
                assert np.max(np.abs(C.koszul_s(C.koszul_s(t)).t)) < 1e-12 * max(1.0, np.max(np.abs(t.t)))


def test_koszul_lambda1_s2_dim4(rng):
    t = C.KoszulElement.random(1, 2, 4, rng)
    lhs = C.koszul_a(C.koszul_s(t)).t + C.koszul_s(C.koszul_a(t)).t
    assert np.max(np.abs(lhs - 3 * t.t)) < 1e-12 * np.max(np.abs(t.t))


def test_koszul_brute_force_matrices(rng):
    """Operator matrices built column by column give the same identity."""
    dim, q, p = 2, 1, 2
    shape = (dim,) * (q + p)
    n = dim ** (q + p)
    cols_as, cols_sa = [], []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        el = C.KoszulElement(q, p, e.reshape(shape))
        cols_as.append(C.koszul_a(C.koszul_s(el)).t.reshape(-1))
        cols_sa.append(C.koszul_s(C.koszul_a(el)).t.reshape(-1))
    M = np.column_stack(cols_as) + np.column_stack(cols_sa)
    P = np.column_stack([C.KoszulElement.project(q, p, c.reshape(shape)).t.reshape(-1) for c in np.eye(n)])
    np.testing.assert_allclose(M @ P, (p + q) * P, atol=1e-12)


def test_koszul_degree_errors():
    with pytest.raises(C.InvalidDegreeError):
        C.koszul_a(C.KoszulElement(1, 0, np.zeros(2)))
    with pytest.raises(C.InvalidDegreeError):
        C.koszul_s(C.KoszulElement(0, 1, np.zeros(2)))
    with pytest.raises(C.InvalidDegreeError):
        C.KoszulElement(1, 1, np.zeros(2))
