import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sclab import jets as J
from sclab import wkb as W

coord = st.floats(-1.5, 1.5)
point = st.tuples(coord, coord)


def test_symmetry_values():
    s = W.symmetry((1, 2), (0, 0))
    assert s.a == 2.0
    assert s.l == pytest.approx(4 * math.cosh(1.0), abs=1e-12)
    assert s.l == pytest.approx(6.1723, abs=1e-4)
    assert W.s_can((0, 0), (1, 0), (0, 1)) == pytest.approx(-math.sinh(1.0), abs=1e-14)
    assert W.s_can((0, 0), (1, 0), (0, 1)) == pytest.approx(-1.17520, abs=1e-5)
    assert W.s_can((0.3, 1), (0.3, 2), (0.3, -1)) == 0.0
    assert W.s_flat((0, 0), (1, 0), (0, 1)) == -1.0
    assert W.symmetry((0.4, 0.2), (0.4, 0.2)) == W.PhasePoint(0.4, 0.2)


def test_phase_point_rejects_nonfinite():
    with pytest.raises(ValueError):
        W.PhasePoint(float("nan"), 0.0)


@given(point, point, point)
def test_symmetric_space_laws(x, y, z):
    res = W.symmetry_law_residuals([(x, y, z)])
    assert res["involution"] < 1e-12
    assert res["fixed"] < 1e-15
    assert res["unit_det"] < 1e-12
    assert res["composition"] < 1e-9


@given(point, point, point, point)
def test_phase_admissible(x, y, z, w):
    flat = W.check_admissible(W.FLAT, [(x, y, z, w)])
    curved = W.check_admissible(W.CURVED, [(x, y, z, w)])
    assert max(flat.values()) < 1e-12
    assert max(curved.values()) < 1e-10


def test_cocycle(rng):
    quads = [W.random_points(rng, 4) for _ in range(30)]
    assert W.cocycle_defect(W.FLAT, quads) < 1e-12
    assert W.cocycle_defect(W.CURVED, quads) > 1e-3


@given(point, point, point)
def test_triple_fixed_point(x, y, z):
    X = W.triple_fixed_point(x, y, z)
    assert W.fixed_point_residual(x, y, z, X) < 1e-9 * max(1.0, abs(X.l))
    X, Y, Z = W.phi_map(x, y, z)
    # s_x(Z) closes the triangle back to X
    s = W.symmetry(x, Z)
    assert abs(s.a - X.a) < 1e-12 and abs(s.l - X.l) < 1e-9 * max(1.0, abs(X.l))


def test_jacobian(rng):
    assert W.flat_jacobian() == pytest.approx(16.0, abs=1e-12)
    for _ in range(20):
        x, y, z = W.random_points(rng, 3)
        assert W.jac_phi(x, y, z) > 0
        moved = [W.PhasePoint(p.a, p.l + dl) for p, dl in zip((x, y, z), rng.uniform(-1, 1, 3))]
        assert W.jac_phi(*moved) == pytest.approx(W.jac_phi(x, y, z), rel=1e-9)
        jac = W.amplitude("JacSqrt", x, y, z)
        pf = W.amplitude("Pfamily", x, y, z, W.sqrt_cosh)
        assert jac == pytest.approx(pf, rel=1e-6)
        raw = math.sqrt(W.jac_phi(x, y, z))
        assert raw / pf == pytest.approx(4.0, rel=1e-6)


def test_amplitudes_trivial():
    o = (0.0, 0.0)
    for kind in W.AMPLITUDE_KINDS:
        assert W.amplitude(kind, o, o, o, W.sqrt_cosh) == pytest.approx(1.0, abs=1e-12)
    assert W.amplitude("A0", (0, 0), (1, 0), (0, 0)) == pytest.approx(math.cosh(1.0))


def test_amplitude_errors():
    with pytest.raises(W.InvalidKernelError):
        W.Amplitude("bogus")
    with pytest.raises(W.InvalidKernelError):
        W.Amplitude("Pfamily")
    amp = W.Amplitude("Pfamily", lambda t: np.asarray(t, float))
    with pytest.raises(W.AmplitudeSingularityError):
        amp.on_a(0.0, 0.5, 0.5)
    with pytest.raises(W.InvalidKernelError):
        W.WkbKernel(0.0)


def test_poisson():
    a, l = J.variables(2)
    A, L = J.ScalarField(2, a), J.ScalarField(2, l)
    assert W.poisson_bracket(A, L, (0.3, 0.1)) == -1.0
    u = J.ScalarField(2, J.fn("sin", a) * l)
    assert W.poisson_bracket(u, u, (0.2, 0.7)) == 0.0
    v = J.ScalarField(2, a * a + l)
    w = J.ScalarField(2, J.fn("cos", l))
    p = (0.4, -0.3)
    lhs = W.poisson_bracket(u, J.ScalarField(2, (a * a + l) * J.fn("cos", l)), p)
    vv, ww = v(np.array(p)), w(np.array(p))
    rhs = W.poisson_bracket(u, v, p) * ww + vv * W.poisson_bracket(u, w, p)
    assert lhs == pytest.approx(rhs, abs=1e-12)


BUMP_U = W.GaussianBump(0.2, -0.1, 0.6)
BUMP_V = W.GaussianBump(-0.1, 0.3, 0.7)


def test_star_of_zero_is_zero():
    box = BUMP_V.box()
    r = W.star_product(lambda A, L: 0 * A * L, BUMP_V, W.WkbKernel(0.3), W.QuadratureGrid(box, box, 64, 64), (0.0, 0.0))
    assert r.value == 0


def test_quadrature_matches_gaussian_route():
    x = W.PhasePoint(0.1, 0.05)
    k = W.WkbKernel(0.3)
    r = W.converged_star_product(BUMP_U, BUMP_V, k, BUMP_U.box(), BUMP_V.box(), x, target=1e-10)
    oracle = W.star_product_gaussian(BUMP_U, BUMP_V, k, x)
    assert abs(r.value - oracle) < 1e-9


def test_leading_term_is_product():
    x = W.PhasePoint(0.1, 0.05)
    uv = BUMP_U(x.a, x.l) * BUMP_V(x.a, x.l)
    vals = [W.star_product_gaussian(BUMP_U, BUMP_V, W.WkbKernel(th), x) for th in (0.02, 0.01)]
    errs = [abs(v - uv) for v in vals]
    assert errs[1] < 0.6 * errs[0]
    assert errs[1] < 0.01


# the leftover error goes like (theta / scale)^4, so theta tracks the scale
@pytest.mark.parametrize("scale,theta,expected", [(1.0, 0.1, 1.0), (-2.0, 0.2, -0.5)])
def test_first_order_calibration(scale, theta, expected):
    x = W.PhasePoint(0.1, 0.05)
    c = W.first_order_coefficient(BUMP_U, BUMP_V, x, theta, scale, BUMP_U.box(), BUMP_V.box(), target=1e-10)
    assert c == pytest.approx(expected, abs=1e-2)


def test_truncation_error():
    box = ((-1.0, 1.0), (-1.0, 1.0))
    with pytest.raises(W.TruncationError):
        W.star_product(BUMP_U, BUMP_V, W.WkbKernel(0.3), W.QuadratureGrid(box, box, 32, 32), (0, 0))


def test_not_converged():
    k = W.WkbKernel(0.01)
    with pytest.raises(W.QuadratureNotConvergedError):
        W.converged_star_product(BUMP_U, BUMP_V, k, BUMP_U.box(), BUMP_V.box(), (0.0, 0.0), target=1e-12, n0=32, n_max=128)
    with pytest.raises(W.QuadratureNotConvergedError):
        W.star_product(BUMP_U, BUMP_V, k, W.QuadratureGrid(BUMP_U.box(), BUMP_V.box(), 32, 32), (0, 0), tol=1e-12)


def test_expansion_slope_single_pair():
    u, v = W.GaussianBump(0.3, -0.2, 0.7), W.GaussianBump(-0.2, 0.4, 0.8)
    rows, slope = W.expansion_sweep(u, v, (0.05, 0.1), [0.4, 0.2], u.box(), v.box(), target=1e-7)
    assert slope > 1.8
    assert all(r.quad_error < 0.1 * r.residual for r in rows)


def test_barycentre_flat(rng):
    quad = W.random_points(rng, 4)
    probes = W.random_points(rng, 2)
    found = W.find_barycentre(W.FLAT, quad, probes, check_ts=W.random_points(rng, 10))
    assert found.found and found.residual < 1e-8


def test_barycentre_curved_absent(rng):
    quad = W.random_points(rng, 4)
    ts = W.random_points(rng, 10)
    starts = [p.as_array() for p in W.random_points(rng, 6)]
    _, res = W.best_associativity_residual(W.CURVED, quad, ts, starts)
    assert res > 1e-3


def test_degenerate_quad():
    p = W.PhasePoint(0.3, -0.2)
    assert W.associativity_residual(W.CURVED, p, [p, p, p, p], [p, (0.1, 0.2)]) == 0.0


def test_composition_wide_box(rng):
    # wider boxes push l to ~1e5; the law then holds to relative precision
    for _ in range(50):
        x, y, z = W.random_points(rng, 3, 2.0, 2.0)
        lhs = W.symmetry(W.symmetry(x, y), z)
        rhs = W.symmetry(x, W.symmetry(y, W.symmetry(x, z)))
        assert abs(lhs.l - rhs.l) < 1e-13 * max(1.0, abs(lhs.l))
        assert abs(lhs.a - rhs.a) < 1e-12


def test_associativity_smoke_runs():
    u, v, w = (W.GaussianBump(0.0, 0.0, 0.5) for _ in range(3))
    val = W.associativity_smoke(u, v, w, (0.0, 0.0), theta=0.5, n=32)
    assert math.isfinite(val)
