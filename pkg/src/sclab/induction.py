"""Ricci-flat connections by induction from an exact symplectic chart.

The base is a chart ``(M, omega = d lambda)`` of dimension ``2n``.  The
induced manifold is ``P = M x R_t x R_s`` with coordinates ``(m, t, s)``
(``t`` at index ``2n``, ``s`` at index ``2n + 1``) and symplectic form
``mu = d(e^{2s}(dt + lambda))``.  A frame of ``P`` is given by the horizontal
lifts ``Xbar_i = d_i - lambda_i d_t``, ``E = d_t`` and ``S = d_s``; the
induced connection is specified on that frame and converted to coordinate
Christoffels with jets, so the generic curvature engine of :mod:`connlab`
can audit every closed-form block.

Throughout, the lowercase ``u`` is the 1-form ``omega(U, .)`` and every
frame expression is written in terms of the vector ``U``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import connlab as C
from . import jets as J
from .jets import Jet


class InductionError(Exception):
    pass


class InvalidSpecError(InductionError, ValueError):
    pass


class NotReducibleError(InductionError):
    pass


# ---------------------------------------------------------------------------
# exact base and the induced form


def homotopy_potential(omega: C.SymplecticFormField, center=None, nodes: int = 24) -> C.TensorField:
    """Potential ``lambda`` with ``d lambda = omega`` on a star-shaped chart.

    ``lambda_j(x) = int_0^1 t (x - c)^i omega_ij(c + t (x - c)) dt``, evaluated
    by Gauss-Legendre quadrature on jets.
    """
    dim = omega.dim
    c = np.zeros(dim) if center is None else np.asarray(center, float)
    tq, wq = np.polynomial.legendre.leggauss(nodes)
    tq = 0.5 * (tq + 1.0)
    wq = 0.5 * wq

    def fn(x):
        dx = x - c
        acc = None
        for t, w in zip(tq, wq):
            term = J.einsum("i,ij->j", dx, omega(c + dx * t)) * (t * w)
            acc = term if acc is None else acc + term
        return acc

    return C.TensorField(dim, fn, (dim,))


def linear_potential(omega0: np.ndarray) -> C.TensorField:
    """``lambda = 1/2 x^i omega_ij dx^j`` for a constant ``omega``."""
    omega0 = np.asarray(omega0, float)
    dim = omega0.shape[0]
    return C.TensorField(dim, lambda x: J.einsum("i,ij->j", x, omega0) * 0.5, (dim,))


@dataclass(frozen=True)
class ContactQuadrupleData:
    """Exact base ``(omega, lambda)``; ``P`` carries coordinates ``(m, t, s)``."""

    omega: C.SymplecticFormField
    lam: C.TensorField

    @property
    def n(self) -> int:
        return self.omega.dim // 2

    @property
    def base_dim(self) -> int:
        return self.omega.dim

    @property
    def dim(self) -> int:
        return self.omega.dim + 2

    def exactness_residual(self, points: Sequence) -> float:
        worst = 0.0
        for x in points:
            dl = self.lam.jet(x, 1).grad().value  # [j, i] = d_i lambda_j
            d_lam = dl.T - dl
            worst = max(worst, float(np.max(np.abs(d_lam - self.omega.at(x)))))
        return worst

    # -- P-level fields -------------------------------------------------------
    def mu(self, p):
        """Induced symplectic form in ``(m, t, s)`` coordinates (jets allowed)."""
        d = self.base_dim
        m, s = p[:d], p[d + 1]
        w = self.omega(m)
        lam = self.lam(m)
        e2s = J.exp(s * 2.0)
        D = d + 2
        if isinstance(p, Jet):
            zero = Jet.constant(np.zeros(()), p.dim, p.order)
            rows = []
            for a in range(D):
                row = []
                for b in range(D):
                    row.append(_mu_entry(a, b, d, w, lam, zero))
                rows.append(J.stack(row))
            return J.stack(rows) * e2s
        out = np.zeros((D, D))
        out[:d, :d] = w
        out[d + 1, d] = 2.0
        out[d, d + 1] = -2.0
        out[d + 1, :d] = 2.0 * lam
        out[:d, d + 1] = -2.0 * lam
        return out * e2s

    def mu_field(self) -> C.SymplecticFormField:
        return C.SymplecticFormField(self.dim, self.mu)

    def frame(self, p):
        """Columns ``(Xbar_1..Xbar_2n, E, S)`` in coordinates (jets allowed)."""
        d = self.base_dim
        lam = self.lam(p[:d])
        D = d + 2
        base = np.eye(D)
        if isinstance(p, Jet):
            coef = Jet.constant(base, p.dim, p.order).coef.copy()
            coef[:, d, :d] = -lam.coef  # t-row of the lifted columns
            return Jet(coef, p.dim, p.order)
        B = base.copy()
        B[d, :d] = -np.asarray(lam, float)
        return B

    def frame_inverse(self, p):
        """``G = frame^{-1}``: ``d_i = Xbar_i + lambda_i E``."""
        d = self.base_dim
        lam = self.lam(p[:d])
        D = d + 2
        if isinstance(p, Jet):
            coef = Jet.constant(np.eye(D), p.dim, p.order).coef.copy()
            coef[:, d, :d] = lam.coef
            return Jet(coef, p.dim, p.order)
        G = np.eye(D)
        G[d, :d] = np.asarray(lam, float)
        return G


def _mu_entry(a, b, d, w, lam, zero):
    if a < d and b < d:
        return w[a, b]
    if a == d + 1 and b < d:
        return lam[b] * 2.0
    if b == d + 1 and a < d:
        return lam[a] * -2.0
    if a == d + 1 and b == d:
        return zero + 2.0
    if a == d and b == d + 1:
        return zero - 2.0
    return zero


def induced_form(q: ContactQuadrupleData, point) -> np.ndarray:
    return np.asarray(q.mu(np.asarray(point, float)), float)


def bracket(X: Jet, Y: Jet) -> Jet:
    """Lie bracket of vector fields given as jets (component axis first)."""
    dX, dY = X.grad(), Y.grad()
    X0, Y0 = X.truncate(dX.order), Y.truncate(dY.order)
    return J.einsum("a,ca->c", X0, dY) - J.einsum("a,ca->c", Y0, dX)


def frame_brackets(q: ContactQuadrupleData, p) -> dict:
    """Residuals of the frame bracket relations at ``p``."""
    B = q.frame(Jet.variables(np.asarray(p, float), 1))
    d = q.base_dim
    w = q.omega.at(np.asarray(p, float)[:d])
    E, S = B[:, d], B[:, d + 1]
    res = {"E_S": 0.0, "E_X": 0.0, "S_X": 0.0, "X_X": 0.0}
    res["E_S"] = float(np.max(np.abs(bracket(E, S).value)))
    for i in range(d):
        Xi = B[:, i]
        res["E_X"] = max(res["E_X"], float(np.max(np.abs(bracket(E, Xi).value))))
        res["S_X"] = max(res["S_X"], float(np.max(np.abs(bracket(S, Xi).value))))
        for j in range(d):
            expected = -w[i, j] * B.value[:, d]
            br = bracket(Xi, B[:, j]).value
            res["X_X"] = max(res["X_X"], float(np.max(np.abs(br - expected))))
    return res


# ---------------------------------------------------------------------------
# induced connection data


class InducedConnectionSpec:
    """Data ``(shat, sigma, U, u, f)`` on ``M`` shaping the induced connection.

    ``jets(m0, k)`` returns the five quantities as jets in fresh variables at
    ``m0`` of order ``k``.
    """

    def __init__(self, dim: int, shat: C.TensorField, sigma: C.TensorField, U: C.TensorField, u: C.TensorField, f: C.TensorField):
        self.dim = dim
        self.shat, self.sigma, self.U, self.u, self.f = shat, sigma, U, u, f

    def jets(self, m0, k: int) -> dict:
        return {
            "shat": self.shat.jet(m0, k),
            "sigma": self.sigma.jet(m0, k),
            "U": self.U.jet(m0, k),
            "u": self.u.jet(m0, k),
            "f": self.f.jet(m0, k),
        }

    def validate(self, omega: C.SymplecticFormField, points: Sequence, tol: float = 1e-9) -> None:
        for x in points:
            data = self.jets(np.asarray(x, float), 0)
            w = omega.at(x)
            sh, sg = data["shat"].value, data["sigma"].value
            U, u = data["U"].value, data["u"].value
            if np.max(np.abs(sh - sh.T)) > tol:
                raise InvalidSpecError(f"shat is not symmetric at {x}")
            if np.max(np.abs(sh - w @ sg)) > tol * max(1.0, np.max(np.abs(sh))):
                raise InvalidSpecError(f"shat and sigma disagree through omega at {x}")
            if np.max(np.abs(u - U @ w)) > tol * max(1.0, np.max(np.abs(u))):
                raise InvalidSpecError(f"u is not omega(U, .) at {x}")

    @classmethod
    def zero(cls, dim: int) -> "InducedConnectionSpec":
        z2 = C.TensorField.constant(dim, np.zeros((dim, dim)), shape=(dim, dim))
        z1 = C.TensorField.constant(dim, np.zeros(dim), shape=(dim,))
        z0 = C.TensorField.constant(dim, np.zeros(()), shape=())
        return cls(dim, z2, z2, z1, z1, z0)

    @classmethod
    def from_fields(cls, omega: C.SymplecticFormField, shat: C.TensorField, U: C.TensorField, f: C.TensorField) -> "InducedConnectionSpec":
        """Derive ``sigma`` and ``u`` from ``shat`` and ``U`` through ``omega``."""
        dim = omega.dim
        sigma = C.TensorField(dim, lambda x: J.matmul(C.inv_omega(omega(x)), shat(x)), (dim, dim))
        u = C.TensorField(dim, lambda x: J.matmul(U(x), omega(x)), (dim,))
        return cls(dim, shat, sigma, U, u, f)


class RicciFlatSpec(InducedConnectionSpec):
    """The choice making the induced connection Ricci-flat."""

    def __init__(self, nabla: C.ConnectionField, omega: C.SymplecticFormField):
        self.nabla, self.omega = nabla, omega
        dim = omega.dim

        def part(name, shape):
            def fn(x):
                return J.local(lambda m0, k: self.jets(m0, k)[name], x)

            return C.TensorField(dim, fn, shape)

        super().__init__(
            dim,
            part("shat", (dim, dim)),
            part("sigma", (dim, dim)),
            part("U", (dim,)),
            part("u", (dim,)),
            part("f", ()),
        )

    def jets(self, m0, k: int) -> dict:
        m0 = np.asarray(m0, float)
        d = self.dim
        n = d // 2
        G = self.nabla.jet(m0, k + 3)
        w = self.omega.jet(m0, k + 3)
        R = C.curvature_jet(G)  # k+2
        r = C.ricci(R)
        Winv = C.inv_omega(w.truncate(R.order))
        rho = J.matmul(Winv, r)
        shat = r * (-1.0 / (2 * (n + 1)))
        sigma = rho * (-1.0 / (2 * (n + 1)))
        dsig = C.covariant_derivative(sigma, G, "ud")  # k+1, [a, m, b]
        u = J.einsum("aab->b", dsig) * (2.0 / (2 * n + 1))
        U = -J.matmul(Winv.truncate(u.order), u)
        dU = C.covariant_derivative(U, G, "u")  # k, [a, m]
        rho_k = rho.truncate(k)
        f = J.einsum("ab,ba->", rho_k, rho_k) * (1.0 / (2 * n * (n + 1) ** 2)) + J.einsum("aa->", dU) * (1.0 / n)
        return {
            "shat": shat.truncate(k),
            "sigma": sigma.truncate(k),
            "U": U.truncate(k),
            "u": u.truncate(k),
            "f": f,
        }


def ricci_flat_choice(nabla: C.ConnectionField, omega: C.SymplecticFormField) -> RicciFlatSpec:
    return RicciFlatSpec(nabla, omega)


def frame_coefficients(G: Jet, w: Jet, data: dict, n: int) -> Jet:
    """``Cf[D, A, B]`` with ``nabla_{frame_A} frame_B = Cf[D, A, B] frame_D``."""
    d = 2 * n
    D = d + 2
    t, s = d, d + 1
    k = G.order
    dim, order = G.dim, k
    coef = np.zeros((Jet.constant(0.0, dim, order).coef.shape[0], D, D, D))
    Cf = Jet(coef, dim, order)
    c = Cf.coef
    sig = data["sigma"].truncate(k).coef
    U = data["U"].truncate(k).coef
    f = data["f"].truncate(k).coef
    sh = data["shat"].truncate(k).coef
    wc = w.truncate(k).coef
    # omega(e_j, U) is bilinear in two jets
    wU = J.einsum("jp,p->j", w.truncate(k), data["U"].truncate(k)).coef
    c[:, :d, :d, :d] = G.coef
    c[:, t, :d, :d] = -0.5 * wc
    c[:, s, :d, :d] = -sh
    c[:, :d, t, :d] = 2.0 * sig
    c[:, :d, :d, t] = 2.0 * sig
    c[:, s, t, :d] = wU
    c[:, s, :d, t] = wU
    eye = Jet.constant(np.eye(d), dim, order).coef
    c[:, :d, s, :d] = eye
    c[:, :d, :d, s] = eye
    c[:, s, t, t] = f
    c[:, :d, t, t] = -2.0 * U
    one = Jet.constant(1.0, dim, order).coef
    c[:, t, t, s] = one
    c[:, t, s, t] = one
    c[:, s, s, s] = one
    return Cf


def _induced_gamma_at(nabla: C.ConnectionField, spec: InducedConnectionSpec, q: ContactQuadrupleData, p0, k: int) -> Jet:
    d = q.base_dim
    n = d // 2
    m0 = np.asarray(p0, float)[:d]
    G = nabla.jet(m0, k)
    w = q.omega.jet(m0, k)
    data = spec.jets(m0, k)
    Cf = frame_coefficients(G, w, data, n)
    P = Jet.variables(np.asarray(p0, float), k)
    Cf = Cf.compose(P[:d])
    # the frame change needs lambda one order higher
    pv = Jet.variables(np.asarray(p0, float), k + 1)
    B = q.frame(pv).truncate(k)
    Ginv = q.frame_inverse(pv)
    dG = Ginv.grad()  # [D, b, a] = d_a G^D_b
    Gk = Ginv.truncate(k)
    inner = dG.transpose(0, 2, 1) + J.einsum("Aa,Bb,DAB->Dab", Gk, Gk, Cf)
    return J.einsum("cD,Dab->cab", B, inner)


def induced_connection(nabla: C.ConnectionField, spec: InducedConnectionSpec, q: ContactQuadrupleData) -> C.ConnectionField:
    """Coordinate Christoffels of the induced connection on ``P``."""
    if spec.dim != q.base_dim or nabla.dim != q.base_dim:
        raise InvalidSpecError("dimension mismatch between base data")

    def fn(p):
        return J.local(lambda p0, k: _induced_gamma_at(nabla, spec, q, p0, k), p)

    return C.ConnectionField(q.dim, fn)


# ---------------------------------------------------------------------------
# frame-level curvature


def frame_curvature(GP: C.ConnectionField, q: ContactQuadrupleData, p) -> dict:
    """Generic curvature and Ricci tensor of a ``P`` connection in the lifted frame.

    ``Rf[D, C, A, B]`` are components of ``R(frame_A, frame_B) frame_C``.
    """
    p = np.asarray(p, float)
    R = C.curvature_jet(GP.jet(p, 1)).value
    B = np.asarray(q.frame(p), float)
    Gi = np.linalg.inv(B)
    Rf = np.einsum("Di,ijkl,jC,kA,lB->DCAB", Gi, R, B, B, B)
    r = C.ricci(R)
    rf = B.T @ r @ B
    return {"R": Rf, "r": rf, "R_coord": R}


READINGS = ("derived", "displayed")


def closed_form_curvature_P(
    nabla: C.ConnectionField,
    spec: InducedConnectionSpec,
    q: ContactQuadrupleData,
    point,
    reading: str = "derived",
) -> dict:
    """Frame blocks of the induced curvature and Ricci tensor from closed formulas.

    Each block is returned as an array of frame components (``Xbar`` part
    first, then ``E``, then ``S``).  Two terse items are read as
    ``2 (1/2 f X - nabla_X U - 2 sigma^2 X)`` and ``Xf + 4 shat(X, U)``.

    In the horizontal part of ``R(Xbar, Ybar) Zbar`` the ``displayed``
    reading doubles all five sigma/shat terms; expanding the frame formulas
    directly (``derived``) doubles only ``omega(X, Y) sigma Z``, the one
    term that also receives a contribution from ``[Xbar, Ybar]``.
    """
    if reading not in READINGS:
        raise ValueError(f"reading must be one of {READINGS}")
    d = q.base_dim
    n = d // 2
    m0 = np.asarray(point, float)[:d]
    G = nabla.jet(m0, 1)
    w = q.omega.at(m0)
    data1 = spec.jets(m0, 1)
    R = C.curvature_jet(G).value
    r = C.ricci(R)
    sig = data1["sigma"].value
    sh = data1["shat"].value
    U = data1["U"].value
    f = float(data1["f"].value)
    df = data1["f"].grad().value
    dsig = C.covariant_derivative(data1["sigma"], G, "ud").value  # [a, m, b]
    dU = C.covariant_derivative(data1["U"], G, "u").value  # [a, m]
    I = np.eye(d)
    D = d + 2
    t, s = d, d + 1

    # Dm[y, yp, :] = D(sigma, U)(e_y, e_yp)
    wU = w @ U  # omega(e_j, U)
    Dm = (
        np.einsum("ymb->ybm", dsig)
        + 0.5 * np.einsum("b,ym->ybm", wU, I)
        - 0.5 * np.einsum("yb,m->ybm", w, U)
    )
    Q = 0.5 * f * I - dU.T - 2 * sig @ sig  # Q[:, x] = 1/2 f X - nabla_X U - 2 sigma^2 X

    out = {}
    # R(Xa, Xb) Xc
    RXXX = np.zeros((D, d, d, d))  # [component, c, a, b]
    base = (
        np.einsum("ab,mc->mcab", w, sig)
        - np.einsum("bc,ma->mcab", w, sig)
        + np.einsum("ac,mb->mcab", w, sig)
        - np.einsum("bc,ma->mcab", sh, I)
        + np.einsum("ac,mb->mcab", sh, I)
    )
    if reading == "displayed":
        RXXX[:d] = R + 2 * base
    else:
        RXXX[:d] = R + base + np.einsum("ab,mc->mcab", w, sig)
    RXXX[s] = np.einsum("am,bcm->cab", w, Dm) - np.einsum("bm,acm->cab", w, Dm)
    out["R_XX_X"] = RXXX
    RXXE = np.zeros((D, d, d))
    RXXE[:d] = 2 * np.einsum("abm->mab", Dm) - 2 * np.einsum("bam->mab", Dm)
    RXXE[s] = np.einsum("am,mb->ab", w, Q) - np.einsum("bm,ma->ab", w, Q)
    out["R_XX_E"] = RXXE
    RXEX = np.zeros((D, d, d))  # [comp, y, x]
    RXEX[:d] = 2 * np.einsum("xym->myx", Dm)
    RXEX[s] = -np.einsum("ym,mx->yx", w, Q)
    out["R_XE_X"] = RXEX
    RXEE = np.zeros((D, d))
    RXEE[:d] = 2 * Q
    RXEE[s] = df + 4 * (sh @ U)
    out["R_XE_E"] = RXEE
    ric = np.zeros((D, D))
    ric[:d, :d] = r + 2 * (n + 1) * sh
    rXE = -(2 * n + 1) * wU - 2 * np.einsum("aab->b", dsig)
    ric[:d, t] = rXE
    ric[t, :d] = rXE
    ric[t, t] = 4 * np.trace(sig @ sig) - 2 * n * f + 2 * np.trace(dU)
    out["ricci"] = ric
    return out


def generic_blocks(GP: C.ConnectionField, q: ContactQuadrupleData, p) -> dict:
    """Same blocks as :func:`closed_form_curvature_P`, read off the generic engine."""
    d = q.base_dim
    t, s = d, d + 1
    fc = frame_curvature(GP, q, p)
    Rf = fc["R"]
    X = slice(0, d)
    return {
        "R_XX_X": Rf[:, X, X, X],
        "R_XX_E": Rf[:, t, X, X],
        "R_XE_X": Rf[:, X, X, t],
        "R_XE_E": Rf[:, t, X, t],
        "ricci": fc["r"],
        "zero_blocks": max(
            float(np.max(np.abs(Rf[:, s, X, X]))),
            float(np.max(np.abs(Rf[:, s, X, t]))),
            float(np.max(np.abs(Rf[:, :, X, s]))),
            float(np.max(np.abs(Rf[:, :, t, s]))),
        ),
    }


def compare_closed_form(nabla, spec, q, p, reading: str = "derived") -> dict:
    """Max deviation of every closed-form block from the generic engine."""
    GP = induced_connection(nabla, spec, q)
    gen = generic_blocks(GP, q, p)
    cf = closed_form_curvature_P(nabla, spec, q, p, reading)
    out = {"zero_blocks": gen["zero_blocks"]}
    for key in ("R_XX_X", "R_XX_E", "R_XE_E", "ricci"):
        out[key] = float(np.max(np.abs(gen[key] - cf[key])))
    gx = gen["R_XE_X"]  # [comp, y, x] = R(Xbar_x, E) Xbar_y
    out["R_XE_X"] = float(np.max(np.abs(gx - cf["R_XE_X"])))
    return out


# ---------------------------------------------------------------------------
# reduction back to the base


def check_reducible(GP: C.ConnectionField, q: ContactQuadrupleData, points: Sequence, tol: float = 1e-9) -> dict:
    """``S = d_s`` conformal, ``E = d_t`` symplectic and affine at the points."""
    d = q.base_dim
    t, s = d, d + 1
    mu = q.mu_field()
    res = {"conformal": 0.0, "symplectic": 0.0, "affine": 0.0}
    for p in points:
        mj = mu.jet(p, 1)
        dmu = mj.grad().value  # [a, b, c] = d_c mu_ab
        scale = max(1.0, float(np.max(np.abs(mj.value))))
        res["conformal"] = max(res["conformal"], float(np.max(np.abs(dmu[:, :, s] - 2 * mj.value))) / scale)
        res["symplectic"] = max(res["symplectic"], float(np.max(np.abs(dmu[:, :, t]))) / scale)
        gj = GP.jet(p, 1).grad().value
        res["affine"] = max(res["affine"], float(np.max(np.abs(gj[..., t]))))
    bad = {k: v for k, v in res.items() if v > tol}
    if bad:
        raise NotReducibleError(f"reduction preconditions fail: {bad}")
    return res


def _reduced_back_at(GP: C.ConnectionField, q: ContactQuadrupleData, m0, k: int) -> tuple[Jet, Jet]:
    d = q.base_dim
    D = d + 2
    t, s = d, d + 1
    p0 = np.concatenate([np.asarray(m0, float), [0.0, 0.0]])
    pv = Jet.variables(p0, k + 1)
    mu = q.mu(pv)  # order k+1
    Et = Jet.constant(0.5 * np.eye(D)[t], D, k + 1)
    S = Jet.constant(np.eye(D)[s], D, k + 1)
    # lifts Ybar_i = d_i + a_i Et + b_i S in <Et, S>^perp
    muE = J.einsum("ab,a->b", mu, Et)  # mu(Et, .)
    muS = J.einsum("ab,a->b", mu, S)
    m11, m12 = muE[t] * 0.5, muE[s]
    m21, m22 = muS[t] * 0.5, muS[s]
    det = m11 * m22 - m12 * m21
    if abs(float(det.value)) < 1e-12:
        raise NotReducibleError("degenerate horizontal system")
    idet = J.reciprocal(det)
    cols = []
    for i in range(d):
        b1, b2 = -muE[i], -muS[i]
        a = (b1 * m22 - b2 * m12) * idet
        b = (m11 * b2 - m21 * b1) * idet
        cols.append(Jet.constant(np.eye(D)[i], D, k + 1) + J.einsum("c,->c", Et, a) + J.einsum("c,->c", S, b))
    Y = J.stack(cols, axis=1)  # [coord, i], order k+1
    dY = Y.grad()  # [c, j, a] order k
    Yk = Y.truncate(k)
    Gam = GP(Jet.variables(p0, k))  # order k jet in P variables
    muk = mu.truncate(k)
    Etk, Sk = Et.truncate(k), S.truncate(k)
    nYY = J.einsum("ai,cja->cij", Yk, dY) + J.einsum("cab,ai,bj->cij", Gam, Yk, Yk)  # nabla_Yi Yj
    nYE = J.einsum("cab,ai,b->ci", Gam, Yk, Etk)  # nabla_Yi Et (Et constant)
    nYS = J.einsum("cab,ai,b->ci", Gam, Yk, Sk)
    sig_term = J.einsum("bj,bc,ci->ij", Yk, muk, nYE)  # mu(Yj, nabla_Yi Et)
    V = nYY + J.einsum("ij,c->cij", sig_term, Sk)
    V = V - J.einsum("ij,c->cij", J.einsum("bj,bc,ci->ij", Yk, muk, nYS), Etk)
    basis = J.concatenate([Yk, J.stack([Etk, Sk], axis=1)], axis=1)
    comps = J.einsum("Dc,cij->Dij", J.inv(basis), V)
    Gm = comps[:d]
    wM = J.einsum("ai,ab,bj->ij", Yk, muk, Yk)
    inner = J.concatenate([Jet.variables(np.asarray(m0, float), k), Jet.constant(np.zeros(2), d, k)])
    return Gm.compose(inner), wM.compose(inner)


def reduce_back(GP: C.ConnectionField, q: ContactQuadrupleData, check_points: Sequence = ()) -> tuple[C.SymplecticFormField, C.ConnectionField]:
    """Reduced form and connection on ``M`` from a connection on ``P``.

    Uses ``Et = E / 2`` so the constraint ``mu(S, Et) = 1`` is ``s = 0``.
    """
    if check_points:
        check_reducible(GP, q, check_points)
    d = q.base_dim

    def gfn(m):
        return J.local(lambda m0, k: _reduced_back_at(GP, q, m0, k)[0], m)

    def wfn(m):
        return J.local(lambda m0, k: _reduced_back_at(GP, q, m0, k)[1], m)

    return C.SymplecticFormField(d, wfn), C.ConnectionField(d, gfn)


# ---------------------------------------------------------------------------
# sample bases


def cubic_base(n: int, rng, scale: float = 0.3) -> tuple[C.SymplecticFormField, C.ConnectionField]:
    """Constant Darboux form with a connection ``omega(Gamma(X, Y), Z) = S(X, Y, Z)``.

    ``S`` is the third derivative of a random quintic, hence totally
    symmetric, so the connection is symplectic; generically it is not of
    Ricci type.
    """
    d = 2 * n
    w0 = C.standard_omega(d)
    Winv = np.linalg.inv(w0)
    c3 = C.KoszulElement.random(0, 3, d, rng).t * scale / 6
    c4 = C.KoszulElement.random(0, 4, d, rng).t * scale / 24
    c5 = C.KoszulElement.random(0, 5, d, rng).t * scale / 120

    def gfn(x):
        S = c3 + J.einsum("ijkl,l->ijk", c4, x) + J.einsum("ijklm,l,m->ijk", c5, x, x) * 0.5
        return J.einsum("ijk,km->mij", S, Winv)

    return C.SymplecticFormField.standard(d), C.ConnectionField(d, gfn)
