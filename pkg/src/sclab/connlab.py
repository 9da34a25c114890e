"""Connection calculus on a coordinate chart.

Conventions, used in every module of the package:

* ``G[k, i, j] = Gamma^k_ij`` with ``nabla_{e_i} e_j = Gamma^m_ij e_m``.
* ``R[i, j, k, l] = R^i_jkl`` with ``R(e_k, e_l) e_j = R^i_jkl e_i``.
* ``r[a, b] = r(e_a, e_b) = Tr(Z -> R(e_a, Z) e_b)``.
* ``rho = omega^{-1} r`` so that ``omega(X, rho Y) = r(X, Y)``.
* ``Rlow[k, l, j, t] = omega(R(e_k, e_l) e_j, e_t)``: antisymmetric in the
  first pair and, for symplectic connections, symmetric in the second.
* Covariant derivatives put the differentiation index first.

Fields are jet-aware callables: they accept either a plain coordinate vector
or a :class:`~sclab.jets.Jet` of coordinates and return arrays or jets.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import jets as J
from .jets import Jet


class ConnlabError(Exception):
    pass


class NondegeneracyError(ConnlabError):
    pass


class NotRicciTypeError(ConnlabError):
    pass


class InconsistencyError(ConnlabError):
    pass


class InvalidSymmetricSpaceError(ConnlabError):
    pass


class InvalidDegreeError(ConnlabError, ValueError):
    pass


DEFAULT_W_TOL = 1e-7


# ---------------------------------------------------------------------------
# fields


def _from_exprs(entries) -> Callable:
    arr = np.asarray(entries, dtype=object)

    def fn(x):
        vals = [J.as_expr(e).evaluate(x) for e in arr.reshape(-1)]
        if isinstance(x, Jet):
            return J.stack(vals).reshape(arr.shape)
        return np.array([np.asarray(v, float) for v in vals]).reshape(arr.shape + np.shape(vals[0]))

    return fn


class TensorField:
    """Array-valued field on a chart, evaluable on points and on jets."""

    shape: tuple[int, ...] = ()

    def __init__(self, dim: int, fn: Callable, shape: tuple[int, ...] | None = None):
        self.dim = dim
        self.fn = fn
        if shape is not None:
            self.shape = tuple(shape)

    @classmethod
    def from_exprs(cls, dim: int, entries, **kw):
        return cls(dim, _from_exprs(entries), **kw)

    @classmethod
    def constant(cls, dim: int, value, **kw):
        value = np.asarray(value, dtype=float)

        def fn(x):
            if isinstance(x, Jet):
                return Jet.constant(value, x.dim, x.order)
            return value.copy()

        return cls(dim, fn, **kw)

    def __call__(self, x):
        out = self.fn(x)
        if isinstance(x, Jet) and not isinstance(out, Jet):
            out = Jet.constant(out, x.dim, x.order)
        return out

    def at(self, x) -> np.ndarray:
        return np.asarray(J.value(self(np.asarray(x, dtype=float))), dtype=float)

    def jet(self, x, order: int) -> Jet:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"point of shape {x.shape} for a {self.dim}-dim field")
        out = self(Jet.variables(x, order))
        if out.shape != self.shape:
            raise ValueError(f"field returned shape {out.shape}, expected {self.shape}")
        if not np.all(np.isfinite(out.coef)):
            raise J.NumericDomainError("non-finite field jet")
        return out


class SymplecticFormField(TensorField):
    """Antisymmetric nondegenerate 2-form ``omega[i, j]``."""

    def __init__(self, dim: int, fn: Callable):
        if dim % 2:
            raise ValueError("symplectic forms live in even dimension")
        super().__init__(dim, fn, (dim, dim))

    @classmethod
    def standard(cls, dim: int) -> "SymplecticFormField":
        return cls.constant(dim, standard_omega(dim))

    def check(self, points: Sequence, tol: float = 1e-9) -> dict:
        """Antisymmetry, nondegeneracy and closedness residuals at points."""
        anti = closed = 0.0
        min_det = np.inf
        for x in points:
            w = self.jet(x, 1)
            w0 = w.value
            anti = max(anti, float(np.max(np.abs(w0 + w0.T))))
            min_det = min(min_det, abs(float(np.linalg.det(w0))))
            d = w.grad().value  # d[j, k, i] = d_i omega_jk
            cyc = np.einsum("jki->ijk", d) + np.einsum("kij->ijk", d) + d
            closed = max(closed, float(np.max(np.abs(cyc))))
        ok = anti <= tol and closed <= tol and min_det > tol
        return {"antisymmetry": anti, "closedness": closed, "min_abs_det": min_det, "ok": bool(ok)}


def standard_omega(dim: int) -> np.ndarray:
    """Darboux form with ``omega(e_i, e_{n+i}) = 1``."""
    n = dim // 2
    w = np.zeros((dim, dim))
    w[:n, n:] = np.eye(n)
    w[n:, :n] = -np.eye(n)
    return w


class ConnectionField(TensorField):
    """Christoffel symbols ``G[k, i, j]`` on a chart."""

    def __init__(self, dim: int, fn: Callable):
        super().__init__(dim, fn, (dim, dim, dim))

    @classmethod
    def flat(cls, dim: int) -> "ConnectionField":
        return cls.constant(dim, np.zeros((dim, dim, dim)))

    def __add__(self, other: "TensorField") -> "ConnectionField":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return ConnectionField(self.dim, lambda x: self(x) + other(x))

    def is_torsion_free(self, points: Sequence, tol: float = 1e-12) -> bool:
        return all(np.max(np.abs(torsion(self, x))) <= tol for x in points)


# ---------------------------------------------------------------------------
# pointwise tensors from jets


def _inv_omega(w: np.ndarray) -> np.ndarray:
    try:
        cond = np.linalg.cond(w)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > 1e12:
        raise NondegeneracyError(f"omega is degenerate (condition number {cond:.3g})")
    return np.linalg.inv(w)


def inv_omega(w):
    """Inverse of omega (jets allowed); raises on degeneracy."""
    _inv_omega(J.value(w))
    return J.inv(w)


def torsion(nabla: ConnectionField, x) -> np.ndarray:
    g = nabla.at(x)
    return g - np.swapaxes(g, 1, 2)


def nabla_omega_jet(G, w: Jet):
    """``N[i, j, k] = (nabla_i omega)_jk`` from jets of Gamma and omega."""
    dw = w.grad()  # [j,k,i]
    G = G.truncate(dw.order) if isinstance(G, Jet) else G
    w = w.truncate(dw.order)
    return (
        dw.transpose(2, 0, 1)
        - J.einsum("mij,mk->ijk", G, w)
        - J.einsum("mik,jm->ijk", G, w)
    )


def nabla_omega(nabla: ConnectionField, omega: SymplecticFormField, x) -> np.ndarray:
    return nabla_omega_jet(nabla.jet(x, 0), omega.jet(x, 1)).value


def curvature_jet(G: Jet) -> Jet:
    """``R^i_jkl`` (one order below ``G``)."""
    dG = G.grad()  # dG[i,l,j,k] = d_k Gamma^i_lj
    G0 = G.truncate(dG.order)
    return (
        dG.transpose(0, 2, 3, 1)  # -> [i, j, k, l] from d_k G^i_lj
        - dG.transpose(0, 2, 1, 3)
        + J.einsum("ikm,mlj->ijkl", G0, G0)
        - J.einsum("ilm,mkj->ijkl", G0, G0)
    )


def ricci(R):
    return J.einsum("cbac->ab", R)


def rho_from_ricci(r, w):
    return J.matmul(inv_omega(w), r)


def second_trace(R, w):
    """``r'(X, Y) = sum_i omega(R(e_i, e^i) X, Y)`` with ``omega(e_i, e^j) = delta``."""
    W = inv_omega(w)
    return J.einsum("mi,paim,pb->ab", W, R, w)


def lower_curvature(R, w):
    """``Rlow[k, l, j, t] = omega(R(e_k, e_l) e_j, e_t)``."""
    return J.einsum("ijkl,it->kljt", R, w)


def e_part(rho, r, w, n: int):
    """Ricci-type part of the curvature built from ``rho`` and ``r``."""
    d = 2 * n
    delta = np.eye(d)
    c = 1.0 / (2 * n + 2)
    t = (
        2 * J.einsum("kl,ij->ijkl", w, rho)
        + J.einsum("kj,il->ijkl", w, rho)
        - J.einsum("lj,ik->ijkl", w, rho)
        + J.einsum("kj,il->ijkl", r, delta)
        - J.einsum("lj,ik->ijkl", r, delta)
    )
    return t * c


def ricci_type_curvature(rho, w):
    """Curvature endomorphism rebuilt from ``rho`` alone.

    ``R(X,Y)Z = c (2 w(X,Y) rho Z + w(X,Z) rho Y - w(Y,Z) rho X
    + w(X, rho Z) Y - w(Y, rho Z) X)``, assembled by applying the operator
    to basis vectors rather than by index formulae.
    """
    rho = np.asarray(rho, float)
    w = np.asarray(w, float)
    d = w.shape[0]
    n = d // 2
    c = 1.0 / (2 * n + 2)
    basis = np.eye(d)

    def om(a, b):
        return a @ w @ b

    out = np.zeros((d, d, d, d))
    for k, l, j in itertools.product(range(d), repeat=3):
        X, Y, Z = basis[k], basis[l], basis[j]
        v = (
            2 * om(X, Y) * (rho @ Z)
            + om(X, Z) * (rho @ Y)
            - om(Y, Z) * (rho @ X)
            + om(X, rho @ Z) * Y
            - om(Y, rho @ Z) * X
        )
        out[:, j, k, l] = c * v
    return out


@dataclass(frozen=True)
class CurvaturePoint:
    R: np.ndarray
    Rlow: np.ndarray
    r: np.ndarray
    rho: np.ndarray
    E: np.ndarray
    W: np.ndarray
    rprime: np.ndarray
    omega: np.ndarray

    @property
    def n(self) -> int:
        return self.omega.shape[0] // 2

    def w_norm(self) -> float:
        return float(np.max(np.abs(self.W)))

    def identities(self) -> dict:
        """Residuals of the algebraic identities every symplectic curvature obeys."""
        R, Rl = self.R, self.Rlow
        cyc = bianchi_cyclic(R)
        return {
            "antisymmetry": float(np.max(np.abs(R + np.swapaxes(R, 2, 3)))),
            "bianchi": float(np.max(np.abs(cyc))),
            "ricci_symmetry": float(np.max(np.abs(self.r - self.r.T))),
            "second_trace": float(np.max(np.abs(self.rprime + 2 * self.r))),
            "rlow_pair_symmetry": float(np.max(np.abs(Rl - np.swapaxes(Rl, 2, 3)))),
            "decomposition": float(np.max(np.abs(self.E + self.W - R))),
            "w_ricci_trace": float(np.max(np.abs(ricci(self.W)))),
        }


def bianchi_cyclic(R: np.ndarray) -> np.ndarray:
    """Components of ``R(e_k,e_l)e_j + R(e_l,e_j)e_k + R(e_j,e_k)e_l``."""
    return R + np.einsum("iklj->ijkl", R) + np.einsum("iljk->ijkl", R)


def curvature_from_jets(G: Jet, w: Jet) -> CurvaturePoint:
    R = curvature_jet(G).value
    w0 = np.asarray(w.value if isinstance(w, Jet) else w, float)
    return curvature_from_R(R, w0)


def curvature_from_R(R: np.ndarray, w0: np.ndarray) -> CurvaturePoint:
    n = w0.shape[0] // 2
    r = ricci(R)
    rho = rho_from_ricci(r, w0)
    E = e_part(rho, r, w0, n)
    return CurvaturePoint(
        R=R,
        Rlow=lower_curvature(R, w0),
        r=r,
        rho=rho,
        E=E,
        W=R - E,
        rprime=second_trace(R, w0),
        omega=w0,
    )


def curvature(nabla: ConnectionField, omega: SymplecticFormField, x) -> CurvaturePoint:
    w = omega.jet(x, 0)
    _inv_omega(w.value)
    return curvature_from_jets(nabla.jet(x, 1), w)


def decompose(R: np.ndarray, w0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cp = curvature_from_R(np.asarray(R, float), np.asarray(w0, float))
    return cp.E, cp.W


# ---------------------------------------------------------------------------
# covariant derivatives


def covariant_derivative(T: Jet, G: Jet, kinds: str) -> Jet:
    """``nabla T`` with the derivative index first.

    ``kinds`` has one letter per value axis of ``T``: ``'u'`` for an upper
    (vector) index and ``'d'`` for a lower (covector) index.
    """
    if len(kinds) != T.ndim:
        raise ValueError(f"index kinds {kinds!r} do not match tensor rank {T.ndim}")
    dT = T.grad()
    k = dT.order
    T0 = T.truncate(k)
    G0 = G.truncate(k) if G.order >= k else None
    if G0 is None:
        raise J.UnsupportedOrderError("connection jet order too low for covariant derivative")
    rank = T.ndim
    letters = "bcdefghijklnopqrstuvwxyz"[:rank]
    out = dT.transpose((rank,) + tuple(range(rank)))
    for p, kind in enumerate(kinds):
        src = letters[:p] + "m" + letters[p + 1 :]
        res = "a" + letters
        if kind == "u":
            out = out + J.einsum(f"{letters[p]}am,{src}->{res}", G0, T0)
        elif kind == "d":
            out = out - J.einsum(f"ma{letters[p]},{src}->{res}", G0, T0)
        else:
            raise ValueError(f"unknown index kind {kind!r}")
    return out


def preferred_residual_jet(G: Jet) -> Jet:
    R = curvature_jet(G)
    r = ricci(R)
    dr = covariant_derivative(r, G, "dd")  # [a,b,c] = (nabla_a r)_bc
    return dr + dr.transpose(1, 2, 0) + dr.transpose(2, 0, 1)


def preferred_residual(nabla: ConnectionField, omega: SymplecticFormField, x) -> np.ndarray:
    """Cyclic sum of ``(nabla_a r)_bc``; vanishes for preferred connections."""
    return preferred_residual_jet(nabla.jet(x, 2)).value


# ---------------------------------------------------------------------------
# constructions


def symplectize(nabla0: ConnectionField, omega: SymplecticFormField, check_points: Sequence = ()) -> ConnectionField:
    """Torsion-free connection preserving ``omega`` built from a torsion-free one.

    Adds one third of ``N(X,Y) + N(Y,X)`` where ``omega(N(X,Y),Z)`` is
    ``(nabla0_X omega)(Y,Z)``.
    """
    if nabla0.dim != omega.dim:
        raise ValueError("dimension mismatch")
    for x in check_points:
        _inv_omega(omega.at(x))
        if np.max(np.abs(torsion(nabla0, x))) > 1e-12:
            raise ConnlabError("symplectize needs a torsion-free input connection")

    def fn(x):
        if not isinstance(x, Jet):
            x = Jet.variables(np.asarray(x, float), 0)
            return fn(x).value
        xx = x
        # d omega needs one extra order: evaluate at the point and compose back
        def at_point(x0, k):
            v = Jet.variables(x0, k + 1)
            w = omega(v)
            G0 = nabla0(v).truncate(k)
            Nlow = nabla_omega_jet(G0, w)
            Winv = inv_omega(w.truncate(k))
            Nup = J.einsum("ijk,kp->pij", Nlow, Winv)
            return G0 + (Nup + Nup.transpose(0, 2, 1)) * (1.0 / 3.0)

        return J.local(at_point, xx)

    return ConnectionField(nabla0.dim, fn)


def symmetric_perturbation(omega_value: np.ndarray, S_low: np.ndarray) -> np.ndarray:
    """Christoffel increment ``S^m_ij`` with ``omega(S(e_i,e_j), e_k) = S_low[i,j,k]``."""
    return np.einsum("ijk,km->mij", S_low, np.linalg.inv(omega_value))


def canonical_symmetric_connection(
    symmetry: Callable,
    omega: SymplecticFormField,
    check_points: Sequence = (),
    tol: float = 1e-8,
) -> ConnectionField:
    """Connection for which every symmetry ``s_x`` is an affinity.

    ``symmetry(x, y)`` returns ``s_x(y)`` and must accept jets.  Since
    ``s_x`` fixes ``x`` with differential ``-Id`` and preserves the
    connection, ``Gamma^m_ij(x) = -1/2 d^2 s_x^m / dy_i dy_j`` at ``y = x``.
    """
    dim = omega.dim
    for x in check_points:
        check_symmetric_space(symmetry, omega, x, tol)

    def at_point(x0, k):
        z0 = np.concatenate([x0, x0])
        z = Jet.variables(z0, k + 2)
        s = symmetry(z[:dim], z[dim:])
        if not isinstance(s, Jet):
            s = J.stack(list(s))
        hess = s.grad().grad()  # [m, a, b] over 2*dim variables
        G = hess[:, dim:, dim:] * (-0.5)  # order k jet in (x, y)
        X = Jet.variables(x0, k)
        return G.compose(J.concatenate([X, X]))

    return ConnectionField(dim, lambda x: J.local(at_point, x) if isinstance(x, Jet) else J.local(at_point, np.asarray(x, float)))


def check_symmetric_space(symmetry: Callable, omega: SymplecticFormField, x, tol: float = 1e-8, rng=None) -> dict:
    """Check the symmetric-space axioms at ``x`` using nearby probe points."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    rng = np.random.default_rng(0) if rng is None else rng
    sx = lambda y: np.asarray(J.value(symmetry(x, y)), float)  # noqa: E731
    res = {}
    res["fixed_point"] = float(np.max(np.abs(sx(x) - x)))
    jac = np.asarray(J.value(_jac(lambda y: symmetry(x, y), x)), float)
    res["differential"] = float(np.max(np.abs(jac + np.eye(d))))
    inv_err = pres = comp = 0.0
    for _ in range(3):
        y = x + 0.3 * rng.standard_normal(d)
        z = x + 0.3 * rng.standard_normal(d)
        inv_err = max(inv_err, float(np.max(np.abs(sx(sx(y)) - y))))
        jy = _jac(lambda u: symmetry(x, u), y)
        wy = omega.at(y)
        wsy = omega.at(sx(y))
        pres = max(pres, float(np.max(np.abs(jy.T @ wsy @ jy - wy))))
        lhs = sx(np.asarray(J.value(symmetry(y, sx(z))), float))
        rhs = np.asarray(J.value(symmetry(sx(y), z)), float)
        comp = max(comp, float(np.max(np.abs(lhs - rhs))))
    res.update(involution=inv_err, symplectic=pres, composition=comp)
    bad = {k: v for k, v in res.items() if not v <= tol * max(1.0, np.max(np.abs(x)))}
    if bad:
        raise InvalidSymmetricSpaceError(f"symmetry axioms fail at {x}: {bad}")
    return res


def _jac(f: Callable, y: np.ndarray) -> np.ndarray:
    v = Jet.variables(y, 1)
    out = f(v)
    if not isinstance(out, Jet):
        out = J.stack(list(out))
    return out.grad().value


# ---------------------------------------------------------------------------
# Ricci-type invariants


@dataclass(frozen=True)
class RicciTypeData:
    rho: np.ndarray
    U: np.ndarray
    f: float
    K: float
    u_residual: float
    f_residual: float
    w_norm: float


def _u_system(w0: np.ndarray) -> np.ndarray:
    """Matrix L with ``(nabla_a rho)^m_b = L[(a,m,b), p] U^p``."""
    d = w0.shape[0]
    n = d // 2
    c = -1.0 / (2 * n + 1)
    I = np.eye(d)
    L = c * (np.einsum("ma,pb->ambp", I, w0) + np.einsum("mp,ab->ambp", I, w0))
    return L.reshape(d**3, d)


def ricci_type_jets(G: Jet, w: Jet):
    """Jets of rho, U and the remaining pieces needed for f (order ``G.order - 3``)."""
    d = G.shape[0]
    n = d // 2
    R = curvature_jet(G)
    k = R.order
    w_k = w.truncate(k)
    r = ricci(R)
    rho = J.matmul(inv_omega(w_k), r)
    drho = covariant_derivative(rho, G, "ud")  # [a, m, b]
    k1 = drho.order
    w1 = w.truncate(k1)
    I = np.eye(d)
    c = -1.0 / (2 * n + 1)
    L = (J.einsum("ma,pb->ambp", I, w1) + J.einsum("mp,ab->ambp", I, w1)) * c
    L = L.reshape(d**3, d)
    LtL = J.einsum("kp,kq->pq", L, L)
    Ltb = J.einsum("kp,k->p", L, drho.reshape(d**3))
    U = J.matmul(J.inv(LtL), Ltb)
    resid = drho.reshape(d**3) - J.matmul(L, U)
    return rho, drho, U, resid


def ricci_type_point(G: Jet, w: Jet) -> RicciTypeData:
    """Invariants at a single point; ``G`` needs order >= 3."""
    d = G.shape[0]
    n = d // 2
    rho, drho, U, resid = ricci_type_jets(G, w)
    dU = covariant_derivative(U, G, "u")  # [a, m] = (nabla_a U)^m
    dU0 = dU.value
    rho0 = rho.value
    c = (2 * n + 1) / (2.0 * (n + 1))
    M = dU0.T + c * rho0 @ rho0  # M^m_a should equal f delta^m_a
    f = float(np.trace(M)) / d
    f_res = float(np.max(np.abs(M - f * np.eye(d))))
    K = float(np.trace(rho0 @ rho0)) + 4 * (n + 1) / (2 * n + 1) * f
    cp = curvature_from_R(curvature_jet(G).value, w.value)
    return RicciTypeData(
        rho=rho0,
        U=U.value,
        f=f,
        K=K,
        u_residual=float(np.max(np.abs(resid.value))),
        f_residual=f_res,
        w_norm=cp.w_norm(),
    )


def ricci_type_invariants(
    nabla: ConnectionField,
    omega: SymplecticFormField,
    points: Sequence,
    tol: float = DEFAULT_W_TOL,
    k_tol: float | None = None,
) -> tuple[list[RicciTypeData], dict]:
    """Extract ``U``, ``f`` and ``K`` at each point and report their consistency."""
    out = []
    for x in points:
        G = nabla.jet(x, 3)
        w = omega.jet(x, 3)
        cp = curvature_from_R(curvature_jet(G).value, w.value)
        if cp.w_norm() >= tol:
            raise NotRicciTypeError(f"W component {cp.w_norm():.3g} exceeds tolerance {tol:g} at {x}")
        data = ricci_type_point(G, w)
        if data.u_residual >= tol or data.f_residual >= tol:
            raise InconsistencyError(
                f"Ricci-type relations fail at {x}: U residual {data.u_residual:.3g}, f residual {data.f_residual:.3g}"
            )
        out.append(data)
    Ks = np.array([d.K for d in out])
    spread = float(Ks.max() - Ks.min()) if len(Ks) else 0.0
    report = {
        "K_mean": float(Ks.mean()) if len(Ks) else 0.0,
        "K_spread": spread,
        "max_u_residual": max((d.u_residual for d in out), default=0.0),
        "max_f_residual": max((d.f_residual for d in out), default=0.0),
        "max_w_norm": max((d.w_norm for d in out), default=0.0),
        "K_constant": bool(spread <= (k_tol if k_tol is not None else tol * 10)),
    }
    return out, report


# ---------------------------------------------------------------------------
# Koszul operators on Lambda^q V (x) S^p V


@dataclass(frozen=True)
class KoszulElement:
    """Tensor with ``q`` antisymmetric axes followed by ``p`` symmetric axes.

    Wedge and symmetric products are taken without normalising factorials,
    so ``v1 ^ v2 = v1 (x) v2 - v2 (x) v1`` and ``w1 w2 = w1 (x) w2 + w2 (x) w1``.
    """

    q: int
    p: int
    t: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if self.q < 0 or self.p < 0 or t.ndim != self.q + self.p:
            raise InvalidDegreeError(f"tensor rank {t.ndim} does not match degrees ({self.q}, {self.p})")
        object.__setattr__(self, "t", t)

    @property
    def dim(self) -> int:
        return self.t.shape[0] if self.t.ndim else 0

    def symmetry_residual(self) -> float:
        worst = 0.0
        for i in range(self.q - 1):
            worst = max(worst, float(np.max(np.abs(self.t + np.swapaxes(self.t, i, i + 1)))))
        for i in range(self.q, self.q + self.p - 1):
            worst = max(worst, float(np.max(np.abs(self.t - np.swapaxes(self.t, i, i + 1)))))
        return worst

    @classmethod
    def project(cls, q: int, p: int, t: np.ndarray) -> "KoszulElement":
        """Antisymmetrise the first ``q`` and symmetrise the last ``p`` axes."""
        t = np.asarray(t, float)
        out = np.zeros_like(t)
        for sa in itertools.permutations(range(q)):
            sign = _perm_sign(sa)
            for ss in itertools.permutations(range(q, q + p)):
                out = out + sign * np.transpose(t, sa + ss)
        return cls(q, p, out)

    @classmethod
    def random(cls, q: int, p: int, dim: int, rng) -> "KoszulElement":
        return cls.project(q, p, rng.standard_normal((dim,) * (q + p)))

    def __sub__(self, other):
        return KoszulElement(self.q, self.p, self.t - other.t)

    def __add__(self, other):
        return KoszulElement(self.q, self.p, self.t + other.t)

    def __mul__(self, c):
        return KoszulElement(self.q, self.p, self.t * c)

    __rmul__ = __mul__


def _perm_sign(perm: Sequence[int]) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def koszul_a(t: KoszulElement) -> KoszulElement:
    """Skewsymmetrisation: one symmetric slot moves into the antisymmetric block."""
    if t.p == 0:
        raise InvalidDegreeError("a needs symmetric degree >= 1")
    q = t.q
    out = sum((-1) ** (q - j) * np.moveaxis(t.t, q, j) for j in range(q + 1))
    return KoszulElement(q + 1, t.p - 1, out)


def koszul_s(t: KoszulElement) -> KoszulElement:
    """Symmetrisation: one antisymmetric slot moves into the symmetric block."""
    if t.q == 0:
        raise InvalidDegreeError("s needs antisymmetric degree >= 1")
    q, p = t.q, t.p
    out = sum(np.moveaxis(t.t, q - 1, q - 1 + j) for j in range(p + 1))
    return KoszulElement(q - 1, p + 1, out)


def bianchi_check(Rlow: np.ndarray) -> float:
    """Size of ``a(Rlow)``, the cyclic sum over the first three arguments."""
    return float(np.max(np.abs(koszul_a(KoszulElement(2, 2, Rlow)).t)))


def curvature_space_membership(Rlow: np.ndarray, tol: float = 1e-9) -> bool:
    el = KoszulElement(2, 2, Rlow)
    return el.symmetry_residual() <= tol and bianchi_check(Rlow) < tol


def e_part_low(r: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Lowered Ricci-type tensor ``omega(E(X,Y)Z, T)`` from a symmetric ``r``."""
    n = w.shape[0] // 2
    c = -1.0 / (2 * (n + 1))
    return c * (
        2 * np.einsum("xy,zt->xyzt", w, r)
        + np.einsum("xz,yt->xyzt", w, r)
        + np.einsum("xt,yz->xyzt", w, r)
        - np.einsum("yz,xt->xyzt", w, r)
        - np.einsum("yt,xz->xyzt", w, r)
    )
