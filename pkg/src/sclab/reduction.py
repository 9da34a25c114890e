"""Ricci-type connections by local reduction of a flat symplectic vector space.

Given ``A`` in ``sp(R^N, Omega')`` with ``N = 2n + 2``, the level set
``Sigma_A = {x : Omega'(x, Ax) = 1}`` is foliated by the orbits of
``exp(tA)``.  A chart of the orbit space is realised by projecting an affine
slice ``x0 + span(frame)`` radially onto ``Sigma_A``; horizontal lifts,
the reduced form and the reduced connection are then computed with jets.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import connlab as C
from . import jets as J
from .jets import Jet


class ReductionError(Exception):
    pass


class NotInSpError(ReductionError, ValueError):
    pass


class OffConeError(ReductionError, ValueError):
    pass


class ChartTooLargeError(ReductionError):
    pass


class DegenerateHorizontalError(ReductionError):
    pass


class CertificationError(ReductionError):
    pass


def omega_prime(N: int) -> np.ndarray:
    """Block form ``[[0, I], [-I, 0]]`` on ``R^N``."""
    return C.standard_omega(N)


def sp_residual(A: np.ndarray, Om: np.ndarray) -> float:
    return float(np.max(np.abs(A.T @ Om + Om @ A)))


@dataclass(frozen=True)
class SpElement:
    A: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2 or A.shape[0] < 4:
            raise NotInSpError(f"expected an even square matrix of size >= 4, got {A.shape}")
        object.__setattr__(self, "A", A)
        res = sp_residual(A, self.Omega)
        if res > 1e-12 * max(1.0, float(np.max(np.abs(A)))):
            raise NotInSpError(f"matrix is not in sp (residual {res:.3g})")
        if not np.any(A):
            raise NotInSpError("A must be non-zero")

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.N // 2 - 1

    @cached_property
    def Omega(self) -> np.ndarray:
        return omega_prime(self.A.shape[0])

    def pairing(self, u, v):
        """``Omega'(u, v)`` for arrays or jets (vector axis first)."""
        return _om(self.Omega, u, v)

    @classmethod
    def from_hamiltonian(cls, S: np.ndarray) -> "SpElement":
        """``A = Omega'^{-1} S`` for a symmetric ``S`` (so ``Omega'(v, Av) = v.S.v``)."""
        S = np.asarray(S, float)
        S = 0.5 * (S + S.T)
        Om = omega_prime(S.shape[0])
        return cls(np.linalg.solve(Om, S))

    @classmethod
    def complex_structure(cls, N: int) -> "SpElement":
        """``J0`` with ``Omega'(v, J0 v) = |v|^2``."""
        return cls(-omega_prime(N))


def _om(Om: np.ndarray, u, v):
    nu = u.ndim if isinstance(u, Jet) else np.ndim(u)
    nv = v.ndim if isinstance(v, Jet) else np.ndim(v)
    su = "i" + "abc"[: nu - 1]
    sv = "j" + "def"[: nv - 1]
    return J.einsum(f"{su},ij,{sv}->{su[1:]}{sv[1:]}", u, Om, v)


def sigma_project(A: SpElement, v):
    """Rescale ``v`` onto ``Sigma_A``."""
    q = _om(A.Omega, v, J.matmul(A.A, v))
    q0 = float(J.value(q))
    if not q0 > 0:
        raise OffConeError(f"Omega'(v, Av) = {q0:.3g} is not positive")
    if isinstance(v, Jet):
        return v * J.power(q, -0.5)
    return np.asarray(v, float) / np.sqrt(q0)


def horizontal_projector(A: SpElement, x: np.ndarray):
    """Map ``v -> v - Omega'(v, Ax) x + Omega'(v, x) Ax`` onto ``span(x, Ax)^perp``."""
    Om = A.Omega
    Ax = A.A @ x

    def proj(v):
        return v - (v @ Om @ Ax) * x + (v @ Om @ x) * Ax

    return proj


def symplectic_gram_schmidt(vectors: Sequence[np.ndarray], Om: np.ndarray, dim: int, tol: float = 1e-10) -> np.ndarray:
    """Darboux basis ``[a_1..a_n, b_1..b_n]`` (columns) of the span of ``vectors``."""
    pool = [np.asarray(v, float) for v in vectors]
    a_s, b_s = [], []
    for _ in range(dim // 2):
        norms = [np.linalg.norm(v) for v in pool]
        i = int(np.argmax(norms))
        if norms[i] < tol:
            raise DegenerateHorizontalError("span collapsed during symplectic Gram-Schmidt")
        a = pool[i] / norms[i]
        pair = [a @ Om @ v for v in pool]
        j = int(np.argmax(np.abs(pair)))
        if abs(pair[j]) < tol:
            raise DegenerateHorizontalError("span is isotropic; no symplectic partner")
        b = pool[j] / pair[j]
        a_s.append(a)
        b_s.append(b)
        pool = [v - (v @ Om @ b) * a + (v @ Om @ a) * b for v in pool]
    return np.column_stack(a_s + b_s)


@dataclass(frozen=True)
class SigmaChart:
    A: SpElement
    x0: np.ndarray
    frame: np.ndarray  # N x 2n, columns f_i
    radius: float

    @property
    def dim(self) -> int:
        return self.frame.shape[1]

    @property
    def n(self) -> int:
        return self.A.n

    def embed(self, y):
        """Point of ``Sigma_A`` over chart coordinates ``y`` (jets allowed)."""
        v = self.x0 + J.matmul(self.frame, y)
        return sigma_project(self.A, v)

    def normalizer(self, y) -> float:
        y = np.asarray(y, float)
        v = self.x0 + self.frame @ y
        return float(v @ self.A.Omega @ self.A.A @ v)

    def lift(self, x: Jet):
        """Horizontal lifts ``Xbar[:, i]`` of the coordinate vectors, plus the
        flow coefficients ``c_i`` with ``Xbar_i = d_i x + c_i A x + d_i' x``."""
        return horizontal_lift(self.A, x)

    def transversality(self, y) -> int:
        x = self.embed(Jet.variables(np.asarray(y, float), 1))
        dx = x.grad().value
        return int(np.linalg.matrix_rank(np.column_stack([dx, self.A.A @ x.value]), tol=1e-10))


def build_chart(A: SpElement, x0, radius: float = 0.3, frame=None, margin: float = 1e-3, tol: float = 1e-10) -> SigmaChart:
    """Chart of the orbit space around ``x0``; the frame is built if not given."""
    x0 = np.asarray(x0, dtype=float)
    Om, M = A.Omega, A.A
    N = A.N
    if x0.shape != (N,):
        raise ValueError(f"base point must have length {N}")
    h = float(x0 @ Om @ M @ x0)
    if abs(h - 1.0) > tol:
        raise OffConeError(f"base point is not on Sigma_A (Omega'(x0, A x0) = {h:.12g})")
    if frame is None:
        proj = horizontal_projector(A, x0)
        frame = symplectic_gram_schmidt([proj(e) for e in np.eye(N)], Om, N - 2)
    else:
        frame = np.asarray(frame, dtype=float)
        if frame.shape != (N, N - 2):
            raise ValueError(f"frame must be {N}x{N - 2}")
        Ax0 = M @ x0
        off = np.max(np.abs(np.concatenate([x0 @ Om @ frame, Ax0 @ Om @ frame])))
        if off > tol:
            raise DegenerateHorizontalError(f"frame is not horizontal at x0 (residual {off:.3g})")
        gram = frame.T @ Om @ frame
        if np.max(np.abs(gram - C.standard_omega(N - 2))) > 1e-9:
            raise DegenerateHorizontalError("frame is not symplectic")
    quad = frame.T @ Om @ M @ frame
    quad = 0.5 * (quad + quad.T)
    lam = float(np.min(np.linalg.eigvalsh(quad)))
    if 1.0 + min(lam, 0.0) * radius**2 <= margin:
        raise ChartTooLargeError(
            f"normalizer reaches {1.0 + lam * radius**2:.3g} inside radius {radius}"
        )
    return SigmaChart(A, x0, frame, float(radius))


def horizontal_lift(A: SpElement, x: Jet):
    """Lifts ``Xbar_i = d_i x + c_i A x + e_i x`` lying in ``span(x, Ax)^perp``.

    The coefficients solve the two linear constraints exactly; a singular
    system raises instead of falling back to a least-squares projection.
    """
    Om, M = A.Omega, A.A
    dx = x.grad()
    x1 = x.truncate(dx.order)
    Ax = J.matmul(M, x1)
    a11 = _om(Om, x1, Ax)
    a12 = _om(Om, x1, x1)
    a21 = _om(Om, Ax, Ax)
    a22 = _om(Om, Ax, x1)
    det = a11 * a22 - a12 * a21
    d0 = float(J.value(det))
    if abs(d0) < 1e-12:
        raise DegenerateHorizontalError(f"horizontal-lift system is singular (det {d0:.3g})")
    b1 = -_om(Om, x1, dx)  # shape (2n,)
    b2 = -_om(Om, Ax, dx)
    inv_det = J.reciprocal(det)
    c = (b1 * a22 - b2 * a12) * inv_det
    e = (a11 * b2 - a21 * b1) * inv_det
    Xbar = dx + J.einsum("a,i->ai", Ax, c) + J.einsum("a,i->ai", x1, e)
    return Xbar, c


def reduced_form_jet(chart: SigmaChart, y0, order: int) -> Jet:
    y = Jet.variables(np.asarray(y0, float), order + 1)
    x = chart.embed(y)
    Xbar, _ = horizontal_lift(chart.A, x)
    return _om(chart.A.Omega, Xbar, Xbar)


def reduced_form(chart: SigmaChart, y) -> np.ndarray:
    return reduced_form_jet(chart, y, 0).value


def reduced_form_field(chart: SigmaChart) -> C.SymplecticFormField:
    def fn(y):
        return J.local(lambda y0, k: reduced_form_jet(chart, y0, k), y)

    return C.SymplecticFormField(chart.dim, fn)


def _reduced_gamma_at(chart: SigmaChart, y0, k: int) -> Jet:
    A = chart.A
    Om, M = A.Omega, A.A
    y = Jet.variables(np.asarray(y0, float), k + 2)
    x = chart.embed(y)
    Xbar, c = horizontal_lift(A, x)  # order k+1
    dX = Xbar.grad()  # [a, j, i] = d_i Xbar_j, order k
    Xb = Xbar.truncate(k)
    c = c.truncate(k)
    xk = x.truncate(k)
    AX = J.matmul(M, Xb)
    Axk = J.matmul(M, xk)
    V = (
        dX.transpose(0, 2, 1)
        + J.einsum("aj,i->aij", AX, c)
        - J.einsum("ij,a->aij", _om(Om, AX, Xb), xk)
        + J.einsum("ij,a->aij", _om(Om, Xb, Xb), Axk)
    )
    wred = _om(Om, Xb, Xb)
    proj = J.einsum("al,ab,bij->lij", Xb, Om, V)
    return J.einsum("ml,lij->mij", J.inv(wred), proj)


def reduced_connection(chart: SigmaChart) -> C.ConnectionField:
    """Christoffel symbols of the reduced connection on the chart."""

    def fn(y):
        return J.local(lambda y0, k: _reduced_gamma_at(chart, y0, k), y)

    return C.ConnectionField(chart.dim, fn)


def abar(A: SpElement, x: np.ndarray, k: int) -> np.ndarray:
    """Matrix of ``X -> A^k X + Omega'(A^k X, x) A x - Omega'(A^k X, A x) x``."""
    Om = A.Omega
    Ak = np.linalg.matrix_power(A.A, k)
    Ax = A.A @ x
    # Omega'(A^k X, v) = X . (Ak^T Om v)
    return Ak + np.outer(Ax, Ak.T @ Om @ x) - np.outer(x, Ak.T @ Om @ Ax)


def formula_data(chart: SigmaChart, y) -> dict:
    """``rho``, ``U`` and ``f`` on the chart from the closed-form pullback expressions."""
    A = chart.A
    n = A.n
    Om = A.Omega
    x = chart.embed(Jet.variables(np.asarray(y, float), 1))
    Xbar, _ = horizontal_lift(A, x)
    X = Xbar.value
    x0 = x.value
    wred = X.T @ Om @ X
    winv = np.linalg.inv(wred)
    A1 = abar(A, x0, 1)
    A2 = abar(A, x0, 2)
    rho = winv @ (X.T @ Om @ (-2 * (n + 1) * A1 @ X))
    Ubar = -2 * (n + 1) * (2 * n + 1) * (A2 @ x0)
    U = winv @ (X.T @ Om @ Ubar)
    A2x = A.A @ A.A @ x0
    f = 2 * (n + 1) * (2 * n + 1) * float(A2x @ Om @ (A.A @ x0))
    # horizontality of the lifted images checks the formulas land in H_x
    stray = np.concatenate([x0 @ Om @ Ubar[:, None], (A.A @ x0) @ Om @ Ubar[:, None]])
    return {"rho": rho, "U": U, "f": f, "omega": wred, "Ubar_vertical": float(np.max(np.abs(stray)))}


def certify_reduction(chart: SigmaChart, points: Sequence, tol: float = 1e-6) -> dict:
    """Compare connection-derived ``(rho, U, f, K)`` with the closed-form pullbacks."""
    nabla = reduced_connection(chart)
    omega = reduced_form_field(chart)
    data, report = C.ricci_type_invariants(nabla, omega, points, tol=max(tol, C.DEFAULT_W_TOL), k_tol=tol)
    dev = {"rho": 0.0, "U": 0.0, "f": 0.0}
    for y, d in zip(points, data):
        ref = formula_data(chart, y)
        dev["rho"] = max(dev["rho"], float(np.max(np.abs(d.rho - ref["rho"]))))
        dev["U"] = max(dev["U"], float(np.max(np.abs(d.U - ref["U"]))))
        dev["f"] = max(dev["f"], abs(d.f - ref["f"]))
    out = {
        "max_dev_rho": dev["rho"],
        "max_dev_U": dev["U"],
        "max_dev_f": dev["f"],
        "K_spread": report["K_spread"],
        "K_mean": report["K_mean"],
        "max_w_norm": report["max_w_norm"],
        "points": len(points),
    }
    out["ok"] = bool(max(dev.values()) <= tol and report["K_spread"] <= tol)
    if not out["ok"]:
        raise CertificationError(f"reduction certification failed: {out}")
    return out


# ---------------------------------------------------------------------------
# local model matrix


def paper_basis_permutation(n: int) -> np.ndarray:
    """Permutation matrix ``P`` with ``P @ v_model = v_Omega'``.

    Model ordering is ``(e0, e1, rest)`` with ``Omega'(e0, e1) = 1`` and the
    rest in standard Darboux order; ``e0`` maps to index 0, ``e1`` to
    ``n + 1`` and the rest to ``1..n`` and ``n+2..2n+1``.
    """
    N = 2 * n + 2
    target = [0, n + 1] + list(range(1, n + 1)) + list(range(n + 2, N))
    P = np.zeros((N, N))
    for src, dst in enumerate(target):
        P[dst, src] = 1.0
    return P


def a_tilde(rho, u, f: float) -> SpElement:
    """Model matrix reproducing prescribed ``(rho, U, f)`` at ``e0`` by reduction."""
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    d = rho.shape[0]
    if rho.shape != (d, d) or d % 2 or u.shape != (d,):
        raise ValueError("rho must be 2n x 2n and u of length 2n")
    n = d // 2
    Jstd = C.standard_omega(d)
    if sp_residual(rho, Jstd) > 1e-10 * max(1.0, float(np.max(np.abs(rho)))):
        raise ValueError("rho is not in sp(2n)")
    c1 = 2 * (n + 1) * (2 * n + 1)
    B = np.zeros((d + 2, d + 2))
    B[0, 1] = f / c1
    B[0, 2:] = -(u @ Jstd) / c1
    B[1, 0] = 1.0
    B[2:, 1] = -u / c1
    B[2:, 2:] = -rho / (2 * (n + 1))
    P = paper_basis_permutation(n)
    return SpElement(P @ B @ P.T)


def model_chart(A: SpElement, radius: float = 0.2) -> SigmaChart:
    """Chart at ``e0`` whose frame is the image of the model's ``rest`` block."""
    n = A.n
    P = paper_basis_permutation(n)
    e0 = P[:, 0]
    return build_chart(A, e0, radius, frame=P[:, 2:])
