"""Pointwise algebra of compatible complex structures and curvature.

Everything here acts on a single tangent space ``(V, omega_x)``: sampling
compatible ``j``, the projections ``j+/-``, the curvature condition
``j+ R(j- X, j- Y) j- Z = 0``, the torsion correction turning an almost
symplectic connection into a symplectic one, and a rank certificate that no
nonzero symmetric 3-tensor ``B`` satisfies ``B(j- X, j- Y, j- Z) = 0`` for
all ``j``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from . import connlab as C
from . import jets as J


class TwistorError(Exception):
    pass


class NeedMoreSamplesError(TwistorError, ValueError):
    pass


class InvalidInputError(TwistorError, ValueError):
    pass


def darboux_basis(omega_x: np.ndarray) -> np.ndarray:
    """Columns ``F`` with ``F.T @ omega_x @ F`` the standard form."""
    w = np.asarray(omega_x, float)
    d = w.shape[0]
    C._inv_omega(w)
    pool = list(np.eye(d))
    a_s, b_s = [], []
    for _ in range(d // 2):
        norms = [np.linalg.norm(v) for v in pool]
        i = int(np.argmax(norms))
        a = pool[i] / norms[i]
        pair = [a @ w @ v for v in pool]
        k = int(np.argmax(np.abs(pair)))
        b = pool[k] / pair[k]
        a_s.append(a)
        b_s.append(b)
        pool = [v - (v @ w @ b) * a + (v @ w @ a) * b for v in pool]
    return np.column_stack(a_s + b_s)


def standard_j(d: int) -> np.ndarray:
    """``[[0, -I], [I, 0]]``; compatible with the standard form, ``B_j = I``."""
    n = d // 2
    j = np.zeros((d, d))
    j[:n, n:] = -np.eye(n)
    j[n:, :n] = np.eye(n)
    return j


@dataclass(frozen=True)
class CompatibleJ:
    j: np.ndarray
    omega_x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "j", np.asarray(self.j, float))
        object.__setattr__(self, "omega_x", np.asarray(self.omega_x, float))

    @property
    def dim(self) -> int:
        return self.j.shape[0]

    @property
    def B(self) -> np.ndarray:
        """``B_j(X, Y) = omega(X, j Y)``."""
        return self.omega_x @ self.j

    def residuals(self) -> dict:
        j, w = self.j, self.omega_x
        B = self.B
        return {
            "square": float(np.max(np.abs(j @ j + np.eye(self.dim)))),
            "compatible": float(np.max(np.abs(j.T @ w @ j - w))),
            "symmetric": float(np.max(np.abs(B - B.T))),
            "min_eig": float(np.min(np.linalg.eigvalsh(0.5 * (B + B.T)))),
        }

    def is_valid(self, tol: float = 1e-12) -> bool:
        r = self.residuals()
        scale = max(1.0, float(np.max(np.abs(self.j))) ** 2)
        return r["square"] <= tol * scale and r["compatible"] <= tol * scale and r["symmetric"] <= tol * scale and r["min_eig"] > 0


def random_compatible_j(omega_x, seed=None, spread: float = 0.5) -> CompatibleJ:
    """Conjugate of the Darboux-standard ``j`` by a random symplectic matrix."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    w = np.asarray(omega_x, float)
    d = w.shape[0]
    F = darboux_basis(w)
    H = rng.standard_normal((d, d)) * spread
    H = 0.5 * (H + H.T)
    g = expm(np.linalg.solve(C.standard_omega(d), H))  # in Sp(standard)
    G = F @ g
    j = G @ standard_j(d) @ np.linalg.inv(G)
    return CompatibleJ(j, w)


def j_projections(j: CompatibleJ) -> tuple[np.ndarray, np.ndarray]:
    """``(j+, j-)`` with ``j+- = (1 -+ i j) / 2``."""
    I = np.eye(j.dim)
    return 0.5 * (I - 1j * j.j), 0.5 * (I + 1j * j.j)


def integrability_defect(R: np.ndarray, j: CompatibleJ) -> float:
    """Largest modulus of ``j+ R(j- e_a, j- e_b) j- e_c`` over basis triples.

    ``R`` is either a :class:`~sclab.connlab.CurvaturePoint` or the array
    ``R[i, j, k, l] = R^i_jkl``.
    """
    Rarr = R.R if isinstance(R, C.CurvaturePoint) else np.asarray(R)
    jp, jm = j_projections(j)
    t = np.einsum("pi,ijkl,ka,lb,jc->pabc", jp, Rarr, jm, jm, jm)
    return float(np.max(np.abs(t)))


def torsion_correct(nabla: C.ConnectionField, omega: C.SymplecticFormField, check_points: Sequence = (), tol: float = 1e-9) -> C.ConnectionField:
    """Symplectic connection obtained from an almost symplectic one.

    With ``Tlow[a, b, c] = omega(T(e_a, e_b), e_c)`` the lowered Christoffels
    change by ``-1/2 Tlow[i,j,z] - 1/6 Tlow[j,z,i] - 1/6 Tlow[i,z,j]``.
    """
    for x in check_points:
        res = float(np.max(np.abs(C.nabla_omega(nabla, omega, x))))
        if res > tol:
            raise InvalidInputError(f"connection does not preserve omega at {x} (residual {res:.3g})")

    def fn(x):
        G = nabla(x)
        w = omega(x)
        T = G - (G.transpose(0, 2, 1) if isinstance(G, J.Jet) else np.swapaxes(G, 1, 2))
        Tlow = J.einsum("mab,mc->abc", T, w)
        Glow = J.einsum("mij,mz->ijz", G, w)
        if isinstance(Tlow, J.Jet):
            corr = Tlow * (-0.5) + Tlow.transpose(2, 0, 1) * (-1.0 / 6) + Tlow.transpose(0, 2, 1) * (-1.0 / 6)
        else:
            corr = -0.5 * Tlow - np.einsum("jzi->ijz", Tlow) / 6 - np.einsum("izj->ijz", Tlow) / 6
        return J.einsum("ijz,zm->mij", Glow + corr, C.inv_omega(w))

    return C.ConnectionField(nabla.dim, fn)


def almost_symplectic_example(omega0: np.ndarray, rng, scale: float = 0.5) -> C.ConnectionField:
    """Constant torsionful connection preserving a constant ``omega0``.

    ``omega(Gamma(e_i, e_j), e_k)`` is drawn symmetric in ``(j, k)`` only, so
    ``nabla omega = 0`` while the torsion is generic.
    """
    d = omega0.shape[0]
    L = rng.standard_normal((d, d, d)) * scale
    L = 0.5 * (L + L.transpose(0, 2, 1))
    G = np.einsum("ijk,km->mij", L, np.linalg.inv(omega0))
    return C.ConnectionField.constant(d, G)


def sym3_basis(d: int) -> list[np.ndarray]:
    """Basis of totally symmetric 3-tensors (one per multiset of indices)."""
    out = []
    for idx in itertools.combinations_with_replacement(range(d), 3):
        t = np.zeros((d, d, d))
        for p in set(itertools.permutations(idx)):
            t[p] = 1.0
        out.append(t)
    return out


def uniqueness_rank(dim: int, sample_count: int, seed=0, omega_x=None) -> dict:
    """Numerical rank of ``B -> (B(j- ., j- ., j- .))_j`` on symmetric 3-tensors."""
    expected = comb(dim + 2, 3)
    if sample_count < expected:
        raise NeedMoreSamplesError(f"need at least {expected} samples, got {sample_count}")
    w = C.standard_omega(dim) if omega_x is None else np.asarray(omega_x, float)
    rng = np.random.default_rng(seed)
    basis = sym3_basis(dim)
    blocks = []
    for _ in range(sample_count):
        _, jm = j_projections(random_compatible_j(w, rng))
        cols = [np.einsum("abc,ax,by,cz->xyz", b, jm, jm, jm).reshape(-1) for b in basis]
        M = np.column_stack(cols)
        blocks.extend([M.real, M.imag])
    M = np.vstack(blocks)
    sv = np.linalg.svd(M, compute_uv=False)
    rank = int(np.sum(sv > 1e-8 * sv[0]))
    _, _, vt = np.linalg.svd(M)
    # smallest right singular direction, as a symmetric tensor
    kernel_probe = sum(c * b for c, b in zip(vt[-1], basis))
    return {
        "rank": rank,
        "expected": expected,
        "singular_values": sv,
        "min_singular": float(sv[-1]),
        "kernel_residual": float(np.linalg.norm(M @ vt[-1])),
        "kernel_probe_norm": float(np.linalg.norm(kernel_probe)),
    }


def curvature_from_lowered(Rlow: np.ndarray, omega_x: np.ndarray) -> np.ndarray:
    """``R^i_jkl`` from ``Rlow[k, l, j, t] = omega(R(e_k, e_l) e_j, e_t)``."""
    return np.einsum("kljt,ti->ijkl", Rlow, np.linalg.inv(omega_x))


def random_ricci_type_curvature(omega_x: np.ndarray, rng) -> np.ndarray:
    """Pure Ricci-type curvature from a random symmetric Ricci tensor."""
    d = omega_x.shape[0]
    r = rng.standard_normal((d, d))
    r = 0.5 * (r + r.T)
    rho = np.linalg.solve(omega_x, r)
    return C.e_part(rho, r, omega_x, d // 2)


def random_w_curvature(omega_x: np.ndarray, rng, norm: float = 1.0) -> np.ndarray:
    """Curvature tensor with vanishing Ricci-type part and max-norm ``norm``.

    Built as ``a(T)`` for a random ``T`` in ``V (x) S^3 V`` (which satisfies
    the Bianchi identity because ``a^2 = 0``) minus its Ricci-type part.
    """
    d = omega_x.shape[0]
    T = C.KoszulElement.random(1, 3, d, rng)
    Rlow = C.koszul_a(T).t
    R = curvature_from_lowered(Rlow, omega_x)
    _, W = C.decompose(R, omega_x)
    return W * (norm / float(np.max(np.abs(W))))
