"""Oscillatory three-point kernels on the hyperbolic-cylinder symmetric surface.

Global Darboux coordinates ``(a, l)`` with ``omega = da ^ dl``.  The curved
surface has symmetries

    s_(a, l)(a', l') = (2a - a', 2 cosh(a - a') l - l')

and the phase ``S_can = cyclic sum of sinh(a1 - a2) l3``.  Replacing ``cosh``
by 1 and ``sinh`` by the identity gives the flat plane (``FLAT``), whose phase
``S_flat = -2 * signed area`` is a genuine cocycle and serves as the
comparison model for the geometric-associativity checks.

Star products are evaluated by a tensor (composite) Gauss-Legendre rule.  The
phase is linear in both ``l`` variables, so the four-dimensional sum factors
into two matrix products without changing the rule itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares, root

from . import jets as J


class WkbError(Exception):
    pass


class InternalError(WkbError):
    pass


class AmplitudeSingularityError(WkbError, ValueError):
    pass


class TruncationError(WkbError):
    pass


class QuadratureNotConvergedError(WkbError):
    pass


class InvalidKernelError(WkbError, ValueError):
    pass


# Phase scale kappa in exp(i kappa S / theta).  With the Poisson bracket
# {u, v} = X_u(v), i(X_u) omega = du, the expansion u*v = uv + (theta/2i){u,v}
# holds for kappa = -2; kappa = 1 gives uv + i theta {u, v} instead.  See
# first_order_coefficient for the calibration run.
PHASE_SCALE = -2.0
DECAY = 1e-12


@dataclass(frozen=True)
class PhasePoint:
    a: float
    l: float

    def __post_init__(self):
        a, l = float(self.a), float(self.l)
        if not (math.isfinite(a) and math.isfinite(l)):
            raise ValueError("phase point must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "l", l)

    def __iter__(self):
        yield self.a
        yield self.l

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.l])


def _pt(p) -> PhasePoint:
    return p if isinstance(p, PhasePoint) else PhasePoint(*p)


def _cosh(x):
    return J.cosh(x) if isinstance(x, J.Jet) else np.cosh(x)


def _sinh(x):
    return J.sinh(x) if isinstance(x, J.Jet) else np.sinh(x)


@dataclass(frozen=True)
class SymmetricSurface:
    """The curved surface or its flat analogue; all maps accept floats, arrays or jets."""

    name: str
    curved: bool

    def twist(self, d):
        return _cosh(d) if self.curved else 1.0

    def shear(self, d):
        return _sinh(d) if self.curved else d

    def sym(self, ax, lx, ay, ly):
        return 2 * ax - ay, 2 * self.twist(ax - ay) * lx - ly

    def phase(self, a1, l1, a2, l2, a3, l3):
        return self.shear(a1 - a2) * l3 + self.shear(a2 - a3) * l1 + self.shear(a3 - a1) * l2

    # point-level conveniences
    def symmetry(self, x, y) -> PhasePoint:
        x, y = _pt(x), _pt(y)
        return PhasePoint(*self.sym(x.a, x.l, y.a, y.l))

    def S(self, x, y, z) -> float:
        x, y, z = _pt(x), _pt(y), _pt(z)
        return float(self.phase(x.a, x.l, y.a, y.l, z.a, z.l))


CURVED = SymmetricSurface("curved", True)
FLAT = SymmetricSurface("flat", False)


def symmetry(x, y, model: SymmetricSurface = CURVED) -> PhasePoint:
    """``s_x(y)``."""
    return model.symmetry(x, y)


def s_can(x, y, z) -> float:
    return CURVED.S(x, y, z)


def s_flat(x, y, z) -> float:
    return FLAT.S(x, y, z)


# ---------------------------------------------------------------------------
# triple fixed point and the map Phi


def _fixed_point(model, ax, lx, ay, ly, az, lz):
    """Coordinates of the fixed point of ``s_x s_y s_z``.

    The a-chain is affine with slope -1, so ``a = ax - ay + az``.  The l-chain
    is affine in l; its slope and intercept are read off from two evaluations.
    """
    a = ax - ay + az

    def chain(l):
        a1, l1 = model.sym(az, lz, a, l)
        a2, l2 = model.sym(ay, ly, a1, l1)
        return model.sym(ax, lx, a2, l2)[1]

    c0 = chain(0.0 * lx)
    slope = chain(0.0 * lx + 1.0) - c0
    sv = J.value(slope) if isinstance(slope, J.Jet) else np.asarray(slope)
    if np.max(np.abs(sv + 1.0)) > 1e-9:
        raise InternalError(f"composed l-map has slope {sv}, expected -1")
    return a, c0 / (1.0 - slope)


def triple_fixed_point(x, y, z, model: SymmetricSurface = CURVED) -> PhasePoint:
    x, y, z = _pt(x), _pt(y), _pt(z)
    a, l = _fixed_point(model, x.a, x.l, y.a, y.l, z.a, z.l)
    return PhasePoint(a, l)


def fixed_point_residual(x, y, z, X, model: SymmetricSurface = CURVED) -> float:
    """Componentwise max of ``s_x s_y s_z(X) - X``."""
    w = model.symmetry(x, model.symmetry(y, model.symmetry(z, X)))
    X = _pt(X)
    return max(abs(w.a - X.a), abs(w.l - X.l))


def _phi(model, ax, lx, ay, ly, az, lz):
    Xa, Xl = _fixed_point(model, ax, lx, ay, ly, az, lz)
    Ya, Yl = model.sym(az, lz, Xa, Xl)
    Za, Zl = model.sym(ay, ly, Ya, Yl)
    return Xa, Xl, Ya, Yl, Za, Zl


def phi_map(x, y, z, model: SymmetricSurface = CURVED) -> tuple[PhasePoint, PhasePoint, PhasePoint]:
    """``(X, Y, Z)`` with ``s_x s_y s_z X = X``, ``Y = s_z X``, ``Z = s_y Y``."""
    x, y, z = _pt(x), _pt(y), _pt(z)
    c = _phi(model, x.a, x.l, y.a, y.l, z.a, z.l)
    return PhasePoint(c[0], c[1]), PhasePoint(c[2], c[3]), PhasePoint(c[4], c[5])


def _batch_variables(values: np.ndarray) -> list[J.Jet]:
    """First-order jets for each column of ``values`` (shape (G, d)), batched over G."""
    G, d = values.shape
    out = []
    for i in range(d):
        coef = np.zeros((d + 1, G))
        coef[0] = values[:, i]
        coef[1 + i] = 1.0
        out.append(J.Jet(coef, d, 1))
    return out


def jac_phi_batch(points: np.ndarray, model: SymmetricSurface = CURVED) -> np.ndarray:
    """``|det dPhi|`` for rows ``(ax, lx, ay, ly, az, lz)``; jets of order 1."""
    pts = np.atleast_2d(np.asarray(points, float))
    outs = _phi(model, *_batch_variables(pts))
    D = np.stack([o.coef[1:] for o in outs])  # (6 outputs, 6 inputs, G)
    return np.abs(np.linalg.det(np.moveaxis(D, 2, 0)))


def jac_phi(x, y, z, model: SymmetricSurface = CURVED) -> float:
    x, y, z = _pt(x), _pt(y), _pt(z)
    return float(jac_phi_batch(np.array([[x.a, x.l, y.a, y.l, z.a, z.l]]), model)[0])


def flat_jacobian() -> float:
    """``Jac_Phi`` of the flat model, a constant (16); normalizes ``JacSqrt`` to 1 on the diagonal."""
    return jac_phi((0.0, 0.0), (0.0, 0.0), (0.0, 0.0), FLAT)


def symmetry_jacobian_det(x, y, model: SymmetricSurface = CURVED) -> float:
    """``det D(s_x)`` at ``y``."""
    x, y = _pt(x), _pt(y)
    v = J.Jet.variables([y.a, y.l], 1)
    a, l = model.sym(x.a, x.l, v[0], v[1])
    return float(np.linalg.det(np.stack([a.coef[1:], l.coef[1:]])))


def symmetry_law_residuals(samples: Sequence[Sequence], model: SymmetricSurface = CURVED) -> dict:
    """Residuals of the symmetric-space axioms on pairs ``(x, y)`` (a third point ``z`` optional).

    ``involution``: ``s_x s_x y = y``; ``fixed``: ``s_x x = x``; ``unit_det``:
    ``|det D s_x| - 1``; ``composition``: ``s_{s_x y} z = s_x s_y s_x z``.
    """
    out = {"involution": 0.0, "fixed": 0.0, "unit_det": 0.0, "composition": 0.0}

    def dist(p, q):
        return max(abs(p.a - q.a), abs(p.l - q.l))

    for s in samples:
        x, y = _pt(s[0]), _pt(s[1])
        z = _pt(s[2]) if len(s) > 2 else y
        sx = lambda p: model.symmetry(x, p)  # noqa: E731
        out["involution"] = max(out["involution"], dist(sx(sx(y)), y))
        out["fixed"] = max(out["fixed"], dist(sx(x), x))
        out["unit_det"] = max(out["unit_det"], abs(abs(symmetry_jacobian_det(x, y, model)) - 1.0))
        lhs = model.symmetry(sx(y), z)
        rhs = sx(model.symmetry(y, sx(z)))
        out["composition"] = max(out["composition"], dist(lhs, rhs))
    return out


# ---------------------------------------------------------------------------
# amplitudes


def sqrt_cosh(a):
    return np.sqrt(np.cosh(a))


AMPLITUDE_KINDS = ("A0", "Pfamily", "JacSqrt")


@dataclass(frozen=True)
class Amplitude:
    """Amplitude of the kernel as a function of the a-coordinates.

    ``JacSqrt`` is ``sqrt(Jac_Phi / Jac_flat)`` evaluated at ``l = 0``; the
    factored quadrature relies on its independence of the l-coordinates, which
    is checked separately.
    """

    kind: str = "A0"
    P: Callable | None = None

    def __post_init__(self):
        if self.kind not in AMPLITUDE_KINDS:
            raise InvalidKernelError(f"unknown amplitude kind {self.kind!r}")
        if self.kind == "Pfamily" and self.P is None:
            raise InvalidKernelError("Pfamily amplitude needs a function P")

    def on_a(self, ax, ay, az) -> np.ndarray:
        ax, ay, az = np.broadcast_arrays(*(np.asarray(t, float) for t in (ax, ay, az)))
        if self.kind == "A0":
            return np.cosh(ay - az)
        if self.kind == "Pfamily":
            den = np.asarray(self.P(ay - az), float)
            if np.any(den == 0) or not np.all(np.isfinite(den)):
                raise AmplitudeSingularityError("P vanishes at a needed argument")
            return self.P(ax - az) * self.P(ay - ax) / den * np.cosh(ay - az)
        pts = np.stack([ax.ravel(), 0 * ax.ravel(), ay.ravel(), 0 * ay.ravel(), az.ravel(), 0 * az.ravel()], axis=1)
        return np.sqrt(jac_phi_batch(pts) / flat_jacobian()).reshape(ax.shape)


def amplitude(kind: str, x, y, z, P: Callable | None = None) -> float:
    x, y, z = _pt(x), _pt(y), _pt(z)
    if kind == "JacSqrt":
        return math.sqrt(jac_phi(x, y, z) / flat_jacobian())
    return float(Amplitude(kind, P).on_a(x.a, y.a, z.a))


STRONGLY_CLOSED = Amplitude("Pfamily", sqrt_cosh)


@dataclass(frozen=True)
class WkbKernel:
    theta: float
    amp: Amplitude = field(default_factory=Amplitude)
    phase_scale: float = PHASE_SCALE
    model: SymmetricSurface = CURVED

    def __post_init__(self):
        if not self.theta > 0:
            raise InvalidKernelError("theta must be positive")
        if self.phase_scale == 0:
            raise InvalidKernelError("phase scale must be nonzero")

    @property
    def prefactor(self) -> float:
        """``(kappa / (2 pi theta))^2``: leading stationary-phase term equals ``uv``."""
        return (self.phase_scale / (2 * math.pi * self.theta)) ** 2


# ---------------------------------------------------------------------------
# quadrature


def composite_gl(lo: float, hi: float, n: int, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights with ``n`` nodes in total."""
    if hi <= lo:
        raise ValueError("empty interval")
    order = min(order, n)
    panels = max(1, n // order)
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    h = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + h[:, None] * t[None, :]).ravel()
    weights = (h[:, None] * w[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True)
class QuadratureGrid:
    """Box ``box_y x box_z`` (each ``((a_lo, a_hi), (l_lo, l_hi))``) and node counts per axis."""

    box_y: tuple
    box_z: tuple
    n_a: int = 512
    n_l: int = 512
    order: int = 16

    def refined(self) -> "QuadratureGrid":
        return QuadratureGrid(self.box_y, self.box_z, 2 * self.n_a, 2 * self.n_l, self.order)

    def axes(self):
        (ya, yl), (za, zl) = self.box_y, self.box_z
        return (
            composite_gl(*ya, self.n_a, self.order),
            composite_gl(*yl, self.n_l, self.order),
            composite_gl(*za, self.n_a, self.order),
            composite_gl(*zl, self.n_l, self.order),
        )


def _evaluate(u, A, L) -> np.ndarray:
    if isinstance(u, J.ScalarField):
        A, L = np.broadcast_arrays(A, L)
        return np.broadcast_to(np.asarray(u(np.stack([A, L])), float), A.shape)
    return np.asarray(u(A, L), float)


def boundary_max(u, box, n: int = 257) -> float:
    """Largest ``|u|`` on the boundary of a box in ``(a, l)``."""
    (a0, a1), (l0, l1) = box
    ta, tl = np.linspace(a0, a1, n), np.linspace(l0, l1, n)
    vals = [
        _evaluate(u, ta, np.full(n, l0)),
        _evaluate(u, ta, np.full(n, l1)),
        _evaluate(u, np.full(n, a0), tl),
        _evaluate(u, np.full(n, a1), tl),
    ]
    return float(max(np.max(np.abs(v)) for v in vals))


@dataclass(frozen=True)
class GaussianBump:
    """``exp(-((a - a0)^2 + (l - l0)^2) / (2 w^2))``."""

    a0: float
    l0: float
    w: float

    def field(self) -> J.ScalarField:
        a, l = J.variables(2)
        r2 = (a - self.a0) ** 2 + (l - self.l0) ** 2
        return J.ScalarField(2, J.fn("exp", r2 * (-1.0 / (2 * self.w**2))))

    def __call__(self, A, L):
        return np.exp(-((A - self.a0) ** 2 + (L - self.l0) ** 2) / (2 * self.w**2))

    def box(self, decay: float = DECAY, margin: float = 1.02) -> tuple:
        r = self.w * math.sqrt(2 * math.log(1 / decay)) * margin
        return ((self.a0 - r, self.a0 + r), (self.l0 - r, self.l0 + r))

    def l_transform(self, A, k):
        """``int u(A, l) exp(i k l) dl`` in closed form."""
        return np.exp(-((A - self.a0) ** 2) / (2 * self.w**2)) * math.sqrt(2 * math.pi) * self.w * np.exp(1j * k * self.l0 - 0.5 * (k * self.w) ** 2)


@dataclass(frozen=True)
class StarResult:
    value: complex
    error_estimate: float
    nodes: tuple[int, int]


def _star_sum(u, v, kernel: WkbKernel, grid: QuadratureGrid, x: PhasePoint) -> complex:
    (ay, way), (ly, wly), (az, waz), (lz, wlz) = grid.axes()
    c = kernel.phase_scale / kernel.theta
    sh = kernel.model.shear
    U = _evaluate(u, ay[:, None], ly[None, :])  # (Nay, Nly)
    V = _evaluate(v, az[:, None], lz[None, :])  # (Naz, Nlz)
    # l_y enters the phase as shear(a_z - a_x) l_y; l_z as shear(a_x - a_y) l_z
    E1 = wly[:, None] * np.exp(1j * c * np.outer(ly, sh(az - x.a)))  # (Nly, Naz)
    E2 = wlz[:, None] * np.exp(1j * c * np.outer(lz, sh(x.a - ay)))  # (Nlz, Nay)
    Uh = U @ E1  # (Nay, Naz)
    Vh = (V @ E2).T  # (Nay, Naz)
    amp = kernel.amp.on_a(x.a, ay[:, None], az[None, :])
    base = np.exp(1j * c * sh(ay[:, None] - az[None, :]) * x.l)
    total = np.einsum("i,j,ij->", way, waz, amp * base * Uh * Vh)
    return complex(kernel.prefactor * total)


def star_product(u, v, kernel: WkbKernel, grid: QuadratureGrid, x, tol: float | None = None, decay: float = DECAY) -> StarResult:
    """``u *_theta v`` at ``x`` with a node-doubling error estimate.

    ``u`` and ``v`` are :class:`~sclab.jets.ScalarField` objects on ``(a, l)``
    or vectorized callables ``f(A, L)``.
    """
    x = _pt(x)
    for name, f, box in (("u", u, grid.box_y), ("v", v, grid.box_z)):
        bm = boundary_max(f, box)
        if bm > decay:
            raise TruncationError(f"{name} is {bm:.3g} on the box boundary (threshold {decay:g})")
    coarse = _star_sum(u, v, kernel, grid, x)
    fine_grid = grid.refined()
    fine = _star_sum(u, v, kernel, fine_grid, x)
    err = abs(fine - coarse)
    if tol is not None and err > tol:
        raise QuadratureNotConvergedError(f"refinement difference {err:.3g} exceeds {tol:g}")
    return StarResult(fine, err, (fine_grid.n_a, fine_grid.n_l))


def star_product_gaussian(u: GaussianBump, v: GaussianBump, kernel: WkbKernel, x, n_a: int = 2048) -> complex:
    """Independent route for Gaussian bumps: both l-integrals in closed form.

    Only the two a-integrals are done numerically; the remaining integrand is
    damped like ``exp(-(kappa w sinh(da) / theta)^2 / 2)``, so it is smooth and
    concentrated.
    """
    x = _pt(x)
    c = kernel.phase_scale / kernel.theta
    sh = kernel.model.shear
    (ya, _), (za, _) = u.box(), v.box()
    ay, way = composite_gl(*ya, n_a)
    az, waz = composite_gl(*za, n_a)
    Uh = u.l_transform(ay[:, None], c * sh(az[None, :] - x.a))
    Vh = v.l_transform(az[None, :], c * sh(x.a - ay[:, None]))
    amp = kernel.amp.on_a(x.a, ay[:, None], az[None, :])
    base = np.exp(1j * c * sh(ay[:, None] - az[None, :]) * x.l)
    return complex(kernel.prefactor * np.einsum("i,j,ij->", way, waz, amp * base * Uh * Vh))


def poisson_bracket(u, v, x) -> float:
    """``{u, v} = X_u(v)`` with ``i(X_u) omega = du`` and ``omega = da ^ dl``.

    In coordinates this is ``du/dl dv/da - du/da dv/dl``, so ``{a, l} = -1``.
    """
    x = _pt(x)
    gu = _grad(u, x)
    gv = _grad(v, x)
    return float(gu[1] * gv[0] - gu[0] * gv[1])


def _grad(u, x: PhasePoint) -> np.ndarray:
    if isinstance(u, J.ScalarField):
        return u.jet([x.a, x.l], 1).derivative_tensor(1)
    return np.asarray(J.fd_derivatives(lambda p: u(p[0], p[1]), [x.a, x.l], 1)[1], float)


def _product(u, v, x: PhasePoint) -> float:
    return float(_evaluate(u, np.array(x.a), np.array(x.l)) * _evaluate(v, np.array(x.a), np.array(x.l)))


def first_order_coefficient(u, v, x, theta: float, phase_scale: float, box_y, box_z, target: float = 1e-10) -> float:
    """``c`` in ``u*v ~ uv + c i theta {u, v}``.

    The imaginary part of ``u*v`` is odd in theta, so ``Im(u*v) / (theta {u,v})``
    is ``c + O(theta^2)``; one Richardson step with ``theta/2`` removes the
    quadratic term.  Requires ``{u, v}(x) != 0``.
    """
    x = _pt(x)
    pb = poisson_bracket(u, v, x)
    if abs(pb) < 1e-6:
        raise ValueError("calibration needs a pair with nonzero bracket at x")

    def c(th):
        val = converged_star_product(u, v, WkbKernel(th, phase_scale=phase_scale), box_y, box_z, x, target).value
        return val.imag / (th * pb)

    return (4 * c(theta / 2) - c(theta)) / 3


def converged_star_product(
    u, v, kernel: WkbKernel, box_y, box_z, x, target: float = 1e-9, n0: int = 128, n_max: int = 8192, accept: Callable | None = None
) -> StarResult:
    """Refine until the estimate ``|Q(n_a, n_l) - Q(2 n_a, 2 n_l)|`` is below ``target``.

    The oscillation is much faster along ``l`` than along ``a``, so after each
    failed step only the axis whose halved resolution moves the value more is
    doubled.  ``accept(result)`` may stop the refinement earlier.
    """
    x = _pt(x)
    grid = QuadratureGrid(box_y, box_z, n0, n0)
    while True:
        r = star_product(u, v, kernel, grid, x)
        if r.error_estimate <= target or (accept is not None and accept(r)):
            return r
        fine = grid.refined()
        err_a = abs(r.value - _star_sum(u, v, kernel, QuadratureGrid(box_y, box_z, grid.n_a, fine.n_l, grid.order), x))
        err_l = abs(r.value - _star_sum(u, v, kernel, QuadratureGrid(box_y, box_z, fine.n_a, grid.n_l, grid.order), x))
        n_a = 2 * grid.n_a if err_a >= 0.1 * err_l else grid.n_a
        n_l = 2 * grid.n_l if err_l >= 0.1 * err_a else grid.n_l
        if max(n_a, n_l) > n_max:
            raise QuadratureNotConvergedError(f"refinement estimate {r.error_estimate:.3g} above {target:g} at {n_a} x {n_l} nodes")
        grid = QuadratureGrid(box_y, box_z, n_a, n_l, grid.order)


@dataclass
class ExpansionRow:
    theta: float
    star: complex
    classical: float
    bracket: float
    residual: float
    quad_error: float


def expansion_sweep(
    u, v, x, thetas: Sequence[float], box_y, box_z, target: float = 1e-9, kernel_kw: dict | None = None, rel_margin: float | None = 0.01, n_max: int = 8192
) -> tuple[list[ExpansionRow], float]:
    """Residuals ``|u*v - uv - (theta/2i){u, v}|`` and their fitted log-log slope.

    Refinement stops at ``target`` absolute error, or earlier once the error is
    below ``rel_margin`` times the residual it would produce.
    """
    x = _pt(x)
    kernel_kw = kernel_kw or {}
    uv = _product(u, v, x)
    pb = poisson_bracket(u, v, x)
    rows = []
    for th in thetas:

        def residual(r, th=th):
            return abs(r.value - uv - th / 2j * pb)

        accept = None if rel_margin is None else (lambda r, residual=residual: r.error_estimate <= rel_margin * residual(r))
        r = converged_star_product(u, v, WkbKernel(th, **kernel_kw), box_y, box_z, x, target, n_max=n_max, accept=accept)
        rows.append(ExpansionRow(th, r.value, uv, pb, residual(r), r.error_estimate))
    slope = float(np.polyfit(np.log(thetas), np.log([r.residual for r in rows]), 1)[0])
    return rows, slope


# ---------------------------------------------------------------------------
# cochain checks


def random_points(rng, count: int, a_scale: float = 1.0, l_scale: float = 1.0) -> list[PhasePoint]:
    a = rng.uniform(-a_scale, a_scale, count)
    l = rng.uniform(-l_scale, l_scale, count)
    return [PhasePoint(p, q) for p, q in zip(a, l)]


def check_admissible(model: SymmetricSurface, samples: Sequence[Sequence]) -> dict:
    """Residuals of admissibility, total antisymmetry and symmetry invariance.

    ``samples`` are tuples ``(x, y, z)`` or ``(x, y, z, w)``; ``w`` (default
    ``y``) is the centre of the diagonal symmetry.
    """
    adm = anti = inv = 0.0
    for s in samples:
        x, y, z = (_pt(p) for p in s[:3])
        w = _pt(s[3]) if len(s) > 3 else y
        S = model.S(x, y, z)
        adm = max(adm, abs(S + model.S(x, model.symmetry(x, y), z)))
        for t in ((y, x, z), (x, z, y), (z, y, x)):
            anti = max(anti, abs(S + model.S(*t)))
        sw = [model.symmetry(w, p) for p in (x, y, z)]
        inv = max(inv, abs(model.S(*sw) - S))
    return {"admissibility": adm, "antisymmetry": anti, "invariance": inv}


def coboundary(model: SymmetricSurface, p0, p1, p2, p3) -> float:
    """``(delta S)(p0, p1, p2, p3)``."""
    S = model.S
    return S(p1, p2, p3) - S(p0, p2, p3) + S(p0, p1, p3) - S(p0, p1, p2)


def cocycle_defect(model: SymmetricSurface, samples: Sequence[Sequence]) -> float:
    return max((abs(coboundary(model, *q)) for q in samples), default=0.0)


def associativity_residual(model: SymmetricSurface, g, quad: Sequence, ts: Sequence) -> float:
    """``max_t |S(a,b,t) + S(t,c,d) - S(a,phi t,d) - S(phi t,b,c)|`` with ``phi = s_g``."""
    a, b, c, d = (_pt(p) for p in quad)
    S = model.S
    worst = 0.0
    for t in ts:
        t = _pt(t)
        tau = model.symmetry(g, t)
        worst = max(worst, abs(S(a, b, t) + S(t, c, d) - S(a, tau, d) - S(tau, b, c)))
    return worst


@dataclass
class BarycentreSearch:
    found: bool
    g: PhasePoint | None
    residual: float
    message: str


def find_barycentre(model: SymmetricSurface, quad: Sequence, probes: Sequence, starts: Sequence | None = None, check_ts: Sequence = (), tol: float = 1e-8) -> BarycentreSearch:
    """Locate ``g`` zeroing the associativity defect at two probe points.

    Levenberg-Marquardt copes with the flat case, where the two equations
    coincide and the solutions form a line.  The best candidate is re-checked
    on ``check_ts``; a miss is reported rather than raised.
    """
    quad = [_pt(p) for p in quad]
    probes = [_pt(p) for p in probes]
    a, b, c, d = quad
    S = model.S

    def F(gv):
        g = PhasePoint(*gv)
        out = []
        for t in probes:
            tau = model.symmetry(g, t)
            out.append(S(a, b, t) + S(t, c, d) - S(a, tau, d) - S(tau, b, c))
        return out

    if starts is None:
        centre = np.mean([p.as_array() for p in quad], axis=0)
        starts = [centre] + [centre + o for o in ([0.5, 0.5], [-0.5, 0.5], [0.5, -0.5], [-0.5, -0.5])]
    best = None
    for s0 in starts:
        sol = root(F, np.asarray(s0, float), method="lm")
        if not np.all(np.isfinite(sol.x)):
            continue
        g = PhasePoint(*sol.x)
        res = associativity_residual(model, g, quad, list(check_ts) + probes)
        if best is None or res < best[1]:
            best = (g, res)
    if best is None:
        return BarycentreSearch(False, None, math.inf, "no-barycentre-found: solver diverged")
    g, res = best
    if res > tol:
        return BarycentreSearch(False, g, res, f"no-barycentre-found: best residual {res:.3g}")
    return BarycentreSearch(True, g, res, "ok")


def best_associativity_residual(model: SymmetricSurface, quad: Sequence, ts: Sequence, starts: Sequence) -> tuple[PhasePoint, float]:
    """Smallest max-residual over ``g`` found by least squares from several starts.

    Used to show that no symmetry ``s_g`` does the job for the curved phase.
    """
    quad = [_pt(p) for p in quad]
    ts = [_pt(p) for p in ts]
    a, b, c, d = quad
    S = model.S

    def F(gv):
        g = PhasePoint(*gv)
        out = np.empty(len(ts))
        for i, t in enumerate(ts):
            tau = model.symmetry(g, t)
            out[i] = S(a, b, t) + S(t, c, d) - S(a, tau, d) - S(tau, b, c)
        return out

    best = None
    for s0 in starts:
        sol = least_squares(F, np.asarray(s0, float))
        g = PhasePoint(*sol.x)
        res = associativity_residual(model, g, quad, ts)
        if best is None or res < best[1]:
            best = (g, res)
    return best


def associativity_smoke(u, v, w, x, theta: float = 0.5, n: int = 64, box: tuple | None = None) -> float:
    """``|(u*v)*w - u*(v*w)|`` at ``x`` by nested quadrature on a small grid.

    Coarse and expensive; used only as a sanity check.
    """
    x = _pt(x)
    box = box or ((-3.0, 3.0), (-3.0, 3.0))
    k = WkbKernel(theta)
    g = QuadratureGrid(box, box, n, n)
    (A, _), (L, _) = composite_gl(*box[0], n), composite_gl(*box[1], n)

    def tabulate(f1, f2):
        return np.array([[_star_sum(f1, f2, k, g, PhasePoint(p, q)) for q in L] for p in A])

    uv = tabulate(u, v)
    vw = tabulate(v, w)
    left = _star_sum_complex(uv, w, k, g, x, A, L, first=True)
    right = _star_sum_complex(vw, u, k, g, x, A, L, first=False)
    return abs(left - right)


def _star_sum_complex(T, f, kernel, grid, x, A, L, first: bool) -> complex:
    """Star sum where one factor is a complex table on the grid nodes."""
    (ay, way), (ly, wly), (az, waz), (lz, wlz) = grid.axes()
    c = kernel.phase_scale / kernel.theta
    sh = kernel.model.shear
    F = _evaluate(f, (az if first else ay)[:, None], (lz if first else ly)[None, :]).astype(complex)
    U, V = (T, F) if first else (F, T)
    E1 = wly[:, None] * np.exp(1j * c * np.outer(ly, sh(az - x.a)))
    E2 = wlz[:, None] * np.exp(1j * c * np.outer(lz, sh(x.a - ay)))
    Uh = U @ E1
    Vh = (V @ E2).T
    amp = kernel.amp.on_a(x.a, ay[:, None], az[None, :])
    base = np.exp(1j * c * sh(ay[:, None] - az[None, :]) * x.l)
    return complex(kernel.prefactor * np.einsum("i,j,ij->", way, waz, amp * base * Uh * Vh))
